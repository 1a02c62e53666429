#pragma once

// Fixtures shared by the test binaries.

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "odflow/cdr.hpp"
#include "odflow/geo.hpp"

namespace odflow::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "odflow") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

inline constexpr GeoPoint kSingapore{103.82, 1.35};

/// cols x rows grid of square districts of `side_m`, centred on kSingapore,
/// id = row * cols + col.
inline DistrictMap grid_map(int cols, int rows, double side_m) {
  const Projection proj(kSingapore);
  std::vector<District> ds;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const double x0 = (c - cols / 2.0) * side_m, y0 = (r - rows / 2.0) * side_m;
      District d;
      d.id = r * cols + c;
      d.name = "g" + std::to_string(d.id);
      d.polygon.outer = {proj.unproject({x0, y0}), proj.unproject({x0 + side_m, y0}),
                         proj.unproject({x0 + side_m, y0 + side_m}),
                         proj.unproject({x0, y0 + side_m}), proj.unproject({x0, y0})};
      ds.push_back(std::move(d));
    }
  return DistrictMap(std::move(ds), kSingapore);
}

/// Events for one user from local-metre positions and timestamps.
inline std::vector<EventRecord> events_at(const Projection& proj,
                                          const std::vector<std::pair<LocalXY, Timestamp>>& xs,
                                          UserIndex user = 0) {
  std::vector<EventRecord> out;
  for (const auto& [p, t] : xs) out.push_back({user, t, proj.unproject(p)});
  return out;
}

}  // namespace odflow::testing
