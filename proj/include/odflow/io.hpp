#pragma once

// Line-oriented CSV reading, number formatting and string interning.

#include <array>
#include <cmath>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "odflow/error.hpp"

namespace odflow {

/// Reads a stream in large blocks and hands out one line at a time. Line
/// terminators (`\n`, `\r\n`) are stripped.
class LineReader {
 public:
  explicit LineReader(std::istream& in, std::size_t block = 1 << 20)
      : in_(in), block_(block) {}

  bool next(std::string_view& line) {
    for (;;) {
      const std::size_t nl = buf_.find('\n', pos_);
      if (nl != std::string::npos) {
        line = std::string_view(buf_).substr(pos_, nl - pos_);
        bytes_ += nl - pos_ + 1;
        pos_ = nl + 1;
        strip_cr(line);
        return true;
      }
      if (eof_) {
        if (pos_ >= buf_.size()) return false;
        line = std::string_view(buf_).substr(pos_);
        bytes_ += buf_.size() - pos_;
        pos_ = buf_.size();
        strip_cr(line);
        return true;
      }
      buf_.erase(0, pos_);
      pos_ = 0;
      const std::size_t old = buf_.size();
      buf_.resize(old + block_);
      in_.read(buf_.data() + old, static_cast<std::streamsize>(block_));
      buf_.resize(old + static_cast<std::size_t>(in_.gcount()));
      if (!in_) eof_ = true;
    }
  }

  /// Bytes consumed so far, including terminators.
  std::uint64_t bytes() const { return bytes_; }

 private:
  static void strip_cr(std::string_view& s) {
    if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  }

  std::istream& in_;
  std::size_t block_;
  std::string buf_;
  std::size_t pos_ = 0;
  bool eof_ = false;
  std::uint64_t bytes_ = 0;
};

/// Splits on commas into exactly N fields; false if the count differs.
template <std::size_t N>
bool split_fields(std::string_view line, std::array<std::string_view, N>& out) {
  std::size_t field = 0, start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      if (field >= N) return false;
      out[field++] = line.substr(start, i - start);
      start = i + 1;
    }
  }
  return field == N;
}

inline std::vector<std::string_view> split_all(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      out.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  double v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || s.empty() ||
      !std::isfinite(v))
    return std::nullopt;
  return v;
}

template <typename Int>
std::optional<Int> parse_int(std::string_view s) {
  Int v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || s.empty())
    return std::nullopt;
  return v;
}

/// Shortest decimal text that parses back to the same double.
inline void append_double(std::string& out, double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, p);
}

/// Fixed 17 significant digits.
inline void append_double17(std::string& out, double v) {
  char buf[40];
  auto [p, ec] =
      std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  out.append(buf, p);
}

template <typename Int>
void append_int(std::string& out, Int v) {
  char buf[24];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, p);
}

/// Interns opaque string tokens to dense indices in first-seen order.
class TokenTable {
 public:
  std::uint32_t intern(std::string_view token) {
    auto it = index_.find(token);
    if (it != index_.end()) return it->second;
    const auto id = static_cast<std::uint32_t>(names_.size());
    names_.emplace_back(token);
    index_.emplace(names_.back(), id);
    return id;
  }

  std::optional<std::uint32_t> find(std::string_view token) const {
    auto it = index_.find(token);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& name(std::uint32_t id) const { return names_.at(id); }
  std::size_t size() const { return names_.size(); }

 private:
  struct Hash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const {
      return std::hash<std::string_view>{}(s);
    }
  };
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::uint32_t, Hash, std::equal_to<>> index_;
};

inline std::ifstream open_input(const std::string& path, std::string_view what) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    fail(ErrorKind::input_missing,
         "cannot open " + std::string(what) + " file " + path);
  return in;
}

/// Buffered writer; flushes in large chunks.
class FileWriter {
 public:
  explicit FileWriter(const std::filesystem::path& path)
      : path_(path), f_(std::fopen(path.c_str(), "wb")) {
    if (!f_) fail(ErrorKind::input, "cannot write " + path.string());
  }
  FileWriter(const FileWriter&) = delete;
  FileWriter& operator=(const FileWriter&) = delete;
  ~FileWriter() {
    if (f_) {
      flush();
      std::fclose(f_);
    }
  }

  std::string& buffer() { return buf_; }
  void maybe_flush() {
    if (buf_.size() > (1u << 20)) flush();
  }
  void flush() {
    if (!buf_.empty() && std::fwrite(buf_.data(), 1, buf_.size(), f_) != buf_.size())
      fail(ErrorKind::internal, "short write to " + path_.string());
    buf_.clear();
  }
  void close() {
    flush();
    if (std::fclose(f_) != 0) fail(ErrorKind::internal, "close failed " + path_.string());
    f_ = nullptr;
  }

 private:
  std::filesystem::path path_;
  std::FILE* f_;
  std::string buf_;
};

inline void write_text_file(const std::filesystem::path& path,
                            std::string_view text) {
  FileWriter w(path);
  w.buffer().append(text);
  w.close();
}

/// FNV-1a, used for stable configuration fingerprints.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace odflow
