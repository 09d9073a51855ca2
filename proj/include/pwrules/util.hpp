#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pwrules/errors.hpp"

namespace pwrules {

// xoshiro-free deterministic RNG: splitmix64 seeded mt19937_64 is avoided so
// that every stream we hand out is a pure function of the seed bytes on any
// platform.  All sampling helpers below are implementation-defined-free.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

  uint64_t next_u64() {
    // splitmix64
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double next_double() { return (next_u64() >> 11) * 0x1.0p-53; }

  // uniform in [0, n) without modulo bias
  uint64_t next_below(uint64_t n) {
    if (n == 0) throw Error(ErrorKind::Value, "next_below(0)");
    uint64_t threshold = (0 - n) % n;
    for (;;) {
      uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Marsaglia polar method; deterministic given the stream
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = uniform(-1.0, 1.0);
      v = uniform(-1.0, 1.0);
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    double mul = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * mul;
    have_spare_ = true;
    return u * mul;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string to_hex(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// fixed-format double for deterministic text output
inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string fmt_double17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  size_t start = 0;
  for (size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == sep) {
      out.emplace_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

inline std::string strip(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '\n')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '\n')) --e;
  return std::string(s.substr(b, e - b));
}

// Reads a text file line by line, skipping blank lines and '#' comments.
inline void for_each_data_line(const std::string& path,
                               const std::function<void(const std::string&, size_t)>& fn) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = strip(line);
    if (s.empty() || s[0] == '#') continue;
    fn(s, lineno);
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes through a temp file and renames so failed runs leave no partial output.
class AtomicWriter {
 public:
  explicit AtomicWriter(const std::string& path)
      : path_(path), tmp_(path + ".tmp"), out_(tmp_, std::ios::binary) {
    if (!out_) throw Error(ErrorKind::Io, "cannot write " + tmp_);
  }

  std::ostream& stream() { return out_; }

  void commit() {
    out_.flush();
    if (!out_) throw Error(ErrorKind::Io, "write failed for " + tmp_);
    out_.close();
    std::filesystem::rename(tmp_, path_);
    committed_ = true;
  }

  ~AtomicWriter() {
    if (!committed_) {
      out_.close();
      std::error_code ec;
      std::filesystem::remove(tmp_, ec);
    }
  }

 private:
  std::string path_;
  std::string tmp_;
  std::ofstream out_;
  bool committed_ = false;
};

}  // namespace pwrules
