#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace egoflow {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Rng = std::mt19937_64;

// Precondition or data-contract failure. Maps to a runtime failure at the C boundary.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A referenced input file or directory does not exist.
class MissingInput : public Error {
 public:
  explicit MissingInput(const std::string& path)
      : Error("missing input: " + path), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

// Unparseable config or unknown keys.
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double norm() const { return std::hypot(x, y); }
  double squared_norm() const { return x * x + y * y; }
  bool finite() const { return std::isfinite(x) && std::isfinite(y); }
  bool operator==(const Vec2&) const = default;
};

// splitmix64 finalizer; used to derive independent, order-free RNG streams.
constexpr uint64_t mix_seed(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

template <typename... Ids>
Rng derive_rng(uint64_t seed, Ids... ids) {
  uint64_t s = mix_seed(seed);
  ((s = mix_seed(s ^ static_cast<uint64_t>(ids))), ...);
  return Rng(s);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace egoflow
