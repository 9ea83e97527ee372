#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace streamrl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
// Weights are stored row-major inside the flat parameter vector.
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Raised when a numeric stream produces NaN/inf; callers abort the run and
// dump diagnostics instead of silently clipping.
class NonFiniteError : public std::runtime_error {
 public:
  explicit NonFiniteError(const std::string& what) : std::runtime_error(what) {}
};

// Violation of an internal pre/postcondition (mismatched shapes, stale tape).
class ContractViolation : public std::logic_error {
 public:
  explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

inline void require(bool cond, const char* msg) {
  if (!cond) throw ContractViolation(msg);
}

inline void check_finite(const Vec& v, const char* what) {
  if (!v.allFinite()) throw NonFiniteError(std::string("non-finite ") + what);
}

inline void check_finite(double x, const char* what) {
  if (!std::isfinite(x)) throw NonFiniteError(std::string("non-finite ") + what);
}

inline double clip(double x, double lo, double hi) {
  return x < lo ? lo : (x > hi ? hi : x);
}

inline Vec clip(const Vec& v, double lo, double hi) {
  return v.cwiseMax(lo).cwiseMin(hi);
}

// FNV-1a, used for env-spec hashes and checkpoint checksums.
inline std::uint64_t fnv1a(const void* data, std::size_t n,
                           std::uint64_t seed = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a(std::string_view s,
                           std::uint64_t seed = 0xcbf29ce484222325ULL) {
  return fnv1a(s.data(), s.size(), seed);
}

}  // namespace streamrl
