#pragma once

#include <Eigen/Dense>

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace odfm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using Complex = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

/// Base class of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file (ragged CSV, non-numeric cell, bad JSON).
class ParseError : public Error {
 public:
  ParseError(const std::string& msg, std::size_t row = 0, std::size_t col = 0)
      : Error(msg), row_(row), col_(col) {}
  std::size_t row() const { return row_; }
  std::size_t col() const { return col_; }

 private:
  std::size_t row_;
  std::size_t col_;
};

/// A value outside the domain of the requested transform (e.g. log of a
/// non-positive number).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Violated precondition on an argument (index out of range, bad dimension).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure could not produce a usable estimate.
class EstimationError : public Error {
 public:
  using Error::Error;
};

/// Invalid run or simulation configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ArgumentError(msg);
}

inline double max_abs(const Matrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

// Flip v so that its largest-magnitude entry is positive; ties go to the
// lowest index. Returns true when v was negated.
inline bool canonical_sign(Eigen::Ref<Vector> v) {
  if (v.size() == 0) return false;
  const double top = v.cwiseAbs().maxCoeff();
  const double tie_tol = 1e-12 * std::max(top, 1e-300);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) >= top - tie_tol) {
      if (v(i) < 0) {
        v = -v;
        return true;
      }
      return false;
    }
  }
  return false;
}

}  // namespace detail
}  // namespace odfm
