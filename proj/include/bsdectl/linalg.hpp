#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdio>
#include <limits>
#include <string>

namespace bsdectl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kMachineEps = std::numeric_limits<double>::epsilon();

inline Vector singular_values(const Matrix& m) {
  if (m.size() == 0) return Vector();
  return Eigen::JacobiSVD<Matrix>(m).singularValues();
}

/// max(rows, cols) * eps * sigma_max.
inline double rank_tolerance(const Matrix& m, const Vector& sv) {
  if (sv.size() == 0) return 0.0;
  return static_cast<double>(std::max(m.rows(), m.cols())) * kMachineEps *
         sv(0);
}

inline int numerical_rank(const Matrix& m) {
  const Vector sv = singular_values(m);
  if (sv.size() == 0 || sv(0) == 0.0) return 0;
  const double tol = rank_tolerance(m, sv);
  int rank = 0;
  for (Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > tol) ++rank;
  }
  return rank;
}

/// sigma_min / sigma_max of a square matrix; 0 for an all-zero matrix.
inline double reciprocal_condition(const Matrix& m) {
  const Vector sv = singular_values(m);
  if (sv.size() == 0 || sv(0) == 0.0) return 0.0;
  return sv(sv.size() - 1) / sv(0);
}

inline double min_singular_value(const Matrix& m) {
  const Vector sv = singular_values(m);
  return sv.size() == 0 ? 0.0 : sv(sv.size() - 1);
}

inline double max_abs(const Matrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

/// H^T (H H^T)^{-1} for a full-row-rank H.
inline Matrix right_pseudo_inverse(const Matrix& h) {
  const Matrix gram = h * h.transpose();
  return h.transpose() * gram.ldlt().solve(Matrix::Identity(h.rows(), h.rows()));
}

inline bool same_shape(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols();
}

inline bool exactly_equal(const Matrix& a, const Matrix& b) {
  return same_shape(a, b) && (a.size() == 0 || a == b);
}

inline std::string format_number(double value, int digits = 12) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, value);
  return buf;
}

inline std::string format_matrix(const Matrix& m, int digits = 12) {
  std::string out = "[";
  for (Index i = 0; i < m.rows(); ++i) {
    out += i == 0 ? "[" : ", [";
    for (Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out += ", ";
      out += format_number(m(i, j), digits);
    }
    out += "]";
  }
  return out + "]";
}

}  // namespace bsdectl
