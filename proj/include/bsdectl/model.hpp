#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bsdectl/error.hpp"
#include "bsdectl/linalg.hpp"

namespace bsdectl {

/// Finite i.i.d. law of the scalar noise w(k). Accepted laws have zero mean
/// and unit variance.
struct NoiseModel {
  std::vector<double> support;
  std::vector<double> probs;

  static NoiseModel rademacher() { return {{-1.0, 1.0}, {0.5, 0.5}}; }

  int size() const { return static_cast<int>(support.size()); }

  double total_probability() const {
    double s = 0.0;
    for (double p : probs) s += p;
    return s;
  }
  double mean() const {
    double s = 0.0;
    for (std::size_t i = 0; i < support.size(); ++i) s += probs[i] * support[i];
    return s;
  }
  double second_moment() const {
    double s = 0.0;
    for (std::size_t i = 0; i < support.size(); ++i) {
      s += probs[i] * support[i] * support[i];
    }
    return s;
  }

  friend bool operator==(const NoiseModel&, const NoiseModel&) = default;
};

inline constexpr double kMomentTolerance = 1e-12;
// History labels use one base-36 digit per stage.
inline constexpr int kMaxSupportSize = 36;

inline void validate_noise(const NoiseModel& noise) {
  if (noise.support.size() != noise.probs.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "noise support and probs have different lengths");
  }
  if (noise.size() < 2) {
    throw Error(ErrorCode::kNoiseMomentViolation,
                "noise support needs at least two points");
  }
  if (noise.size() > kMaxSupportSize) {
    throw Error(ErrorCode::kInvalidArgument,
                "noise support larger than " + std::to_string(kMaxSupportSize));
  }
  for (std::size_t i = 0; i < noise.support.size(); ++i) {
    if (!std::isfinite(noise.support[i]) || !std::isfinite(noise.probs[i])) {
      throw Error(ErrorCode::kNoiseMomentViolation, "non-finite noise entry");
    }
    if (noise.probs[i] <= 0.0) {
      throw Error(ErrorCode::kNoiseMomentViolation,
                  "probabilities must be positive");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (noise.support[i] == noise.support[j]) {
        throw Error(ErrorCode::kNoiseMomentViolation,
                    "support points must be distinct");
      }
    }
  }
  if (std::abs(noise.total_probability() - 1.0) > kMomentTolerance) {
    throw Error(ErrorCode::kNoiseMomentViolation,
                "probabilities sum to " + format_number(noise.total_probability(), 17));
  }
  if (std::abs(noise.mean()) > kMomentTolerance) {
    throw Error(ErrorCode::kNoiseMomentViolation,
                "mean is " + format_number(noise.mean(), 17) + ", expected 0");
  }
  if (std::abs(noise.second_moment() - 1.0) > kMomentTolerance) {
    throw Error(ErrorCode::kNoiseMomentViolation,
                "variance is " + format_number(noise.second_moment(), 17) +
                    ", expected 1");
  }
}

struct InputDelay {
  Matrix B1;
  int tau = 1;
};

struct StateDelay {
  Matrix A1;
  int d = 1;
};

/// x(k+1) = [A x + B u] + w(k) [Abar x + Bbar u], optionally with a delayed
/// input channel B1 u1(k - tau), a delayed state term A1 x(k - d), and an
/// output map y = H x.
struct SystemSpec {
  Matrix A;
  Matrix B;
  Matrix Abar;
  Matrix Bbar;
  int horizon_max = 0;  // 0 selects the default 2n
  NoiseModel noise = NoiseModel::rademacher();
  std::optional<Matrix> M_user;
  std::optional<InputDelay> input_delay;
  std::optional<StateDelay> state_delay;
  std::optional<Matrix> H;

  int n() const { return static_cast<int>(A.rows()); }
  int m() const { return static_cast<int>(B.cols()); }
  int effective_horizon_max() const {
    return horizon_max > 0 ? horizon_max : 2 * n();
  }
};

namespace internal {
inline bool optional_matrix_equal(const std::optional<Matrix>& a,
                                  const std::optional<Matrix>& b) {
  if (a.has_value() != b.has_value()) return false;
  return !a || exactly_equal(*a, *b);
}
}  // namespace internal

inline bool operator==(const SystemSpec& a, const SystemSpec& b) {
  if (!exactly_equal(a.A, b.A) || !exactly_equal(a.B, b.B) ||
      !exactly_equal(a.Abar, b.Abar) || !exactly_equal(a.Bbar, b.Bbar)) {
    return false;
  }
  if (a.horizon_max != b.horizon_max || !(a.noise == b.noise)) return false;
  if (!internal::optional_matrix_equal(a.M_user, b.M_user) ||
      !internal::optional_matrix_equal(a.H, b.H)) {
    return false;
  }
  if (a.input_delay.has_value() != b.input_delay.has_value()) return false;
  if (a.input_delay && (a.input_delay->tau != b.input_delay->tau ||
                        !exactly_equal(a.input_delay->B1, b.input_delay->B1))) {
    return false;
  }
  if (a.state_delay.has_value() != b.state_delay.has_value()) return false;
  if (a.state_delay && (a.state_delay->d != b.state_delay->d ||
                        !exactly_equal(a.state_delay->A1, b.state_delay->A1))) {
    return false;
  }
  return true;
}

enum class InputPath {
  kFullRank,  // rank(Bbar) = n: the BSDE transformation applies directly
  kReduced,   // Bbar = [[I_r, 0], [0, 0]] with n = 2r
};

struct ValidatedSystem {
  SystemSpec spec;
  int rank_Bbar = 0;
  InputPath path = InputPath::kFullRank;
  int reduced_r = 0;
};

inline constexpr double kStructureTolerance = 1e-12;

namespace internal {

inline void require_shape(const Matrix& m, Index rows, Index cols,
                          const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw Error(ErrorCode::kDimensionMismatch,
                std::string(name) + " is " + std::to_string(m.rows()) + "x" +
                    std::to_string(m.cols()) + ", expected " +
                    std::to_string(rows) + "x" + std::to_string(cols));
  }
}

inline void require_finite(const Matrix& m, const char* name) {
  if (!m.allFinite()) {
    throw Error(ErrorCode::kDimensionMismatch,
                std::string(name) + " has non-finite entries");
  }
}

// Bbar = [[I_r, 0], [0, 0]], n = 2r, Abar21 = I, Abar22 = 0.
inline bool has_reduced_structure(const SystemSpec& s, int r) {
  const int n = s.n();
  const int m = s.m();
  if (r < 1 || n != 2 * r || m <= r) return false;
  Matrix expected = Matrix::Zero(n, m);
  expected.topLeftCorner(r, r).setIdentity();
  if (max_abs(s.Bbar - expected) > kStructureTolerance) return false;
  if (max_abs(s.Abar.bottomLeftCorner(r, r) - Matrix::Identity(r, r)) >
      kStructureTolerance) {
    return false;
  }
  return max_abs(s.Abar.bottomRightCorner(r, r)) <= kStructureTolerance;
}

}  // namespace internal

/// Checks dimensions and noise moments, and classifies the input map by the
/// numerical rank of Bbar.
inline ValidatedSystem validate(const SystemSpec& spec) {
  using internal::require_finite;
  using internal::require_shape;
  const Index n = spec.A.rows();
  if (n < 1) throw Error(ErrorCode::kDimensionMismatch, "A is empty");
  const Index m = spec.B.cols();
  if (m < 1) throw Error(ErrorCode::kDimensionMismatch, "B has no columns");
  require_shape(spec.A, n, n, "A");
  require_shape(spec.B, n, m, "B");
  require_shape(spec.Abar, n, n, "Abar");
  require_shape(spec.Bbar, n, m, "Bbar");
  require_finite(spec.A, "A");
  require_finite(spec.B, "B");
  require_finite(spec.Abar, "Abar");
  require_finite(spec.Bbar, "Bbar");
  if (spec.horizon_max < 0) {
    throw Error(ErrorCode::kInvalidArgument, "horizon_max must be positive");
  }
  if (spec.M_user) {
    require_shape(*spec.M_user, m, m, "M");
    require_finite(*spec.M_user, "M");
  }
  if (spec.input_delay) {
    if (spec.input_delay->B1.rows() != n || spec.input_delay->B1.cols() < 1) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "B1 must have n rows and at least one column");
    }
    require_finite(spec.input_delay->B1, "B1");
    if (spec.input_delay->tau < 1) {
      throw Error(ErrorCode::kInvalidArgument, "tau must be >= 1");
    }
  }
  if (spec.state_delay) {
    require_shape(spec.state_delay->A1, n, n, "A1");
    require_finite(spec.state_delay->A1, "A1");
    if (spec.state_delay->d < 1) {
      throw Error(ErrorCode::kInvalidArgument, "d must be >= 1");
    }
  }
  if (spec.input_delay && spec.state_delay) {
    throw Error(ErrorCode::kInvalidArgument,
                "simultaneous input and state delays are not supported");
  }
  if (spec.H) {
    const Matrix& h = *spec.H;
    if (h.cols() != n || h.rows() < 1 || h.rows() > n) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "H must be l x n with 1 <= l <= n");
    }
    require_finite(h, "H");
    if (numerical_rank(h) != h.rows()) {
      throw Error(ErrorCode::kRankDeficient, "H must have full row rank");
    }
  }
  validate_noise(spec.noise);

  ValidatedSystem out;
  out.spec = spec;
  out.rank_Bbar = numerical_rank(spec.Bbar);
  if (out.rank_Bbar == n) {
    out.path = InputPath::kFullRank;
    return out;
  }
  const bool extras = spec.input_delay || spec.state_delay || spec.H;
  if (extras || !internal::has_reduced_structure(spec, out.rank_Bbar)) {
    throw Error(ErrorCode::kUnsupportedReducedStructure,
                "rank(Bbar) = " + std::to_string(out.rank_Bbar) + " < n = " +
                    std::to_string(n) +
                    "; only Bbar = [[I_r, 0], [0, 0]] with n = 2r, "
                    "Abar21 = I, Abar22 = 0 and no delays/output map is "
                    "supported");
  }
  out.path = InputPath::kReduced;
  out.reduced_r = out.rank_Bbar;
  return out;
}

/// Terminal condition x(N+1) = xi. Table keys are history labels of length
/// N+1 (one support-index digit per stage).
struct Target {
  enum class Kind { kZero, kConstant, kTable };
  Kind kind = Kind::kZero;
  Vector constant;
  std::map<std::string, Vector> table;

  static Target zero() { return {}; }
  static Target constant_value(Vector v) {
    Target t;
    t.kind = Kind::kConstant;
    t.constant = std::move(v);
    return t;
  }

  friend bool operator==(const Target& a, const Target& b) {
    if (a.kind != b.kind) return false;
    switch (a.kind) {
      case Kind::kZero: return true;
      case Kind::kConstant: return exactly_equal(a.constant, b.constant);
      case Kind::kTable:
        if (a.table.size() != b.table.size()) return false;
        for (const auto& [key, value] : a.table) {
          auto it = b.table.find(key);
          if (it == b.table.end() || !exactly_equal(value, it->second)) {
            return false;
          }
        }
        return true;
    }
    return false;
  }
};

struct ProblemInstance {
  SystemSpec system;
  std::optional<Vector> x0;
  Target target;
  int N = 1;

  friend bool operator==(const ProblemInstance& a, const ProblemInstance& b) {
    if (!(a.system == b.system) || a.N != b.N || !(a.target == b.target)) {
      return false;
    }
    if (a.x0.has_value() != b.x0.has_value()) return false;
    return !a.x0 || exactly_equal(*a.x0, *b.x0);
  }
};

}  // namespace bsdectl
