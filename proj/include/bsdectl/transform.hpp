#pragma once

#include <cmath>
#include <optional>
#include <utility>

#include "bsdectl/error.hpp"
#include "bsdectl/linalg.hpp"
#include "bsdectl/model.hpp"

namespace bsdectl {

inline constexpr double kTransformTolerance = 1e-10;
inline constexpr double kPencilRcondThreshold = 1e-12;

/// u = M [q; v] with Bbar M = [I_n 0] and B M = [L F].
struct InputTransform {
  Matrix M;
  Matrix L;  // n x n
  Matrix F;  // n x (m - n)

  int n() const { return static_cast<int>(L.rows()); }
  int m() const { return static_cast<int>(M.rows()); }
};

/// Coefficients of x(k) = C x(k+1) + Cbar z(k) + D v(k) - C w(k) z(k), plus
/// the delayed-input (D1) and delayed-state (C1) couplings when present.
struct BsdeForm {
  Matrix C;
  Matrix Cbar;
  Matrix D;
  std::optional<Matrix> D1;
  std::optional<Matrix> C1;

  int n() const { return static_cast<int>(C.rows()); }
};

namespace internal {

inline Matrix normal_form(Index n, Index m) {
  Matrix target = Matrix::Zero(n, m);
  target.leftCols(n).setIdentity();
  return target;
}

}  // namespace internal

/// Returns an invertible M with Bbar M = [I 0]. A user-supplied M is checked
/// and returned verbatim; otherwise M comes from Gauss-Jordan elimination on
/// the columns of Bbar, pivoting on the largest entry of each row.
inline Matrix compute_M(const Matrix& Bbar,
                        const std::optional<Matrix>& user_M = std::nullopt) {
  const Index n = Bbar.rows();
  const Index m = Bbar.cols();
  if (m < n || numerical_rank(Bbar) < n) {
    throw Error(ErrorCode::kRankDeficient,
                "Bbar must have full row rank n = " + std::to_string(n));
  }
  const Matrix target = internal::normal_form(n, m);
  if (user_M) {
    const Matrix& M = *user_M;
    if (M.rows() != m || M.cols() != m) {
      throw Error(ErrorCode::kBadUserM, "M must be " + std::to_string(m) +
                                            "x" + std::to_string(m));
    }
    if (reciprocal_condition(M) <= kPencilRcondThreshold) {
      throw Error(ErrorCode::kBadUserM, "M is singular");
    }
    const double residual = max_abs(Bbar * M - target);
    if (residual > kTransformTolerance) {
      throw Error(ErrorCode::kBadUserM,
                  "Bbar*M differs from [I 0] by " + format_number(residual));
    }
    return M;
  }

  Matrix work = Bbar;
  Matrix M = Matrix::Identity(m, m);
  const double scale = max_abs(Bbar);
  for (Index row = 0; row < n; ++row) {
    Index pivot = row;
    double best = 0.0;
    for (Index col = row; col < m; ++col) {
      if (std::abs(work(row, col)) > best) {
        best = std::abs(work(row, col));
        pivot = col;
      }
    }
    if (best <= static_cast<double>(m) * kMachineEps * scale) {
      throw Error(ErrorCode::kRankDeficient, "Bbar lost rank during elimination");
    }
    if (pivot != row) {
      work.col(row).swap(work.col(pivot));
      M.col(row).swap(M.col(pivot));
    }
    const double inv = 1.0 / work(row, row);
    work.col(row) *= inv;
    M.col(row) *= inv;
    for (Index col = 0; col < m; ++col) {
      if (col == row) continue;
      const double factor = work(row, col);
      if (factor == 0.0) continue;
      work.col(col) -= factor * work.col(row);
      M.col(col) -= factor * M.col(row);
    }
  }
  return M;
}

inline InputTransform compute_transform(const ValidatedSystem& sys) {
  const SystemSpec& s = sys.spec;
  if (sys.path != InputPath::kFullRank) {
    throw Error(ErrorCode::kRankDeficient,
                "the BSDE transformation needs rank(Bbar) = n");
  }
  InputTransform t;
  t.M = compute_M(s.Bbar, s.M_user);
  const Matrix BM = s.B * t.M;
  t.L = BM.leftCols(s.n());
  t.F = BM.rightCols(s.m() - s.n());
  return t;
}

inline BsdeForm to_bsde(const ValidatedSystem& sys, const InputTransform& t) {
  const SystemSpec& s = sys.spec;
  const Matrix pencil = s.A - t.L * s.Abar;
  if (reciprocal_condition(pencil) <= kPencilRcondThreshold) {
    throw Error(ErrorCode::kSingularPencil,
                "A - L*Abar = " + format_matrix(pencil) + " is singular");
  }
  BsdeForm b;
  b.C = pencil.fullPivLu().inverse();
  b.Cbar = -b.C * t.L;
  b.D = -b.C * t.F;
  if (s.input_delay) b.D1 = -b.C * s.input_delay->B1;
  if (s.state_delay) b.C1 = -b.C * s.state_delay->A1;
  return b;
}

/// Full-rank system together with its input transform and BSDE data.
struct Reformulation {
  ValidatedSystem system;
  InputTransform transform;
  BsdeForm bsde;

  const SystemSpec& spec() const { return system.spec; }
};

inline Reformulation reformulate(const ValidatedSystem& sys) {
  Reformulation r;
  r.system = sys;
  r.transform = compute_transform(sys);
  r.bsde = to_bsde(sys, r.transform);
  return r;
}

inline Vector reconstruct_u(const InputTransform& t, const Vector& q,
                            const Vector& v) {
  Vector qv(q.size() + v.size());
  qv << q, v;
  return t.M * qv;
}

/// Columnwise version: rows of the stacked argument are [q; v].
inline Matrix reconstruct_u(const InputTransform& t, const Matrix& q,
                            const Matrix& v) {
  Matrix qv(q.rows() + v.rows(), q.cols());
  qv << q, v;
  return t.M * qv;
}

inline std::pair<Vector, Vector> split_u(const InputTransform& t,
                                         const Vector& u) {
  const Vector qv = t.M.fullPivLu().solve(u);
  return {qv.head(t.n()), qv.tail(t.m() - t.n())};
}

}  // namespace bsdectl
