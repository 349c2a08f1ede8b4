#pragma once

#include <cmath>
#include <string>

#include "bsdectl/criteria.hpp"
#include "bsdectl/error.hpp"
#include "bsdectl/linalg.hpp"
#include "bsdectl/model.hpp"
#include "bsdectl/transform.hpp"

namespace bsdectl {

inline constexpr double kIntertwinerTolerance = 1e-8;

struct IntertwinerResult {
  Matrix X1;              // H X H^+
  double residual = 0.0;  // ||H X (I - H^+ H)||_F
  bool exists = false;    // residual <= tol * ||H X||_F
};

/// Looks for X1 with H X = X1 H. The only candidate is X1 = H X H^+, and it
/// works iff H X vanishes on the kernel of H.
inline IntertwinerResult try_intertwine(const Matrix& H, const Matrix& X,
                                        double tol = kIntertwinerTolerance) {
  if (H.cols() != X.rows() || X.rows() != X.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "H and X are not compatible");
  }
  if (numerical_rank(H) != H.rows()) {
    throw Error(ErrorCode::kRankDeficient, "H must have full row rank");
  }
  const Matrix Hp = right_pseudo_inverse(H);
  const Matrix HX = H * X;
  IntertwinerResult out;
  out.X1 = HX * Hp;
  const Matrix kernel_part =
      HX * (Matrix::Identity(H.cols(), H.cols()) - Hp * H);
  out.residual = kernel_part.norm();
  out.exists = out.residual <= tol * HX.norm();
  return out;
}

inline IntertwinerResult intertwine(const Matrix& H, const Matrix& X,
                                    double tol = kIntertwinerTolerance) {
  IntertwinerResult out = try_intertwine(H, X, tol);
  if (!out.exists) {
    throw Error(ErrorCode::kNoIntertwiner,
                "no X1 with H X = X1 H (residual " + format_number(out.residual) +
                    ")");
  }
  return out;
}

/// Output-space data: C1, Cbar1 with H C = C1 H, H Cbar = Cbar1 H, and the
/// projected BSDE (C1, Cbar1, H D) in dimension l.
struct Intertwining {
  Matrix H;
  Matrix C1;
  Matrix Cbar1;
  double residual_C = 0.0;
  double residual_Cbar = 0.0;
};

struct PartialReport {
  Intertwining intertwining;
  BsdeForm projected;
  ControllabilityReport report;
};

inline BsdeForm project(const Intertwining& t, const BsdeForm& b) {
  BsdeForm out;
  out.C = t.C1;
  out.Cbar = t.Cbar1;
  out.D = t.H * b.D;
  return out;
}

inline Intertwining intertwine_bsde(const Matrix& H, const BsdeForm& b) {
  const IntertwinerResult c = intertwine(H, b.C);
  const IntertwinerResult cbar = intertwine(H, b.Cbar);
  return {H, c.X1, cbar.X1, c.residual, cbar.residual};
}

/// H-partial exact controllability: Gramian and word-span criteria for the
/// projected BSDE.
inline PartialReport partial_decide(const Reformulation& r, const Matrix& H,
                                    int N_max) {
  if (H.cols() != r.spec().n()) {
    throw Error(ErrorCode::kDimensionMismatch, "H must have n columns");
  }
  PartialReport out;
  out.intertwining = intertwine_bsde(H, r.bsde);
  out.projected = project(out.intertwining, r.bsde);
  out.report = decide(out.projected, N_max);
  return out;
}

// ---------------------------------------------------------------------------

/// Rank-deficient Bbar = [[I_r, 0], [0, 0]] with n = 2r, Abar21 = I,
/// Abar22 = 0. The calligraphic blocks are A_ij - B_i1 Abar_1j; the
/// double-struck matrices are AA = [calA]^{-1}, BB = -AA [B11; B21],
/// DD = -AA [B12; B22]. The [I_r 0]-partial problem uses AA1 (the
/// intertwiner of AA), BB1 = [I_r 0] BB and DD1 = [I_r 0] DD.
struct ReducedForm {
  int r = 0;
  Matrix A11, A12, A21, A22;
  Matrix B11, B12, B21, B22;
  Matrix Abar11, Abar12;
  Matrix calA;  // [[calA11, calA12], [calA21, calA22]]
  Matrix AA;
  Matrix BB;
  Matrix DD;
  Matrix AA1;
  Matrix BB1;
  Matrix DD1;
  double intertwiner_residual = 0.0;

  BsdeForm reduced_bsde() const {
    BsdeForm b;
    b.C = AA1;
    b.Cbar = BB1;
    b.D = DD1;
    return b;
  }
};

inline ReducedForm reduced_rank_setup(const ValidatedSystem& sys) {
  const SystemSpec& s = sys.spec;
  const int r = sys.rank_Bbar;
  if (sys.path != InputPath::kReduced || !internal::has_reduced_structure(s, r)) {
    throw Error(ErrorCode::kStructureUnsupported,
                "reduced-rank analysis needs Bbar = [[I_r, 0], [0, 0]], n = 2r, "
                "Abar21 = I, Abar22 = 0");
  }
  const int n = s.n();
  const int m = s.m();
  ReducedForm f;
  f.r = r;
  f.A11 = s.A.topLeftCorner(r, r);
  f.A12 = s.A.topRightCorner(r, n - r);
  f.A21 = s.A.bottomLeftCorner(n - r, r);
  f.A22 = s.A.bottomRightCorner(n - r, n - r);
  f.B11 = s.B.topLeftCorner(r, r);
  f.B12 = s.B.topRightCorner(r, m - r);
  f.B21 = s.B.bottomLeftCorner(n - r, r);
  f.B22 = s.B.bottomRightCorner(n - r, m - r);
  f.Abar11 = s.Abar.topLeftCorner(r, r);
  f.Abar12 = s.Abar.topRightCorner(r, n - r);

  f.calA.resize(n, n);
  f.calA << f.A11 - f.B11 * f.Abar11, f.A12 - f.B11 * f.Abar12,
      f.A21 - f.B21 * f.Abar11, f.A22 - f.B21 * f.Abar12;
  if (reciprocal_condition(f.calA) <= kPencilRcondThreshold) {
    throw Error(ErrorCode::kSingularBlock,
                "block matrix " + format_matrix(f.calA) + " is singular");
  }
  f.AA = f.calA.fullPivLu().inverse();
  Matrix B_1(n, r);
  B_1 << f.B11, f.B21;
  Matrix B_2(n, m - r);
  B_2 << f.B12, f.B22;
  f.BB = -f.AA * B_1;
  f.DD = -f.AA * B_2;

  Matrix selector = Matrix::Zero(r, n);
  selector.leftCols(r).setIdentity();
  const IntertwinerResult a1 = intertwine(selector, f.AA);
  f.AA1 = a1.X1;
  f.intertwiner_residual = a1.residual;
  f.BB1 = selector * f.BB;
  f.DD1 = selector * f.DD;
  return f;
}

struct ReducedReport {
  ReducedForm form;
  ControllabilityReport report;
};

inline ReducedReport reduced_decide(const ValidatedSystem& sys, int N_max) {
  ReducedReport out;
  out.form = reduced_rank_setup(sys);
  out.report = decide(out.form.reduced_bsde(), N_max);
  return out;
}

}  // namespace bsdectl
