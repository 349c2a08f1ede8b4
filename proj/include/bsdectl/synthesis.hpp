#pragma once

#include <optional>
#include <utility>

#include "bsdectl/criteria.hpp"
#include "bsdectl/error.hpp"
#include "bsdectl/linalg.hpp"
#include "bsdectl/pathspace.hpp"
#include "bsdectl/transform.hpp"

namespace bsdectl {

enum class TargetKind { kNull, kTerminal };

/// Steering inputs materialized on every history. u = M [q; v] at every
/// node; u1 is the delayed channel, present only for input-delay systems.
struct ControllerProcess {
  AdaptedProcess v;
  AdaptedProcess q;
  AdaptedProcess u;
  std::optional<AdaptedProcess> u1;
  BsdeSolution solution;  // backward-solved x(k), z(k)
  Matrix gramian;
  int N = 0;
  TargetKind kind = TargetKind::kNull;
  double x0_error = 0.0;  // |x(0) - requested initial state|_inf
};

namespace internal {

inline Matrix solve_gramian(const Matrix& G, const Vector& x) {
  if (!gramian_invertible(G)) {
    throw Error(ErrorCode::kSingularGramian,
                "Gramian " + format_matrix(G) + " is not invertible");
  }
  return G.fullPivLu().solve(x);
}

/// q(k) = z(k) - Abar x(k) and u(k) = M [q(k); v(k)] on depth-k histories.
inline void assemble_inputs(const PathTree& tree, const Reformulation& r,
                            ControllerProcess& c) {
  const int N = c.N;
  const int n = r.spec().n();
  c.q = AdaptedProcess(n, 0, N);
  c.u = AdaptedProcess(r.spec().m(), 0, N);
  for (int k = 0; k <= N; ++k) {
    Matrix q = c.solution.z.lifted(tree, k, k) -
               r.spec().Abar * c.solution.x.lifted(tree, k, k);
    const Matrix v = c.v.lifted(tree, k, k);
    c.u.set(k, k, reconstruct_u(r.transform, q, v));
    c.q.set(k, k, std::move(q));
  }
}

inline Vector checked_initial_state(const Reformulation& r, const Vector& x) {
  if (x.size() != r.spec().n()) {
    throw Error(ErrorCode::kDimensionMismatch, "initial state has wrong length");
  }
  return x;
}

}  // namespace internal

/// v(i) = D^T C(i-1)^T ... C(0)^T G_N^{-1} x, then x(k), z(k) from the
/// backward recursion with x(N+1) = 0, and q(k) = z(k) - Abar x(k).
inline ControllerProcess null_controller(const PathTree& tree,
                                         const Reformulation& r,
                                         const Vector& x, int N) {
  const BsdeForm& b = r.bsde;
  internal::checked_initial_state(r, x);
  ControllerProcess c;
  c.N = N;
  c.kind = TargetKind::kNull;
  c.gramian = gramian(b, N);
  const Vector y0 = internal::solve_gramian(c.gramian, x);
  const AdaptedProcess y = adjoint_process(tree, b.C, b.Cbar, y0, N);
  c.v = AdaptedProcess(static_cast<int>(b.D.cols()), 0, N);
  for (int k = 0; k <= N; ++k) {
    c.v.set(k, k, b.D.transpose() * y.values(k));
  }
  c.solution = backward_solve(
      tree, b, Matrix::Zero(b.n(), static_cast<Index>(tree.count(N + 1))), c.v, N);
  internal::assemble_inputs(tree, r, c);
  c.x0_error = (c.solution.x.values(0).col(0) - x).cwiseAbs().maxCoeff();
  return c;
}

/// Steers x to the terminal value xi (a level on histories of length N+1):
/// the homogeneous solution from xi plus the null controller for
/// x - E[C(0)...C(N) xi].
inline ControllerProcess steer_to_target(
    const PathTree& tree, const Reformulation& r, const Vector& x,
    const Matrix& xi, int N, double tol = kDefaultMembershipTolerance) {
  internal::checked_initial_state(r, x);
  const Membership homogeneous = member_of_S(tree, r.bsde, xi, N, tol);
  if (!homogeneous.member) {
    throw Error(ErrorCode::kTargetNotInS,
                "terminal value is not attainable: representation residual " +
                    format_number(homogeneous.residual));
  }
  ControllerProcess c =
      null_controller(tree, r, x - homogeneous.x_tilde0, N);
  c.kind = TargetKind::kTerminal;
  const int n = r.spec().n();
  BsdeSolution total;
  total.horizon = N;
  total.x = AdaptedProcess(n, 0, N + 1);
  total.z = AdaptedProcess(n, 0, N);
  for (int k = 0; k <= N + 1; ++k) {
    total.x.set(k, k,
                homogeneous.solution.x.lifted(tree, k, k) +
                    c.solution.x.lifted(tree, k, k));
    if (k <= N) {
      total.z.set(k, k,
                  homogeneous.solution.z.lifted(tree, k, k) +
                      c.solution.z.lifted(tree, k, k));
    }
  }
  c.solution = std::move(total);
  internal::assemble_inputs(tree, r, c);
  c.x0_error = (c.solution.x.values(0).col(0) - x).cwiseAbs().maxCoeff();
  return c;
}

/// q(k) evaluated from its expanded form
///   E[w(k) sum_{i=k+1}^{N} C(k+1)...C(i-1) D v(i) | F(k-1)] - Abar x(k)
/// by enumerating the histories of length N. Used to cross-check the q
/// obtained through z(k).
inline AdaptedProcess expanded_q(const PathTree& tree, const Reformulation& r,
                                 const ControllerProcess& c) {
  const BsdeForm& b = r.bsde;
  const int N = c.N;
  const int n = b.n();
  const auto& noise = tree.noise();
  AdaptedProcess out(n, 0, N);
  for (int k = 0; k <= N; ++k) {
    const auto nodes = static_cast<Index>(tree.count(k));
    Matrix expect = Matrix::Zero(n, nodes);
    if (k < N) {
      const std::size_t span = tree.count(N - k);
      for (Index p = 0; p < nodes; ++p) {
        for (std::size_t ext = 0; ext < span; ++ext) {
          const std::size_t leaf = static_cast<std::size_t>(p) * span + ext;
          double prob = 1.0;
          for (int j = k; j < N; ++j) {
            prob *= noise.probs[static_cast<std::size_t>(tree.digit(N, leaf, j))];
          }
          const double wk = tree.noise_value(N, leaf, k);
          Vector sum = Vector::Zero(n);
          Matrix left = Matrix::Identity(n, n);  // C(k+1)...C(i-1)
          for (int i = k + 1; i <= N; ++i) {
            if (i >= k + 2) {
              const double w = tree.noise_value(N, leaf, i - 1);
              left = left * (b.C + w * b.Cbar);
            }
            sum += left * (b.D * c.v.at(tree, i, N, leaf));
          }
          expect.col(p) += prob * wk * sum;
        }
      }
    }
    out.set(k, k, expect - r.spec().Abar * c.solution.x.lifted(tree, k, k));
  }
  return out;
}

}  // namespace bsdectl
