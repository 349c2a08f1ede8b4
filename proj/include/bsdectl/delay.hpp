#pragma once

#include <algorithm>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "bsdectl/criteria.hpp"
#include "bsdectl/error.hpp"
#include "bsdectl/linalg.hpp"
#include "bsdectl/pathspace.hpp"
#include "bsdectl/synthesis.hpp"
#include "bsdectl/transform.hpp"

namespace bsdectl {

namespace internal {

inline const Matrix& require_D1(const BsdeForm& b) {
  if (!b.D1) {
    throw Error(ErrorCode::kInvalidArgument, "system has no delayed input channel");
  }
  return *b.D1;
}

inline const Matrix& require_C1(const BsdeForm& b) {
  if (!b.C1) {
    throw Error(ErrorCode::kInvalidArgument, "system has no delayed state term");
  }
  return *b.C1;
}

}  // namespace internal

// ---------------------------------------------------------------------------
// Input delay: x(k+1) = [A x + B1 u1(k - tau) + B u] + w(k)[Abar x + Bbar u].

/// G^tau_N = G_N + sum_i E[E_i D1 D1^T E_i^T] with
/// E_i = E[C(0)...C(i-1) | F(i-tau-1)]. By stage independence
/// E_i = C(0)...C(i-tau-1) C^tau for i > tau and C^i otherwise, so the i-th
/// term is C^i D1 D1^T (C^T)^i for i <= tau and
/// Lambda^{i-tau}(C^tau D1 D1^T (C^T)^tau) beyond.
inline Matrix input_delay_gramian(const BsdeForm& b, int tau, int N) {
  const Matrix& D1 = internal::require_D1(b);
  if (tau < 1) throw Error(ErrorCode::kInvalidArgument, "tau must be >= 1");
  Matrix G = gramian(b, N);
  const MomentOperator lambda{b.C, b.Cbar};
  Matrix power = Matrix::Identity(b.n(), b.n());
  Matrix term;
  for (int i = 0; i <= N; ++i) {
    if (i <= tau) {
      term = power * D1 * D1.transpose() * power.transpose();
      power = power * b.C;
    } else {
      term = lambda(term);
    }
    G += term;
  }
  return G;
}

/// G^tau_N with every conditional expectation evaluated by averaging the
/// path products over the unobserved stages.
inline Matrix input_delay_gramian_oracle(const BsdeForm& b, int tau, int N,
                                         const NoiseModel& noise,
                                         std::size_t cap = kDefaultEnumerationCap) {
  const Matrix& D1 = internal::require_D1(b);
  const int n = b.n();
  Matrix G = gramian_oracle(b, N, noise, cap);
  const PathTree tree(noise, N, cap);
  const auto s = static_cast<Index>(tree.branching());
  // Column j of `products` is vec(C(0)...C(i-1)) on history j.
  const Matrix identity = Matrix::Identity(n, n);
  Matrix products = Eigen::Map<const Vector>(identity.data(), n * n);
  for (int i = 0; i <= N; ++i) {
    if (i > 0) {
      Matrix next(n * n, products.cols() * s);
      for (Index p = 0; p < products.cols(); ++p) {
        const Eigen::Map<const Matrix> parent(products.col(p).data(), n, n);
        for (Index c = 0; c < s; ++c) {
          const double w = noise.support[static_cast<std::size_t>(c)];
          const Matrix child = parent * (b.C + w * b.Cbar);
          next.col(p * s + c) = Eigen::Map<const Vector>(child.data(), n * n);
        }
      }
      products = std::move(next);
    }
    const int known = std::max(i - tau, 0);
    const Matrix conditional = cond_expect(tree, products, i, known);
    for (Index j = 0; j < conditional.cols(); ++j) {
      const Eigen::Map<const Matrix> e(conditional.col(j).data(), n, n);
      const Matrix ed = e * D1;
      G += tree.probability(known, static_cast<std::size_t>(j)) * (ed * ed.transpose());
    }
  }
  return G;
}

/// v(i) = D^T C(i-1)^T...C(0)^T G^{-1} x and
/// u1(i - tau) = D1^T E[C(i-1)^T...C(0)^T | F(i-tau-1)] G^{-1} x for
/// i = 0..N, so u1 covers stages -tau..N-tau. Stages before 0 are
/// deterministic inputs applied ahead of the horizon.
inline ControllerProcess input_delay_controller(const PathTree& tree,
                                                const Reformulation& r,
                                                const Vector& x, int N) {
  const BsdeForm& b = r.bsde;
  const Matrix& D1 = internal::require_D1(b);
  if (!r.spec().input_delay) {
    throw Error(ErrorCode::kInvalidArgument, "system has no input delay");
  }
  const int tau = r.spec().input_delay->tau;
  internal::checked_initial_state(r, x);

  ControllerProcess c;
  c.N = N;
  c.gramian = input_delay_gramian(b, tau, N);
  const Vector y0 = internal::solve_gramian(c.gramian, x);
  const AdaptedProcess y = adjoint_process(tree, b.C, b.Cbar, y0, N);

  c.v = AdaptedProcess(static_cast<int>(b.D.cols()), 0, N);
  AdaptedProcess u1(static_cast<int>(D1.cols()), -tau, N - tau);
  for (int i = 0; i <= N; ++i) {
    c.v.set(i, i, b.D.transpose() * y.values(i));
    const int known = std::max(i - tau, 0);
    u1.set(i - tau, known,
           D1.transpose() * cond_expect(tree, y.values(i), i, known));
  }

  AdaptedProcess forcing(b.n(), 0, N);
  for (int k = 0; k <= N; ++k) {
    forcing.set(k, k,
                b.D * c.v.values(k) + D1 * u1.lifted(tree, k - tau, k));
  }
  c.solution = backward_solve_forced(
      tree, b.C, b.Cbar,
      Matrix::Zero(b.n(), static_cast<Index>(tree.count(N + 1))), &forcing, N);
  c.u1 = std::move(u1);
  internal::assemble_inputs(tree, r, c);
  c.x0_error = (c.solution.x.values(0).col(0) - x).cwiseAbs().maxCoeff();
  return c;
}

// ---------------------------------------------------------------------------
// State delay: x(k+1) = [A x + A1 x(k - d) + B u] + w(k)[Abar x + Bbar u],
// with x(s) = 0 for s < 0.

struct PSequence {
  std::vector<Matrix> P;  // P(0..N)
  int d = 1;
  int N = 0;
};

/// P(k) = I for k = N-d+1..N and
/// P(k) = [I - C P(k+1) C P(k+2) ... C P(k+d) C1]^{-1} for k = N-d..0.
inline PSequence state_delay_P(const BsdeForm& b, int d, int N) {
  const Matrix& C1 = internal::require_C1(b);
  if (d < 1) throw Error(ErrorCode::kInvalidArgument, "d must be >= 1");
  if (N < 0) throw Error(ErrorCode::kInvalidArgument, "N must be >= 0");
  const int n = b.n();
  PSequence out;
  out.d = d;
  out.N = N;
  out.P.assign(static_cast<std::size_t>(N) + 1, Matrix::Identity(n, n));
  for (int k = N - d; k >= 0; --k) {
    Matrix chain = Matrix::Identity(n, n);
    for (int j = k + 1; j <= k + d; ++j) {
      chain = chain * b.C * out.P[static_cast<std::size_t>(j)];
    }
    const Matrix bracket = Matrix::Identity(n, n) - chain * C1;
    if (reciprocal_condition(bracket) <= kPencilRcondThreshold) {
      throw SingularPBracketError(k, "bracket " + format_matrix(bracket) +
                                         " is singular");
    }
    out.P[static_cast<std::size_t>(k)] = bracket.fullPivLu().inverse();
  }
  return out;
}

/// G^d_N = sum_j T_0^(j) with T_j^(j) = P(j) D D^T P(j)^T and
/// T_i^(j) = P(i) Lambda(T_{i+1}^(j)) P(i)^T.
inline Matrix state_delay_gramian(const BsdeForm& b, const PSequence& P) {
  const MomentOperator lambda{b.C, b.Cbar};
  const int N = P.N;
  Matrix G = Matrix::Zero(b.n(), b.n());
  for (int j = 0; j <= N; ++j) {
    const Matrix& Pj = P.P[static_cast<std::size_t>(j)];
    Matrix T = Pj * b.D * b.D.transpose() * Pj.transpose();
    for (int i = j - 1; i >= 0; --i) {
      const Matrix& Pi = P.P[static_cast<std::size_t>(i)];
      T = Pi * lambda(T) * Pi.transpose();
    }
    G += T;
  }
  return G;
}

inline Matrix state_delay_gramian(const BsdeForm& b, int d, int N) {
  return state_delay_gramian(b, state_delay_P(b, d, N));
}

/// G^d_N averaged literally over every history:
/// E[sum_j P(0)C(0)...P(j-1)C(j-1)P(j) D (...)^T].
inline Matrix state_delay_gramian_oracle(const BsdeForm& b, const PSequence& P,
                                         const NoiseModel& noise,
                                         std::size_t cap = kDefaultEnumerationCap) {
  validate_noise(noise);
  const int N = P.N;
  internal::check_enumeration(noise, N, cap);
  const int n = b.n();
  Matrix total = Matrix::Zero(n, n);
  std::vector<Matrix> prefix(static_cast<std::size_t>(N) + 1);
  prefix[0] = Matrix::Identity(n, n);
  std::function<void(int, double)> walk = [&](int j, double prob) {
    const Matrix left = prefix[static_cast<std::size_t>(j)] * P.P[static_cast<std::size_t>(j)];
    const Matrix term = left * b.D;
    total += prob * (term * term.transpose());
    if (j == N) return;
    for (int c = 0; c < noise.size(); ++c) {
      const double w = noise.support[static_cast<std::size_t>(c)];
      prefix[static_cast<std::size_t>(j) + 1] = left * (b.C + w * b.Cbar);
      walk(j + 1, prob * noise.probs[static_cast<std::size_t>(c)]);
    }
  };
  walk(0, 1.0);
  return total;
}

/// Solves x(k) = E[C(k) x(k+1) + C1 x(k-d) + f(k) | F(k-1)] with
/// x(N+1) = terminal and x(s) = 0 for s < 0. The backward sweep writes
/// x(k) = a(k) + sum_{s=1..d} K_s(k) x(k-s) with deterministic K_s:
///   a(k)   = P(k) (E[C(k) a(k+1) | F(k-1)] + f(k)),
///   K_d(k) = P(k) C1,  K_s(k) = P(k) C K_{s+1}(k+1),
/// and the states are then recovered forward from the zero pre-history.
inline BsdeSolution state_delay_backward_solve(const PathTree& tree,
                                               const BsdeForm& b,
                                               const PSequence& P,
                                               const Matrix& terminal,
                                               const AdaptedProcess* forcing) {
  const Matrix& C1 = internal::require_C1(b);
  const int N = P.N;
  const int d = P.d;
  const int n = b.n();
  internal::check_terminal(tree, terminal, n, N);
  if (forcing) internal::check_forcing(*forcing, n, N);

  // a(k) for k = 0..N+1 is exactly the undelayed backward recursion with
  // P(k) applied at each stage.
  std::vector<Matrix> a(static_cast<std::size_t>(N) + 2);
  a[static_cast<std::size_t>(N) + 1] = terminal;
  // K[k][s-1] = K_s(k); K(N+1) = 0.
  std::vector<std::vector<Matrix>> K(static_cast<std::size_t>(N) + 2,
                                     std::vector<Matrix>(static_cast<std::size_t>(d),
                                                         Matrix::Zero(n, n)));
  const auto s_branch = static_cast<Index>(tree.branching());
  const auto& support = tree.noise().support;
  const auto& probs = tree.noise().probs;
  for (int k = N; k >= 0; --k) {
    const Matrix& next = a[static_cast<std::size_t>(k) + 1];
    const auto nodes = static_cast<Index>(tree.count(k));
    Matrix mean = Matrix::Zero(n, nodes);
    Matrix wmean = Matrix::Zero(n, nodes);
    for (Index i = 0; i < nodes; ++i) {
      for (Index c = 0; c < s_branch; ++c) {
        const double p = probs[static_cast<std::size_t>(c)];
        mean.col(i) += p * next.col(i * s_branch + c);
        wmean.col(i) += p * support[static_cast<std::size_t>(c)] * next.col(i * s_branch + c);
      }
    }
    Matrix rhs = b.C * mean + b.Cbar * wmean;
    if (forcing) rhs += forcing->lifted(tree, k, k);
    const Matrix& Pk = P.P[static_cast<std::size_t>(k)];
    a[static_cast<std::size_t>(k)] = Pk * rhs;
    auto& Kk = K[static_cast<std::size_t>(k)];
    Kk[static_cast<std::size_t>(d) - 1] = Pk * C1;
    for (int s = 1; s < d; ++s) {
      Kk[static_cast<std::size_t>(s) - 1] =
          Pk * b.C * K[static_cast<std::size_t>(k) + 1][static_cast<std::size_t>(s)];
    }
  }

  BsdeSolution sol;
  sol.horizon = N;
  sol.x = AdaptedProcess(n, 0, N + 1);
  sol.z = AdaptedProcess(n, 0, N);
  for (int k = 0; k <= N + 1; ++k) {
    Matrix xk = a[static_cast<std::size_t>(k)];
    for (int s = 1; s <= d && k - s >= 0; ++s) {
      xk += K[static_cast<std::size_t>(k)][static_cast<std::size_t>(s) - 1] *
            sol.x.lifted(tree, k - s, k);
    }
    sol.x.set(k, k, std::move(xk));
  }
  for (int k = 0; k <= N; ++k) {
    const Matrix next = sol.x.values(k + 1);
    const auto nodes = static_cast<Index>(tree.count(k));
    Matrix wmean = Matrix::Zero(n, nodes);
    for (Index i = 0; i < nodes; ++i) {
      for (Index c = 0; c < s_branch; ++c) {
        wmean.col(i) += probs[static_cast<std::size_t>(c)] *
                        support[static_cast<std::size_t>(c)] *
                        next.col(i * s_branch + c);
      }
    }
    sol.z.set(k, k, std::move(wmean));
  }
  return sol;
}

/// v(j) = D^T P(j)^T C(j-1)^T P(j-1)^T ... C(0)^T P(0)^T (G^d_N)^{-1} x.
inline ControllerProcess state_delay_controller(const PathTree& tree,
                                                const Reformulation& r,
                                                const Vector& x, int N) {
  const BsdeForm& b = r.bsde;
  internal::require_C1(b);
  if (!r.spec().state_delay) {
    throw Error(ErrorCode::kInvalidArgument, "system has no state delay");
  }
  internal::checked_initial_state(r, x);
  const PSequence P = state_delay_P(b, r.spec().state_delay->d, N);

  ControllerProcess c;
  c.N = N;
  c.gramian = state_delay_gramian(b, P);
  const Vector y0 = internal::solve_gramian(c.gramian, x);

  // Y(0) = P(0)^T y0, Y(j+1) = P(j+1)^T C(j)^T Y(j).
  const auto s = static_cast<Index>(tree.branching());
  const auto& support = tree.noise().support;
  c.v = AdaptedProcess(static_cast<int>(b.D.cols()), 0, N);
  Matrix y = P.P[0].transpose() * y0;
  for (int j = 0; j <= N; ++j) {
    if (j > 0) {
      const Matrix Pt = P.P[static_cast<std::size_t>(j)].transpose();
      const Matrix a = Pt * b.C.transpose() * y;
      const Matrix bb = Pt * b.Cbar.transpose() * y;
      Matrix next(y.rows(), y.cols() * s);
      for (Index i = 0; i < y.cols(); ++i) {
        for (Index ch = 0; ch < s; ++ch) {
          next.col(i * s + ch) =
              a.col(i) + support[static_cast<std::size_t>(ch)] * bb.col(i);
        }
      }
      y = std::move(next);
    }
    c.v.set(j, j, b.D.transpose() * y);
  }

  AdaptedProcess forcing(b.n(), 0, N);
  for (int k = 0; k <= N; ++k) forcing.set(k, k, b.D * c.v.values(k));
  c.solution = state_delay_backward_solve(
      tree, b, P, Matrix::Zero(b.n(), static_cast<Index>(tree.count(N + 1))),
      &forcing);
  internal::assemble_inputs(tree, r, c);
  c.x0_error = (c.solution.x.values(0).col(0) - x).cwiseAbs().maxCoeff();
  return c;
}

/// Attainable terminal values for the delayed BSDE, tested like
/// member_of_S: homogeneous backward solve from xi, then the
/// representation residual.
inline Membership member_of_S_state_delay(const PathTree& tree,
                                          const BsdeForm& b, const PSequence& P,
                                          const Matrix& xi,
                                          double tol = kDefaultMembershipTolerance) {
  Membership out;
  out.solution = state_delay_backward_solve(tree, b, P, xi, nullptr);
  out.residual = representation_residual(tree, out.solution).max;
  out.member = out.residual <= tol * std::max(1.0, max_abs(xi));
  out.x_tilde0 = out.solution.x.values(0).col(0);
  return out;
}

}  // namespace bsdectl
