#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "random_instances.hpp"

using namespace bsdectl;

namespace {

TEST(InputDelay, Example3) {
  const Reformulation r = testing_support::example_reformulation(3);
  const Matrix G = input_delay_gramian(r.bsde, 1, 2);
  EXPECT_EQ(numerical_rank(G), 2);
  EXPECT_GT(min_singular_value(G), 1e-8);
  EXPECT_LE((G - input_delay_gramian_oracle(r.bsde, 1, 2, r.spec().noise)).norm(), 1e-12);
}

TEST(InputDelay, GramianMatchesOracle) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 40; ++i) {
    testing_support::SystemOptions o;
    o.n = 1 + i % 3;
    o.m = o.n + 1;
    o.input_delay = true;
    o.tau = 1 + i % 2;
    o.noise = i % 4 == 3 ? testing_support::three_point() : NoiseModel::rademacher();
    const Reformulation r = testing_support::random_system(rng, o);
    const int N = i % 5;
    EXPECT_LE((input_delay_gramian(r.bsde, o.tau, N) -
               input_delay_gramian_oracle(r.bsde, o.tau, N, o.noise))
                  .norm(),
              1e-9);
  }
}

TEST(InputDelay, ControllerSteersToZero) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 20; ++i) {
    testing_support::SystemOptions o;
    o.n = 1 + i % 3;
    o.m = o.n + 1;
    o.input_delay = true;
    o.tau = 1 + i % 2;
    o.noise = i % 3 == 2 ? testing_support::three_point() : NoiseModel::rademacher();
    const Reformulation r = testing_support::random_system(rng, o);
    const int N = 3;
    if (!gramian_invertible(input_delay_gramian(r.bsde, o.tau, N))) continue;
    const PathTree tree = make_tree(o.noise, N);
    const Vector x0 = testing_support::uniform_vector(rng, o.n);
    const ControllerProcess c = input_delay_controller(tree, r, x0, N);
    ASSERT_TRUE(c.u1.has_value());
    EXPECT_EQ(c.u1->first_stage(), -o.tau);
    EXPECT_EQ(c.u1->last_stage(), N - o.tau);
    for (int j = -o.tau; j <= N - o.tau; ++j) EXPECT_EQ(c.u1->depth(j), std::max(j, 0));
    EXPECT_LE(c.x0_error, 1e-9);
    const Trajectories traj = forward_simulate_all(tree, r.spec(), x0, c.u, N, &*c.u1);
    EXPECT_LE(max_abs(traj.x.back()), 1e-8);
  }
}

TEST(StateDelay, Example4) {
  const Reformulation r = testing_support::example_reformulation(4);
  const PSequence P = state_delay_P(r.bsde, 1, 2);
  EXPECT_TRUE(P.P[2].isIdentity());
  const Matrix G = state_delay_gramian(r.bsde, P);
  EXPECT_EQ(numerical_rank(G), 2);
  EXPECT_LE((G - state_delay_gramian_oracle(r.bsde, P, r.spec().noise)).norm(), 1e-12);
}

TEST(StateDelay, PSequence) {
  std::mt19937_64 rng(3);
  BsdeForm b;
  b.C = testing_support::uniform(rng, 2, 2);
  b.Cbar = testing_support::uniform(rng, 2, 2);
  b.D = testing_support::uniform(rng, 2, 1);
  b.C1 = testing_support::uniform(rng, 2, 2, 0.5);
  const int N = 5;
  const int d = 2;
  const PSequence P = state_delay_P(b, d, N);
  EXPECT_TRUE(P.P[5].isIdentity());
  EXPECT_TRUE(P.P[4].isIdentity());
  for (int k = N - d; k >= 0; --k) {
    const Matrix chain = b.C * P.P[static_cast<std::size_t>(k) + 1] * b.C *
                         P.P[static_cast<std::size_t>(k) + 2] * *b.C1;
    EXPECT_LE(max_abs(P.P[static_cast<std::size_t>(k)] * (Matrix::Identity(2, 2) - chain) -
                      Matrix::Identity(2, 2)),
              1e-10);
  }
}

TEST(StateDelay, SingularBracket) {
  BsdeForm b;
  b.C = (Matrix(2, 2) << 2, 1, 0, 1).finished();
  b.Cbar = Matrix::Zero(2, 2);
  b.D = Matrix::Ones(2, 1);
  b.C1 = b.C.inverse();  // I - C C1 = 0 at k = 0 for N = 1, d = 1
  try {
    state_delay_P(b, 1, 1);
    FAIL() << "expected SingularPBracketError";
  } catch (const SingularPBracketError& e) {
    EXPECT_EQ(e.index(), 0);
    EXPECT_EQ(e.code(), ErrorCode::kSingularPBracket);
  }
}

TEST(StateDelay, GramianMatchesOracle) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 40; ++i) {
    testing_support::SystemOptions o;
    o.n = 1 + i % 3;
    o.m = o.n + 1;
    o.state_delay = true;
    o.d = 1 + i % 2;
    o.noise = i % 4 == 3 ? testing_support::three_point() : NoiseModel::rademacher();
    const Reformulation r = testing_support::random_system(rng, o);
    const int N = i % 5;
    const PSequence P = state_delay_P(r.bsde, o.d, N);
    EXPECT_LE((state_delay_gramian(r.bsde, P) -
               state_delay_gramian_oracle(r.bsde, P, o.noise))
                  .norm(),
              1e-9);
  }
}

// Dense oracle: all x(k) on all histories as one linear system
//   x(k) - E[C(k) x(k+1) | F(k-1)] - C1 x(k-d) = f(k),  x(N+1) = xi.
Matrix dense_state_delay_x0(const PathTree& tree, const BsdeForm& b, int d, int N,
                            const Matrix& xi, const AdaptedProcess& f,
                            std::vector<Matrix>* levels) {
  const int n = b.n();
  const int s = tree.branching();
  std::vector<Index> offset(static_cast<std::size_t>(N) + 2, 0);
  for (int k = 0; k <= N; ++k) {
    offset[static_cast<std::size_t>(k) + 1] =
        offset[static_cast<std::size_t>(k)] + n * static_cast<Index>(tree.count(k));
  }
  const Index size = offset.back();
  Matrix K = Matrix::Identity(size, size);
  Vector rhs = Vector::Zero(size);
  for (int k = 0; k <= N; ++k) {
    const Matrix fk = f.lifted(tree, k, k);
    for (std::size_t i = 0; i < tree.count(k); ++i) {
      const Index row = offset[static_cast<std::size_t>(k)] + n * static_cast<Index>(i);
      rhs.segment(row, n) = fk.col(static_cast<Index>(i));
      for (int c = 0; c < s; ++c) {
        const double p = tree.noise().probs[static_cast<std::size_t>(c)];
        const Matrix Ck = b.C + tree.noise().support[static_cast<std::size_t>(c)] * b.Cbar;
        const std::size_t child = i * static_cast<std::size_t>(s) + static_cast<std::size_t>(c);
        if (k == N) {
          rhs.segment(row, n) += p * Ck * xi.col(static_cast<Index>(child));
        } else {
          const Index col = offset[static_cast<std::size_t>(k) + 1] + n * static_cast<Index>(child);
          K.block(row, col, n, n) -= p * Ck;
        }
      }
      if (k - d >= 0) {
        const std::size_t anc = tree.ancestor(k, i, k - d);
        const Index col = offset[static_cast<std::size_t>(k - d)] + n * static_cast<Index>(anc);
        K.block(row, col, n, n) -= *b.C1;
      }
    }
  }
  const Vector x = K.fullPivLu().solve(rhs);
  levels->clear();
  for (int k = 0; k <= N; ++k) {
    const Vector seg = x.segment(offset[static_cast<std::size_t>(k)],
                                 offset[static_cast<std::size_t>(k) + 1] - offset[static_cast<std::size_t>(k)]);
    levels->push_back(Eigen::Map<const Matrix>(seg.data(), n, static_cast<Index>(tree.count(k))));
  }
  return levels->front();
}

TEST(StateDelay, BackwardSolveMatchesDenseOracle) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 20; ++i) {
    testing_support::SystemOptions o;
    o.n = 1 + i % 3;
    o.m = o.n + 1;
    o.state_delay = true;
    o.d = 1 + i % 3;
    o.noise = i % 2 ? testing_support::three_point() : NoiseModel::rademacher();
    const Reformulation r = testing_support::random_system(rng, o);
    const int N = 3;
    const PathTree tree = make_tree(o.noise, N);
    const PSequence P = state_delay_P(r.bsde, o.d, N);
    const Matrix xi = testing_support::uniform(rng, o.n, static_cast<int>(tree.count(N + 1)));
    const AdaptedProcess f = testing_support::random_adapted(rng, tree, o.n, 0, N);
    const BsdeSolution sol = state_delay_backward_solve(tree, r.bsde, P, xi, &f);
    std::vector<Matrix> dense;
    dense_state_delay_x0(tree, r.bsde, o.d, N, xi, f, &dense);
    for (int k = 0; k <= N; ++k) {
      EXPECT_LE(max_abs(sol.x.values(k) - dense[static_cast<std::size_t>(k)]), 1e-9)
          << "stage " << k;
    }
    EXPECT_LE(max_abs(sol.x.values(N + 1) - xi), 0.0);
  }
}

TEST(StateDelay, ControllerSteersToZero) {
  std::mt19937_64 rng(6);
  int checked = 0;
  for (int i = 0; i < 30; ++i) {
    testing_support::SystemOptions o;
    o.n = 1 + i % 3;
    o.m = o.n + 1;
    o.state_delay = true;
    o.d = 1 + i % 2;
    const Reformulation r = testing_support::random_system(rng, o);
    const int N = 3;
    const Matrix G = state_delay_gramian(r.bsde, o.d, N);
    if (reciprocal_condition(G) < 1e-4) continue;
    const PathTree tree = make_tree(o.noise, N);
    const Vector x0 = testing_support::uniform_vector(rng, o.n);
    const ControllerProcess c = state_delay_controller(tree, r, x0, N);
    EXPECT_LE(c.x0_error, 1e-9);
    const Trajectories traj = forward_simulate_all(tree, r.spec(), x0, c.u, N);
    EXPECT_LE(max_abs(traj.x.back()), 1e-8);
    ++checked;
  }
  EXPECT_GE(checked, 10);
}

TEST(StateDelay, Example4Controller) {
  const ProblemInstance p = testing_support::example(4);
  const Reformulation r = reformulate(validate(p.system));
  const PathTree tree = make_tree(p.system.noise, p.N);
  const ControllerProcess c = state_delay_controller(tree, r, *p.x0, p.N);
  const Trajectories traj = forward_simulate_all(tree, p.system, *p.x0, c.u, p.N);
  EXPECT_LE(max_abs(traj.x.back()), 1e-8);
  const Membership m = member_of_S_state_delay(tree, r.bsde, state_delay_P(r.bsde, 1, p.N),
                                               Matrix::Zero(2, 8));
  EXPECT_TRUE(m.member);
}

}  // namespace
