#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "random_instances.hpp"

using namespace bsdectl;

namespace {

TEST(PathTree, CountsLabelsAndProbabilities) {
  const PathTree tree(testing_support::three_point(), 3);
  EXPECT_EQ(tree.branching(), 3);
  EXPECT_EQ(tree.count(0), 1u);
  EXPECT_EQ(tree.count(3), 27u);
  for (int depth = 0; depth <= 3; ++depth) {
    double total = 0.0;
    for (std::size_t i = 0; i < tree.count(depth); ++i) {
      total += tree.probability(depth, i);
      EXPECT_EQ(tree.parse_label(tree.label(depth, i)), i);
    }
    EXPECT_NEAR(total, 1.0, 1e-14);
  }
  // "201": w(0) = 2, w(1) = -1, w(2) = 0.
  const std::size_t node = tree.parse_label("201");
  EXPECT_EQ(tree.noise_value(3, node, 0), 2.0);
  EXPECT_EQ(tree.noise_value(3, node, 1), -1.0);
  EXPECT_EQ(tree.noise_value(3, node, 2), 0.0);
  EXPECT_EQ(tree.ancestor(3, node, 1), tree.parse_label("2"));
  EXPECT_NEAR(tree.probability(3, node), (1.0 / 6) * (1.0 / 3) * 0.5, 1e-15);
}

TEST(PathTree, EnumerationCap) {
  EXPECT_BSDE_ERROR(make_tree(NoiseModel::rademacher(), 20), ErrorCode::kEnumerationTooLarge);
  EXPECT_NO_THROW(make_tree(NoiseModel::rademacher(), 19));
  EXPECT_BSDE_ERROR(make_tree(NoiseModel::rademacher(), 4, 16), ErrorCode::kEnumerationTooLarge);
}

TEST(CondExpect, TowerProperty) {
  std::mt19937_64 rng(1);
  const PathTree tree(testing_support::three_point(), 4);
  const Matrix X = testing_support::uniform(rng, 2, static_cast<int>(tree.count(4)));
  for (int j = 0; j <= 4; ++j) {
    for (int i = 0; i <= j; ++i) {
      const Matrix direct = cond_expect(tree, X, 4, i);
      const Matrix nested = cond_expect(tree, cond_expect(tree, X, 4, j), j, i);
      EXPECT_LE(max_abs(direct - nested), 1e-14);
    }
  }
  // Measurable values are unchanged by conditioning on a finer level.
  const Matrix coarse = testing_support::uniform(rng, 2, static_cast<int>(tree.count(2)));
  EXPECT_LE(max_abs(cond_expect(tree, lift(tree, coarse, 2, 4), 4, 2) - coarse), 1e-14);
}

TEST(AdaptedProcess, StagesAndLifting) {
  const PathTree tree(NoiseModel::rademacher(), 3);
  AdaptedProcess p = AdaptedProcess::zeros(tree, 2, -1, 2);
  EXPECT_EQ(p.depth(-1), 0);
  EXPECT_EQ(p.depth(2), 2);
  p.mutable_values(1)(0, 1) = 5.0;
  EXPECT_EQ(p.at(tree, 1, 3, tree.parse_label("101"))(0), 5.0);
  EXPECT_EQ(p.lifted(tree, 1, 3).cols(), 8);
  EXPECT_BSDE_ERROR(p.values(3), ErrorCode::kStageMismatch);
  EXPECT_BSDE_ERROR(p.set(0, 0, Matrix::Zero(3, 1)), ErrorCode::kDimensionMismatch);
  // cond_expect on F(given): given = 0 means histories of length 1.
  const Matrix e = cond_expect(tree, p, 1, 0);
  EXPECT_EQ(e.cols(), 2);
  EXPECT_EQ(e(0, 1), 5.0);
}

TEST(BackwardSolve, SatisfiesRecursion) {
  std::mt19937_64 rng(2);
  for (const NoiseModel& noise : {NoiseModel::rademacher(), testing_support::three_point()}) {
    testing_support::SystemOptions o;
    o.noise = noise;
    const Reformulation r = testing_support::random_system(rng, o);
    const int N = 3;
    const PathTree tree = make_tree(noise, N);
    const AdaptedProcess v = testing_support::random_adapted(rng, tree, 1, 0, N);
    const Matrix xi = testing_support::uniform(rng, 2, static_cast<int>(tree.count(N + 1)));
    const BsdeSolution sol = backward_solve(tree, r.bsde, xi, v, N);
    for (int k = 0; k <= N; ++k) {
      // x(k) = E[(C + w(k) Cbar) x(k+1) | F(k-1)] + D v(k) on each history.
      const Matrix next = sol.x.values(k + 1);
      Matrix product(2, next.cols());
      for (Index j = 0; j < next.cols(); ++j) {
        const double w = tree.noise_value(k + 1, static_cast<std::size_t>(j), k);
        product.col(j) = (r.bsde.C + w * r.bsde.Cbar) * next.col(j);
      }
      const Matrix expected = cond_expect(tree, product, k + 1, k) + r.bsde.D * v.values(k);
      EXPECT_LE(max_abs(sol.x.values(k) - expected), 1e-12);
      EXPECT_EQ(sol.x.depth(k), k);
      EXPECT_EQ(sol.z.depth(k), k);
    }
  }
}

TEST(BackwardSolve, RejectsAnticipatingForcing) {
  const PathTree tree(NoiseModel::rademacher(), 3);
  const Reformulation r = testing_support::example_reformulation(1);
  AdaptedProcess v(1, 0, 1);
  v.set(0, 1, Matrix::Zero(1, 2));  // v(0) depending on w(0)
  v.set(1, 1, Matrix::Zero(1, 2));
  EXPECT_BSDE_ERROR(backward_solve(tree, r.bsde, Matrix::Zero(2, 4), v, 1),
                    ErrorCode::kAdaptednessViolation);
  AdaptedProcess short_v(1, 0, 0);
  short_v.set(0, 0, Matrix::Zero(1, 1));
  EXPECT_BSDE_ERROR(backward_solve(tree, r.bsde, Matrix::Zero(2, 4), short_v, 1),
                    ErrorCode::kStageMismatch);
}

TEST(Membership, RademacherTargetsAreAlwaysRepresentable) {
  std::mt19937_64 rng(3);
  const Reformulation r = testing_support::example_reformulation(1);
  const PathTree tree = make_tree(NoiseModel::rademacher(), 2);
  const Matrix xi = testing_support::uniform(rng, 2, 8);
  const Membership m = member_of_S(tree, r.bsde, xi, 2);
  EXPECT_TRUE(m.member);
  EXPECT_LE(m.residual, 1e-12);
}

// The solution at time 0 is E[C(0) C(1) ... C(N) xi], checked against a
// separate walk over all histories.
TEST(Membership, InitialValueIsProductForm) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 20; ++i) {
    testing_support::SystemOptions o;
    o.n = 1 + i % 3;
    o.m = o.n + 1;
    o.noise = i % 2 ? testing_support::three_point() : NoiseModel::rademacher();
    const Reformulation r = testing_support::random_system(rng, o);
    const int N = 1 + i % 3;
    const PathTree tree = make_tree(o.noise, N);
    const Matrix xi = testing_support::uniform(rng, o.n, static_cast<int>(tree.count(N + 1)));
    const Membership m = member_of_S(tree, r.bsde, xi, N);
    EXPECT_LE(m.crosscheck_error, 1e-12);
  }
}

TEST(Membership, ThreePointLawSeparatesTargets) {
  std::mt19937_64 rng(5);
  testing_support::SystemOptions o;
  o.noise = testing_support::three_point();
  const Reformulation r = testing_support::random_system(rng, o);
  const int N = 2;
  const PathTree tree = make_tree(o.noise, N);
  const Matrix good = testing_support::forward_generated_target(rng, tree, r.bsde, N);
  EXPECT_TRUE(member_of_S(tree, r.bsde, good, N).member);
  Matrix bad(2, static_cast<Index>(tree.count(N + 1)));
  for (std::size_t leaf = 0; leaf < tree.count(N + 1); ++leaf) {
    const double w = tree.noise_value(N + 1, leaf, N);
    bad.col(static_cast<Index>(leaf)) = Vector::Constant(2, w * w - 1.0);
  }
  const Membership m = member_of_S(tree, r.bsde, bad, N);
  EXPECT_FALSE(m.member);
  EXPECT_GT(m.residual, 0.1);
}

TEST(ForwardSimulate, SinglePathMatchesAllPaths) {
  std::mt19937_64 rng(6);
  const ProblemInstance p = testing_support::example(3);
  const int N = 2;
  const PathTree tree = make_tree(p.system.noise, N);
  const AdaptedProcess u = testing_support::random_adapted(rng, tree, 3, 0, N);
  const AdaptedProcess u1 = testing_support::random_adapted(rng, tree, 3, -1, 1);
  const Vector x0 = testing_support::uniform_vector(rng, 2);
  const Trajectories all = forward_simulate_all(tree, p.system, x0, u, N, &u1);
  for (std::size_t leaf = 0; leaf < tree.count(N + 1); ++leaf) {
    std::vector<int> path;
    for (int k = 0; k <= N; ++k) path.push_back(tree.digit(N + 1, leaf, k));
    const auto x = forward_simulate(tree, p.system, x0, u, path, &u1);
    EXPECT_LE((x.back() - all.x.back().col(static_cast<Index>(leaf))).cwiseAbs().maxCoeff(),
              1e-13);
  }
}

TEST(TerminalMatrix, TableTargets) {
  const PathTree tree(NoiseModel::rademacher(), 2);
  Target t;
  t.kind = Target::Kind::kTable;
  t.table["00"] = Vector::Constant(1, 1.0);
  t.table["01"] = Vector::Constant(1, 2.0);
  t.table["10"] = Vector::Constant(1, 3.0);
  EXPECT_BSDE_ERROR(terminal_matrix(t, tree, 1, 1), ErrorCode::kStageMismatch);
  t.table["11"] = Vector::Constant(1, 4.0);
  const Matrix xi = terminal_matrix(t, tree, 1, 1);
  EXPECT_EQ(xi(0, 2), 3.0);
  EXPECT_BSDE_ERROR(terminal_matrix(t, tree, 2, 1), ErrorCode::kDimensionMismatch);
}

}  // namespace
