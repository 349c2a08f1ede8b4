#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "random_instances.hpp"

using namespace bsdectl;

namespace {

Matrix identity_block(Index n, Index m) {
  Matrix out = Matrix::Zero(n, m);
  out.leftCols(n).setIdentity();
  return out;
}

TEST(ComputeM, Example1UserMIsAccepted) {
  const ProblemInstance p = testing_support::example(1);
  const Matrix M = compute_M(p.system.Bbar, p.system.M_user);
  EXPECT_TRUE(M == *p.system.M_user);
  EXPECT_LE(max_abs(p.system.Bbar * M - identity_block(2, 3)), 1e-10);
}

TEST(ComputeM, AlgorithmicNormalForm) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const int n = 1 + i % 4;
    const int m = n + i % 3;
    const Matrix Bbar = testing_support::uniform(rng, n, m);
    const Matrix M = compute_M(Bbar, std::nullopt);
    EXPECT_LE(max_abs(Bbar * M - identity_block(n, m)), 1e-10);
    EXPECT_GT(reciprocal_condition(M), 1e-12);
  }
}

TEST(ComputeM, RejectsBadUserM) {
  const Matrix Bbar = testing_support::example(1).system.Bbar;
  EXPECT_BSDE_ERROR(compute_M(Bbar, Matrix::Identity(3, 3)), ErrorCode::kBadUserM);
  EXPECT_BSDE_ERROR(compute_M(Bbar, Matrix::Zero(3, 3)), ErrorCode::kBadUserM);
  EXPECT_BSDE_ERROR(compute_M(Bbar, Matrix::Identity(2, 2)), ErrorCode::kBadUserM);
}

TEST(ComputeM, RankDeficientBbar) {
  EXPECT_BSDE_ERROR(compute_M(Matrix::Ones(2, 3), std::nullopt), ErrorCode::kRankDeficient);
}

TEST(ToBsde, CoefficientIdentities) {
  const Reformulation r = testing_support::example_reformulation(1);
  const SystemSpec& s = r.spec();
  const InputTransform& t = r.transform;
  EXPECT_LE(max_abs(s.B * t.M - (Matrix(2, 3) << t.L, t.F).finished()), 1e-12);
  EXPECT_LE(max_abs(r.bsde.C * (s.A - t.L * s.Abar) - Matrix::Identity(2, 2)), 1e-12);
  EXPECT_LE(max_abs(r.bsde.Cbar + r.bsde.C * t.L), 1e-12);
  EXPECT_LE(max_abs(r.bsde.D + r.bsde.C * t.F), 1e-12);
}

TEST(ToBsde, Example1Values) {
  // With the given M: L = [[1, 1], [1, 1]], F = [0, 1]^T, so
  // A - L Abar = [[0, -2], [-2, -5]].
  const Reformulation r = testing_support::example_reformulation(1);
  const Matrix pencil = (Matrix(2, 2) << 0, -2, -2, -5).finished();
  EXPECT_LE(max_abs(r.transform.L - Matrix::Ones(2, 2)), 1e-12);
  EXPECT_LE(max_abs(r.transform.F - (Matrix(2, 1) << 0, 1).finished()), 1e-12);
  EXPECT_LE(max_abs(r.bsde.C - pencil.inverse()), 1e-12);
}

TEST(ToBsde, SingularPencil) {
  SystemSpec s;
  s.Abar = Matrix::Identity(2, 2);
  s.Bbar = identity_block(2, 3);
  s.B = (Matrix(2, 3) << 1, 2, 0, 3, 4, 1).finished();
  s.A = s.B.leftCols(2) * s.Abar;  // A - L Abar = 0 with M = I
  EXPECT_BSDE_ERROR(reformulate(validate(s)), ErrorCode::kSingularPencil);
}

TEST(ToBsde, DelayCoefficients) {
  const Reformulation r3 = testing_support::example_reformulation(3);
  ASSERT_TRUE(r3.bsde.D1.has_value());
  EXPECT_LE(max_abs(*r3.bsde.D1 + r3.bsde.C * r3.spec().input_delay->B1), 1e-12);
  const Reformulation r4 = testing_support::example_reformulation(4);
  ASSERT_TRUE(r4.bsde.C1.has_value());
  EXPECT_LE(max_abs(*r4.bsde.C1 + r4.bsde.C * r4.spec().state_delay->A1), 1e-12);
}

// The forward step x' = [A x + B u] + w [Abar x + Bbar u] with u = M [q; v]
// and z = Abar x + q satisfies x = C (x' - w z) + Cbar z + D v.
TEST(Transform, ForwardStepMatchesBsdeRelation) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> w_dist(-2.0, 2.0);
  for (int i = 0; i < 200; ++i) {
    testing_support::SystemOptions o;
    o.n = 1 + i % 3;
    o.m = o.n + 1 + i % 2;
    const Reformulation r = testing_support::random_system(rng, o);
    const SystemSpec& s = r.spec();
    const Vector x = testing_support::uniform_vector(rng, o.n);
    const Vector q = testing_support::uniform_vector(rng, o.n);
    const Vector v = testing_support::uniform_vector(rng, o.m - o.n);
    const double w = w_dist(rng);
    const Vector u = reconstruct_u(r.transform, q, v);
    const Vector next = s.A * x + s.B * u + w * (s.Abar * x + s.Bbar * u);
    const Vector z = s.Abar * x + q;
    const Vector back = r.bsde.C * (next - w * z) + r.bsde.Cbar * z + r.bsde.D * v;
    EXPECT_LE((back - x).cwiseAbs().maxCoeff(), 1e-9);
    const auto [q2, v2] = split_u(r.transform, u);
    EXPECT_LE((q2 - q).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LE((v2 - v).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Transform, VerdictDoesNotDependOnM) {
  std::mt19937_64 rng(5);
  auto check = [](const SystemSpec& spec) {
    SystemSpec alt = spec;
    // Any M' = M [[I, 0], [K, G]] keeps Bbar M' = [I 0].
    const Matrix M = compute_M(spec.Bbar, std::nullopt);
    const int n = spec.n();
    const int m = spec.m();
    Matrix T = Matrix::Identity(m, m);
    T.bottomLeftCorner(m - n, n).setConstant(0.3);
    if (m > n) T.bottomRightCorner(m - n, m - n) *= -2.0;
    alt.M_user = M * T;
    const Reformulation a = reformulate(validate(spec));
    const Reformulation b = reformulate(validate(alt));
    const ControllabilityReport ra = decide(a, 2 * n);
    const ControllabilityReport rb = decide(b, 2 * n);
    EXPECT_EQ(ra.controllable, rb.controllable);
    EXPECT_EQ(ra.rank_R, rb.rank_R);
  };
  SystemSpec ex1 = testing_support::example(1).system;
  check(ex1);
  for (int i = 0; i < 50; ++i) {
    testing_support::SystemOptions o;
    o.n = 1 + i % 3;
    o.m = o.n + 1 + i % 2;
    check(testing_support::random_system(rng, o).spec());
  }
}

}  // namespace
