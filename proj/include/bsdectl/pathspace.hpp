#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bsdectl/error.hpp"
#include "bsdectl/linalg.hpp"
#include "bsdectl/model.hpp"
#include "bsdectl/transform.hpp"

namespace bsdectl {

inline constexpr std::size_t kDefaultEnumerationCap = std::size_t{1} << 20;

/// All noise histories (w(0), ..., w(k-1)) for k = 0..max_depth. A node at
/// depth k is an index in [0, s^k); its digits in base s, most significant
/// first, are the support indices of w(0), ..., w(k-1). Children of node p
/// are p*s + c, so every level is contiguous and ordered lexicographically.
class PathTree {
 public:
  PathTree(NoiseModel noise, int max_depth,
           std::size_t cap = kDefaultEnumerationCap)
      : noise_(std::move(noise)), max_depth_(max_depth) {
    validate_noise(noise_);
    if (max_depth_ < 0) {
      throw Error(ErrorCode::kInvalidArgument, "tree depth must be >= 0");
    }
    s_ = noise_.size();
    counts_.push_back(1);
    for (int k = 1; k <= max_depth_; ++k) {
      if (counts_.back() > cap / static_cast<std::size_t>(s_)) {
        throw Error(ErrorCode::kEnumerationTooLarge,
                    std::to_string(s_) + "^" + std::to_string(max_depth_) +
                        " histories exceed the enumeration cap " +
                        std::to_string(cap));
      }
      counts_.push_back(counts_.back() * static_cast<std::size_t>(s_));
    }
    probs_.resize(static_cast<std::size_t>(max_depth_) + 1);
    probs_[0] = {1.0};
    for (int k = 1; k <= max_depth_; ++k) {
      auto& level = probs_[static_cast<std::size_t>(k)];
      const auto& parent = probs_[static_cast<std::size_t>(k - 1)];
      level.resize(counts_[static_cast<std::size_t>(k)]);
      for (std::size_t i = 0; i < level.size(); ++i) {
        level[i] = parent[i / static_cast<std::size_t>(s_)] *
                   noise_.probs[i % static_cast<std::size_t>(s_)];
      }
    }
  }

  const NoiseModel& noise() const { return noise_; }
  int max_depth() const { return max_depth_; }
  int branching() const { return s_; }

  std::size_t count(int depth) const {
    check_depth(depth);
    return counts_[static_cast<std::size_t>(depth)];
  }

  double probability(int depth, std::size_t node) const {
    check_depth(depth);
    return probs_[static_cast<std::size_t>(depth)][node];
  }

  /// Support index of w(stage) on the history `node` at `depth`.
  int digit(int depth, std::size_t node, int stage) const {
    const std::size_t shift = counts_[static_cast<std::size_t>(depth - 1 - stage)];
    return static_cast<int>((node / shift) % static_cast<std::size_t>(s_));
  }

  double noise_value(int depth, std::size_t node, int stage) const {
    return noise_.support[static_cast<std::size_t>(digit(depth, node, stage))];
  }

  std::size_t ancestor(int depth, std::size_t node, int target_depth) const {
    return node / counts_[static_cast<std::size_t>(depth - target_depth)];
  }

  std::string label(int depth, std::size_t node) const {
    static constexpr std::string_view kDigits =
        "0123456789abcdefghijklmnopqrstuvwxyz";
    std::string out(static_cast<std::size_t>(depth), '0');
    for (int j = depth - 1; j >= 0; --j) {
      out[static_cast<std::size_t>(j)] =
          kDigits[node % static_cast<std::size_t>(s_)];
      node /= static_cast<std::size_t>(s_);
    }
    return out;
  }

  /// Inverse of label(); the depth is the label length.
  std::size_t parse_label(std::string_view text) const {
    if (static_cast<int>(text.size()) > max_depth_) {
      throw Error(ErrorCode::kInvalidArgument,
                  "history '" + std::string(text) + "' is longer than the tree");
    }
    std::size_t node = 0;
    for (char ch : text) {
      int d = -1;
      if (ch >= '0' && ch <= '9') d = ch - '0';
      if (ch >= 'a' && ch <= 'z') d = 10 + (ch - 'a');
      if (d < 0 || d >= s_) {
        throw Error(ErrorCode::kInvalidArgument,
                    "history '" + std::string(text) + "' has an invalid digit");
      }
      node = node * static_cast<std::size_t>(s_) + static_cast<std::size_t>(d);
    }
    return node;
  }

 private:
  void check_depth(int depth) const {
    if (depth < 0 || depth > max_depth_) {
      throw Error(ErrorCode::kStageMismatch,
                  "depth " + std::to_string(depth) + " outside tree [0, " +
                      std::to_string(max_depth_) + "]");
    }
  }

  NoiseModel noise_;
  int max_depth_ = 0;
  int s_ = 0;
  std::vector<std::size_t> counts_;
  std::vector<std::vector<double>> probs_;
};

/// Tree whose leaves carry terminal values x(N+1), i.e. depth N+1.
inline PathTree make_tree(const NoiseModel& noise, int N,
                          std::size_t cap = kDefaultEnumerationCap) {
  return PathTree(noise, N + 1, cap);
}

// ---------------------------------------------------------------------------
// Level-wise operations. A "level" is a dim x s^depth matrix whose column i
// holds the value on history i.

/// E[X | history up to target_depth] for X measurable at `depth`.
inline Matrix cond_expect(const PathTree& tree, const Matrix& values,
                          int depth, int target_depth) {
  if (target_depth < 0 || target_depth > depth ||
      values.cols() != static_cast<Index>(tree.count(depth))) {
    throw Error(ErrorCode::kStageMismatch,
                "cannot condition a depth-" + std::to_string(depth) +
                    " level onto depth " + std::to_string(target_depth));
  }
  const auto s = static_cast<Index>(tree.branching());
  const auto& p = tree.noise().probs;
  Matrix current = values;
  for (int k = depth; k > target_depth; --k) {
    const auto parents = static_cast<Index>(tree.count(k - 1));
    Matrix next = Matrix::Zero(current.rows(), parents);
    for (Index i = 0; i < parents; ++i) {
      for (Index c = 0; c < s; ++c) {
        next.col(i) += p[static_cast<std::size_t>(c)] * current.col(i * s + c);
      }
    }
    current = std::move(next);
  }
  return current;
}

/// Replicates a level measurable at `depth` onto the finer `target_depth`.
inline Matrix lift(const PathTree& tree, const Matrix& values, int depth,
                   int target_depth) {
  if (target_depth < depth ||
      values.cols() != static_cast<Index>(tree.count(depth))) {
    throw Error(ErrorCode::kStageMismatch,
                "cannot lift depth " + std::to_string(depth) + " to depth " +
                    std::to_string(target_depth));
  }
  if (target_depth == depth) return values;
  const auto cols = static_cast<Index>(tree.count(target_depth));
  const auto block = static_cast<Index>(tree.count(target_depth - depth));
  Matrix out(values.rows(), cols);
  for (Index i = 0; i < cols; ++i) out.col(i) = values.col(i / block);
  return out;
}

inline Vector expectation(const PathTree& tree, const Matrix& values,
                          int depth) {
  return cond_expect(tree, values, depth, 0).col(0);
}

// ---------------------------------------------------------------------------

/// Stage-indexed vector process. Each stage stores values only on the
/// histories it is measurable with respect to (its depth), so the value at
/// stage k depends on w(0), ..., w(depth-1) by construction.
class AdaptedProcess {
 public:
  AdaptedProcess() = default;
  AdaptedProcess(int dim, int first_stage, int last_stage)
      : dim_(dim), first_(first_stage) {
    if (last_stage < first_stage - 1) {
      throw Error(ErrorCode::kInvalidArgument, "empty stage range");
    }
    levels_.resize(static_cast<std::size_t>(last_stage - first_stage + 1));
  }

  /// Stages first..last, each F(k-1)-adapted (depth max(k, 0)), all zero.
  static AdaptedProcess zeros(const PathTree& tree, int dim, int first_stage,
                              int last_stage) {
    AdaptedProcess p(dim, first_stage, last_stage);
    for (int k = first_stage; k <= last_stage; ++k) {
      const int depth = std::max(k, 0);
      p.set(k, depth, Matrix::Zero(dim, static_cast<Index>(tree.count(depth))));
    }
    return p;
  }

  int dim() const { return dim_; }
  int first_stage() const { return first_; }
  int last_stage() const {
    return first_ + static_cast<int>(levels_.size()) - 1;
  }
  bool has_stage(int stage) const {
    return stage >= first_ && stage <= last_stage() &&
           level(stage).depth >= 0;
  }

  void set(int stage, int depth, Matrix values) {
    if (stage < first_ || stage > last_stage()) {
      throw Error(ErrorCode::kStageMismatch,
                  "stage " + std::to_string(stage) + " outside process range");
    }
    if (values.rows() != dim_) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "process value has " + std::to_string(values.rows()) +
                      " rows, expected " + std::to_string(dim_));
    }
    auto& lvl = levels_[static_cast<std::size_t>(stage - first_)];
    lvl.depth = depth;
    lvl.values = std::move(values);
  }

  int depth(int stage) const { return checked(stage).depth; }
  const Matrix& values(int stage) const { return checked(stage).values; }
  Matrix& mutable_values(int stage) {
    checked(stage);
    return levels_[static_cast<std::size_t>(stage - first_)].values;
  }

  /// Value at `stage` on the history `node` of depth `node_depth`.
  Vector at(const PathTree& tree, int stage, int node_depth,
            std::size_t node) const {
    const auto& lvl = checked(stage);
    if (node_depth < lvl.depth) {
      throw Error(ErrorCode::kStageMismatch,
                  "stage " + std::to_string(stage) + " needs a history of length " +
                      std::to_string(lvl.depth));
    }
    return lvl.values.col(
        static_cast<Index>(tree.ancestor(node_depth, node, lvl.depth)));
  }

  /// Values at `stage` replicated onto every history of `target_depth`.
  Matrix lifted(const PathTree& tree, int stage, int target_depth) const {
    const auto& lvl = checked(stage);
    return lift(tree, lvl.values, lvl.depth, target_depth);
  }

 private:
  struct Level {
    int depth = -1;
    Matrix values;
  };

  const Level& level(int stage) const {
    return levels_[static_cast<std::size_t>(stage - first_)];
  }
  const Level& checked(int stage) const {
    if (!has_stage(stage)) {
      throw Error(ErrorCode::kStageMismatch,
                  "stage " + std::to_string(stage) + " is not defined");
    }
    return level(stage);
  }

  int dim_ = 0;
  int first_ = 0;
  std::vector<Level> levels_;
};

/// E[p(stage) | F(given)], returned on the histories of length given + 1.
/// Conditioning on a finer sigma-algebra than p's measurability returns p.
inline Matrix cond_expect(const PathTree& tree, const AdaptedProcess& p,
                          int stage, int given) {
  const int target = given + 1;
  if (target < 0 || target > tree.max_depth()) {
    throw Error(ErrorCode::kStageMismatch,
                "F(" + std::to_string(given) + ") is outside the tree");
  }
  const int depth = p.depth(stage);
  if (target >= depth) return lift(tree, p.values(stage), depth, target);
  return cond_expect(tree, p.values(stage), depth, target);
}

/// Y(0) = y0, Y(k+1) = (C + w(k) Cbar)^T Y(k) for k < last_stage.
inline AdaptedProcess adjoint_process(const PathTree& tree, const Matrix& C,
                                      const Matrix& Cbar, const Vector& y0,
                                      int last_stage) {
  AdaptedProcess y(static_cast<int>(y0.size()), 0, last_stage);
  y.set(0, 0, Matrix(y0));
  const auto s = static_cast<Index>(tree.branching());
  const Matrix Ct = C.transpose();
  const Matrix Cbart = Cbar.transpose();
  for (int k = 0; k < last_stage; ++k) {
    const Matrix& prev = y.values(k);
    const Matrix a = Ct * prev;
    const Matrix b = Cbart * prev;
    Matrix next(prev.rows(), prev.cols() * s);
    for (Index i = 0; i < prev.cols(); ++i) {
      for (Index c = 0; c < s; ++c) {
        next.col(i * s + c) =
            a.col(i) + tree.noise().support[static_cast<std::size_t>(c)] * b.col(i);
      }
    }
    y.set(k + 1, k + 1, std::move(next));
  }
  return y;
}

// ---------------------------------------------------------------------------

/// x(k) for k = 0..N+1 and z(k) for k = 0..N; both stored at depth k.
struct BsdeSolution {
  AdaptedProcess x;
  AdaptedProcess z;
  int horizon = 0;
};

namespace internal {

inline void check_forcing(const AdaptedProcess& f, int n, int N) {
  if (f.dim() != n) {
    throw Error(ErrorCode::kDimensionMismatch, "forcing dimension mismatch");
  }
  for (int k = 0; k <= N; ++k) {
    if (!f.has_stage(k)) {
      throw Error(ErrorCode::kStageMismatch,
                  "forcing is missing stage " + std::to_string(k));
    }
    if (f.depth(k) > k) {
      throw Error(ErrorCode::kAdaptednessViolation,
                  "stage " + std::to_string(k) + " depends on w(" +
                      std::to_string(f.depth(k) - 1) +
                      "); it must be F(" + std::to_string(k - 1) + ")-adapted");
    }
  }
}

inline void check_terminal(const PathTree& tree, const Matrix& terminal, int n,
                           int N) {
  if (tree.max_depth() < N + 1) {
    throw Error(ErrorCode::kStageMismatch,
                "tree depth " + std::to_string(tree.max_depth()) +
                    " cannot hold terminal values at stage " +
                    std::to_string(N + 1));
  }
  if (terminal.rows() != n ||
      terminal.cols() != static_cast<Index>(tree.count(N + 1))) {
    throw Error(ErrorCode::kStageMismatch,
                "terminal values must be n x s^(N+1)");
  }
}

}  // namespace internal

/// Backward recursion x(k) = E[C(k) x(k+1) + f(k) | F(k-1)],
/// z(k) = E[w(k) x(k+1) | F(k-1)] with C(k) = C + w(k) Cbar. `forcing` holds
/// f(k) for k = 0..N and must be F(k-1)-adapted; pass nullptr for f = 0.
inline BsdeSolution backward_solve_forced(const PathTree& tree, const Matrix& C,
                                          const Matrix& Cbar,
                                          const Matrix& terminal,
                                          const AdaptedProcess* forcing, int N) {
  const int n = static_cast<int>(C.rows());
  internal::check_terminal(tree, terminal, n, N);
  if (forcing) internal::check_forcing(*forcing, n, N);

  BsdeSolution sol;
  sol.horizon = N;
  sol.x = AdaptedProcess(n, 0, N + 1);
  sol.z = AdaptedProcess(n, 0, N);
  sol.x.set(N + 1, N + 1, terminal);

  const auto s = static_cast<Index>(tree.branching());
  const auto& support = tree.noise().support;
  const auto& probs = tree.noise().probs;
  for (int k = N; k >= 0; --k) {
    const Matrix& next = sol.x.values(k + 1);
    const auto nodes = static_cast<Index>(tree.count(k));
    Matrix mean = Matrix::Zero(n, nodes);
    Matrix wmean = Matrix::Zero(n, nodes);
    for (Index i = 0; i < nodes; ++i) {
      for (Index c = 0; c < s; ++c) {
        const double p = probs[static_cast<std::size_t>(c)];
        mean.col(i) += p * next.col(i * s + c);
        wmean.col(i) += p * support[static_cast<std::size_t>(c)] * next.col(i * s + c);
      }
    }
    Matrix xk = C * mean + Cbar * wmean;
    if (forcing) xk += forcing->lifted(tree, k, k);
    sol.x.set(k, k, std::move(xk));
    sol.z.set(k, k, std::move(wmean));
  }
  return sol;
}

/// Solves x(k) = E[C(k) x(k+1) + D v(k) | F(k-1)] from x(N+1) = terminal.
inline BsdeSolution backward_solve(const PathTree& tree, const BsdeForm& b,
                                   const Matrix& terminal,
                                   const AdaptedProcess& v, int N) {
  if (v.dim() != b.D.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "v dimension mismatch");
  }
  AdaptedProcess forcing(b.n(), 0, N);
  for (int k = 0; k <= N; ++k) {
    if (!v.has_stage(k)) {
      throw Error(ErrorCode::kStageMismatch,
                  "v is missing stage " + std::to_string(k));
    }
    if (v.depth(k) > k) {
      throw Error(ErrorCode::kAdaptednessViolation,
                  "v(" + std::to_string(k) + ") must be F(" +
                      std::to_string(k - 1) + ")-adapted");
    }
    forcing.set(k, v.depth(k), b.D * v.values(k));
  }
  return backward_solve_forced(tree, b.C, b.Cbar, terminal, &forcing, N);
}

/// Per-stage worst |x(k+1) - E[x(k+1)|F(k-1)] - w(k) z(k)| (infinity norm).
/// Zero residuals mean x(k+1) has the martingale-representation form the
/// forward dynamics require.
struct ResidualReport {
  std::vector<double> per_stage;
  double max = 0.0;
};

inline ResidualReport representation_residual(const PathTree& tree,
                                              const BsdeSolution& sol) {
  ResidualReport report;
  const int N = sol.horizon;
  const auto s = static_cast<Index>(tree.branching());
  const auto& support = tree.noise().support;
  for (int k = 0; k <= N; ++k) {
    const Matrix next = sol.x.lifted(tree, k + 1, k + 1);
    const Matrix mean = cond_expect(tree, next, k + 1, k);
    const Matrix z = sol.z.lifted(tree, k, k);
    double worst = 0.0;
    for (Index i = 0; i < mean.cols(); ++i) {
      for (Index c = 0; c < s; ++c) {
        const Vector r = next.col(i * s + c) - mean.col(i) -
                         support[static_cast<std::size_t>(c)] * z.col(i);
        worst = std::max(worst, r.cwiseAbs().maxCoeff());
      }
    }
    report.per_stage.push_back(worst);
    report.max = std::max(report.max, worst);
  }
  return report;
}

/// E[C(0) C(1) ... C(N) xi] by walking every history with running products.
inline Vector expected_product_terminal(const PathTree& tree, const BsdeForm& b,
                                        const Matrix& xi, int N) {
  const int n = b.n();
  const int s = tree.branching();
  Vector total = Vector::Zero(n);
  std::vector<Matrix> prefix(static_cast<std::size_t>(N) + 2);
  prefix[0] = Matrix::Identity(n, n);
  std::function<void(int, std::size_t, double)> walk =
      [&](int depth, std::size_t node, double prob) {
        const auto& pre = prefix[static_cast<std::size_t>(depth)];
        if (depth == N + 1) {
          total += prob * (pre * xi.col(static_cast<Index>(node)));
          return;
        }
        for (int c = 0; c < s; ++c) {
          const double w = tree.noise().support[static_cast<std::size_t>(c)];
          prefix[static_cast<std::size_t>(depth) + 1] = pre * (b.C + w * b.Cbar);
          walk(depth + 1, node * static_cast<std::size_t>(s) + static_cast<std::size_t>(c),
               prob * tree.noise().probs[static_cast<std::size_t>(c)]);
        }
      };
  walk(0, 0, 1.0);
  return total;
}

inline constexpr double kDefaultMembershipTolerance = 1e-8;

struct Membership {
  bool member = false;
  double residual = 0.0;
  Vector x_tilde0;
  double crosscheck_error = 0.0;
  BsdeSolution solution;
};

/// Terminal xi is attainable iff the homogeneous BSDE (v = 0) from xi has
/// zero representation residual at every stage. The tolerance is applied
/// relative to max(1, max|xi|).
inline Membership member_of_S(const PathTree& tree, const BsdeForm& b,
                              const Matrix& xi, int N,
                              double tol = kDefaultMembershipTolerance) {
  Membership out;
  out.solution = backward_solve_forced(tree, b.C, b.Cbar, xi, nullptr, N);
  out.residual = representation_residual(tree, out.solution).max;
  out.member = out.residual <= tol * std::max(1.0, max_abs(xi));
  out.x_tilde0 = out.solution.x.values(0).col(0);
  out.crosscheck_error =
      (out.x_tilde0 - expected_product_terminal(tree, b, xi, N)).cwiseAbs().maxCoeff();
  return out;
}

// ---------------------------------------------------------------------------

/// Terminal condition materialized on all histories of length N+1.
inline Matrix terminal_matrix(const Target& target, const PathTree& tree,
                              int n, int N) {
  const auto leaves = static_cast<Index>(tree.count(N + 1));
  switch (target.kind) {
    case Target::Kind::kZero: return Matrix::Zero(n, leaves);
    case Target::Kind::kConstant: {
      if (target.constant.size() != n) {
        throw Error(ErrorCode::kDimensionMismatch, "target has wrong length");
      }
      return target.constant.replicate(1, leaves);
    }
    case Target::Kind::kTable: {
      Matrix out(n, leaves);
      std::vector<bool> seen(static_cast<std::size_t>(leaves), false);
      for (const auto& [key, value] : target.table) {
        if (static_cast<int>(key.size()) != N + 1) {
          throw Error(ErrorCode::kStageMismatch,
                      "target history '" + key + "' must have length " +
                          std::to_string(N + 1));
        }
        if (value.size() != n) {
          throw Error(ErrorCode::kDimensionMismatch,
                      "target value for '" + key + "' has wrong length");
        }
        const std::size_t node = tree.parse_label(key);
        out.col(static_cast<Index>(node)) = value;
        seen[node] = true;
      }
      for (std::size_t i = 0; i < seen.size(); ++i) {
        if (!seen[i]) {
          throw Error(ErrorCode::kStageMismatch,
                      "target is missing history '" +
                          tree.label(N + 1, i) + "'");
        }
      }
      return out;
    }
  }
  return Matrix::Zero(n, leaves);
}

/// Forward state levels x(0..N+1) on every history.
struct Trajectories {
  std::vector<Matrix> x;  // x[k]: n x s^k
};

namespace internal {

inline Vector delayed_input(const PathTree& tree, const AdaptedProcess* u1,
                            int stage, int depth, std::size_t node, Index rows) {
  if (!u1 || !u1->has_stage(stage)) return Vector::Zero(rows);
  return u1->at(tree, stage, depth, node);
}

}  // namespace internal

/// Iterates x(k+1) = [A x + B u] + w(k)[Abar x + Bbar u], plus A1 x(k-d)
/// (zero pre-history) and B1 u1(k-tau) when the spec carries delays. `u1`
/// stages that are absent count as zero.
inline Trajectories forward_simulate_all(const PathTree& tree,
                                         const SystemSpec& spec,
                                         const Vector& x0,
                                         const AdaptedProcess& u, int N,
                                         const AdaptedProcess* u1 = nullptr) {
  const int n = spec.n();
  if (x0.size() != n) {
    throw Error(ErrorCode::kDimensionMismatch, "x0 has wrong length");
  }
  if (u.dim() != spec.m()) {
    throw Error(ErrorCode::kDimensionMismatch, "u dimension mismatch");
  }
  if (tree.max_depth() < N + 1) {
    throw Error(ErrorCode::kStageMismatch, "tree too shallow for horizon");
  }
  Trajectories out;
  out.x.push_back(Matrix(x0));
  const auto s = static_cast<Index>(tree.branching());
  const auto& support = tree.noise().support;
  for (int k = 0; k <= N; ++k) {
    const Matrix& xk = out.x.back();
    if (!u.has_stage(k)) {
      throw Error(ErrorCode::kStageMismatch, "u is missing stage " + std::to_string(k));
    }
    if (u.depth(k) > k) {
      throw Error(ErrorCode::kAdaptednessViolation,
                  "u(" + std::to_string(k) + ") must be F(" +
                      std::to_string(k - 1) + ")-adapted");
    }
    const Matrix uk = u.lifted(tree, k, k);
    Matrix drift = spec.A * xk + spec.B * uk;
    const Matrix diffusion = spec.Abar * xk + spec.Bbar * uk;
    if (spec.state_delay && k - spec.state_delay->d >= 0) {
      const int lag = k - spec.state_delay->d;
      drift += spec.state_delay->A1 * lift(tree, out.x[static_cast<std::size_t>(lag)], lag, k);
    }
    if (spec.input_delay && u1) {
      const int stage = k - spec.input_delay->tau;
      const Index rows = spec.input_delay->B1.cols();
      Matrix delayed(rows, xk.cols());
      for (Index i = 0; i < xk.cols(); ++i) {
        delayed.col(i) = internal::delayed_input(tree, u1, stage, k,
                                                 static_cast<std::size_t>(i), rows);
      }
      drift += spec.input_delay->B1 * delayed;
    }
    Matrix next(n, xk.cols() * s);
    for (Index i = 0; i < xk.cols(); ++i) {
      for (Index c = 0; c < s; ++c) {
        next.col(i * s + c) =
            drift.col(i) + support[static_cast<std::size_t>(c)] * diffusion.col(i);
      }
    }
    out.x.push_back(std::move(next));
  }
  return out;
}

/// Single-path version of forward_simulate_all; `path` lists the support
/// indices of w(0), ..., w(N).
inline std::vector<Vector> forward_simulate(const PathTree& tree,
                                            const SystemSpec& spec,
                                            const Vector& x0,
                                            const AdaptedProcess& u,
                                            const std::vector<int>& path,
                                            const AdaptedProcess* u1 = nullptr) {
  const int N = static_cast<int>(path.size()) - 1;
  std::vector<Vector> x{x0};
  std::size_t node = 0;
  for (int k = 0; k <= N; ++k) {
    const Vector uk = u.at(tree, k, k, node);
    const double w = tree.noise().support[static_cast<std::size_t>(path[static_cast<std::size_t>(k)])];
    Vector next = spec.A * x.back() + spec.B * uk +
                  w * (spec.Abar * x.back() + spec.Bbar * uk);
    if (spec.state_delay && k - spec.state_delay->d >= 0) {
      next += spec.state_delay->A1 * x[static_cast<std::size_t>(k - spec.state_delay->d)];
    }
    if (spec.input_delay && u1) {
      next += spec.input_delay->B1 *
              internal::delayed_input(tree, u1, k - spec.input_delay->tau, k, node,
                                      spec.input_delay->B1.cols());
    }
    x.push_back(std::move(next));
    node = node * static_cast<std::size_t>(tree.branching()) +
           static_cast<std::size_t>(path[static_cast<std::size_t>(k)]);
  }
  return x;
}

}  // namespace bsdectl
