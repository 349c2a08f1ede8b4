#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bsdectl/error.hpp"
#include "bsdectl/linalg.hpp"
#include "bsdectl/model.hpp"
#include "bsdectl/pathspace.hpp"
#include "bsdectl/transform.hpp"

namespace bsdectl {

/// Lambda(X) = C X C^T + Cbar X Cbar^T: one stage of second-moment
/// propagation under a zero-mean, unit-variance multiplier.
struct MomentOperator {
  Matrix C;
  Matrix Cbar;

  Matrix operator()(const Matrix& X) const {
    return C * X * C.transpose() + Cbar * X * Cbar.transpose();
  }
};

/// G_0, ..., G_N with G_N = sum_{i<=N} Lambda^i(D D^T).
inline std::vector<Matrix> gramian_sequence(const BsdeForm& b, int N) {
  if (N < 0) throw Error(ErrorCode::kInvalidArgument, "N must be >= 0");
  const MomentOperator lambda{b.C, b.Cbar};
  std::vector<Matrix> out;
  Matrix term = b.D * b.D.transpose();
  Matrix sum = term;
  out.push_back(sum);
  for (int i = 1; i <= N; ++i) {
    term = lambda(term);
    sum += term;
    out.push_back(sum);
  }
  return out;
}

inline Matrix gramian(const BsdeForm& b, int N) {
  return gramian_sequence(b, N).back();
}

namespace internal {

// Throws kEnumerationTooLarge when s^(N+1) > cap.
inline void check_enumeration(const NoiseModel& noise, int N, std::size_t cap) {
  std::size_t total = 1;
  for (int k = 0; k <= N; ++k) {
    if (total > cap / static_cast<std::size_t>(noise.size())) {
      throw Error(ErrorCode::kEnumerationTooLarge,
                  std::to_string(noise.size()) + "^" + std::to_string(N + 1) +
                      " paths exceed the enumeration cap " + std::to_string(cap));
    }
    total *= static_cast<std::size_t>(noise.size());
  }
}

}  // namespace internal

/// G_N computed literally: walk every noise history, form the products
/// C(0)...C(i-1) D along it and average the outer products with the history
/// probabilities.
inline Matrix gramian_oracle(const BsdeForm& b, int N, const NoiseModel& noise,
                             std::size_t cap = kDefaultEnumerationCap) {
  if (N < 0) throw Error(ErrorCode::kInvalidArgument, "N must be >= 0");
  validate_noise(noise);
  internal::check_enumeration(noise, N, cap);
  const int n = b.n();
  Matrix total = Matrix::Zero(n, n);
  // prefix[i] = C(0) C(1) ... C(i-1) along the current history.
  std::vector<Matrix> prefix(static_cast<std::size_t>(N) + 1);
  prefix[0] = Matrix::Identity(n, n);
  std::function<void(int, double)> walk = [&](int depth, double prob) {
    const Matrix& left = prefix[static_cast<std::size_t>(depth)];
    const Matrix pd = left * b.D;
    total += prob * (pd * pd.transpose());
    if (depth == N) return;
    for (int c = 0; c < noise.size(); ++c) {
      const double w = noise.support[static_cast<std::size_t>(c)];
      prefix[static_cast<std::size_t>(depth) + 1] = left * (b.C + w * b.Cbar);
      walk(depth + 1, prob * noise.probs[static_cast<std::size_t>(c)]);
    }
  };
  walk(0, 1.0);
  return total;
}

// ---------------------------------------------------------------------------
// Words over {C, Cbar}. A word is a string over {'0', '1'} ('0' = C,
// '1' = Cbar); the leftmost letter is the outermost factor, so "01" means
// C * Cbar. Order: by length; within a length the pure powers C^L, Cbar^L
// come first, then the mixed words lexicographically. This reproduces the
// listing D, CD, CbarD, C^2 D, Cbar^2 D, C Cbar D, Cbar C D, ...

inline bool word_less(const std::string& a, const std::string& b) {
  if (a.size() != b.size()) return a.size() < b.size();
  auto mixed = [](const std::string& w) {
    return w.find('0') != std::string::npos && w.find('1') != std::string::npos;
  };
  const bool ma = mixed(a);
  const bool mb = mixed(b);
  if (ma != mb) return !ma;
  return a < b;
}

inline std::vector<std::string> words_in_order(int max_length) {
  std::vector<std::string> out{""};
  for (int len = 1; len <= max_length; ++len) {
    std::vector<std::string> level;
    for (std::size_t bits = 0; bits < (std::size_t{1} << len); ++bits) {
      std::string w(static_cast<std::size_t>(len), '0');
      for (int j = 0; j < len; ++j) {
        if (bits & (std::size_t{1} << (len - 1 - j))) w[static_cast<std::size_t>(j)] = '1';
      }
      level.push_back(w);
    }
    std::sort(level.begin(), level.end(), word_less);
    out.insert(out.end(), level.begin(), level.end());
  }
  return out;
}

inline Matrix apply_word(const std::string& word, const Matrix& C,
                         const Matrix& Cbar, const Matrix& X) {
  Matrix out = X;
  for (auto it = word.rbegin(); it != word.rend(); ++it) {
    out = (*it == '0' ? C : Cbar) * out;
  }
  return out;
}

inline std::string word_label(const std::string& word) {
  std::string out;
  for (char ch : word) out += ch == '0' ? "C*" : "Cbar*";
  return out + "D";
}

/// [D, CD, CbarD, C^2 D, Cbar^2 D, C Cbar D, Cbar C D, ...] truncated after
/// words of length max_length.
inline Matrix word_matrix(const BsdeForm& b, int max_length) {
  const auto words = words_in_order(max_length);
  Matrix out(b.n(), static_cast<Index>(words.size()) * b.D.cols());
  for (std::size_t i = 0; i < words.size(); ++i) {
    out.middleCols(static_cast<Index>(i) * b.D.cols(), b.D.cols()) =
        apply_word(words[i], b.C, b.Cbar, b.D);
  }
  return out;
}

struct WordSpanBasis {
  Matrix columns;                  // n x rank, admitted generators W D e_j
  std::vector<std::string> words;  // word of each admitted column
  std::vector<int> d_columns;      // which column of D it came from
  int rank = 0;
  int depth = 0;                   // longest admitted word
};

/// Span of {W D : W a word over {C, Cbar}}, built breadth-first: each round
/// multiplies the columns admitted in the previous round by C and Cbar and
/// keeps the candidates that raise the numerical rank. Stops after the first
/// round that admits nothing, so depth <= n.
inline WordSpanBasis word_span(const BsdeForm& b) {
  const int n = b.n();
  WordSpanBasis out;
  out.columns = Matrix(n, 0);
  if (max_abs(b.D) == 0.0) return out;

  struct Candidate {
    std::string word;
    int d_col;
    Vector value;
  };
  auto admit = [&](std::vector<Candidate> candidates) {
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& c) {
                       if (a.word != c.word) return word_less(a.word, c.word);
                       return a.d_col < c.d_col;
                     });
    std::vector<Candidate> admitted;
    for (auto& cand : candidates) {
      if (out.rank == n) break;
      Matrix trial(n, out.columns.cols() + 1);
      trial << out.columns, cand.value;
      if (numerical_rank(trial) > out.rank) {
        out.columns = std::move(trial);
        out.words.push_back(cand.word);
        out.d_columns.push_back(cand.d_col);
        ++out.rank;
        out.depth = std::max(out.depth, static_cast<int>(cand.word.size()));
        admitted.push_back(cand);
      }
    }
    return admitted;
  };

  std::vector<Candidate> initial;
  for (Index j = 0; j < b.D.cols(); ++j) {
    initial.push_back({"", static_cast<int>(j), b.D.col(j)});
  }
  std::vector<Candidate> frontier = admit(std::move(initial));
  while (!frontier.empty() && out.rank < n) {
    std::vector<Candidate> next;
    for (const auto& f : frontier) {
      next.push_back({"0" + f.word, f.d_col, b.C * f.value});
      next.push_back({"1" + f.word, f.d_col, b.Cbar * f.value});
    }
    frontier = admit(std::move(next));
  }
  return out;
}

/// Gramian invertibility: sigma_min > n * eps * sigma_max.
inline bool gramian_invertible(const Matrix& G) {
  const Vector sv = singular_values(G);
  if (sv.size() == 0 || sv(0) == 0.0) return false;
  return sv(sv.size() - 1) > static_cast<double>(G.rows()) * kMachineEps * sv(0);
}

struct ControllabilityReport {
  int dim = 0;
  bool controllable = false;
  std::optional<int> witness_N;
  int N_max = 0;                    // largest N scanned
  std::vector<double> sigma_min;    // per N = 0..N_max
  std::vector<int> gramian_rank;    // per N = 0..N_max
  std::vector<Matrix> gramians;     // per N = 0..N_max
  int rank_R = 0;
  int basis_depth = 0;
  bool criteria_agree = true;
};

/// Gramian scan over N = 0..N_max and the word-span rank, cross-checked.
/// The scan is extended to the basis depth when N_max is shorter, since
/// range(G_N) is the span of words of length <= N.
inline ControllabilityReport decide(const BsdeForm& b, int N_max) {
  if (N_max < 0) throw Error(ErrorCode::kInvalidArgument, "N_max must be >= 0");
  ControllabilityReport report;
  report.dim = b.n();
  const WordSpanBasis basis = word_span(b);
  report.rank_R = basis.rank;
  report.basis_depth = basis.depth;
  report.N_max = std::max(N_max, basis.depth);
  report.gramians = gramian_sequence(b, report.N_max);
  for (int N = 0; N <= report.N_max; ++N) {
    const Matrix& G = report.gramians[static_cast<std::size_t>(N)];
    report.sigma_min.push_back(min_singular_value(G));
    report.gramian_rank.push_back(numerical_rank(G));
    if (!report.witness_N && gramian_invertible(G)) report.witness_N = N;
  }
  const bool by_rank = report.rank_R == report.dim;
  const bool by_gramian = report.witness_N.has_value();
  report.criteria_agree = by_rank == by_gramian;
  if (!report.criteria_agree) {
    throw Error(ErrorCode::kCriteriaDisagreement,
                "rank(R) = " + std::to_string(report.rank_R) +
                    " but Gramian witness " +
                    (by_gramian ? std::to_string(*report.witness_N)
                                : std::string("absent")) +
                    " (dimension " + std::to_string(report.dim) + ")");
  }
  report.controllable = by_rank;
  return report;
}

inline ControllabilityReport decide(const Reformulation& r, int N_max) {
  return decide(r.bsde, N_max);
}

}  // namespace bsdectl
