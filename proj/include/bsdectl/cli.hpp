#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bsdectl/controller_table.hpp"
#include "bsdectl/criteria.hpp"
#include "bsdectl/delay.hpp"
#include "bsdectl/error.hpp"
#include "bsdectl/instance_io.hpp"
#include "bsdectl/linalg.hpp"
#include "bsdectl/model.hpp"
#include "bsdectl/partial.hpp"
#include "bsdectl/pathspace.hpp"
#include "bsdectl/synthesis.hpp"
#include "bsdectl/transform.hpp"

namespace bsdectl::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitNegative = 1,
  kExitInapplicable = 2,
  kExitSingularGramian = 3,
  kExitTargetNotInS = 4,
  kExitMalformedTable = 5,
  kExitInvalidInstance = 6,
  kExitEnumerationTooLarge = 7,
  kExitInternal = 8,
  kExitUsage = 9,
};

inline int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kSchemaError:
    case ErrorCode::kDimensionMismatch:
    case ErrorCode::kNoiseMomentViolation:
    case ErrorCode::kRankDeficient:
    case ErrorCode::kBadUserM:
    case ErrorCode::kStageMismatch:
    case ErrorCode::kInvalidArgument:
      return kExitInvalidInstance;
    case ErrorCode::kUnsupportedReducedStructure:
    case ErrorCode::kStructureUnsupported:
    case ErrorCode::kNoIntertwiner:
    case ErrorCode::kSingularBlock:
    case ErrorCode::kSingularPencil:
      return kExitInapplicable;
    case ErrorCode::kSingularGramian: return kExitSingularGramian;
    case ErrorCode::kTargetNotInS: return kExitTargetNotInS;
    case ErrorCode::kMalformedControllerTable: return kExitMalformedTable;
    case ErrorCode::kEnumerationTooLarge: return kExitEnumerationTooLarge;
    case ErrorCode::kCriteriaDisagreement:
    case ErrorCode::kAdaptednessViolation:
    case ErrorCode::kSingularPBracket:
      return kExitInternal;
  }
  return kExitInternal;
}

struct RunConfig {
  std::string command;
  std::string instance_path;
  std::optional<int> N;
  std::optional<double> tol;
  std::string format = "text";
  std::size_t cap = kDefaultEnumerationCap;
  std::string out_path;
  std::string controller_path;
};

namespace internal {

inline std::string num(double v) { return format_number(v, 12); }

inline std::string matrix_text(const Matrix& m) {
  if (m.rows() == 1 && m.cols() == 1) return num(m(0, 0));
  return format_matrix(m, 12);
}

inline std::string row_text(const Matrix& m) {
  std::string out = "[";
  for (Index j = 0; j < m.cols(); ++j) {
    if (j) out += ", ";
    std::string col;
    for (Index i = 0; i < m.rows(); ++i) col += (i ? ";" : "") + num(m(i, j));
    out += col;
  }
  return out + "]";
}

struct Loaded {
  ProblemInstance instance;
  ValidatedSystem system;
  int N = 0;
  int N_max = 0;
};

inline Loaded load(const RunConfig& cfg) {
  Loaded l;
  l.instance = load_instance(cfg.instance_path);
  if (cfg.N) {
    if (*cfg.N < 0) throw Error(ErrorCode::kInvalidArgument, "--N must be >= 0");
    l.instance.N = *cfg.N;
  }
  l.system = validate(l.instance.system);
  l.N = l.instance.N;
  l.N_max = std::max(l.instance.system.effective_horizon_max(), l.N);
  return l;
}

inline void gramian_table(std::ostream& out, const std::string& name,
                          const std::vector<double>& sigma,
                          const std::vector<int>& rank, int first_N = 0) {
  out << "N  sigma_min(" << name << ")  rank(" << name << ")\n";
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    out << (first_N + static_cast<int>(i)) << "  " << num(sigma[i]) << "  "
        << rank[i] << "\n";
  }
}

inline void gramian_csv(std::ostream& out, const std::vector<double>& sigma,
                        const std::vector<int>& rank, int first_N = 0) {
  out << "N,sigma_min,rank\n";
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    out << (first_N + static_cast<int>(i)) << "," << num(sigma[i]) << ","
        << rank[i] << "\n";
  }
}

inline void report_criteria(std::ostream& out, const RunConfig& cfg,
                            const ControllabilityReport& r, const std::string& verdict,
                            const std::string& gram_name, const std::string& rank_name) {
  if (cfg.format == "csv") {
    gramian_csv(out, r.sigma_min, r.gramian_rank);
    return;
  }
  out << "verdict: " << verdict << ", " << rank_name << "=" << r.rank_R << "\n";
  out << "dimension: " << r.dim << "\n";
  out << "witness N: " << (r.witness_N ? std::to_string(*r.witness_N) : "none")
      << "\n";
  out << rank_name << ": " << r.rank_R << "\n";
  out << "basis depth: " << r.basis_depth << "\n";
  gramian_table(out, gram_name, r.sigma_min, r.gramian_rank);
}

inline int analyze(const RunConfig& cfg, std::ostream& out) {
  const Loaded l = load(cfg);
  const SystemSpec& spec = l.system.spec;
  const bool text = cfg.format != "csv";

  if (l.system.path == InputPath::kReduced) {
    const ReducedReport rr = reduced_decide(l.system, l.N_max);
    const int r = rr.form.r;
    const std::string label = "[I_" + std::to_string(r) + " 0]";
    const std::string verdict =
        rr.report.controllable ? label + "-partially exactly null controllable"
                               : "not " + label + "-partially exactly null controllable";
    report_criteria(out, cfg, rr.report, verdict, "G_N", "rank(R)");
    if (text) {
      out << "AA1: " << matrix_text(rr.form.AA1) << "\n";
      out << "BB1: " << matrix_text(rr.form.BB1) << "\n";
      out << "DD1: " << matrix_text(rr.form.DD1) << "\n";
    }
    return rr.report.controllable ? kExitOk : kExitNegative;
  }

  const Reformulation reform = reformulate(l.system);

  if (spec.H) {
    const PartialReport pr = partial_decide(reform, *spec.H, l.N_max);
    const std::string verdict = pr.report.controllable
                                    ? "H-partially exactly controllable"
                                    : "not H-partially exactly controllable";
    report_criteria(out, cfg, pr.report, verdict, "Gbar_N", "rank(Rbar)");
    if (text) {
      const Matrix& G = pr.report.gramians[static_cast<std::size_t>(l.N)];
      out << "Gbar_N=" << matrix_text(G) << " (N=" << l.N << ")\n";
      out << "Rbar=" << row_text(word_matrix(pr.projected, l.N)) << "\n";
      out << "C1=" << matrix_text(pr.intertwining.C1)
          << " Cbar1=" << matrix_text(pr.intertwining.Cbar1) << "\n";
    }
    return pr.report.controllable ? kExitOk : kExitNegative;
  }

  if (spec.input_delay) {
    const int tau = spec.input_delay->tau;
    std::vector<double> sigma;
    std::vector<int> rank;
    std::optional<int> witness;
    for (int N = 0; N <= l.N_max; ++N) {
      const Matrix G = input_delay_gramian(reform.bsde, tau, N);
      sigma.push_back(min_singular_value(G));
      rank.push_back(numerical_rank(G));
      if (!witness && gramian_invertible(G)) witness = N;
    }
    if (!text) {
      gramian_csv(out, sigma, rank);
    } else {
      out << "verdict: "
          << (witness ? "exactly null controllable (input delay tau=" +
                            std::to_string(tau) + ")"
                      : "sufficient condition not met (input delay tau=" +
                            std::to_string(tau) + ")")
          << ", rank(G^tau_N)=" << rank[static_cast<std::size_t>(l.N)]
          << " at N=" << l.N << "\n";
      out << "witness N: " << (witness ? std::to_string(*witness) : "none") << "\n";
      gramian_table(out, "G^tau_N", sigma, rank);
    }
    return witness ? kExitOk : kExitNegative;
  }

  if (spec.state_delay) {
    const int d = spec.state_delay->d;
    std::vector<double> sigma;
    std::vector<int> rank;
    std::optional<int> witness;
    std::vector<std::string> notes;
    for (int N = 0; N <= l.N_max; ++N) {
      try {
        const Matrix G = state_delay_gramian(reform.bsde, d, N);
        sigma.push_back(min_singular_value(G));
        rank.push_back(numerical_rank(G));
        if (!witness && gramian_invertible(G)) witness = N;
      } catch (const SingularPBracketError& e) {
        sigma.push_back(0.0);
        rank.push_back(0);
        notes.push_back("N=" + std::to_string(N) + ": P undefined at k=" +
                        std::to_string(e.index()));
      }
    }
    if (!text) {
      gramian_csv(out, sigma, rank);
    } else {
      out << "verdict: "
          << (witness ? "exactly null controllable (state delay d=" +
                            std::to_string(d) + ")"
                      : "sufficient condition not met (state delay d=" +
                            std::to_string(d) + ")")
          << ", rank(G^d_N)=" << rank[static_cast<std::size_t>(l.N)]
          << " at N=" << l.N << "\n";
      out << "witness N: " << (witness ? std::to_string(*witness) : "none") << "\n";
      gramian_table(out, "G^d_N", sigma, rank);
      for (const auto& note : notes) out << note << "\n";
    }
    return witness ? kExitOk : kExitNegative;
  }

  const ControllabilityReport r = decide(reform, l.N_max);
  const std::string verdict =
      r.controllable ? "exactly controllable" : "not exactly controllable";
  report_criteria(out, cfg, r, verdict, "G_N", "rank(R)");
  return r.controllable ? kExitOk : kExitNegative;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kInvalidArgument, "cannot write " + path);
  f << text;
}

struct Deviation {
  double initial = 0.0;
  double terminal = 0.0;
};

inline Deviation closed_loop(const PathTree& tree, const Loaded& l,
                             const Vector& x0, const AdaptedProcess& u,
                             const AdaptedProcess* u1, const Matrix& xi,
                             const Vector* x_solved0) {
  const Trajectories traj =
      forward_simulate_all(tree, l.system.spec, x0, u, l.N, u1);
  Deviation d;
  if (x_solved0) d.initial = (*x_solved0 - x0).cwiseAbs().maxCoeff();
  d.terminal = (traj.x.back() - xi).cwiseAbs().maxCoeff();
  return d;
}

inline int synthesize(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const Loaded l = load(cfg);
  const SystemSpec& spec = l.system.spec;
  if (!l.instance.x0) throw Error(ErrorCode::kInvalidArgument, "instance has no x0");
  if (l.system.path == InputPath::kReduced) {
    throw Error(ErrorCode::kStructureUnsupported,
                "controller synthesis needs rank(Bbar) = n");
  }
  const double tol = cfg.tol.value_or(1e-8);
  const Vector& x0 = *l.instance.x0;
  const Reformulation reform = reformulate(l.system);
  const PathTree tree = make_tree(spec.noise, l.N, cfg.cap);
  const Matrix xi = terminal_matrix(l.instance.target, tree, spec.n(), l.N);
  const bool zero_target = l.instance.target.kind == Target::Kind::kZero;

  ControllerProcess c;
  if (spec.input_delay || spec.state_delay) {
    if (!zero_target) {
      throw Error(ErrorCode::kStructureUnsupported,
                  "delay systems support null steering only");
    }
    c = spec.input_delay ? input_delay_controller(tree, reform, x0, l.N)
                         : state_delay_controller(tree, reform, x0, l.N);
  } else if (zero_target) {
    c = null_controller(tree, reform, x0, l.N);
  } else {
    c = steer_to_target(tree, reform, x0, xi, l.N, tol);
  }

  const AdaptedProcess* u1 = c.u1 ? &*c.u1 : nullptr;
  const std::string csv = write_controller_csv(tree, c.u, u1);
  const Vector solved0 = c.solution.x.values(0).col(0);
  const Deviation dev = closed_loop(tree, l, x0, c.u, u1, xi, &solved0);

  std::ostringstream summary;
  summary << "stages: 0.." << l.N << "\n";
  summary << "x(0) reconstruction error: " << num(dev.initial) << "\n";
  summary << "worst terminal deviation: " << num(dev.terminal) << "\n";
  if (cfg.out_path.empty()) {
    out << csv;
    err << summary.str();
  } else {
    write_text(cfg.out_path, csv);
    out << "controller written to " << cfg.out_path << "\n" << summary.str();
  }
  return dev.initial <= tol && dev.terminal <= tol ? kExitOk : kExitNegative;
}

inline int verify(const RunConfig& cfg, std::ostream& out) {
  const Loaded l = load(cfg);
  const SystemSpec& spec = l.system.spec;
  if (!l.instance.x0) throw Error(ErrorCode::kInvalidArgument, "instance has no x0");
  const double tol = cfg.tol.value_or(1e-8);
  std::ifstream in(cfg.controller_path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kMalformedControllerTable,
                "cannot read " + cfg.controller_path);
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const PathTree tree = make_tree(spec.noise, l.N, cfg.cap);
  const int m1 = spec.input_delay ? static_cast<int>(spec.input_delay->B1.cols()) : 0;
  const ControllerTable table =
      read_controller_csv(buffer.str(), tree, spec.m(), m1, l.N);
  const Matrix xi = terminal_matrix(l.instance.target, tree, spec.n(), l.N);
  const AdaptedProcess* u1 = table.u1 ? &*table.u1 : nullptr;
  const Deviation dev = closed_loop(tree, l, *l.instance.x0, table.u, u1, xi, nullptr);
  out << "paths: " << tree.count(l.N + 1) << "\n";
  out << "initial deviation: " << num(dev.initial) << "\n";
  out << "worst terminal deviation: " << num(dev.terminal) << "\n";
  const bool ok = dev.initial <= tol && dev.terminal <= tol;
  out << (ok ? "verified" : "verification failed") << "\n";
  return ok ? kExitOk : kExitNegative;
}

inline int oracle_check(const RunConfig& cfg, std::ostream& out) {
  const Loaded l = load(cfg);
  const SystemSpec& spec = l.system.spec;
  const double tol = cfg.tol.value_or(1e-9);
  BsdeForm b;
  if (l.system.path == InputPath::kReduced) {
    b = reduced_rank_setup(l.system).reduced_bsde();
  } else {
    b = reformulate(l.system).bsde;
    if (spec.H) b = project(intertwine_bsde(*spec.H, b), b);
  }
  double worst = 0.0;
  auto line = [&](const std::string& name, const Matrix& op, const Matrix& oracle) {
    const double diff = (op - oracle).norm();
    worst = std::max(worst, diff);
    out << name << " (N=" << l.N << "): |operator - oracle|_F = " << num(diff) << "\n";
  };
  line("G_N", gramian(b, l.N), gramian_oracle(b, l.N, spec.noise, cfg.cap));
  if (spec.input_delay && l.system.path == InputPath::kFullRank && !spec.H) {
    const int tau = spec.input_delay->tau;
    line("G^tau_N", input_delay_gramian(b, tau, l.N),
         input_delay_gramian_oracle(b, tau, l.N, spec.noise, cfg.cap));
  }
  if (spec.state_delay && l.system.path == InputPath::kFullRank && !spec.H) {
    const PSequence P = state_delay_P(b, spec.state_delay->d, l.N);
    line("G^d_N", state_delay_gramian(b, P),
         state_delay_gramian_oracle(b, P, spec.noise, cfg.cap));
  }
  const bool ok = worst <= tol;
  out << (ok ? "agree" : "disagree") << "\n";
  return ok ? kExitOk : kExitNegative;
}

}  // namespace internal

/// Runs one command and returns its exit status. All output goes to `out`
/// and `err`; nothing is written to the process streams.
inline int run(int argc, const char* const* argv, std::ostream& out,
               std::ostream& err) {
  CLI::App app{"Exact controllability of linear systems with multiplicative noise",
               "bsdectl"};
  app.require_subcommand(1);
  RunConfig cfg;
  int N_value = -1;
  double tol_value = 0.0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--instance", cfg.instance_path, "instance file (JSON)")
        ->required();
    sub->add_option("--N", N_value, "horizon override");
    sub->add_option("--tol", tol_value, "tolerance");
    sub->add_option("--format", cfg.format, "text or csv")
        ->check(CLI::IsMember({"text", "csv"}));
    sub->add_option("--cap", cfg.cap, "path enumeration cap");
    sub->add_option("--out", cfg.out_path, "output file");
  };
  CLI::App* analyze = app.add_subcommand("analyze", "decide controllability");
  CLI::App* synth = app.add_subcommand("synthesize", "build a steering controller");
  CLI::App* verify = app.add_subcommand("verify", "check a controller table");
  CLI::App* oracle = app.add_subcommand("oracle-check",
                                        "compare Gramians with path enumeration");
  for (CLI::App* sub : {analyze, synth, verify, oracle}) add_common(sub);
  verify->add_option("--controller", cfg.controller_path, "controller CSV")
      ->required();

  try {
    std::vector<std::string> args;
    for (int i = argc - 1; i >= 1; --i) args.emplace_back(argv[i]);
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }
  for (CLI::App* sub : app.get_subcommands()) {
    cfg.command = sub->get_name();
    if (sub->count("--N")) cfg.N = N_value;
    if (sub->count("--tol")) cfg.tol = tol_value;
  }

  try {
    std::ostringstream buffer;
    int code = kExitInternal;
    if (cfg.command == "analyze") {
      code = internal::analyze(cfg, buffer);
    } else if (cfg.command == "synthesize") {
      code = internal::synthesize(cfg, buffer, err);
    } else if (cfg.command == "verify") {
      code = internal::verify(cfg, buffer);
    } else {
      code = internal::oracle_check(cfg, buffer);
    }
    if (!cfg.out_path.empty() && cfg.command != "synthesize") {
      internal::write_text(cfg.out_path, buffer.str());
    } else {
      out << buffer.str();
    }
    return code;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace bsdectl::cli
