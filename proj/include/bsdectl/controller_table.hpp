#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "bsdectl/error.hpp"
#include "bsdectl/linalg.hpp"
#include "bsdectl/pathspace.hpp"

namespace bsdectl {

// Controller tables are CSV with header
//   stage,history,u0,...,u{m-1}[,u1_0,...,u1_{m1-1}]
// and one row per stage and history. The history is the string of support
// indices of w(0..stage-1), "-" when empty. Stages run over the union of the
// u stages (0..N) and the u1 stages (-tau..N-tau); a cell is empty when the
// channel has no value at that stage. Values use 17 significant digits.

struct ControllerTable {
  AdaptedProcess u;
  std::optional<AdaptedProcess> u1;
};

namespace internal {

inline std::string csv_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string history_cell(const PathTree& tree, int depth, std::size_t node) {
  return depth == 0 ? std::string("-") : tree.label(depth, node);
}

[[noreturn]] inline void malformed(int line, const std::string& msg) {
  throw Error(ErrorCode::kMalformedControllerTable,
              "line " + std::to_string(line) + ": " + msg);
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace internal

inline std::string write_controller_csv(const PathTree& tree,
                                        const AdaptedProcess& u,
                                        const AdaptedProcess* u1 = nullptr) {
  std::string out = "stage,history";
  for (int j = 0; j < u.dim(); ++j) out += ",u" + std::to_string(j);
  if (u1) {
    for (int j = 0; j < u1->dim(); ++j) out += ",u1_" + std::to_string(j);
  }
  out += "\n";
  int first = u.first_stage();
  int last = u.last_stage();
  if (u1) {
    first = std::min(first, u1->first_stage());
    last = std::max(last, u1->last_stage());
  }
  for (int stage = first; stage <= last; ++stage) {
    const int depth = std::max(stage, 0);
    const bool has_u = u.has_stage(stage);
    const bool has_u1 = u1 && u1->has_stage(stage);
    if (!has_u && !has_u1) continue;
    for (std::size_t node = 0; node < tree.count(depth); ++node) {
      out += std::to_string(stage) + "," + internal::history_cell(tree, depth, node);
      const Vector uv = has_u ? u.at(tree, stage, depth, node) : Vector();
      for (int j = 0; j < u.dim(); ++j) {
        out += ",";
        if (has_u) out += internal::csv_number(uv(j));
      }
      if (u1) {
        const Vector u1v = has_u1 ? u1->at(tree, stage, depth, node) : Vector();
        for (int j = 0; j < u1->dim(); ++j) {
          out += ",";
          if (has_u1) out += internal::csv_number(u1v(j));
        }
      }
      out += "\n";
    }
  }
  return out;
}

/// Parses a table written by write_controller_csv. `m1` is the width of the
/// delayed channel (0 when the system has none). Every u stage 0..N must be
/// present on every history; u1 stages may be partial in range but each
/// stage that appears must cover all its histories.
inline ControllerTable read_controller_csv(const std::string& text,
                                           const PathTree& tree, int m, int m1,
                                           int N) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  if (!std::getline(in, line)) internal::malformed(1, "empty table");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::string expected = "stage,history";
  for (int j = 0; j < m; ++j) expected += ",u" + std::to_string(j);
  for (int j = 0; j < m1; ++j) expected += ",u1_" + std::to_string(j);
  if (line != expected) {
    internal::malformed(line_no, "header must be '" + expected + "'");
  }
  const std::size_t width = static_cast<std::size_t>(2 + m + m1);

  // stage -> (node -> values)
  std::map<int, std::map<std::size_t, Vector>> u_rows;
  std::map<int, std::map<std::size_t, Vector>> u1_rows;
  auto parse_cells = [&](const std::vector<std::string>& cells, std::size_t from,
                         int count) -> std::optional<Vector> {
    int empty = 0;
    for (int j = 0; j < count; ++j) {
      if (cells[from + static_cast<std::size_t>(j)].empty()) ++empty;
    }
    if (empty == count && count > 0) return std::nullopt;
    if (empty > 0) internal::malformed(line_no, "partially empty channel");
    Vector v(count);
    for (int j = 0; j < count; ++j) {
      const std::string& cell = cells[from + static_cast<std::size_t>(j)];
      std::size_t used = 0;
      double value = 0.0;
      try {
        value = std::stod(cell, &used);
      } catch (const std::exception&) {
        internal::malformed(line_no, "'" + cell + "' is not a number");
      }
      if (used != cell.size() || !std::isfinite(value)) {
        internal::malformed(line_no, "'" + cell + "' is not a finite number");
      }
      v(j) = value;
    }
    return v;
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = internal::split_csv(line);
    if (cells.size() != width) {
      internal::malformed(line_no, "expected " + std::to_string(width) + " cells");
    }
    int stage = 0;
    try {
      std::size_t used = 0;
      stage = std::stoi(cells[0], &used);
      if (used != cells[0].size()) throw std::invalid_argument("stage");
    } catch (const std::exception&) {
      internal::malformed(line_no, "bad stage '" + cells[0] + "'");
    }
    if (stage > N) internal::malformed(line_no, "stage beyond horizon");
    const int depth = std::max(stage, 0);
    const std::string& history = cells[1];
    std::size_t node = 0;
    if (depth == 0) {
      if (history != "-") internal::malformed(line_no, "history must be '-'");
    } else {
      if (static_cast<int>(history.size()) != depth) {
        internal::malformed(line_no, "history length must equal the stage");
      }
      try {
        node = tree.parse_label(history);
      } catch (const Error&) {
        internal::malformed(line_no, "bad history '" + history + "'");
      }
    }
    const auto u_value = parse_cells(cells, 2, m);
    const auto u1_value = parse_cells(cells, 2 + static_cast<std::size_t>(m), m1);
    if (u_value) {
      if (stage < 0) internal::malformed(line_no, "u has no negative stages");
      if (!u_rows[stage].emplace(node, *u_value).second) {
        internal::malformed(line_no, "duplicate row");
      }
    } else if (m > 0 && stage >= 0) {
      internal::malformed(line_no, "missing u values");
    }
    if (u1_value && !u1_rows[stage].emplace(node, *u1_value).second) {
      internal::malformed(line_no, "duplicate row");
    }
  }

  auto build = [&](const std::map<int, std::map<std::size_t, Vector>>& rows,
                   int dim, int first, int last) {
    AdaptedProcess p(dim, first, last);
    for (const auto& [stage, nodes] : rows) {
      const int depth = std::max(stage, 0);
      const std::size_t count = tree.count(depth);
      if (nodes.size() != count) {
        internal::malformed(line_no, "stage " + std::to_string(stage) +
                                         " does not cover every history");
      }
      Matrix values(dim, static_cast<Index>(count));
      for (const auto& [node, v] : nodes) values.col(static_cast<Index>(node)) = v;
      p.set(stage, depth, std::move(values));
    }
    return p;
  };

  ControllerTable table;
  for (int k = 0; k <= N; ++k) {
    if (!u_rows.count(k)) {
      internal::malformed(line_no, "stage " + std::to_string(k) + " is missing");
    }
  }
  table.u = build(u_rows, m, 0, N);
  if (m1 > 0 && !u1_rows.empty()) {
    table.u1 = build(u1_rows, m1, u1_rows.begin()->first, u1_rows.rbegin()->first);
  }
  return table;
}

}  // namespace bsdectl
