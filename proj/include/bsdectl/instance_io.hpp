#pragma once

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "bsdectl/error.hpp"
#include "bsdectl/linalg.hpp"
#include "bsdectl/model.hpp"

namespace bsdectl {

// Instance documents are JSON objects:
//
//   n, m, N            integers (N >= 0 is the horizon actually used)
//   A, Abar            n x n matrices (arrays of rows)
//   B, Bbar            n x m matrices
//   N_max              optional integer >= N (default 2n)
//   M                  optional m x m matrix
//   H                  optional l x n matrix
//   B1, tau            optional input delay (both or neither)
//   A1, d              optional state delay (both or neither)
//   x0                 optional n-vector
//   target             optional: "zero", an n-vector, or an object mapping
//                      histories of length N+1 to n-vectors
//   noise              optional {support: [...], probs: [...]}
//
// Unknown keys are rejected.

namespace internal {

using Json = nlohmann::ordered_json;

class InstanceReader {
 public:
  explicit InstanceReader(const std::string& text) : text_(text) {}

  ProblemInstance read() {
    Json doc;
    try {
      doc = Json::parse(text_);
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaError("", line_of_offset(e.byte), e.what());
    }
    if (!doc.is_object()) throw SchemaError("", 1, "document must be an object");
    static const std::set<std::string> kKnown = {
        "n", "m", "N", "N_max", "A", "B", "Abar", "Bbar", "M", "H",
        "B1", "tau", "A1", "d", "x0", "target", "noise"};
    for (const auto& [key, value] : doc.items()) {
      if (!kKnown.count(key)) fail(key, "unknown key");
    }

    ProblemInstance p;
    const int n = integer(doc, "n", 1);
    const int m = integer(doc, "m", 1);
    p.N = integer(doc, "N", 0);
    SystemSpec& s = p.system;
    s.A = matrix(doc, "A", n, n);
    s.B = matrix(doc, "B", n, m);
    s.Abar = matrix(doc, "Abar", n, n);
    s.Bbar = matrix(doc, "Bbar", n, m);
    if (doc.contains("N_max")) {
      s.horizon_max = integer(doc, "N_max", 1);
      if (p.N > s.horizon_max) fail("N", "N exceeds N_max");
    }
    if (doc.contains("M")) s.M_user = matrix(doc, "M", m, m);
    if (doc.contains("H")) s.H = matrix(doc, "H", -1, n);
    if (doc.contains("B1") != doc.contains("tau")) {
      fail(doc.contains("B1") ? "tau" : "B1", "B1 and tau must appear together");
    }
    if (doc.contains("B1")) {
      InputDelay delay;
      delay.B1 = matrix(doc, "B1", n, -1);
      delay.tau = integer(doc, "tau", 1);
      s.input_delay = delay;
    }
    if (doc.contains("A1") != doc.contains("d")) {
      fail(doc.contains("A1") ? "d" : "A1", "A1 and d must appear together");
    }
    if (doc.contains("A1")) {
      StateDelay delay;
      delay.A1 = matrix(doc, "A1", n, n);
      delay.d = integer(doc, "d", 1);
      s.state_delay = delay;
    }
    if (doc.contains("x0")) p.x0 = vector(doc.at("x0"), "x0", n);
    if (doc.contains("noise")) s.noise = noise(doc.at("noise"));
    if (doc.contains("target")) p.target = target(doc.at("target"), n, p.N);
    return p;
  }

 private:
  int line_of_offset(std::size_t offset) const {
    offset = std::min(offset, text_.size());
    return 1 + static_cast<int>(std::count(text_.begin(),
                                           text_.begin() + static_cast<std::ptrdiff_t>(offset),
                                           '\n'));
  }

  // Line of the first occurrence of the quoted key, or 0.
  int line_of_key(const std::string& key) const {
    const auto pos = text_.find("\"" + key + "\"");
    return pos == std::string::npos ? 0 : line_of_offset(pos);
  }

  [[noreturn]] void fail(const std::string& field, const std::string& msg) const {
    const auto dot = field.find('.');
    throw SchemaError(field, line_of_key(field.substr(0, dot)), msg);
  }

  int integer(const Json& doc, const std::string& key, int minimum) const {
    if (!doc.contains(key)) fail(key, "missing required field");
    const Json& v = doc.at(key);
    if (!v.is_number_integer()) fail(key, "expected an integer");
    const auto value = v.get<long long>();
    if (value < minimum || value > 1'000'000) {
      fail(key, "must be an integer >= " + std::to_string(minimum));
    }
    return static_cast<int>(value);
  }

  double number(const Json& v, const std::string& field) const {
    if (!v.is_number()) fail(field, "expected a number");
    return v.get<double>();
  }

  Vector vector(const Json& v, const std::string& field, Index size) const {
    if (!v.is_array()) fail(field, "expected an array of numbers");
    if (size >= 0 && static_cast<Index>(v.size()) != size) {
      fail(field, "expected " + std::to_string(size) + " entries, got " +
                      std::to_string(v.size()));
    }
    Vector out(static_cast<Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
      out(static_cast<Index>(i)) = number(v[i], field);
    }
    return out;
  }

  // rows/cols < 0 leaves that dimension free (but rows must be >= 1).
  Matrix matrix(const Json& doc, const std::string& key, Index rows,
                Index cols) const {
    if (!doc.contains(key)) fail(key, "missing required field");
    const Json& v = doc.at(key);
    if (!v.is_array()) fail(key, "expected an array of rows");
    if (v.empty()) fail(key, "matrix has no rows");
    if (rows >= 0 && static_cast<Index>(v.size()) != rows) {
      fail(key, "expected " + std::to_string(rows) + " rows, got " +
                    std::to_string(v.size()));
    }
    if (!v[0].is_array()) fail(key, "expected an array of rows");
    const auto c = static_cast<Index>(v[0].size());
    if (cols >= 0 && c != cols) {
      fail(key, "expected " + std::to_string(cols) + " columns, got " +
                    std::to_string(c));
    }
    Matrix out(static_cast<Index>(v.size()), c);
    for (std::size_t i = 0; i < v.size(); ++i) {
      const Vector row = vector(v[i], key, c);
      out.row(static_cast<Index>(i)) = row.transpose();
    }
    return out;
  }

  NoiseModel noise(const Json& v) const {
    if (!v.is_object()) fail("noise", "expected {support, probs}");
    for (const auto& [key, value] : v.items()) {
      if (key != "support" && key != "probs") fail("noise." + key, "unknown key");
    }
    if (!v.contains("support")) fail("noise.support", "missing required field");
    if (!v.contains("probs")) fail("noise.probs", "missing required field");
    const Vector support = vector(v.at("support"), "noise.support", -1);
    const Vector probs = vector(v.at("probs"), "noise.probs", support.size());
    NoiseModel out;
    out.support.assign(support.data(), support.data() + support.size());
    out.probs.assign(probs.data(), probs.data() + probs.size());
    return out;
  }

  Target target(const Json& v, Index n, int N) const {
    if (v.is_string()) {
      if (v.get<std::string>() != "zero") fail("target", "expected \"zero\"");
      return Target::zero();
    }
    if (v.is_array()) return Target::constant_value(vector(v, "target", n));
    if (!v.is_object()) fail("target", "expected \"zero\", a vector or a table");
    Target t;
    t.kind = Target::Kind::kTable;
    for (const auto& [key, value] : v.items()) {
      if (static_cast<int>(key.size()) != N + 1) {
        fail("target." + key, "history must have length " + std::to_string(N + 1));
      }
      t.table[key] = vector(value, "target." + key, n);
    }
    return t;
  }

  const std::string& text_;
};

inline Json matrix_json(const Matrix& m) {
  Json rows = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Json vector_json(const Vector& v) {
  Json out = Json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

}  // namespace internal

inline ProblemInstance parse_instance(const std::string& text) {
  return internal::InstanceReader(text).read();
}

inline std::string serialize(const ProblemInstance& p) {
  using internal::matrix_json;
  using internal::vector_json;
  const SystemSpec& s = p.system;
  internal::Json doc;
  doc["n"] = s.n();
  doc["m"] = s.m();
  doc["N"] = p.N;
  if (s.horizon_max > 0) doc["N_max"] = s.horizon_max;
  doc["A"] = matrix_json(s.A);
  doc["B"] = matrix_json(s.B);
  doc["Abar"] = matrix_json(s.Abar);
  doc["Bbar"] = matrix_json(s.Bbar);
  if (s.M_user) doc["M"] = matrix_json(*s.M_user);
  if (s.H) doc["H"] = matrix_json(*s.H);
  if (s.input_delay) {
    doc["B1"] = matrix_json(s.input_delay->B1);
    doc["tau"] = s.input_delay->tau;
  }
  if (s.state_delay) {
    doc["A1"] = matrix_json(s.state_delay->A1);
    doc["d"] = s.state_delay->d;
  }
  if (p.x0) doc["x0"] = vector_json(*p.x0);
  switch (p.target.kind) {
    case Target::Kind::kZero: break;
    case Target::Kind::kConstant: doc["target"] = vector_json(p.target.constant); break;
    case Target::Kind::kTable: {
      internal::Json table = internal::Json::object();
      for (const auto& [key, value] : p.target.table) table[key] = vector_json(value);
      doc["target"] = std::move(table);
      break;
    }
  }
  if (!(s.noise == NoiseModel::rademacher())) {
    doc["noise"]["support"] = s.noise.support;
    doc["noise"]["probs"] = s.noise.probs;
  }
  return doc.dump(2) + "\n";
}

inline ProblemInstance load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("", 0, "cannot read " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_instance(buffer.str());
}

}  // namespace bsdectl
