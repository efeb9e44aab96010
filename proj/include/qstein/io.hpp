#pragma once

#include <charconv>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "qstein/estimators.hpp"
#include "qstein/qgauss.hpp"
#include "qstein/sampler.hpp"

namespace qstein {

using nlohmann::json;

// Shortest round-tripping decimal representation.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// JSON numbers with NaN/Inf spelled out as string sentinels (bare NaN/Inf are
// not valid JSON and are forbidden in the output format).
inline json json_num(double v) {
  if (std::isnan(v)) return "NaN";
  if (std::isinf(v)) return v > 0 ? "Infinity" : "-Infinity";
  return v;
}

inline double json_get_num(const json& j) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "NaN") return std::numeric_limits<double>::quiet_NaN();
    if (s == "Infinity") return std::numeric_limits<double>::infinity();
    if (s == "-Infinity") return -std::numeric_limits<double>::infinity();
    throw std::invalid_argument("not a number sentinel: " + s);
  }
  return j.get<double>();
}

inline json vector_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(json_num(v(i)));
  return a;
}

inline json matrix_rows_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (int j = 0; j < m.cols(); ++j) r.push_back(json_num(m(i, j)));
    rows.push_back(std::move(r));
  }
  return rows;
}

inline Eigen::VectorXd vector_from_json(const json& a) {
  Eigen::VectorXd v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v(i) = json_get_num(a[i]);
  return v;
}

inline Eigen::MatrixXd matrix_from_json_rows(const json& rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows[0].size() : 0;
  Eigen::MatrixXd m(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    if (rows[i].size() != c) throw std::invalid_argument("ragged matrix rows");
    for (std::size_t j = 0; j < c; ++j) m(i, j) = json_get_num(rows[i][j]);
  }
  return m;
}

// {"mu": [...], "sigma_factor_rows": [[...]], "q": r}
inline json qgaussian_to_json(const QGaussian& p) {
  json j;
  j["mu"] = vector_to_json(p.mu);
  j["sigma_factor_rows"] = matrix_rows_to_json(p.L);
  j["q"] = json_num(p.q);
  return j;
}

// Derived fields are recomputed from (mu, factor, q) — never trusted from disk.
inline QGaussian qgaussian_from_json(const json& j) {
  for (const auto& [key, _] : j.items())
    if (key != "mu" && key != "sigma_factor_rows" && key != "q")
      throw std::invalid_argument("qgaussian_from_json: unknown key " + key);
  return new_qgaussian_factor(vector_from_json(j.at("mu")),
                              matrix_from_json_rows(j.at("sigma_factor_rows")),
                              json_get_num(j.at("q")));
}

// {"value": ..., "stderr": ..., "bound": ..., "S": n, "seed": s, "estimator": name}
inline json estimate_to_json(const GradEstimate& e) {
  json j;
  const bool is_vector = e.value.cols() == 1;
  j["value"] = is_vector ? vector_to_json(e.value.col(0)) : matrix_rows_to_json(e.value);
  const Eigen::MatrixXd se = e.stderr_of_mean();
  j["stderr"] = is_vector ? vector_to_json(se.col(0)) : matrix_rows_to_json(se);
  j["bound"] = e.variance_bound ? json_num(*e.variance_bound) : json(nullptr);
  j["S"] = e.S;
  j["seed"] = e.seed;
  j["estimator"] = e.estimator;
  return j;
}

// RFC-4180 CSV: CRLF records, mandatory header, '.' decimal point.
inline void write_batch_csv(const SampleBatch& batch, std::ostream& out) {
  const int D = static_cast<int>(batch.points.cols());
  for (int j = 0; j < D; ++j) out << "x_" << (j + 1) << ",";
  out << "s\r\n";
  for (Eigen::Index k = 0; k < batch.points.rows(); ++k) {
    for (int j = 0; j < D; ++j) out << format_double(batch.points(k, j)) << ",";
    out << format_double(batch.s_values(k)) << "\r\n";
  }
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << content;
  if (!f) throw std::runtime_error("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

}  // namespace qstein
