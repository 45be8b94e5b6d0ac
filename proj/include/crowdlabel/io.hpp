#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include "json.hpp"

#include "crowdlabel/common.hpp"
#include "crowdlabel/exponent.hpp"
#include "crowdlabel/harness.hpp"
#include "crowdlabel/model.hpp"

namespace crowdlabel::io {

using json = nlohmann::ordered_json;

/// Shortest decimal string that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path);
  out << content;
  if (!out) throw ValidationError("failed writing " + path);
}

namespace detail {

inline std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string line;
  std::istringstream in(text);
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

inline std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

inline int parse_int(const std::string& s, const std::string& where) {
  int v = 0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last)
    throw ValidationError("bad integer '" + s + "' in " + where);
  return v;
}

inline void check_keys(const json& j, const std::vector<std::string>& allowed,
                       const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const auto& a : allowed)
      if (key == a) {
        ok = true;
        break;
      }
    if (!ok) throw ValidationError("unknown key '" + key + "' in " + where);
  }
}

inline double get_double(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_number())
    throw ValidationError(where + " needs a numeric '" + key + "'");
  return j[key].get<double>();
}

}  // namespace detail

// ---- label matrices and truths (CSV) ----

inline std::string label_matrix_to_csv(const LabelMatrix& labels) {
  std::string out;
  for (int i = 0; i < labels.worker_count(); ++i) {
    for (int j = 0; j < labels.item_count(); ++j) {
      if (j) out += ',';
      out += std::to_string(labels.at(i, j));
    }
    out += '\n';
  }
  return out;
}

inline LabelMatrix parse_label_matrix(const std::string& text, const std::string& where) {
  const auto lines = detail::split_lines(text);
  if (lines.empty()) throw ValidationError("no rows in " + where);
  std::vector<std::int32_t> entries;
  std::size_t n = 0;
  int k = 2;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto fields = detail::split_fields(lines[i]);
    if (i == 0)
      n = fields.size();
    else if (fields.size() != n)
      throw ValidationError("row " + std::to_string(i + 1) + " of " + where +
                            " has " + std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(n));
    for (const auto& f : fields) {
      const int v = detail::parse_int(f, where);
      if (v < 0) throw ValidationError("negative label in " + where);
      k = std::max(k, v);
      entries.push_back(static_cast<std::int32_t>(v));
    }
  }
  return LabelMatrix(static_cast<int>(lines.size()), static_cast<int>(n), k,
                     std::move(entries));
}

inline LabelMatrix read_label_matrix(const std::string& path) {
  return parse_label_matrix(read_text_file(path), path);
}

inline std::string ground_truth_to_csv(const GroundTruth& truth) {
  std::string out;
  for (int j = 0; j < truth.item_count(); ++j) {
    if (j) out += ',';
    out += std::to_string(truth.label(j));
  }
  out += '\n';
  return out;
}

inline GroundTruth parse_ground_truth(const std::string& text, const std::string& where) {
  const auto lines = detail::split_lines(text);
  if (lines.size() != 1)
    throw ValidationError(where + " must hold exactly one row of labels");
  std::vector<int> y;
  for (const auto& f : detail::split_fields(lines[0]))
    y.push_back(detail::parse_int(f, where));
  return GroundTruth(std::move(y));
}

inline GroundTruth read_ground_truth(const std::string& path) {
  return parse_ground_truth(read_text_file(path), path);
}

// ---- worker pools (JSON) ----

inline WorkerPool parse_worker_pool(const json& j, const std::string& where) {
  const json* workers = nullptr;
  if (j.is_array()) {
    workers = &j;
  } else if (j.is_object() && j.contains("one_coin")) {
    detail::check_keys(j, {"one_coin"}, where);
    if (!j["one_coin"].is_array())
      throw ValidationError(where + ": 'one_coin' must be an array of accuracies");
    std::vector<double> p;
    for (const auto& v : j["one_coin"]) {
      if (!v.is_number()) throw ValidationError(where + ": accuracies must be numbers");
      p.push_back(v.get<double>());
    }
    return OneCoinPool(std::move(p)).to_pool();
  } else if (j.is_object() && j.contains("workers")) {
    detail::check_keys(j, {"workers"}, where);
    workers = &j["workers"];
  } else {
    throw ValidationError(where + ": expected an array of workers, or an object with "
                          "'workers' or 'one_coin'");
  }
  if (!workers->is_array() || workers->empty())
    throw ValidationError(where + ": worker list must be a nonempty array");
  std::vector<ConfusionMatrix> ws;
  for (const auto& w : *workers) {
    if (!w.is_array() || w.empty())
      throw ValidationError(where + ": each worker must be an array of rows");
    const int k = static_cast<int>(w.size());
    std::vector<double> entries;
    entries.reserve(static_cast<std::size_t>(k) * k);
    for (const auto& row : w) {
      if (!row.is_array() || static_cast<int>(row.size()) != k)
        throw ValidationError(where + ": worker rows must form a square matrix");
      for (const auto& v : row) {
        if (!v.is_number())
          throw ValidationError(where + ": matrix entries must be numbers");
        entries.push_back(v.get<double>());
      }
    }
    ws.emplace_back(k, std::move(entries));
  }
  return WorkerPool(std::move(ws));
}

inline WorkerPool read_worker_pool(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
  return parse_worker_pool(j, path);
}

inline json worker_pool_to_json(const WorkerPool& pool) {
  json workers = json::array();
  const int k = pool.label_count();
  for (int i = 0; i < pool.worker_count(); ++i) {
    json w = json::array();
    for (int g = 1; g <= k; ++g) {
      json row = json::array();
      for (int h = 1; h <= k; ++h) row.push_back(pool.worker(i).at(g, h));
      w.push_back(std::move(row));
    }
    workers.push_back(std::move(w));
  }
  return workers;
}

// ---- exponent reports ----

inline json exponent_report_to_json(const ExponentReport& rep) {
  json pairs = json::array();
  for (const auto& p : rep.pairs)
    pairs.push_back({{"g", p.g}, {"h", p.h}, {"t_star", p.t_star}, {"value", p.value}});
  return json{{"i_pi", rep.i_pi},
              {"pairs", std::move(pairs)},
              {"argmin_pair", {rep.argmin_pair.first, rep.argmin_pair.second}},
              {"rho_m", rep.rho_m},
              {"expert_set_size", rep.expert_set_size}};
}

// ---- experiment configs and results ----

inline PoolSpec parse_pool_spec(const json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string())
    throw ValidationError(where + ": pool needs a string 'kind'");
  const std::string kind = j["kind"].get<std::string>();
  PoolSpec spec;
  if (kind == "one_coin_const") {
    detail::check_keys(j, {"kind", "p"}, where);
    spec.kind = PoolSpec::Kind::kOneCoinConst;
    spec.p = detail::get_double(j, "p", where);
  } else if (kind == "one_coin_cycle") {
    detail::check_keys(j, {"kind", "values"}, where);
    spec.kind = PoolSpec::Kind::kOneCoinCycle;
    if (!j.contains("values") || !j["values"].is_array())
      throw ValidationError(where + ": cycle pool needs an array 'values'");
    for (const auto& v : j["values"]) {
      if (!v.is_number()) throw ValidationError(where + ": accuracies must be numbers");
      spec.values.push_back(v.get<double>());
    }
  } else if (kind == "one_coin_uniform") {
    detail::check_keys(j, {"kind", "low", "high"}, where);
    spec.kind = PoolSpec::Kind::kOneCoinUniform;
    spec.low = detail::get_double(j, "low", where);
    spec.high = detail::get_double(j, "high", where);
  } else if (kind == "explicit") {
    detail::check_keys(j, {"kind", "workers"}, where);
    spec.kind = PoolSpec::Kind::kExplicit;
    if (!j.contains("workers"))
      throw ValidationError(where + ": explicit pool needs 'workers'");
    spec.workers = parse_worker_pool(j["workers"], where).workers();
  } else {
    throw ValidationError(where + ": unknown pool kind '" + kind + "'");
  }
  spec.validate();
  return spec;
}

inline ExperimentConfig parse_experiment_config(const json& j, const std::string& where) {
  detail::check_keys(
      j, {"pool", "m_grid", "n", "trials", "rules", "seed", "gamma", "lambda"}, where);
  if (!j.contains("pool")) throw ValidationError(where + " needs 'pool'");
  ExperimentConfig config;
  config.pool = parse_pool_spec(j["pool"], where);
  if (!j.contains("m_grid") || !j["m_grid"].is_array())
    throw ValidationError(where + " needs an array 'm_grid'");
  for (const auto& v : j["m_grid"]) {
    if (!v.is_number_integer()) throw ValidationError(where + ": m_grid must hold integers");
    config.m_grid.push_back(v.get<int>());
  }
  if (!j.contains("n") || !j["n"].is_number_integer())
    throw ValidationError(where + " needs an integer 'n'");
  config.n = j["n"].get<long long>();
  if (j.contains("trials")) {
    if (!j["trials"].is_number_integer())
      throw ValidationError(where + ": 'trials' must be an integer");
    config.trials = j["trials"].get<int>();
  }
  if (!j.contains("rules") || !j["rules"].is_array())
    throw ValidationError(where + " needs an array 'rules'");
  for (const auto& v : j["rules"]) {
    if (!v.is_string()) throw ValidationError(where + ": rules must be strings");
    config.rules.push_back(parse_rule(v.get<std::string>()));
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_integer())
      throw ValidationError(where + ": 'seed' must be an integer");
    config.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("gamma")) config.gamma = detail::get_double(j, "gamma", where);
  if (j.contains("lambda")) config.lambda = detail::get_double(j, "lambda", where);
  config.validate();
  return config;
}

inline ExperimentConfig read_experiment_config(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
  return parse_experiment_config(j, path);
}

inline std::string experiment_result_to_csv(const ExperimentResult& result) {
  std::string out = "rule,m,trials,n,mean_error,std_error,predicted_exponent,fitted_slope\n";
  for (const auto& series : result.series)
    for (const auto& pt : series.points) {
      out += rule_name(series.rule);
      out += ',';
      out += std::to_string(pt.m);
      out += ',';
      out += std::to_string(result.trials);
      out += ',';
      out += std::to_string(result.n);
      out += ',';
      out += format_double(pt.mean_error);
      out += ',';
      out += format_double(pt.std_error);
      out += ',';
      out += pt.predicted_defined ? format_double(pt.predicted_exponent) : "nan";
      out += ',';
      out += series.slope_defined ? format_double(series.fitted_slope) : "nan";
      out += '\n';
    }
  return out;
}

inline json experiment_result_to_json(const ExperimentResult& result) {
  json series = json::array();
  for (const auto& s : result.series) {
    json points = json::array();
    for (const auto& pt : s.points) {
      json p{{"m", pt.m},
             {"errors", pt.errors},
             {"mean_error", pt.mean_error},
             {"std_error", pt.std_error}};
      p["predicted_exponent"] =
          pt.predicted_defined ? json(pt.predicted_exponent) : json(nullptr);
      points.push_back(std::move(p));
    }
    json row{{"rule", rule_name(s.rule)}};
    row["fitted_slope"] = s.slope_defined ? json(s.fitted_slope) : json(nullptr);
    row["points"] = std::move(points);
    series.push_back(std::move(row));
  }
  return json{{"seed", result.seed},
              {"n", result.n},
              {"trials", result.trials},
              {"series", std::move(series)}};
}

// ---- sample-size verification ----

inline SampleSizeConfig parse_sample_size_config(const json& j, const std::string& where) {
  detail::check_keys(j, {"pool", "n", "epsilon", "trials", "seed", "gamma"}, where);
  if (!j.contains("pool")) throw ValidationError(where + " needs 'pool'");
  SampleSizeConfig config;
  config.pool = parse_pool_spec(j["pool"], where);
  if (!j.contains("n") || !j["n"].is_number_integer())
    throw ValidationError(where + " needs an integer 'n'");
  config.n = j["n"].get<long long>();
  config.epsilon = detail::get_double(j, "epsilon", where);
  if (j.contains("trials")) {
    if (!j["trials"].is_number_integer())
      throw ValidationError(where + ": 'trials' must be an integer");
    config.trials = j["trials"].get<int>();
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_integer())
      throw ValidationError(where + ": 'seed' must be an integer");
    config.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("gamma")) config.gamma = detail::get_double(j, "gamma", where);
  config.validate();
  return config;
}

inline SampleSizeConfig read_sample_size_config(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
  return parse_sample_size_config(j, path);
}

inline json sample_size_report_to_json(const SampleSizeReport& rep,
                                       const SampleSizeConfig& config) {
  return json{{"exponent", rep.exponent},
              {"m_star", rep.m_star},
              {"m_sim", rep.m_sim},
              {"epsilon", config.epsilon},
              {"n", config.n},
              {"trials", config.trials},
              {"frac_within_epsilon", rep.frac_within_epsilon},
              {"frac_perfect", rep.frac_perfect},
              {"perfect_applicable", rep.perfect_applicable},
              {"mean_error", rep.mean_error}};
}

}  // namespace crowdlabel::io
