#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "crowdlabel/aggregate.hpp"
#include "crowdlabel/common.hpp"
#include "crowdlabel/exponent.hpp"
#include "crowdlabel/harness.hpp"
#include "crowdlabel/io.hpp"
#include "crowdlabel/model.hpp"

namespace crowdlabel::cli {

namespace detail {

inline void emit(const std::string& content, const std::string& out_path) {
  if (out_path.empty())
    std::cout << content;
  else
    io::write_text_file(out_path, content);
}

inline int default_threads() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

struct AggregateOptions {
  std::string rule;
  std::string labels_path;
  std::string pool_path;
  std::string out_path;
  bool remap = false;
  double lambda = 0.5;
  double tol = 1e-8;
  int max_iters = 100;
};

inline int run_aggregate(const AggregateOptions& opt) {
  const Rule rule = parse_rule(opt.rule);
  LabelMatrix labels = io::read_label_matrix(opt.labels_path);
  if (opt.remap) labels = remap_missing(labels).first;

  io::json meta{{"rule", rule_name(rule)}};
  const auto start = std::chrono::steady_clock::now();
  GroundTruth estimate = [&] {
    switch (rule) {
      case Rule::kMajorityVote:
        return majority_vote(labels);
      case Rule::kOracleMle:
      case Rule::kPluginMle: {
        if (opt.pool_path.empty())
          throw ValidationError("rule '" + opt.rule + "' needs --pool");
        return oracle_mle(labels, io::read_worker_pool(opt.pool_path));
      }
      case Rule::kEm: {
        const auto init = PosteriorMatrix::from_labels(majority_vote(labels),
                                                       labels.label_count(), 0.9);
        auto res = em_run(labels, init, opt.max_iters, opt.tol, opt.lambda);
        meta["iters"] = res.iters;
        return res.labels;
      }
      case Rule::kOneCoinPlugin: {
        const auto est = one_coin_estimate(labels);
        meta["gamma_hat"] = est.gamma_hat;
        double sq = 0.0;
        for (double p : est.p_hat) sq += (2.0 * p - 1.0) * (2.0 * p - 1.0);
        meta["mean_squared_margin"] = sq / est.p_hat.size();
        return plugin_mle(labels, OneCoinPool(est.p_hat).to_pool());
      }
    }
    throw ValidationError("unknown rule");
  }();
  const auto stop = std::chrono::steady_clock::now();
  meta["runtime_ms"] =
      std::chrono::duration<double, std::milli>(stop - start).count();

  emit(io::ground_truth_to_csv(estimate), opt.out_path);
  const std::string meta_text = meta.dump(2) + "\n";
  if (opt.out_path.empty())
    std::cerr << meta_text;
  else
    io::write_text_file(opt.out_path + ".meta.json", meta_text);
  return 0;
}

}  // namespace detail

/// Entry point taking argv[1:]; returns the process exit status.
/// 0 = success, 1 = validation or math-domain failure, 2 = usage.
inline int run(std::vector<std::string> args) {
  CLI::App app{"Crowd label aggregation, error exponents, and simulation harness"};
  app.require_subcommand(1);

  auto* sim = app.add_subcommand("simulate", "Draw a label matrix from a pool and a truth");
  std::string sim_pool, sim_truth, sim_out;
  std::uint64_t sim_seed = 0;
  sim->add_option("--pool", sim_pool, "worker pool JSON")->required();
  sim->add_option("--truth", sim_truth, "ground truth CSV")->required();
  sim->add_option("--out", sim_out, "output label matrix CSV")->required();
  sim->add_option("--seed", sim_seed, "RNG seed")->capture_default_str();

  auto* exp = app.add_subcommand("exponent", "Report pairwise divergences of a pool");
  std::string exp_pool, exp_out;
  exp->add_option("--pool", exp_pool, "worker pool JSON")->required();
  exp->add_option("--out", exp_out, "output JSON (stdout if omitted)");

  auto* agg = app.add_subcommand("aggregate", "Decide labels from a label matrix");
  detail::AggregateOptions agg_opt;
  agg->add_option("--rule", agg_opt.rule, "mv, oracle, plugin, em, or onecoin-plugin")
      ->required();
  agg->add_option("--labels", agg_opt.labels_path, "label matrix CSV")->required();
  agg->add_option("--pool", agg_opt.pool_path,
                  "pool JSON (true pool for oracle, estimate for plugin)");
  agg->add_option("--out", agg_opt.out_path,
                  "output CSV; sidecar metadata goes to <out>.meta.json");
  agg->add_flag("--remap-missing", agg_opt.remap, "turn missing entries into label k+1");
  agg->add_option("--lambda", agg_opt.lambda, "smoothing weight for em")->capture_default_str();
  agg->add_option("--max-iters", agg_opt.max_iters, "iteration cap for em")->capture_default_str();
  agg->add_option("--tol", agg_opt.tol, "objective gain that stops em")->capture_default_str();

  auto* exper = app.add_subcommand("experiment", "Monte Carlo error rates over an m grid");
  std::string exper_config, exper_out, exper_summary;
  std::uint64_t exper_seed = 0;
  int exper_threads = detail::default_threads();
  exper->add_option("--config", exper_config, "experiment config JSON")->required();
  exper->add_option("--out", exper_out, "results CSV (stdout if omitted)");
  exper->add_option("--summary", exper_summary, "also write a JSON summary here");
  exper->add_option("--seed", exper_seed, "override the config seed");
  exper->add_option("--threads", exper_threads, "worker threads over trials")->capture_default_str();

  auto* exact = app.add_subcommand("exact", "Exact per-item error of a rule by enumeration");
  std::string exact_pool, exact_estimate, exact_rule = "mv", exact_out;
  int exact_label = 0;
  exact->add_option("--pool", exact_pool, "true worker pool JSON")->required();
  exact->add_option("--rule", exact_rule, "mv, oracle, or plugin")->capture_default_str();
  exact->add_option("--estimate", exact_estimate, "estimated pool JSON for plugin");
  exact->add_option("--true-label", exact_label,
                    "conditioning label; 0 averages over all labels")->capture_default_str();
  exact->add_option("--out", exact_out, "output JSON (stdout if omitted)");

  auto* verify = app.add_subcommand("verify-sample-size",
                                    "Plan m from the exponent and check it by simulation");
  std::string verify_config, verify_out;
  std::uint64_t verify_seed = 0;
  int verify_threads = detail::default_threads();
  verify->add_option("--config", verify_config, "plan config JSON")->required();
  verify->add_option("--out", verify_out, "output JSON (stdout if omitted)");
  verify->add_option("--seed", verify_seed, "override the config seed");
  verify->add_option("--threads", verify_threads, "worker threads over trials")->capture_default_str();

  std::reverse(args.begin(), args.end());
  try {
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sim->parsed()) {
      const WorkerPool pool = io::read_worker_pool(sim_pool);
      const GroundTruth truth = io::read_ground_truth(sim_truth);
      io::write_text_file(sim_out,
                          io::label_matrix_to_csv(generate_labels(pool, truth, sim_seed)));
      return 0;
    }
    if (exp->parsed()) {
      const ExponentReport rep = minimax_exponent(io::read_worker_pool(exp_pool));
      detail::emit(io::exponent_report_to_json(rep).dump(2) + "\n", exp_out);
      return 0;
    }
    if (agg->parsed()) return detail::run_aggregate(agg_opt);
    if (exper->parsed()) {
      ExperimentConfig config = io::read_experiment_config(exper_config);
      if (exper->count("--seed") > 0) config.seed = exper_seed;
      const ExperimentResult result = run_experiment(
          config, exper_threads, [](int m) { std::cerr << "m=" << m << " done\n"; });
      detail::emit(io::experiment_result_to_csv(result), exper_out);
      if (!exper_summary.empty())
        io::write_text_file(exper_summary,
                            io::experiment_result_to_json(result).dump(2) + "\n");
      return 0;
    }
    if (exact->parsed()) {
      const WorkerPool pool = io::read_worker_pool(exact_pool);
      const Rule rule = parse_rule(exact_rule);
      ColumnRule column_rule = [&] {
        switch (rule) {
          case Rule::kMajorityVote:
            return ColumnRule::majority_vote(pool.worker_count(), pool.label_count());
          case Rule::kOracleMle:
            return ColumnRule::likelihood(pool);
          case Rule::kPluginMle: {
            if (exact_estimate.empty())
              throw ValidationError("rule 'plugin' needs --estimate");
            return ColumnRule::likelihood(io::read_worker_pool(exact_estimate));
          }
          default:
            throw ValidationError("exact enumeration supports mv, oracle, and plugin only");
        }
      }();
      const int k = pool.label_count();
      io::json out{{"rule", rule_name(rule)}};
      if (exact_label == 0) {
        io::json per = io::json::array();
        double avg = 0.0;
        for (int g = 1; g <= k; ++g) {
          const double e = exact_error(pool, column_rule, g);
          per.push_back(e);
          avg += e / k;
        }
        out["true_label"] = 0;
        out["error"] = avg;
        out["per_label"] = std::move(per);
      } else {
        out["true_label"] = exact_label;
        out["error"] = exact_error(pool, column_rule, exact_label);
      }
      detail::emit(out.dump(2) + "\n", exact_out);
      return 0;
    }
    if (verify->parsed()) {
      SampleSizeConfig config = io::read_sample_size_config(verify_config);
      if (verify->count("--seed") > 0) config.seed = verify_seed;
      const SampleSizeReport rep = verify_sample_size(config, verify_threads);
      detail::emit(io::sample_size_report_to_json(rep, config).dump(2) + "\n", verify_out);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace crowdlabel::cli
