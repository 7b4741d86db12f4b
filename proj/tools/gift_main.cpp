// SPDX-License-Identifier: Apache-2.0
//
// gift: the experiment CLI.
//   gift run <config>                 one experiment cell, report emitted
//   gift sweep <config> --axis k=v,v  Cartesian grid over config keys
//   gift gdumb <config> --steps N     class-incremental protocol
//   gift check-bounds ...             contrastive-bound numerical audit
//   gift gradcheck ...                loss-zoo gradients vs finite diffs

#include <cmath>
#include <cstdio>
#include <exception>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gift/config.hpp"
#include "gift/harness.hpp"
#include "gift/kernels.hpp"
#include "gift/labels.hpp"
#include "gift/losses.hpp"
#include "gift/rng.hpp"
#include "gift/tensor.hpp"
#include "gift/theory.hpp"

namespace {

using gift::Rng;
using gift::Tensor;

gift::harness::Axis parse_axis(const std::string& text) {
  const std::size_t eq = text.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw CLI::ValidationError("--axis", "expected key=v1,v2,... got \"" +
                                             text + "\"");
  }
  gift::harness::Axis axis;
  axis.key = text.substr(0, eq);
  axis.values = gift::config::split_list(text.substr(eq + 1));
  if (axis.values.empty()) {
    throw CLI::ValidationError("--axis", "axis \"" + axis.key +
                                             "\" has no values");
  }
  return axis;
}

void print_record(const gift::harness::RunRecord& r) {
  std::printf("%s  loss=%-10s opt=%-5s gamma=%-4g alpha=%-4g  ",
              r.fingerprint.c_str(), r.loss.c_str(), r.optimizer.c_str(),
              r.gamma, r.alpha);
  std::printf("acc %.4f +- %.4f  (teacher %.4f, %zu run%s, %.2fs)\n", r.mean,
              r.stddev, r.teacher_accuracy, r.accuracies.size(),
              r.accuracies.size() == 1 ? "" : "s", r.total_wall);
}

int cmd_run(const std::string& config_path) {
  const auto raw = gift::config::Config::parse_file(config_path);
  const auto cfg = gift::harness::ExperimentConfig::from_config(raw);
  const auto record = gift::harness::run_experiment(cfg);
  gift::harness::emit_report({record}, cfg.output_dir);
  print_record(record);
  std::printf("report: %s/results.csv\n", cfg.output_dir.c_str());
  return 0;
}

int cmd_sweep(const std::string& config_path,
              const std::vector<std::string>& axis_args) {
  const auto raw = gift::config::Config::parse_file(config_path);
  std::vector<gift::harness::Axis> axes;
  for (const auto& a : axis_args) axes.push_back(parse_axis(a));
  const auto records = gift::harness::grid_sweep(raw, axes);
  const auto cfg = gift::harness::ExperimentConfig::from_config(raw);
  gift::harness::emit_report(records, cfg.output_dir);
  for (const auto& r : records) print_record(r);
  std::printf("%zu cell(s); report: %s/results.csv\n", records.size(),
              cfg.output_dir.c_str());
  return 0;
}

int cmd_gdumb(const std::string& config_path, std::size_t steps) {
  const auto raw = gift::config::Config::parse_file(config_path);
  const auto cfg = gift::harness::ExperimentConfig::from_config(raw);
  std::ostringstream csv;
  csv << "repeat,step,seen_classes,memory_size,accuracy\n";
  for (std::size_t rep = 0; rep < cfg.repeats; ++rep) {
    const auto trace = gift::harness::gdumb_incremental(cfg, steps, rep);
    std::printf("repeat %zu:\n", rep);
    for (std::size_t s = 0; s < trace.size(); ++s) {
      std::printf("  step %zu: seen %zu classes, memory %zu rows, acc %.4f\n",
                  s + 1, trace[s].seen_classes, trace[s].memory_size,
                  trace[s].accuracy);
      char line[160];
      std::snprintf(line, sizeof(line), "%zu,%zu,%zu,%zu,%.17g\n", rep, s + 1,
                    trace[s].seen_classes, trace[s].memory_size,
                    trace[s].accuracy);
      csv << line;
    }
  }
  gift::harness::write_file_atomic(cfg.output_dir + "/gdumb.csv", csv.str());
  std::printf("report: %s/gdumb.csv\n", cfg.output_dir.c_str());
  return 0;
}

int cmd_check_bounds(std::size_t k, double tau, std::size_t trials,
                     std::size_t dim, std::uint64_t seed, bool csv) {
  Rng rng(seed);
  std::size_t violations = 0;
  double worst_jensen_gap = 0.0;  // most negative gap seen
  double mean_gap_jensen = 0.0;
  double mean_gap_approx = 0.0;
  if (csv) std::printf("%s\n", gift::theory::BoundReport::csv_header());
  for (std::size_t t = 0; t < trials; ++t) {
    Tensor z({k, dim});
    Tensor y({k, dim});
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = rng.normal();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = rng.normal();
    const auto report = gift::theory::check_bound(z, y, tau);
    if (csv) std::printf("%s\n", report.csv_row().c_str());
    if (report.gap_jensen < -1e-9) ++violations;
    worst_jensen_gap = std::min(worst_jensen_gap, report.gap_jensen);
    mean_gap_jensen += report.gap_jensen;
    mean_gap_approx += report.gap_approx;
  }
  mean_gap_jensen /= static_cast<double>(trials);
  mean_gap_approx /= static_cast<double>(trials);
  std::printf(
      "K=%zu tau=%g trials=%zu dim=%zu: jensen violations %zu, "
      "worst jensen gap %.3e, mean jensen gap %.6f, mean approx gap %.6f\n",
      k, tau, trials, dim, violations, worst_jensen_gap, mean_gap_jensen,
      mean_gap_approx);
  if (violations != 0) {
    std::printf("FAIL: the provable bound was violated\n");
    return 1;
  }
  std::printf("OK: bound held on every draw\n");
  return 0;
}

int cmd_gradcheck(std::size_t instances, std::uint64_t seed) {
  const std::vector<std::string> ids = {"ce",    "soft_ce", "kl",
                                        "js",    "mse",     "cosine",
                                        "kl+ce", "mse+ce",  "soft_ce+ce"};
  const std::size_t batch = 8;
  const std::size_t classes = 10;
  Rng rng(seed);
  bool all_ok = true;
  for (const auto& id_text : ids) {
    const auto id = gift::losses::LossId::parse(id_text);
    double worst = 0.0;
    for (std::size_t inst = 0; inst < instances; ++inst) {
      Tensor logits({batch, classes});
      for (std::size_t i = 0; i < logits.size(); ++i) {
        logits[i] = rng.normal();
      }
      std::vector<std::size_t> hard_classes(batch);
      for (std::size_t i = 0; i < batch; ++i) {
        hard_classes[i] = rng.below(classes);
      }
      const auto hard = gift::labels::one_hot(hard_classes, classes);
      gift::labels::LabelMatrix vec;
      vec.rows = batch;
      vec.cols = classes;
      vec.role = gift::labels::Role::kSoft;
      vec.values.resize(batch * classes);
      for (std::size_t r = 0; r < batch; ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
          vec.at(r, c) = 0.05 + rng.uniform();
          sum += vec.at(r, c);
        }
        for (std::size_t c = 0; c < classes; ++c) vec.at(r, c) /= sum;
      }
      Tensor target_logits({batch, classes});
      for (std::size_t i = 0; i < target_logits.size(); ++i) {
        target_logits[i] = rng.normal();
      }

      const auto [value, grad] = gift::losses::loss_with_grad(
          id, logits, &hard, &vec, &target_logits);
      (void)value;
      // Central differences against the eager combo evaluator. The step is
      // chosen where roundoff and truncation balance; much smaller steps let
      // cancellation noise dominate entries whose gradient is near zero.
      const double h = 5e-5;
      for (std::size_t i = 0; i < logits.size(); ++i) {
        Tensor probe = logits;
        probe[i] = logits[i] + h;
        const double up = gift::losses::loss_with_grad(id, probe, &hard, &vec,
                                                       &target_logits)
                              .first;
        probe[i] = logits[i] - h;
        const double dn = gift::losses::loss_with_grad(id, probe, &hard, &vec,
                                                       &target_logits)
                              .first;
        const double fd = (up - dn) / (2.0 * h);
        const double scale =
            std::max({std::fabs(fd), std::fabs(grad[i]), 1e-6});
        worst = std::max(worst, std::fabs(fd - grad[i]) / scale);
      }
    }
    const bool ok = worst < 1e-4;
    all_ok = all_ok && ok;
    std::printf("%-12s max rel err %.3e  %s\n", id_text.c_str(), worst,
                ok ? "ok" : "FAIL");
  }
  std::printf(all_ok ? "gradcheck OK\n" : "gradcheck FAILED\n");
  return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gift: label-utilization training laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  auto* run = app.add_subcommand("run", "run one experiment cell");
  run->add_option("config", config_path, "experiment config file")
      ->required();

  std::string sweep_config;
  std::vector<std::string> axis_args;
  auto* sweep = app.add_subcommand("sweep", "Cartesian grid over config keys");
  sweep->add_option("config", sweep_config, "base config file")->required();
  sweep->add_option("--axis", axis_args,
                    "axis as key=v1,v2,... (repeatable; axis \"seed\" "
                    "enumerates repeat seeds)");

  std::string gdumb_config;
  std::size_t steps = 5;
  auto* gdumb = app.add_subcommand("gdumb", "class-incremental protocol");
  gdumb->add_option("config", gdumb_config, "experiment config file")
      ->required();
  gdumb->add_option("--steps", steps, "number of class groups")
      ->default_val(5);

  std::size_t k = 32;
  double tau = 0.5;
  std::size_t trials = 1000;
  std::size_t dim = 16;
  std::uint64_t bound_seed = 0;
  bool bound_csv = false;
  auto* bounds =
      app.add_subcommand("check-bounds", "contrastive-bound numerical audit");
  bounds->add_option("--k", k, "rows per draw")->default_val(32);
  bounds->add_option("--tau", tau, "temperature")->default_val(0.5);
  bounds->add_option("--trials", trials, "draw count")->default_val(1000);
  bounds->add_option("--dim", dim, "feature dimension")->default_val(16);
  bounds->add_option("--seed", bound_seed, "rng seed")->default_val(0);
  bounds->add_flag("--csv", bound_csv, "print one csv row per draw");

  std::size_t instances = 5;
  std::uint64_t grad_seed = 0;
  auto* grad =
      app.add_subcommand("gradcheck", "loss gradients vs finite differences");
  grad->add_option("--instances", instances, "random instances per loss")
      ->default_val(5);
  grad->add_option("--seed", grad_seed, "rng seed")->default_val(0);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path);
    if (sweep->parsed()) return cmd_sweep(sweep_config, axis_args);
    if (gdumb->parsed()) return cmd_gdumb(gdumb_config, steps);
    if (bounds->parsed()) {
      return cmd_check_bounds(k, tau, trials, dim, bound_seed, bound_csv);
    }
    if (grad->parsed()) return cmd_gradcheck(instances, grad_seed);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
