// Copyright (c) 2026 flowode contributors
// SPDX-License-Identifier: Apache-2.0
//
// Batch workbench for the kernel-score probability-flow sampler. Every
// subcommand is a thin shell over the library drivers so the same pipelines
// are scriptable and testable in-process.

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "flowode/io.hpp"
#include "flowode/sampler.hpp"
#include "flowode/workbench.hpp"

namespace {

using flowode::ExperimentConfig;

int classify_exception() {
  try {
    throw;
  } catch (const flowode::IoError& ex) {
    std::cerr << "io error: " << ex.what() << "\n";
    return flowode::kIo;
  } catch (const nlohmann::json::exception& ex) {
    std::cerr << "config error: " << ex.what() << "\n";
    return flowode::kValidation;
  } catch (const std::invalid_argument& ex) {
    std::cerr << "invalid input: " << ex.what() << "\n";
    return flowode::kValidation;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return flowode::kNumeric;
  }
}

ExperimentConfig load_config(const std::string& path) {
  return ExperimentConfig::load(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kernel-score probability-flow ODE sampling workbench"};
  app.require_subcommand(1);

  // schedule
  auto* sched = app.add_subcommand(
      "schedule", "build and validate a noise schedule, dump CSV");
  flowode::ScheduleParams sp{100, 2.0, 12.0, 0.0};
  std::string sched_out;
  sched->add_option("-K,--steps", sp.K, "step count")->required();
  sched->add_option("--c0", sp.c0, "first-step exponent");
  sched->add_option("--c1", sp.c1, "contraction constant");
  sched->add_option("--tau", sp.tau, "initial smoothing");
  sched->add_option("-o,--output", sched_out, "CSV path (default stdout)");

  // sample
  auto* samp = app.add_subcommand(
      "sample", "run the reverse sampler from a config file");
  std::string samp_cfg;
  samp->add_option("config", samp_cfg, "experiment config JSON")->required();

  // fit-eval
  auto* fit = app.add_subcommand(
      "fit-eval", "score/Jacobian estimation errors against the oracle");
  std::string fit_cfg;
  fit->add_option("config", fit_cfg, "experiment config JSON")->required();

  // tv
  auto* tv = app.add_subcommand("tv", "total variation between two sides");
  std::string tv_a, tv_b, tv_mix;
  double tv_t = 0.0;
  int tv_bins = 0;
  tv->add_option("-a,--first", tv_a, "sample file (CSV or binary)")
      ->required();
  tv->add_option("-b,--second", tv_b, "second sample file");
  tv->add_option("-m,--mixture", tv_mix,
                 "mixture spec for the analytic side (overrides -b)");
  tv->add_option("-t,--time", tv_t, "smoothing time for the analytic side");
  tv->add_option("--bins", tv_bins, "bins per axis (0 = default)");

  // rate-study
  auto* rate = app.add_subcommand(
      "rate-study", "sweep n_list and fit a log-log convergence slope");
  std::string rate_cfg;
  rate->add_option("config", rate_cfg, "experiment config JSON")->required();

  // psd-audit
  auto* psd = app.add_subcommand(
      "psd-audit", "minimum eigenvalue audit of the estimator Jacobian");
  std::string psd_cfg;
  std::int64_t psd_points = 10000;
  psd->add_option("config", psd_cfg, "experiment config JSON")->required();
  psd->add_option("--points", psd_points, "audit sample count");

  // bias-tau
  auto* bias = app.add_subcommand(
      "bias-tau", "initialization bias table over smoothing values");
  std::string bias_cfg;
  std::vector<double> bias_taus;
  bias->add_option("config", bias_cfg, "experiment config JSON")->required();
  bias->add_option("--taus", bias_taus, "smoothing values")
      ->expected(-1)
      ->required();

  // replay
  auto* rep = app.add_subcommand(
      "replay", "re-run a recorded sample run and check its checksum");
  std::string rep_record;
  rep->add_option("record", rep_record, "run record JSON")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (sched->parsed()) return flowode::cmd_schedule(sp, sched_out, std::cout);
    if (samp->parsed())
      return flowode::cmd_sample(load_config(samp_cfg), std::cout);
    if (fit->parsed())
      return flowode::cmd_fit_eval(load_config(fit_cfg), std::cout);
    if (tv->parsed()) {
      if (tv_mix.empty() && tv_b.empty()) {
        std::cerr << "tv needs either --second or --mixture\n";
        return flowode::kValidation;
      }
      return flowode::cmd_tv(tv_a, tv_b, tv_mix, tv_t, tv_bins, std::cout);
    }
    if (rate->parsed())
      return flowode::cmd_rate_study(load_config(rate_cfg), std::cout);
    if (psd->parsed())
      return flowode::cmd_psd_audit(load_config(psd_cfg), psd_points,
                                    std::cout);
    if (bias->parsed())
      return flowode::cmd_bias_tau(load_config(bias_cfg), bias_taus,
                                   std::cout);
    if (rep->parsed()) {
      const flowode::RunRecord record = flowode::RunRecord::load(rep_record);
      const flowode::SampleResult res = flowode::replay(record);
      std::cout << "replayed " << res.samples.rows()
                << " trajectories, checksum matches\n";
      return flowode::kOk;
    }
  } catch (...) {
    return classify_exception();
  }
  return flowode::kValidation;
}
