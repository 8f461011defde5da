// Copyright (c) 2026 flowode contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "flowode/evaluation.hpp"
#include "flowode/kernel.hpp"
#include "flowode/sampler.hpp"
#include "flowode/schedule.hpp"

namespace flowode {

/// Process exit codes shared by the drivers and the CLI.
enum ExitCode : int {
  kOk = 0,
  kValidation = 1,
  kIo = 2,
  kNumeric = 3,
};

/// Default initial smoothing n^{-2/(d+2*beta)}.
double default_tau(std::int64_t n, int d, double beta);

/// Default iteration count: the fixed point of K = ceil(n^{beta/(d+2*beta)}
/// * log(K)^3), iterated at most five times from the log-free seed.
int default_K(std::int64_t n, int d, double beta);

/// One experiment description; fully serializable, and every run embeds
/// hash() so outputs can be matched to the exact configuration.
struct ExperimentConfig {
  std::string target;        // mixture spec path
  std::string dataset;       // optional training data path
  ScheduleParams schedule{0, 2.0, 12.0, -1.0};  // K<=0, tau<0 mean defaults
  std::int64_t n = 4096;     // training size when resampling from the target
  std::vector<std::int64_t> n_list;
  std::uint64_t seed = 1;
  std::int64_t count = 10000;  // trajectories
  std::string score_source = "estimated";  // or "oracle-vp"
  KernelOptions kernel;
  std::string mode = "tv";   // rate-study metric: "tv" or "score"
  double t_fixed = 1.0;      // bandwidth for mode == "score"
  std::int64_t mc = 2000;
  int reps = 3;
  int bins = 0;              // 0 = grid default
  std::string output_dir = "out";
  std::string format = "csv";  // or "bin"

  std::string to_json_text() const;
  static ExperimentConfig from_json_text(const std::string& text);
  static ExperimentConfig load(const std::string& path);
  std::uint64_t hash() const;

  /// Schedule with defaults resolved against (n, d, beta).
  ScheduleParams resolved_schedule(std::int64_t n_eff, int d,
                                   double beta) const;
};

/// schedule subcommand: builds, validates, and dumps CSV with header
/// "k,alpha_k,cum_alpha_k,t_k". Returns kValidation when the step-size
/// checks fail (the dump is still written).
int cmd_schedule(const ScheduleParams& params, const std::string& csv_path,
                 std::ostream& log);

/// sample subcommand: builds the configured score source, runs the reverse
/// sampler, and persists samples plus a replayable run record
/// (<output>.run.json). Returns kNumeric if any trajectory aborted.
int cmd_sample(const ExperimentConfig& config, std::ostream& log);

/// fit-eval subcommand: per-step score/Jacobian errors against the oracle.
int cmd_fit_eval(const ExperimentConfig& config, std::ostream& log);

/// tv subcommand helper: TV between two sample files, or between samples
/// and the analytic target when mixture_path is nonempty.
int cmd_tv(const std::string& a_path, const std::string& b_path,
           const std::string& mixture_path, double t, int bins,
           std::ostream& log);

/// rate-study subcommand: sweeps n_list, measuring either the fixed-t score
/// error ("score") or the end-to-end TV ("tv"), and fits a log-log slope.
int cmd_rate_study(const ExperimentConfig& config, std::ostream& log);

/// psd-audit subcommand.
int cmd_psd_audit(const ExperimentConfig& config, std::int64_t points,
                  std::ostream& log);

/// bias-tau subcommand over a list of smoothing values.
int cmd_bias_tau(const ExperimentConfig& config,
                 const std::vector<double>& taus, std::ostream& log);

}  // namespace flowode
