// Copyright (c) 2026 flowode contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "flowode/dataset.hpp"
#include "flowode/kernel.hpp"
#include "flowode/mixture.hpp"
#include "flowode/schedule.hpp"

namespace flowode {

/// Score callable for the reverse process. eval must be deterministic for
/// fixed inputs and safe for concurrent read-only use; eval_batch (optional)
/// must equal row-wise eval and is used on the hot path.
struct ScoreSource {
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, int k)> eval;
  std::function<Eigen::MatrixXd(const Eigen::MatrixXd&, int k)> eval_batch;
  std::string tag = "custom";  // estimated | oracle-vp | custom
  int dim = 0;
};

/// Oracle variance-preserving scores for a mixture target.
ScoreSource make_oracle_vp_source(GaussianMixture mixture, Schedule schedule);

/// Kernel-estimator scores over a frozen dataset.
ScoreSource make_estimated_source(std::shared_ptr<const Dataset> data,
                                  Schedule schedule,
                                  KernelOptions kernel = {});

struct SampleOptions {
  bool capture = false;          // stream per-step trajectories
  std::string capture_path;     // CSV sink used when capture is set
};

struct TrajectoryAbort {
  std::int64_t trajectory = -1;
  int step_k = 0;
  double y_norm = 0;  // |Y_k| at the aborting step
};

struct SampleResult {
  Eigen::MatrixXd samples;             // one completed trajectory per row
  std::vector<std::int64_t> kept;      // original trajectory ids per row
  std::vector<TrajectoryAbort> aborts; // trajectories with non-finite scores
  double wall_time_sec = 0;
};

/// Deterministic reverse pass: Y_K ~ N(0, I) from (seed, trajectory)
/// counter streams, then for k = K..2
///   Y_{k-1} = (Y_k + (1 - alpha_k)/2 * score(Y_k, k)) / sqrt(alpha_k),
/// returning Y_1 / sqrt(alpha_1). A non-finite score aborts that trajectory
/// with a diagnostic instead of clamping. Output is bit-identical across
/// runs and thread counts.
SampleResult sample(const Schedule& schedule, const ScoreSource& src,
                    std::int64_t count, std::uint64_t seed,
                    const SampleOptions& options = {});

/// Everything needed to reproduce a sampling run plus content hashes of the
/// inputs it depended on.
struct RunRecord {
  std::uint64_t seed = 0;
  std::int64_t count = 0;
  ScheduleParams schedule;
  std::string source_tag;
  std::string dataset_path;  // estimated sources
  std::string mixture_path;  // oracle sources
  std::string kernel_mode = "exact";
  double kernel_eps = 1e-10;
  bool capture = false;
  std::string output_path;
  double wall_time_sec = 0;
  std::uint64_t config_hash = 0;
  std::map<std::string, std::uint64_t> input_hashes;
  std::uint64_t output_hash = 0;

  std::string to_json_text() const;
  static RunRecord from_json_text(const std::string& text);
  void save(const std::string& path) const;
  static RunRecord load(const std::string& path);
};

/// Re-executes the recorded run after hash-checking the referenced inputs.
/// Throws std::runtime_error on input drift or if the replayed output's
/// checksum differs from the recorded one.
SampleResult replay(const RunRecord& record);

}  // namespace flowode
