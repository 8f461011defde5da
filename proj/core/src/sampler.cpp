// Copyright (c) 2026 flowode contributors
// SPDX-License-Identifier: Apache-2.0

#include "flowode/sampler.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <utility>

#include <nlohmann/json.hpp>

#include "flowode/hash.hpp"
#include "flowode/io.hpp"
#include "flowode/parallel.hpp"
#include "flowode/rng.hpp"
#include "flowode/score.hpp"

namespace flowode {

namespace {

using nlohmann::json;

Eigen::MatrixXd batch_via_single(const ScoreSource& src,
                                 const Eigen::MatrixXd& ys, int k) {
  Eigen::MatrixXd out(ys.rows(), ys.cols());
  parallel_for(ys.rows(), [&](std::int64_t b, std::int64_t e) {
    for (std::int64_t i = b; i < e; ++i)
      out.row(i) = src.eval(ys.row(i).transpose(), k).transpose();
  });
  return out;
}

}  // namespace

ScoreSource make_oracle_vp_source(GaussianMixture mixture, Schedule schedule) {
  mixture.validate();
  ScoreSource src;
  src.tag = "oracle-vp";
  src.dim = mixture.dim();
  auto m = std::make_shared<GaussianMixture>(std::move(mixture));
  auto s = std::make_shared<Schedule>(std::move(schedule));
  src.eval = [m, s](const Eigen::VectorXd& x, int k) -> Eigen::VectorXd {
    const double a = s->cum_alpha[k - 1];
    const double root_a = std::sqrt(a);
    return oracle_eval(*m, x / root_a, s->t_of_k(k)).s / root_a;
  };
  const auto single = src.eval;
  src.eval_batch = [single](const Eigen::MatrixXd& ys,
                            int k) -> Eigen::MatrixXd {
    Eigen::MatrixXd out(ys.rows(), ys.cols());
    parallel_for(ys.rows(), [&](std::int64_t b, std::int64_t e) {
      for (std::int64_t i = b; i < e; ++i)
        out.row(i) = single(ys.row(i).transpose(), k).transpose();
    });
    return out;
  };
  return src;
}

ScoreSource make_estimated_source(std::shared_ptr<const Dataset> data,
                                  Schedule schedule, KernelOptions kernel) {
  if (!data) throw std::invalid_argument("estimated source needs a dataset");
  ScoreSource src;
  src.tag = "estimated";
  src.dim = data->d();
  auto s = std::make_shared<Schedule>(std::move(schedule));
  src.eval = [data, s, kernel](const Eigen::VectorXd& x,
                               int k) -> Eigen::VectorXd {
    ScoreOptions opt;
    opt.kernel = kernel;
    return score_vp(*data, x, k, *s, opt).s;
  };
  src.eval_batch = [data, s, kernel](const Eigen::MatrixXd& ys,
                                     int k) -> Eigen::MatrixXd {
    ScoreOptions opt;
    opt.kernel = kernel;
    return score_vp_batch(*data, ys, k, *s, opt);
  };
  return src;
}

SampleResult sample(const Schedule& schedule, const ScoreSource& src,
                    std::int64_t count, std::uint64_t seed,
                    const SampleOptions& options) {
  if (count < 1) throw std::invalid_argument("sample count must be >= 1");
  if (!src.eval) throw std::invalid_argument("score source has no eval");
  if (src.dim < 1) throw std::invalid_argument("score source has no dim");
  const int K = schedule.K();
  const int d = src.dim;

  const auto t0 = std::chrono::steady_clock::now();

  Eigen::MatrixXd y(count, d);
  parallel_for(count, [&](std::int64_t b, std::int64_t e) {
    for (std::int64_t i = b; i < e; ++i) {
      Philox rng(seed, static_cast<std::uint64_t>(i));
      for (int j = 0; j < d; ++j) y(i, j) = rng.next_gaussian();
    }
  });

  std::vector<char> alive(static_cast<std::size_t>(count), 1);
  std::vector<TrajectoryAbort> aborts;

  std::ofstream capture;
  if (options.capture) {
    if (options.capture_path.empty())
      throw std::invalid_argument("capture requested without a path");
    capture.open(options.capture_path);
    if (!capture) throw IoError("cannot write " + options.capture_path);
    capture.precision(17);
  }
  const auto dump_state = [&](int k) {
    for (std::int64_t i = 0; i < count; ++i) {
      if (!alive[static_cast<std::size_t>(i)]) continue;
      capture << k << ',' << i;
      for (int j = 0; j < d; ++j) capture << ',' << y(i, j);
      capture << '\n';
    }
  };
  if (options.capture) dump_state(K);

  Eigen::MatrixXd packed, scores;
  std::vector<std::int64_t> packed_ids;
  for (int k = K; k >= 2; --k) {
    std::int64_t n_alive = 0;
    for (std::int64_t i = 0; i < count; ++i)
      n_alive += alive[static_cast<std::size_t>(i)];
    if (n_alive == 0) break;

    packed.resize(n_alive, d);
    packed_ids.clear();
    packed_ids.reserve(static_cast<std::size_t>(n_alive));
    for (std::int64_t i = 0, r = 0; i < count; ++i) {
      if (!alive[static_cast<std::size_t>(i)]) continue;
      packed.row(r++) = y.row(i);
      packed_ids.push_back(i);
    }

    scores = src.eval_batch ? src.eval_batch(packed, k)
                            : batch_via_single(src, packed, k);

    const double alpha = schedule.alpha[k - 1];
    const double half_gap = 0.5 * (1.0 - alpha);
    const double root_alpha = std::sqrt(alpha);
    for (std::int64_t r = 0; r < n_alive; ++r) {
      const std::int64_t i = packed_ids[static_cast<std::size_t>(r)];
      if (!scores.row(r).allFinite()) {
        alive[static_cast<std::size_t>(i)] = 0;
        aborts.push_back({i, k, packed.row(r).norm()});
        continue;
      }
      y.row(i) = (packed.row(r) + half_gap * scores.row(r)) / root_alpha;
      if (!y.row(i).allFinite()) {
        alive[static_cast<std::size_t>(i)] = 0;
        aborts.push_back({i, k, packed.row(r).norm()});
      }
    }
    if (options.capture) dump_state(k - 1);
  }

  const double root_a1 = std::sqrt(schedule.alpha[0]);

  SampleResult res;
  std::int64_t n_keep = 0;
  for (std::int64_t i = 0; i < count; ++i)
    n_keep += alive[static_cast<std::size_t>(i)];
  res.samples.resize(n_keep, d);
  res.kept.reserve(static_cast<std::size_t>(n_keep));
  for (std::int64_t i = 0, r = 0; i < count; ++i) {
    if (!alive[static_cast<std::size_t>(i)]) continue;
    res.samples.row(r++) = y.row(i) / root_a1;
    res.kept.push_back(i);
  }
  res.aborts = std::move(aborts);
  res.wall_time_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return res;
}

std::string RunRecord::to_json_text() const {
  json j;
  j["seed"] = seed;
  j["count"] = count;
  j["schedule"] = {{"K", schedule.K},
                   {"c0", schedule.c0},
                   {"c1", schedule.c1},
                   {"tau", schedule.tau}};
  j["source_tag"] = source_tag;
  j["dataset_path"] = dataset_path;
  j["mixture_path"] = mixture_path;
  j["kernel_mode"] = kernel_mode;
  j["kernel_eps"] = kernel_eps;
  j["capture"] = capture;
  j["output_path"] = output_path;
  j["wall_time_sec"] = wall_time_sec;
  j["config_hash"] = config_hash;
  j["input_hashes"] = input_hashes;
  j["output_hash"] = output_hash;
  return j.dump(2) + "\n";
}

RunRecord RunRecord::from_json_text(const std::string& text) {
  json j = json::parse(text);
  RunRecord r;
  r.seed = j.at("seed").get<std::uint64_t>();
  r.count = j.at("count").get<std::int64_t>();
  r.schedule.K = j.at("schedule").at("K").get<int>();
  r.schedule.c0 = j.at("schedule").at("c0").get<double>();
  r.schedule.c1 = j.at("schedule").at("c1").get<double>();
  r.schedule.tau = j.at("schedule").at("tau").get<double>();
  r.source_tag = j.at("source_tag").get<std::string>();
  r.dataset_path = j.value("dataset_path", std::string());
  r.mixture_path = j.value("mixture_path", std::string());
  r.kernel_mode = j.value("kernel_mode", std::string("exact"));
  r.kernel_eps = j.value("kernel_eps", 1e-10);
  r.capture = j.value("capture", false);
  r.output_path = j.at("output_path").get<std::string>();
  r.wall_time_sec = j.value("wall_time_sec", 0.0);
  r.config_hash = j.value("config_hash", std::uint64_t{0});
  r.input_hashes =
      j.value("input_hashes", std::map<std::string, std::uint64_t>{});
  r.output_hash = j.value("output_hash", std::uint64_t{0});
  return r;
}

void RunRecord::save(const std::string& path) const {
  write_text_file(path, to_json_text());
}

RunRecord RunRecord::load(const std::string& path) {
  return from_json_text(read_text_file(path));
}

SampleResult replay(const RunRecord& record) {
  for (const auto& [path, h] : record.input_hashes) {
    const std::uint64_t now = fnv1a64_file(path);
    if (now != h)
      throw std::runtime_error("input drift detected for " + path +
                               ": recorded " + hash_hex(h) + ", found " +
                               hash_hex(now));
  }

  const Schedule schedule = build_schedule(record.schedule);
  ScoreSource src;
  if (record.source_tag == "oracle-vp") {
    src = make_oracle_vp_source(GaussianMixture::load(record.mixture_path),
                                schedule);
  } else if (record.source_tag == "estimated") {
    auto data = std::make_shared<Dataset>(
        load_matrix_auto(record.dataset_path));
    KernelOptions kernel;
    kernel.mode = record.kernel_mode == "truncated" ? KernelMode::truncated
                                                    : KernelMode::exact;
    kernel.eps = record.kernel_eps;
    src = make_estimated_source(std::move(data), schedule, kernel);
  } else {
    throw std::runtime_error("cannot replay source tag '" +
                             record.source_tag + "'");
  }

  SampleResult res = sample(schedule, src, record.count, record.seed);
  if (record.output_hash != 0) {
    save_matrix_auto(res.samples, record.output_path);
    const std::uint64_t h = fnv1a64_file(record.output_path);
    if (h != record.output_hash)
      throw std::runtime_error("replayed output checksum mismatch: recorded " +
                               hash_hex(record.output_hash) + ", got " +
                               hash_hex(h));
  }
  return res;
}

}  // namespace flowode
