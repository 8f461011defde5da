// Copyright (c) 2026 flowode contributors
// SPDX-License-Identifier: Apache-2.0

#include "flowode/workbench.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <memory>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "flowode/hash.hpp"
#include "flowode/io.hpp"

namespace flowode {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string kernel_mode_name(const KernelOptions& k) {
  return k.mode == KernelMode::truncated ? "truncated" : "exact";
}

KernelOptions kernel_from_json(const json& j) {
  KernelOptions k;
  const std::string mode = j.value("mode", "exact");
  if (mode == "truncated")
    k.mode = KernelMode::truncated;
  else if (mode == "exact")
    k.mode = KernelMode::exact;
  else
    throw std::invalid_argument("kernel mode must be exact or truncated");
  k.eps = j.value("eps", 1e-10);
  return k;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir);
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

Dataset resolve_dataset(const ExperimentConfig& cfg, const GaussianMixture& m,
                        std::int64_t n, std::uint64_t seed,
                        std::string* path_out, std::ostream& log) {
  if (!cfg.dataset.empty()) {
    if (path_out) *path_out = cfg.dataset;
    return Dataset(load_matrix_auto(cfg.dataset));
  }
  Eigen::MatrixXd pts = oracle_sample(m, 0.0, n, seed);
  if (path_out && !path_out->empty()) {
    save_matrix_auto(pts, *path_out);
    log << "wrote training set " << *path_out << " (n=" << n << ")\n";
  }
  return Dataset(std::move(pts));
}

}  // namespace

double default_tau(std::int64_t n, int d, double beta) {
  return std::pow(static_cast<double>(n), -2.0 / (d + 2.0 * beta));
}

int default_K(std::int64_t n, int d, double beta) {
  const double base =
      std::pow(static_cast<double>(n), beta / (d + 2.0 * beta));
  double K = std::max(2.0, std::ceil(base));
  for (int it = 0; it < 5; ++it) {
    const double next =
        std::ceil(base * std::pow(std::log(std::max(K, 3.0)), 3.0));
    if (next == K) break;
    K = next;
  }
  return static_cast<int>(std::max(2.0, K));
}

ScheduleParams ExperimentConfig::resolved_schedule(std::int64_t n_eff, int d,
                                                   double beta) const {
  ScheduleParams p = schedule;
  if (p.K <= 0) p.K = default_K(n_eff, d, beta);
  if (p.tau < 0) p.tau = default_tau(n_eff, d, beta);
  return p;
}

std::string ExperimentConfig::to_json_text() const {
  json j;
  j["target"] = target;
  j["dataset"] = dataset;
  j["schedule"] = {{"K", schedule.K},
                   {"c0", schedule.c0},
                   {"c1", schedule.c1},
                   {"tau", schedule.tau}};
  j["n"] = n;
  j["n_list"] = n_list;
  j["seed"] = seed;
  j["count"] = count;
  j["score_source"] = score_source;
  j["kernel"] = {{"mode", kernel_mode_name(kernel)}, {"eps", kernel.eps}};
  j["mode"] = mode;
  j["t_fixed"] = t_fixed;
  j["mc"] = mc;
  j["reps"] = reps;
  j["bins"] = bins;
  j["output_dir"] = output_dir;
  j["format"] = format;
  return j.dump(2) + "\n";
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  json j = json::parse(text);
  ExperimentConfig c;
  c.target = j.value("target", std::string());
  c.dataset = j.value("dataset", std::string());
  if (j.contains("schedule")) {
    const auto& s = j["schedule"];
    c.schedule.K = s.value("K", 0);
    c.schedule.c0 = s.value("c0", 2.0);
    c.schedule.c1 = s.value("c1", 12.0);
    c.schedule.tau = s.value("tau", -1.0);
  }
  c.n = j.value("n", std::int64_t{4096});
  c.n_list = j.value("n_list", std::vector<std::int64_t>{});
  c.seed = j.value("seed", std::uint64_t{1});
  c.count = j.value("count", std::int64_t{10000});
  c.score_source = j.value("score_source", std::string("estimated"));
  if (j.contains("kernel")) c.kernel = kernel_from_json(j["kernel"]);
  c.mode = j.value("mode", std::string("tv"));
  c.t_fixed = j.value("t_fixed", 1.0);
  c.mc = j.value("mc", std::int64_t{2000});
  c.reps = j.value("reps", 3);
  c.bins = j.value("bins", 0);
  c.output_dir = j.value("output_dir", std::string("out"));
  c.format = j.value("format", std::string("csv"));
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  return from_json_text(read_text_file(path));
}

std::uint64_t ExperimentConfig::hash() const {
  return fnv1a64(to_json_text());
}

int cmd_schedule(const ScheduleParams& params, const std::string& csv_path,
                 std::ostream& log) {
  Schedule s;
  try {
    s = build_schedule(params);
  } catch (const std::exception& ex) {
    log << "schedule construction failed: " << ex.what() << "\n";
    return kValidation;
  }

  std::ostringstream csv;
  csv.precision(17);
  csv << "k,alpha_k,cum_alpha_k,t_k\n";
  for (int k = 1; k <= s.K(); ++k)
    csv << k << ',' << s.alpha[k - 1] << ',' << s.cum_alpha[k - 1] << ','
        << s.t[k - 1] << '\n';
  if (csv_path.empty())
    log << csv.str();
  else
    write_text_file(csv_path, csv.str());

  const ValidationReport rep = validate_schedule(s, params);
  log << rep.summary();
  log << (rep.all_pass() ? "validation PASS\n" : "validation FAIL\n");
  return rep.all_pass() ? kOk : kValidation;
}

int cmd_sample(const ExperimentConfig& cfg, std::ostream& log) {
  if (cfg.target.empty())
    throw std::invalid_argument("sample needs a target mixture spec");
  const GaussianMixture m = GaussianMixture::load(cfg.target);
  ensure_dir(cfg.output_dir);

  RunRecord rec;
  rec.seed = cfg.seed;
  rec.count = cfg.count;
  rec.source_tag = cfg.score_source;
  rec.mixture_path = cfg.target;
  rec.kernel_mode = kernel_mode_name(cfg.kernel);
  rec.kernel_eps = cfg.kernel.eps;
  rec.config_hash = cfg.hash();

  ScheduleParams sp = cfg.resolved_schedule(cfg.n, m.dim(), m.beta_nominal);
  Schedule schedule = build_schedule(sp);
  rec.schedule = sp;
  for (const auto& w : sp.warnings()) log << "WARN " << w << "\n";

  ScoreSource src;
  if (cfg.score_source == "oracle-vp") {
    src = make_oracle_vp_source(m, schedule);
  } else if (cfg.score_source == "estimated") {
    std::string train_path =
        cfg.dataset.empty()
            ? join(cfg.output_dir, "train." + cfg.format)
            : cfg.dataset;
    auto data = std::make_shared<Dataset>(resolve_dataset(
        cfg, m, cfg.n, cfg.seed ^ 0x9E3779B97F4A7C15ull, &train_path, log));
    rec.dataset_path = train_path;
    src = make_estimated_source(data, schedule, cfg.kernel);
  } else {
    throw std::invalid_argument("score_source must be estimated or oracle-vp");
  }

  const std::string out_path =
      join(cfg.output_dir, "samples." + cfg.format);
  SampleResult res = sample(schedule, src, cfg.count, cfg.seed);
  save_matrix_auto(res.samples, out_path);

  rec.output_path = out_path;
  rec.wall_time_sec = res.wall_time_sec;
  rec.input_hashes[cfg.target] = fnv1a64_file(cfg.target);
  if (!rec.dataset_path.empty())
    rec.input_hashes[rec.dataset_path] = fnv1a64_file(rec.dataset_path);
  rec.output_hash = fnv1a64_file(out_path);
  rec.save(out_path + ".run.json");

  log << "wrote " << out_path << " (" << res.samples.rows()
      << " trajectories, " << res.aborts.size()
      << " aborted), checksum " << hash_hex(rec.output_hash) << "\n";
  for (const auto& a : res.aborts)
    log << "abort: trajectory " << a.trajectory << " at k=" << a.step_k
        << " |Y_k|=" << a.y_norm << "\n";
  return res.aborts.empty() ? kOk : kNumeric;
}

int cmd_fit_eval(const ExperimentConfig& cfg, std::ostream& log) {
  if (cfg.target.empty())
    throw std::invalid_argument("fit-eval needs a target mixture spec");
  const GaussianMixture m = GaussianMixture::load(cfg.target);
  ensure_dir(cfg.output_dir);

  const ScheduleParams sp =
      cfg.resolved_schedule(cfg.n, m.dim(), m.beta_nominal);
  const Schedule schedule = build_schedule(sp);

  Dataset data = resolve_dataset(cfg, m, cfg.n,
                                 cfg.seed ^ 0x9E3779B97F4A7C15ull, nullptr,
                                 log);

  std::vector<int> ks;
  const int stride = std::max(1, schedule.K() / 16);
  for (int k = 1; k <= schedule.K(); k += stride) ks.push_back(k);
  if (ks.back() != schedule.K()) ks.push_back(schedule.K());

  ScoreOptions opt;
  opt.kernel = cfg.kernel;
  const ScoreErrorReport rep =
      score_errors(data, m, schedule, ks, cfg.mc, cfg.seed, opt);

  std::ostringstream csv;
  csv << "# config=" << hash_hex(cfg.hash()) << "\n" << rep.to_csv();
  const std::string csv_path = join(cfg.output_dir, "score_errors.csv");
  write_text_file(csv_path, csv.str());

  json summary;
  summary["eps_sc"] = rep.eps_sc;
  summary["eps_jcb"] = rep.eps_jcb;
  summary["K"] = rep.K;
  summary["config_hash"] = hash_hex(cfg.hash());
  write_text_file(join(cfg.output_dir, "score_errors.json"),
                  summary.dump(2) + "\n");

  log << "eps_sc=" << rep.eps_sc << " eps_jcb=" << rep.eps_jcb << " -> "
      << csv_path << "\n";
  return kOk;
}

int cmd_tv(const std::string& a_path, const std::string& b_path,
           const std::string& mixture_path, double t, int bins,
           std::ostream& log) {
  const Eigen::MatrixXd a = load_matrix_auto(a_path);
  TVReport rep;
  if (!mixture_path.empty()) {
    const GaussianMixture m = GaussianMixture::load(mixture_path);
    const Grid grid = Grid::for_mixture(m, t, bins);
    rep = tv_histogram(a, m, t, grid);
  } else {
    const Eigen::MatrixXd b = load_matrix_auto(b_path);
    Eigen::MatrixXd all(a.rows() + b.rows(), a.cols());
    all << a, b;
    const int d = static_cast<int>(a.cols());
    if (d > 2) throw std::invalid_argument("tv supports d <= 2");
    const int nb = bins > 0 ? bins : (d == 1 ? 512 : 128);
    Grid grid;
    if (d == 1) {
      grid = Grid::make_1d(all.col(0).minCoeff() - 1e-9,
                           all.col(0).maxCoeff() + 1e-9, nb);
    } else {
      grid = Grid::make_2d(all.col(0).minCoeff() - 1e-9,
                           all.col(0).maxCoeff() + 1e-9, nb,
                           all.col(1).minCoeff() - 1e-9,
                           all.col(1).maxCoeff() + 1e-9, nb);
    }
    rep = tv_histogram(a, b, grid);
  }
  log << "tv=" << rep.tv << " method=" << rep.method
      << " coverage=" << rep.coverage_a << "/" << rep.coverage_b << "\n";
  return kOk;
}

int cmd_rate_study(const ExperimentConfig& cfg, std::ostream& log) {
  if (cfg.target.empty())
    throw std::invalid_argument("rate-study needs a target mixture spec");
  if (cfg.n_list.size() < 4)
    throw std::invalid_argument("rate-study needs >= 4 entries in n_list");
  const GaussianMixture m = GaussianMixture::load(cfg.target);
  ensure_dir(cfg.output_dir);

  Eigen::VectorXd xs(static_cast<Eigen::Index>(cfg.n_list.size()));
  Eigen::VectorXd ys(static_cast<Eigen::Index>(cfg.n_list.size()));
  std::ostringstream csv;
  csv.precision(17);
  csv << "# config=" << hash_hex(cfg.hash()) << "\n";
  csv << "n,metric,value,se\n";

  for (std::size_t i = 0; i < cfg.n_list.size(); ++i) {
    const std::int64_t n = cfg.n_list[i];
    double value = 0, se = 0;

    if (cfg.mode == "score") {
      // Fixed-bandwidth score error, averaged over independent datasets.
      Eigen::VectorXd reps(cfg.reps);
      for (int r = 0; r < cfg.reps; ++r) {
        const Dataset data(oracle_sample(
            m, 0.0, n,
            cfg.seed + 7919ull * static_cast<std::uint64_t>(i) + r));
        ScoreOptions opt;
        opt.kernel = cfg.kernel;
        double se_r = 0;
        reps[r] = score_error_ve(data, m, cfg.t_fixed, cfg.mc,
                                 cfg.seed + 104729ull * (r + 1), opt, &se_r);
      }
      value = reps.mean();
      se = cfg.reps > 1 ? std::sqrt((reps.array() - value).square().sum() /
                                    (cfg.reps * (cfg.reps - 1.0)))
                        : 0.0;
      csv << n << ",eps2_sc," << value << ',' << se << '\n';
    } else if (cfg.mode == "tv") {
      // Full pipeline: fit on n points, sample, compare histograms against
      // the analytic target. Trajectory noise is shared across n (common
      // seed) so the decay in n is not masked by Monte-Carlo jitter.
      const Dataset data(oracle_sample(
          m, 0.0, n, cfg.seed + 7919ull * static_cast<std::uint64_t>(i)));
      auto shared = std::make_shared<Dataset>(data);
      const ScheduleParams sp =
          cfg.resolved_schedule(n, m.dim(), m.beta_nominal);
      const Schedule schedule = build_schedule(sp);
      const ScoreSource src =
          make_estimated_source(shared, schedule, cfg.kernel);
      const SampleResult res = sample(schedule, src, cfg.count, cfg.seed);
      const Grid grid = Grid::for_mixture(m, 0.0, cfg.bins);
      const TVReport tv = tv_histogram(res.samples, m, 0.0, grid);
      value = tv.tv;
      csv << n << ",tv," << value << ",0\n";
    } else {
      throw std::invalid_argument("rate-study mode must be score or tv");
    }
    xs[static_cast<Eigen::Index>(i)] = static_cast<double>(n);
    ys[static_cast<Eigen::Index>(i)] = value;
    log << "n=" << n << " " << cfg.mode << "=" << value << "\n";
  }

  const RateFit fit = rate_fit(xs, ys);
  const std::string csv_path = join(cfg.output_dir, "rate_curve.csv");
  write_text_file(csv_path, csv.str());

  json jfit;
  jfit["slope"] = fit.slope;
  jfit["intercept"] = fit.intercept;
  jfit["r2"] = fit.r2;
  jfit["metric"] = cfg.mode;
  jfit["config_hash"] = hash_hex(cfg.hash());
  write_text_file(join(cfg.output_dir, "rate_fit.json"), jfit.dump(2) + "\n");

  log << "slope=" << fit.slope << " r2=" << fit.r2 << " -> " << csv_path
      << "\n";
  return kOk;
}

int cmd_psd_audit(const ExperimentConfig& cfg, std::int64_t points,
                  std::ostream& log) {
  if (cfg.target.empty())
    throw std::invalid_argument("psd-audit needs a target mixture spec");
  const GaussianMixture m = GaussianMixture::load(cfg.target);
  const Dataset data = resolve_dataset(
      cfg, m, cfg.n, cfg.seed ^ 0x9E3779B97F4A7C15ull, nullptr, log);
  const ScheduleParams sp =
      cfg.resolved_schedule(cfg.n, m.dim(), m.beta_nominal);
  const Schedule schedule = build_schedule(sp);

  ScoreOptions opt;
  opt.kernel = cfg.kernel;
  const PsdAuditReport rep =
      psd_audit(data, schedule, points, cfg.seed, opt);
  log << "min_eig=" << rep.min_eig << " above=" << rep.count_above
      << " band=" << rep.count_band << " below=" << rep.count_below << " "
      << (rep.pass ? "PASS" : "FAIL") << "\n";
  return rep.pass ? kOk : kValidation;
}

int cmd_bias_tau(const ExperimentConfig& cfg, const std::vector<double>& taus,
                 std::ostream& log) {
  if (cfg.target.empty())
    throw std::invalid_argument("bias-tau needs a target mixture spec");
  const GaussianMixture m = GaussianMixture::load(cfg.target);
  ensure_dir(cfg.output_dir);

  const int K = cfg.schedule.K > 0 ? cfg.schedule.K : 100;
  const double alpha1 = cum_alpha_first(K, cfg.schedule.c0);
  const double max_tau = *std::max_element(taus.begin(), taus.end());
  const Grid grid = Grid::for_mixture(
      m, (1.0 - alpha1) / alpha1 + max_tau, cfg.bins);

  const std::vector<BiasRow> rows = bias_vs_tau(m, taus, alpha1, grid);
  std::ostringstream csv;
  csv.precision(17);
  csv << "# config=" << hash_hex(cfg.hash()) << "\n";
  csv << "tau,t,tv\n";
  for (const auto& r : rows) {
    csv << r.tau << ',' << r.t << ',' << r.tv << '\n';
    log << "tau=" << r.tau << " t=" << r.t << " tv=" << r.tv << "\n";
  }
  write_text_file(join(cfg.output_dir, "bias_tau.csv"), csv.str());
  return kOk;
}

}  // namespace flowode
