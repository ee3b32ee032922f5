#include "tcsis/cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "tcsis/config.hpp"
#include "tcsis/errors.hpp"
#include "tcsis/kernel.hpp"
#include "tcsis/mathutil.hpp"
#include "tcsis/metrics.hpp"
#include "tcsis/oracle.hpp"
#include "tcsis/sampler.hpp"
#include "tcsis/tcs.hpp"

namespace tcsis {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

int default_threads() {
  if (const char* env = std::getenv("TCSIS_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return static_cast<int>(std::min(hw == 0 ? 1u : hw, 16u));
}

struct CommonOptions {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  int threads = default_threads();
};

ExperimentConfig load_common(const CommonOptions& opts) {
  ExperimentConfig cfg;
  if (!opts.config_path.empty()) cfg = load_config_file(opts.config_path);
  if (opts.seed) cfg.seed = *opts.seed;
  if (!opts.out_dir.empty()) cfg.output_dir = opts.out_dir;
  return cfg;
}

fs::path prepare_out_dir(const ExperimentConfig& cfg) {
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  write_json_file(dir / "resolved_config.json", resolved_config_json(cfg));
  return dir;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_metrics_log(const fs::path& path,
                       const std::vector<TrainMetricsRow>& rows) {
  std::ofstream out(path);
  if (!out) throw state_error("cannot open for writing: " + path.string());
  out << "step,loss,score_err_oracle,nonfinite_targets,wallclock_s\n";
  for (const auto& r : rows) {
    out << r.step << ',' << fmt(r.loss) << ',' << fmt(r.score_err_oracle)
        << ',' << r.nonfinite_targets << ',' << fmt(r.wallclock_s) << '\n';
  }
}

// ---------------------------------------------------------------------------
// oracle-check

int cmd_oracle_check(const CommonOptions& opts) {
  const ExperimentConfig cfg = load_common(opts);
  const fs::path dir = prepare_out_dir(cfg);
  const IsingModel model = cfg.model.build();
  auto [d, vocab] = model.dims();
  const NoiseSchedule schedule = cfg.schedule.build(vocab);

  // Kernel closed form vs. matrix-exponential series.
  {
    std::ofstream out(dir / "kernel_check.csv");
    out << "V,a_bar,max_abs_err\n";
    for (int v : {2, 3, 5}) {
      for (int i = 0; i < 20; ++i) {
        const double a_bar =
            std::exp(std::log(1e-4) +
                     (std::log(50.0) - std::log(1e-4)) * i / 19.0);
        const auto series = matrix_exponential_oracle(a_bar, v);
        const SingleTokenKernel k = single_token_kernel(a_bar, v);
        double err = 0.0;
        for (int r = 0; r < v; ++r) {
          for (int c = 0; c < v; ++c) {
            const double closed = r == c ? k.p_stay : k.p_other;
            err = std::max(err, std::abs(series[static_cast<std::size_t>(r) *
                                                    static_cast<std::size_t>(v) +
                                                static_cast<std::size_t>(c)] -
                                         closed));
          }
        }
        out << v << ',' << fmt(a_bar) << ',' << fmt(err) << '\n';
      }
    }
  }

  const ExactOracle oracle(model);  // throws capacity_error beyond the cap
  const auto& states = oracle.states();

  // Identity route vs. push-forward route, plus MC estimates at several N.
  std::vector<std::uint64_t> ranks;
  if (states.size() <= 4096) {
    ranks.resize(states.size());
    for (std::size_t r = 0; r < states.size(); ++r) ranks[r] = r;
  } else {
    Rng rng = derive_rng(cfg.seed, 0x6f7263);
    for (int i = 0; i < 64; ++i) ranks.push_back(uniform_below(rng, states.size()));
  }

  std::ofstream out(dir / "oracle_scores.csv");
  out << "t,a_bar,state,site,token,log_score_exact,log_score_pushforward,"
         "identity_abs_err,mc_logscore_n100,mc_abs_err_n100,"
         "mc_logscore_n1000,mc_abs_err_n1000\n";
  double worst_identity_err = 0.0;
  for (int j = 0; j < 10; ++j) {
    const double t = (j + 0.5) * schedule.T / 10.0;
    const double a_bar = schedule.cumulative(t);
    const auto push = oracle.pushforward_log_marginals(a_bar);
    Rng mc_rng = derive_rng(cfg.seed, 0x6d63, static_cast<std::uint64_t>(j));
    for (const std::uint64_t rank : ranks) {
      const SequenceState& x = states[static_cast<std::size_t>(rank)];
      const ConcreteScoreMatrix exact = oracle.concrete_score(a_bar, x);
      const McScoreEstimate mc100 =
          estimate_concrete_score(model, x, a_bar, 100, mc_rng);
      const McScoreEstimate mc1000 =
          estimate_concrete_score(model, x, a_bar, 1000, mc_rng);
      for (int i = 0; i < d; ++i) {
        const int self = x.tokens[static_cast<std::size_t>(i)];
        for (int v = 0; v < vocab; ++v) {
          if (v == self) continue;
          const std::uint64_t y_rank =
              state_rank(flipped(x, i, v));
          const double push_score =
              push[static_cast<std::size_t>(y_rank)] -
              push[static_cast<std::size_t>(rank)];
          const double exact_score = exact.log_scores.at(i, v);
          const double identity_err = std::abs(exact_score - push_score);
          worst_identity_err = std::max(worst_identity_err, identity_err);
          out << fmt(t) << ',' << fmt(a_bar) << ',' << rank << ',' << i << ','
              << v << ',' << fmt(exact_score) << ',' << fmt(push_score) << ','
              << fmt(identity_err) << ','
              << fmt(mc100.log_scores.at(i, v)) << ','
              << fmt(std::abs(mc100.log_scores.at(i, v) - exact_score)) << ','
              << fmt(mc1000.log_scores.at(i, v)) << ','
              << fmt(std::abs(mc1000.log_scores.at(i, v) - exact_score))
              << '\n';
        }
      }
    }
  }
  std::cout << "oracle-check: identity max abs err " << worst_identity_err
            << " over " << ranks.size() << " states x 10 times\n";
  std::cout << "reports written to " << dir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train

std::vector<TrainMetricsRow> run_training(const ExperimentConfig& cfg,
                                          int threads, const fs::path& dir,
                                          Checkpoint* out_ckpt) {
  const IsingModel model = cfg.model.build();
  auto [d, vocab] = model.dims();
  const NoiseSchedule schedule = cfg.schedule.build(vocab);
  TrainConfig tcfg = cfg.train.build(schedule, cfg.seed, threads);

  TrainHooks hooks;
  if (tcfg.proposal.kind == ProposalConfig::Kind::model_mix) {
    // Refreshes the replay buffer with reverse-chain samples of the current
    // EMA weights; wired here so training itself stays simulation-free.
    const int n_steps = cfg.sampler.n_steps;
    const int n_refresh = tcfg.proposal.refresh_chains;
    std::uint64_t refresh_counter = 0;
    hooks.model_sampler = [&model, schedule, n_steps, n_refresh, &cfg,
                           refresh_counter, threads](
                              const Network&, const Network& ema) mutable {
      NeuralScoreSource source(ema, schedule);
      SamplerConfig scfg;
      scfg.n_steps = n_steps;
      scfg.n_samples = n_refresh;
      scfg.seed = derive_seed(cfg.seed, 0x6d6f64656c, refresh_counter++);
      scfg.threads = threads;
      return sample(source, scfg).samples;
    };
  }

  const TrainResult result = train(model, tcfg, hooks);
  save_checkpoint(dir / "checkpoint.ckpt", result.net, result.ema);
  write_metrics_log(dir / "metrics.csv", result.log);
  if (out_ckpt != nullptr) {
    out_ckpt->net = result.net;
    out_ckpt->ema = result.ema;
  }
  return result.log;
}

int cmd_train(const CommonOptions& opts) {
  const ExperimentConfig cfg = load_common(opts);
  const fs::path dir = prepare_out_dir(cfg);
  const auto log = run_training(cfg, opts.threads, dir, nullptr);
  if (!log.empty()) {
    std::cout << "train: final loss " << log.back().loss << " after "
              << log.back().step + 1 << " steps\n";
  } else {
    std::cout << "train: 0 grad steps, checkpoint equals initialization\n";
  }
  std::cout << "outputs written to " << dir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// sample

std::unique_ptr<ScoreSource> make_score_source(const std::string& source,
                                               const IsingModel& model,
                                               const NoiseSchedule& schedule,
                                               std::uint64_t seed,
                                               bool use_ema) {
  if (source == "oracle") {
    return std::make_unique<OracleScoreSource>(model, schedule);
  }
  if (source.rfind("mc:", 0) == 0) {
    const long long n = std::atoll(source.c_str() + 3);
    if (n < 1) throw invalid_input("mc source needs a positive N, got '" +
                                   source + "'");
    return std::make_unique<McScoreSource>(model, schedule, n,
                                           derive_seed(seed, 0x6d637372));
  }
  if (!fs::exists(source)) {
    throw invalid_input("score source '" + source +
                        "' is neither oracle, mc:<N>, nor a checkpoint file");
  }
  Checkpoint ckpt = load_checkpoint(source);
  const Network& net = use_ema ? ckpt.ema : ckpt.net;
  auto [d, vocab] = model.dims();
  if (net.d != d || net.vocab != vocab) {
    throw invalid_input("checkpoint dims do not match the configured model");
  }
  if (net.head == Head::score) {
    return std::make_unique<NeuralScoreSource>(net, schedule);
  }
  return std::make_unique<NeuralDensityScoreSource>(net, model, schedule);
}

int cmd_sample(const CommonOptions& opts, const std::string& source_flag,
               bool raw_weights) {
  ExperimentConfig cfg = load_common(opts);
  if (!source_flag.empty()) cfg.sampler.source = source_flag;
  const fs::path dir = prepare_out_dir(cfg);
  const IsingModel model = cfg.model.build();
  auto [d, vocab] = model.dims();
  const NoiseSchedule schedule = cfg.schedule.build(vocab);

  auto source = make_score_source(cfg.sampler.source, model, schedule,
                                  cfg.seed, !raw_weights);
  SamplerConfig scfg;
  scfg.n_steps = cfg.sampler.n_steps;
  scfg.n_samples = cfg.sampler.n_samples;
  scfg.seed = cfg.seed;
  scfg.threads = opts.threads;
  const SampleRun run = sample(*source, scfg);

  write_samples_csv(dir / "samples.csv", run.samples);
  json sidecar = {
      {"config", resolved_config_json(cfg)},
      {"seed", cfg.seed},
      {"source", cfg.sampler.source},
      {"n_steps", scfg.n_steps},
      {"n_samples", scfg.n_samples},
      {"clamp_events", run.clamp_events},
      {"coordinate_steps", run.coordinate_steps},
  };
  write_json_file(dir / "samples.json", sidecar);
  const double clamp_rate = run.coordinate_steps > 0
                                ? static_cast<double>(run.clamp_events) /
                                      static_cast<double>(run.coordinate_steps)
                                : 0.0;
  std::cout << "sample: wrote " << run.samples.size() << " samples, clamp rate "
            << clamp_rate << "\n";
  if (clamp_rate >= 0.01) {
    std::cout << "warning: clamp rate above 1%; the step count is likely too "
                 "small for this schedule\n";
  }
  std::cout << "outputs written to " << dir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// mcmc

int cmd_mcmc(const CommonOptions& opts) {
  const ExperimentConfig cfg = load_common(opts);
  const fs::path dir = prepare_out_dir(cfg);
  const IsingModel model = cfg.model.build();
  ChainConfig ccfg = cfg.mcmc.build(cfg.seed, opts.threads);
  const ChainRun run = run_chain(ccfg, model);
  write_samples_csv(dir / "samples.csv", run.samples);
  json sidecar = {
      {"config", resolved_config_json(cfg)},
      {"seed", cfg.seed},
      {"sampler", cfg.mcmc.sampler},
      {"gwg_accept_rate", run.gwg_accept_rate},
  };
  write_json_file(dir / "samples.json", sidecar);
  std::cout << "mcmc: wrote " << run.samples.size() << " samples";
  if (cfg.mcmc.sampler == "gwg") {
    std::cout << ", acceptance rate " << run.gwg_accept_rate;
  }
  std::cout << "\noutputs written to " << dir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// metrics

struct MetricsReport {
  double corr_discrepancy = 0.0;
  double tv_a = std::numeric_limits<double>::quiet_NaN();
  double tv_b = std::numeric_limits<double>::quiet_NaN();
};

MetricsReport write_metric_reports(const fs::path& dir,
                                   const ExperimentConfig& cfg,
                                   std::span<const SequenceState> set_a,
                                   std::span<const SequenceState> set_b_or_empty,
                                   bool against_exact) {
  const IsingModel model = cfg.model.build();
  const int side = cfg.model.side;
  MetricsReport report;

  CorrelationCurve curve_a = two_point_correlation(set_a, side);
  CorrelationCurve curve_b;
  MagnetizationHistogram hist_a = magnetization_histogram(set_a);
  std::vector<double> hist_b_counts;

  std::optional<ExactOracle> oracle;
  const bool enumerable = [&] {
    try {
      checked_state_count(side * side, 2, kDefaultStateCap);
      return true;
    } catch (const capacity_error&) {
      return false;
    }
  }();

  if (against_exact) {
    if (!enumerable) {
      throw capacity_error("exact comparison needs an enumerable instance");
    }
    oracle.emplace(model);
    const auto& states = oracle->states();
    std::vector<double> probs(states.size());
    for (std::size_t r = 0; r < states.size(); ++r) {
      probs[r] = oracle->target().prob(r);
    }
    curve_b = two_point_correlation_weighted(states, probs, side);
    // Expected counts under the exact distribution, scaled to the sample size.
    MagnetizationHistogram ref = hist_a;
    hist_b_counts.assign(ref.counts.size(), 0.0);
    for (std::size_t r = 0; r < states.size(); ++r) {
      double m = 0.0;
      for (auto t : states[r].tokens) m += 2.0 * t - 1.0;
      const double lo = ref.bin_edges.front();
      const double hi = ref.bin_edges.back();
      int b = static_cast<int>((m - lo) / (hi - lo) *
                               static_cast<double>(ref.counts.size()));
      b = std::clamp(b, 0, static_cast<int>(ref.counts.size()) - 1);
      hist_b_counts[static_cast<std::size_t>(b)] +=
          probs[r] * static_cast<double>(hist_a.sample_count);
    }
  } else {
    curve_b = two_point_correlation(set_b_or_empty, side);
    MagnetizationHistogram hist_b = magnetization_histogram(set_b_or_empty);
    hist_b_counts.assign(hist_b.counts.begin(), hist_b.counts.end());
  }

  report.corr_discrepancy = curve_discrepancy(curve_a, curve_b);

  {
    std::ofstream out(dir / "correlation.csv");
    out << "r,G_model,G_truth,abs_err\n";
    for (std::size_t r = 0; r < curve_a.values.size(); ++r) {
      out << r << ',' << fmt(curve_a.values[r]) << ',' << fmt(curve_b.values[r])
          << ',' << fmt(std::abs(curve_a.values[r] - curve_b.values[r]))
          << '\n';
    }
  }
  {
    std::ofstream out(dir / "magnetization.csv");
    out << "bin_center,count_model,count_truth\n";
    for (std::size_t b = 0; b < hist_a.counts.size(); ++b) {
      const double center =
          0.5 * (hist_a.bin_edges[b] + hist_a.bin_edges[b + 1]);
      out << fmt(center) << ',' << hist_a.counts[b] << ','
          << fmt(hist_b_counts[b]) << '\n';
    }
  }

  if (enumerable) {
    if (!oracle) oracle.emplace(model);
    report.tv_a = tv_distance(set_a, oracle->target());
    if (!against_exact) {
      report.tv_b = tv_distance(set_b_or_empty, oracle->target());
    }
  }

  json summary = {
      {"corr_discrepancy", report.corr_discrepancy},
      {"n_samples_a", static_cast<long long>(set_a.size())},
      {"n_samples_b", against_exact
                          ? -1
                          : static_cast<long long>(set_b_or_empty.size())},
  };
  if (std::isfinite(report.tv_a)) summary["tv_a"] = report.tv_a;
  if (std::isfinite(report.tv_b)) summary["tv_b"] = report.tv_b;
  write_json_file(dir / "summary.json", summary);
  return report;
}

int cmd_metrics(const CommonOptions& opts, const std::string& samples_a,
                const std::string& samples_b, bool against_exact) {
  const ExperimentConfig cfg = load_common(opts);
  if (samples_a.empty()) throw invalid_input("metrics needs --samples-a");
  if (samples_b.empty() && !against_exact) {
    throw invalid_input("metrics needs --samples-b or --exact");
  }
  const fs::path dir = prepare_out_dir(cfg);
  const auto set_a = read_samples_csv(samples_a);
  std::vector<SequenceState> set_b;
  if (!against_exact) set_b = read_samples_csv(samples_b);
  const int d = cfg.model.side * cfg.model.side;
  const std::vector<SequenceState>* sets[2] = {&set_a, &set_b};
  for (const auto* set : sets) {
    for (const SequenceState& x : *set) {
      if (x.dim() != d) {
        throw invalid_input("sample dimension does not match the config model");
      }
    }
  }
  const MetricsReport report =
      write_metric_reports(dir, cfg, set_a, set_b, against_exact);
  std::cout << "metrics: corr discrepancy " << report.corr_discrepancy;
  if (std::isfinite(report.tv_a)) std::cout << ", tv_a " << report.tv_a;
  if (std::isfinite(report.tv_b)) std::cout << ", tv_b " << report.tv_b;
  std::cout << "\nreports written to " << dir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// reproduce

int cmd_reproduce(const CommonOptions& opts, const std::string& preset) {
  ExperimentConfig cfg = preset_config(preset);
  if (opts.seed) cfg.seed = *opts.seed;
  if (!opts.out_dir.empty()) cfg.output_dir = opts.out_dir;
  const fs::path dir = prepare_out_dir(cfg);
  const IsingModel model = cfg.model.build();
  const NoiseSchedule schedule = cfg.schedule.build(2);
  const bool full_scale = preset != "smoke";

  // Ground truth: long Glauber chains.
  std::cout << "[1/6] glauber ground truth\n";
  ExperimentConfig truth_cfg = cfg;
  truth_cfg.mcmc.sampler = "glauber";
  truth_cfg.output_dir = (dir / "truth").string();
  truth_cfg.seed = derive_seed(cfg.seed, 1);
  fs::create_directories(truth_cfg.output_dir);
  write_json_file(fs::path(truth_cfg.output_dir) / "resolved_config.json",
                  resolved_config_json(truth_cfg));
  const ChainRun truth =
      run_chain(truth_cfg.mcmc.build(truth_cfg.seed, opts.threads), model);
  write_samples_csv(fs::path(truth_cfg.output_dir) / "samples.csv",
                    truth.samples);

  // GWG baseline at the inference step budget.
  std::cout << "[2/6] gwg baseline\n";
  ExperimentConfig gwg_cfg = cfg;
  gwg_cfg.mcmc.sampler = "gwg";
  gwg_cfg.mcmc.n_steps = cfg.sampler.n_steps;
  gwg_cfg.output_dir = (dir / "gwg").string();
  gwg_cfg.seed = derive_seed(cfg.seed, 2);
  fs::create_directories(gwg_cfg.output_dir);
  write_json_file(fs::path(gwg_cfg.output_dir) / "resolved_config.json",
                  resolved_config_json(gwg_cfg));
  const ChainRun gwg =
      run_chain(gwg_cfg.mcmc.build(gwg_cfg.seed, opts.threads), model);
  write_samples_csv(fs::path(gwg_cfg.output_dir) / "samples.csv", gwg.samples);

  // Self-normalized TCSIS.
  std::cout << "[3/6] self-normalized training\n";
  ExperimentConfig sn_cfg = cfg;
  sn_cfg.train.variant = "self_normalized";
  if (full_scale) {
    sn_cfg.train.mc_samples = 500;
    sn_cfg.train.lr = 1e-5;
    sn_cfg.train.grad_steps = 50000;
    sn_cfg.train.batch = 64;
    sn_cfg.train.proposal = "noise";
  }
  sn_cfg.output_dir = (dir / "self_normalized").string();
  sn_cfg.seed = derive_seed(cfg.seed, 3);
  fs::create_directories(sn_cfg.output_dir);
  write_json_file(fs::path(sn_cfg.output_dir) / "resolved_config.json",
                  resolved_config_json(sn_cfg));
  Checkpoint sn_ckpt;
  run_training(sn_cfg, opts.threads, sn_cfg.output_dir, &sn_ckpt);
  NeuralScoreSource sn_source(sn_ckpt.ema, schedule);
  SamplerConfig sn_scfg;
  sn_scfg.n_steps = cfg.sampler.n_steps;
  sn_scfg.n_samples = cfg.sampler.n_samples;
  sn_scfg.seed = derive_seed(cfg.seed, 4);
  sn_scfg.threads = opts.threads;
  const SampleRun sn_run = sample(sn_source, sn_scfg);
  write_samples_csv(fs::path(sn_cfg.output_dir) / "samples.csv",
                    sn_run.samples);

  // Unbiased TCSIS.
  std::cout << "[4/6] unbiased training\n";
  ExperimentConfig ub_cfg = cfg;
  ub_cfg.train.variant = "unbiased";
  if (full_scale) {
    ub_cfg.train.mc_samples = 100;
    ub_cfg.train.lr = 1e-4;
    ub_cfg.train.grad_steps = 50000;
    ub_cfg.train.batch = 64;
    ub_cfg.train.proposal = "mcmc_gwg";
  } else {
    ub_cfg.train.proposal = "mcmc_gwg";
  }
  ub_cfg.output_dir = (dir / "unbiased").string();
  ub_cfg.seed = derive_seed(cfg.seed, 5);
  fs::create_directories(ub_cfg.output_dir);
  write_json_file(fs::path(ub_cfg.output_dir) / "resolved_config.json",
                  resolved_config_json(ub_cfg));
  Checkpoint ub_ckpt;
  run_training(ub_cfg, opts.threads, ub_cfg.output_dir, &ub_ckpt);
  NeuralDensityScoreSource ub_source(ub_ckpt.ema, model, schedule);
  SamplerConfig ub_scfg = sn_scfg;
  ub_scfg.seed = derive_seed(cfg.seed, 6);
  const SampleRun ub_run = sample(ub_source, ub_scfg);
  write_samples_csv(fs::path(ub_cfg.output_dir) / "samples.csv",
                    ub_run.samples);

  // Metric reports against the ground truth.
  std::cout << "[5/6] metric reports\n";
  const fs::path metrics_dir = dir / "metrics";
  json summary;
  for (auto [name, samples] :
       {std::pair<const char*, const std::vector<SequenceState>*>{
            "self_normalized", &sn_run.samples},
        {"unbiased", &ub_run.samples},
        {"gwg", &gwg.samples}}) {
    const fs::path sub = metrics_dir / name;
    fs::create_directories(sub);
    const MetricsReport r =
        write_metric_reports(sub, cfg, *samples, truth.samples, false);
    summary[name] = {{"corr_discrepancy", r.corr_discrepancy}};
    if (std::isfinite(r.tv_a)) summary[name]["tv"] = r.tv_a;
  }

  // Bootstrap noise floor of the ground-truth correlation curve.
  std::cout << "[6/6] bootstrap noise floor\n";
  {
    Rng rng = derive_rng(cfg.seed, 7);
    const int side = cfg.model.side;
    std::vector<double> discs;
    std::vector<SequenceState> boot_a(truth.samples.size());
    std::vector<SequenceState> boot_b(truth.samples.size());
    for (int rep = 0; rep < 64; ++rep) {
      for (std::size_t i = 0; i < truth.samples.size(); ++i) {
        boot_a[i] = truth.samples[uniform_below(rng, truth.samples.size())];
        boot_b[i] = truth.samples[uniform_below(rng, truth.samples.size())];
      }
      discs.push_back(curve_discrepancy(two_point_correlation(boot_a, side),
                                        two_point_correlation(boot_b, side)));
    }
    std::sort(discs.begin(), discs.end());
    summary["bootstrap_floor_p95"] = discs[60];  // 95th percentile of 64
  }
  write_json_file(dir / "summary.json", summary);
  std::cout << "reproduce: summary written to "
            << (dir / "summary.json").string() << "\n";
  return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"Discrete diffusion sampler for unnormalized densities"};
  app.require_subcommand(1);

  CommonOptions opts;
  std::string source_flag;
  std::string samples_a, samples_b;
  std::string preset;
  bool against_exact = false;
  bool raw_weights = false;

  auto add_common = [&](CLI::App* cmd, bool config_required) {
    auto* c = cmd->add_option("--config", opts.config_path,
                              "experiment config (JSON)");
    if (config_required) c->required();
    cmd->add_option("--out", opts.out_dir, "output directory");
    cmd->add_option("--seed", opts.seed, "master seed (overrides config)");
    cmd->add_option("--threads", opts.threads,
                    "worker threads (default: TCSIS_THREADS or hardware)");
  };

  auto* oracle_cmd =
      app.add_subcommand("oracle-check", "exact-identity and kernel reports");
  add_common(oracle_cmd, true);

  auto* train_cmd = app.add_subcommand("train", "train a TCSIS model");
  add_common(train_cmd, true);

  auto* sample_cmd =
      app.add_subcommand("sample", "sample by reverse-chain simulation");
  add_common(sample_cmd, true);
  sample_cmd->add_option("--source", source_flag,
                         "score source: oracle | mc:<N> | checkpoint path");
  sample_cmd->add_flag("--raw-weights", raw_weights,
                       "use raw instead of EMA weights from checkpoints");

  auto* mcmc_cmd = app.add_subcommand("mcmc", "run MCMC chains");
  add_common(mcmc_cmd, true);

  auto* metrics_cmd =
      app.add_subcommand("metrics", "compare sample sets or samples vs exact");
  add_common(metrics_cmd, true);
  metrics_cmd->add_option("--samples-a", samples_a, "first sample CSV")
      ->required();
  metrics_cmd->add_option("--samples-b", samples_b, "second sample CSV");
  metrics_cmd->add_flag("--exact", against_exact,
                        "compare against the exact enumerated target");

  auto* repro_cmd =
      app.add_subcommand("reproduce", "full pipeline for a lattice preset");
  repro_cmd->add_option("--preset", preset, "l4-high | l4-critical | l4-low | smoke")
      ->required();
  repro_cmd->add_option("--out", opts.out_dir, "output directory");
  repro_cmd->add_option("--seed", opts.seed, "master seed");
  repro_cmd->add_option("--threads", opts.threads, "worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (oracle_cmd->parsed()) return cmd_oracle_check(opts);
    if (train_cmd->parsed()) return cmd_train(opts);
    if (sample_cmd->parsed()) return cmd_sample(opts, source_flag, raw_weights);
    if (mcmc_cmd->parsed()) return cmd_mcmc(opts);
    if (metrics_cmd->parsed()) {
      return cmd_metrics(opts, samples_a, samples_b, against_exact);
    }
    if (repro_cmd->parsed()) return cmd_reproduce(opts, preset);
  } catch (const capacity_error& e) {
    std::cerr << "capacity error: " << e.what() << "\n";
    return 2;
  } catch (const training_failure& e) {
    std::cerr << "training failure: " << e.what() << "\n";
    return 3;
  } catch (const sampling_failure& e) {
    std::cerr << "sampling failure: " << e.what() << "\n";
    return 3;
  } catch (const invalid_input& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace tcsis
