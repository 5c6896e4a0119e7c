#include "mgm/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mgm/common.hpp"
#include "mgm/nn.hpp"
#include "mgm/ot.hpp"
#include "mgm/rng.hpp"
#include "mgm/synth.hpp"
#include "mgm/theory.hpp"
#include "mgm/train.hpp"

namespace mgm {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string out_root() {
  const char* env = std::getenv("MGM_OUT_ROOT");
  return (env != nullptr && *env != '\0') ? env : ".";
}

std::string resolve_out(const std::string& flag, const std::string& fallback) {
  if (!flag.empty()) return flag;
  return (fs::path(out_root()) / fallback).string();
}

void write_json_file(const std::string& path, const json& j) {
  const fs::path dir = fs::path(path).parent_path();
  if (!dir.empty()) fs::create_directories(dir);
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path);
  out << j.dump(1) << '\n';
  if (!out) throw IoError("write failed for " + path);
}

Mat hcat(const Mat& a, const Mat& b) {
  Mat out(a.rows, a.cols + b.cols);
  for (long i = 0; i < a.rows; ++i) {
    for (long j = 0; j < a.cols; ++j) out.at(i, j) = a.at(i, j);
    for (long j = 0; j < b.cols; ++j) out.at(i, a.cols + j) = b.at(i, j);
  }
  return out;
}

Mat left_cols(const Mat& m, long k) {
  Mat out(m.rows, k);
  for (long i = 0; i < m.rows; ++i)
    for (long j = 0; j < k; ++j) out.at(i, j) = m.at(i, j);
  return out;
}

json mat_json(const Mat& m) {
  json rows = json::array();
  for (long i = 0; i < m.rows; ++i) {
    json row = json::array();
    for (long j = 0; j < m.cols; ++j) row.push_back(m.at(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

// Runs tasks on `jobs` workers; with one job they run inline so exceptions
// keep their original type.  Otherwise the first failure is rethrown after
// all workers drain.
void run_pool(long jobs, const std::vector<std::function<void()>>& tasks) {
  if (jobs <= 1 || tasks.size() <= 1) {
    for (const auto& t : tasks) t();
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      try {
        tasks[i]();
      } catch (...) {
        const std::lock_guard<std::mutex> lock(error_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  const std::size_t width = std::min<std::size_t>(static_cast<std::size_t>(jobs), tasks.size());
  threads.reserve(width);
  for (std::size_t i = 0; i < width; ++i) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// ---- gen-data ----

struct GenDataFlags {
  std::string scenario = "full";
  double beta = 0.5;
  long n = 128000;
  long test_n = 2000;
  std::uint64_t seed = 1;
  std::string out;
};

ScenarioSpec scenario_spec(const std::string& name, double beta, long n, long test_n,
                           std::uint64_t seed) {
  ScenarioSpec spec;
  spec.kind = scenario_from_name(name, &spec.low_n);
  spec.beta = beta;
  spec.n_train = n;
  spec.n_test = test_n;
  spec.seed = seed;
  spec.validate();
  return spec;
}

int run_gen_data(const GenDataFlags& f) {
  const ScenarioSpec spec = scenario_spec(f.scenario, f.beta, f.n, f.test_n, f.seed);
  const std::string dir = resolve_out(f.out, "data/" + spec.name());
  const ScenarioData data = make_scenario(spec);
  save_scenario(data, dir);
  std::cout << "wrote " << spec.name() << " beta " << spec.beta << ": "
            << data.train_x1.rows << " treated agent rows of " << data.train_x1_full.rows
            << ", " << data.test_x1.rows << " test rows -> " << dir << "\n";
  return 0;
}

// ---- pretrain-mixer ----

struct PretrainFlags {
  std::string data;
  long iters = 20000;
  long batch = 256;
  long m = 5;
  double lambda = 1.0;
  double lr = 1e-4;
  std::uint64_t seed = 1;
  std::vector<long> hidden;
  std::string out;
};

int run_pretrain(const PretrainFlags& f) {
  const ScenarioData sc = load_scenario(f.data);
  MixerData data;
  data.cond = hcat(sc.train_x1_full, sc.train_x2);
  data.y = sc.train_y;

  MixerTrainConfig cfg;
  cfg.iters = f.iters;
  cfg.batch = f.batch;
  cfg.critic_iters = f.m;
  cfg.lambda = f.lambda;
  cfg.adam.lr = f.lr;
  cfg.seed = f.seed;
  if (!f.hidden.empty()) {
    cfg.gen.hidden = f.hidden;
    cfg.critic.hidden = f.hidden;
  }

  const std::string out = resolve_out(f.out, "mixer.json");
  const fs::path dir = fs::path(out).parent_path();
  if (!dir.empty()) fs::create_directories(dir);
  const Checkpoint ck = pretrain_mixer(data, cfg);
  save_checkpoint(out, ck);
  write_json_file(out + ".config.json",
                  json{{"command", "pretrain-mixer"},
                       {"data", f.data},
                       {"iters", f.iters},
                       {"batch", f.batch},
                       {"m", f.m},
                       {"lambda", f.lambda},
                       {"lr", f.lr},
                       {"seed", f.seed},
                       {"hidden", cfg.gen.hidden}});
  std::cout << "wrote mixer checkpoint (" << f.iters << " iterations) -> " << out << "\n";
  return 0;
}

// ---- train-agent ----

struct TrainFlags {
  std::string mode = "combined";
  double alpha = 0.5;
  std::string mixer;
  std::string data;
  long iters = 20000;
  long batch = 256;
  long m = 5;
  double lambda = 0.1;
  double lambda_feedback = 1.0;
  double lr = 1e-4;
  std::uint64_t seed = 1;
  std::vector<long> hidden;
  bool conditional_feedback = false;
  std::string out;
  std::string report;
};

std::string default_report_path(const std::string& out) {
  const fs::path p(out);
  return (p.parent_path() / (p.stem().string() + "_report.jsonl")).string();
}

json train_config_json(const TrainFlags& f, const AgentTrainConfig& cfg) {
  return json{{"command", "train-agent"}, {"mode", f.mode},
              {"alpha", f.alpha},         {"mixer", f.mixer},
              {"data", f.data},           {"iters", f.iters},
              {"batch", f.batch},         {"m", f.m},
              {"lambda", f.lambda},       {"lambda_feedback", f.lambda_feedback},
              {"lr", f.lr},               {"seed", f.seed},
              {"hidden", cfg.gen.hidden}, {"conditional_feedback", f.conditional_feedback}};
}

int run_train(const TrainFlags& f) {
  const LossMode mode = mode_from_name(f.mode);
  Checkpoint mixer;
  bool have_mixer = false;
  if (mode == LossMode::kBaseline) {
    if (!f.mixer.empty()) {
      std::cerr << "warning: --mixer is ignored in baseline mode\n";
    }
  } else {
    if (f.mixer.empty()) {
      std::cerr << "error: --mode " << f.mode << " requires --mixer\n";
      return 2;
    }
    mixer = load_checkpoint(f.mixer);
    have_mixer = true;
  }

  const ScenarioData sc = load_scenario(f.data);
  AgentData data;
  data.agent_real = sc.train_x1;
  data.partner_real = sc.train_x2;
  data.y_real = sc.train_y;
  if (f.conditional_feedback) data.joint_cond = hcat(sc.train_x1_full, sc.train_x2);

  AgentTrainConfig cfg;
  cfg.mode = mode;
  cfg.alpha = f.alpha;
  cfg.iters = f.iters;
  cfg.batch = f.batch;
  cfg.critic_iters = f.m;
  cfg.lambda_agent = f.lambda;
  cfg.lambda_feedback = f.lambda_feedback;
  cfg.adam.lr = f.lr;
  cfg.seed = f.seed;
  if (!f.hidden.empty()) {
    cfg.gen.hidden = f.hidden;
    cfg.critic.hidden = f.hidden;
    cfg.feedback_critic.hidden = f.hidden;
  }
  if (f.conditional_feedback) {
    cfg.conditional_feedback = true;
    cfg.feedback_critic = default_mixer_critic();
    if (!f.hidden.empty()) cfg.feedback_critic.hidden = f.hidden;
  }

  const std::string out = resolve_out(f.out, "agent_" + f.mode + ".json");
  const std::string report = f.report.empty() ? default_report_path(out) : f.report;
  const fs::path dir = fs::path(out).parent_path();
  if (!dir.empty()) fs::create_directories(dir);
  cfg.last_good_path = (fs::path(out).parent_path() / "last_good.json").string();

  const AgentTrainResult res = train_agent(data, cfg, have_mixer ? &mixer : nullptr);
  save_checkpoint(out, res.checkpoint);
  write_report_jsonl(res.report, report);
  write_json_file(out + ".config.json", train_config_json(f, cfg));
  std::cout << "trained " << f.mode << " agent for " << f.iters << " iterations in "
            << res.report.wall_seconds << "s -> " << out << "\n";
  return 0;
}

// ---- evaluate ----

struct EvalFlags {
  std::string model;
  std::string test;
  long runs = 16;
  std::uint64_t seed = 1;
  std::string out;
};

struct EvalSummary {
  std::vector<double> w1;
  double mean = 0.0;
  double stddev = 0.0;
};

// One evaluation run draws as many samples as the reference cloud holds and
// measures the exact empirical distance; runs differ only in the noise seed.
EvalSummary evaluate_checkpoint(const Checkpoint& ck, const Mat& reference, long runs,
                                std::uint64_t seed) {
  EvalSummary sum;
  sum.w1.reserve(static_cast<std::size_t>(runs));
  for (long r = 0; r < runs; ++r) {
    const Mat samples = generate_samples(ck.generator.params, ck.generator.cfg,
                                         reference.rows,
                                         derive_seed(seed, "eval_run", static_cast<std::uint64_t>(r)));
    sum.w1.push_back(w1_empirical(samples, reference, Metric::kEuclidean));
  }
  for (const double w : sum.w1) sum.mean += w;
  sum.mean /= static_cast<double>(runs);
  if (runs > 1) {
    double ss = 0.0;
    for (const double w : sum.w1) ss += (w - sum.mean) * (w - sum.mean);
    sum.stddev = std::sqrt(ss / static_cast<double>(runs - 1));
  }
  return sum;
}

Mat load_reference_cloud(const std::string& path, long want_cols) {
  const CsvFile csv = read_csv(path);
  if (csv.data.cols == want_cols) return csv.data;
  if (csv.data.cols > want_cols) return left_cols(csv.data, want_cols);
  throw std::invalid_argument("evaluate: " + path + " has " +
                              std::to_string(csv.data.cols) + " columns, model emits " +
                              std::to_string(want_cols));
}

int run_evaluate(const EvalFlags& f) {
  const Checkpoint ck = load_checkpoint(f.model);
  const Mat reference = load_reference_cloud(f.test, ck.generator.cfg.out);
  const EvalSummary sum = evaluate_checkpoint(ck, reference, f.runs, f.seed);
  write_json_file(resolve_out(f.out, "eval.json"),
                  json{{"command", "evaluate"},
                       {"model", f.model},
                       {"test", f.test},
                       {"runs", f.runs},
                       {"seed", f.seed},
                       {"samples_per_run", reference.rows},
                       {"metric", "euclidean"},
                       {"w1", sum.w1},
                       {"mean", sum.mean},
                       {"std", sum.stddev}});
  std::cout << "w1 mean " << sum.mean << " std " << sum.stddev << " over " << f.runs
            << " runs\n";
  return 0;
}

// ---- verify ----

struct VerifyFlags {
  long instances = 100;
  std::uint64_t seed = 1;
  std::string metric;  // empty: all three output metrics
  std::string out;
};

json system_json(const DiscreteSystem& sys) {
  json supports = json::array();
  json marginals = json::array();
  for (long a = 0; a < sys.agent_count(); ++a) {
    supports.push_back(mat_json(sys.supports[static_cast<std::size_t>(a)]));
    marginals.push_back(sys.marginals[static_cast<std::size_t>(a)]);
  }
  return json{{"supports", supports},       {"marginals", marginals},
              {"i0", sys.i0},               {"gen_marginal", sys.gen_marginal},
              {"y_support", mat_json(sys.y_support)}, {"kernel", mat_json(sys.kernel)}};
}

int run_verify(const VerifyFlags& f) {
  constexpr double kTol = 1e-6;
  const std::vector<Metric> kAll = {Metric::kEuclidean, Metric::kManhattan,
                                    Metric::kDiscrete};
  const std::vector<Metric> y_metrics =
      f.metric.empty() ? kAll : std::vector<Metric>{metric_from_name(f.metric)};

  Rng shape(derive_seed(f.seed, "verify_shapes"));
  json failures = json::array();
  double max_gap = 0.0;
  long checks = 0;
  bool metrics_ok = true;

  for (long t = 0; t < f.instances; ++t) {
    SystemSpec spec;
    spec.support_sizes = {2 + static_cast<long>(shape.index(4)),
                          2 + static_cast<long>(shape.index(3))};
    spec.y_size = 2 + static_cast<long>(shape.index(5));
    spec.i0 = static_cast<long>(shape.index(2));
    const DiscreteSystem sys =
        random_system(spec, derive_seed(f.seed, "verify_system", static_cast<std::uint64_t>(t)));

    json bad = json::array();
    for (const Metric ym : y_metrics) {
      const InducedMetricReport mrep = verify_induced_metric(sys, ym);
      if (!mrep.pseudo_metric) {
        metrics_ok = false;
        bad.push_back(json{{"kind", "induced-axioms"}, {"y_metric", metric_name(ym)}});
      }
      auto record = [&](const char* kind, const char* ground, const IdentityReport& rep) {
        ++checks;
        max_gap = std::max(max_gap, rep.gap);
        if (rep.gap >= kTol || !rep.lhs_le_rhs) {
          bad.push_back(json{{"kind", kind},
                             {"ground", ground},
                             {"y_metric", metric_name(ym)},
                             {"lhs", rep.lhs},
                             {"rhs", rep.rhs},
                             {"gap", rep.gap}});
        }
      };
      record("induced-optimal", "induced", verify_identity(sys, ym));
      for (const Metric gm : kAll) {
        record("ground-coupled", metric_name(gm), verify_identity_coupled(sys, gm, ym));
      }
    }
    if (!bad.empty()) {
      failures.push_back(
          json{{"instance", t}, {"system", system_json(sys)}, {"checks", bad}});
    }
  }

  const bool pass = metrics_ok && max_gap < kTol;
  json y_names = json::array();
  for (const Metric ym : y_metrics) y_names.push_back(metric_name(ym));
  write_json_file(resolve_out(f.out, "verify.json"),
                  json{{"command", "verify"},
                       {"instances", f.instances},
                       {"seed", f.seed},
                       {"y_metrics", y_names},
                       {"tolerance", kTol},
                       {"comparisons", checks},
                       {"max_gap", max_gap},
                       {"pass", pass},
                       {"failures", failures}});
  std::cout << "verify: " << checks << " comparisons over " << f.instances
            << " systems, max gap " << max_gap << (pass ? " (pass)\n" : " (FAIL)\n");
  return pass ? 0 : 3;
}

// ---- sweep ----

struct SweepFlags {
  std::string scenario = "bias100";
  std::vector<double> betas = {0.0, 0.1, 0.3, 0.5, 0.7, 1.0};
  std::vector<std::string> modes = {"baseline", "combined", "alternate"};
  double alpha = 0.5;
  long iters = 20000;
  long mixer_iters = 20000;
  long batch = 256;
  long m = 5;
  long n = 128000;
  long test_n = 2000;
  long runs = 16;
  long jobs = 1;
  double lambda = 0.1;
  double lambda_feedback = 1.0;
  double lr = 1e-4;
  std::uint64_t seed = 1;
  std::vector<long> hidden;
  std::string out;
};

std::string beta_tag(double beta) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "beta_%g", beta);
  return buf;
}

std::string cell_text(double mean, double stddev) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f(%.3f)", mean, stddev);
  return buf;
}

int run_sweep(const SweepFlags& f) {
  std::vector<double> betas = f.betas;
  std::sort(betas.begin(), betas.end());
  betas.erase(std::unique(betas.begin(), betas.end()), betas.end());

  // canonical mode order, duplicates collapsed
  std::set<LossMode> wanted;
  for (const auto& name : f.modes) wanted.insert(mode_from_name(name));
  std::vector<LossMode> modes;
  for (LossMode m : {LossMode::kBaseline, LossMode::kCombined, LossMode::kAlternate}) {
    if (wanted.count(m) != 0) modes.push_back(m);
  }
  const bool need_mixer =
      wanted.count(LossMode::kCombined) != 0 || wanted.count(LossMode::kAlternate) != 0;

  const std::string root = resolve_out(f.out, "sweep");
  fs::create_directories(root);

  // data first: cheap, and every later task reads it
  std::vector<ScenarioData> data(betas.size());
  for (std::size_t bi = 0; bi < betas.size(); ++bi) {
    const ScenarioSpec spec =
        scenario_spec(f.scenario, betas[bi], f.n, f.test_n, f.seed);
    data[bi] = make_scenario(spec);
    save_scenario(data[bi], (fs::path(root) / beta_tag(betas[bi])).string());
  }

  // one mixer per beta, shared by every feedback cell of that column
  std::vector<Checkpoint> mixers(betas.size());
  if (need_mixer) {
    std::vector<std::function<void()>> tasks;
    for (std::size_t bi = 0; bi < betas.size(); ++bi) {
      tasks.push_back([&, bi] {
        MixerData md;
        md.cond = hcat(data[bi].train_x1_full, data[bi].train_x2);
        md.y = data[bi].train_y;
        MixerTrainConfig cfg;
        cfg.iters = f.mixer_iters;
        cfg.batch = f.batch;
        cfg.critic_iters = f.m;
        cfg.lambda = f.lambda_feedback;
        cfg.adam.lr = f.lr;
        cfg.seed = f.seed;
        if (!f.hidden.empty()) {
          cfg.gen.hidden = f.hidden;
          cfg.critic.hidden = f.hidden;
        }
        mixers[bi] = pretrain_mixer(md, cfg);
        save_checkpoint((fs::path(root) / beta_tag(betas[bi]) / "mixer.json").string(),
                        mixers[bi]);
      });
    }
    run_pool(f.jobs, tasks);
  }

  // the grid itself
  std::vector<std::vector<EvalSummary>> cells(betas.size(),
                                              std::vector<EvalSummary>(modes.size()));
  std::vector<std::function<void()>> tasks;
  for (std::size_t bi = 0; bi < betas.size(); ++bi) {
    for (std::size_t mi = 0; mi < modes.size(); ++mi) {
      tasks.push_back([&, bi, mi] {
        const LossMode mode = modes[mi];
        AgentData ad;
        ad.agent_real = data[bi].train_x1;
        ad.partner_real = data[bi].train_x2;
        ad.y_real = data[bi].train_y;
        AgentTrainConfig cfg;
        cfg.mode = mode;
        cfg.alpha = f.alpha;
        cfg.iters = f.iters;
        cfg.batch = f.batch;
        cfg.critic_iters = f.m;
        cfg.lambda_agent = f.lambda;
        cfg.lambda_feedback = f.lambda_feedback;
        cfg.adam.lr = f.lr;
        cfg.seed = f.seed;
        if (!f.hidden.empty()) {
          cfg.gen.hidden = f.hidden;
          cfg.critic.hidden = f.hidden;
          cfg.feedback_critic.hidden = f.hidden;
        }
        const fs::path dir = fs::path(root) / beta_tag(betas[bi]) / mode_name(mode);
        fs::create_directories(dir);
        cfg.last_good_path = (dir / "last_good.json").string();
        const AgentTrainResult res =
            train_agent(ad, cfg, mode == LossMode::kBaseline ? nullptr : &mixers[bi]);
        save_checkpoint((dir / "agent.json").string(), res.checkpoint);
        write_report_jsonl(res.report, (dir / "agent_report.jsonl").string());
        cells[bi][mi] = evaluate_checkpoint(res.checkpoint, data[bi].test_x1, f.runs, f.seed);
        write_json_file((dir / "eval.json").string(),
                        json{{"command", "evaluate"},
                             {"model", (dir / "agent.json").string()},
                             {"runs", f.runs},
                             {"seed", f.seed},
                             {"samples_per_run", data[bi].test_x1.rows},
                             {"metric", "euclidean"},
                             {"w1", cells[bi][mi].w1},
                             {"mean", cells[bi][mi].mean},
                             {"std", cells[bi][mi].stddev}});
        std::cout << "cell " + beta_tag(betas[bi]) + " " + std::string(mode_name(mode)) +
                         ": " + cell_text(cells[bi][mi].mean, cells[bi][mi].stddev) + "\n";
      });
    }
  }
  run_pool(f.jobs, tasks);

  const std::string csv_path = (fs::path(root) / "sweep.csv").string();
  std::ofstream csv(csv_path);
  if (!csv) throw IoError("cannot open " + csv_path);
  csv << "beta";
  for (const LossMode m : modes) csv << "," << mode_name(m);
  csv << "\n";
  for (std::size_t bi = 0; bi < betas.size(); ++bi) {
    csv << betas[bi];
    for (std::size_t mi = 0; mi < modes.size(); ++mi) {
      csv << "," << cell_text(cells[bi][mi].mean, cells[bi][mi].stddev);
    }
    csv << "\n";
  }
  csv.close();
  if (!csv) throw IoError("write failed for " + csv_path);

  json mode_names = json::array();
  for (const LossMode m : modes) mode_names.push_back(mode_name(m));
  write_json_file((fs::path(root) / "sweep_config.json").string(),
                  json{{"command", "sweep"},
                       {"scenario", f.scenario},
                       {"betas", betas},
                       {"modes", mode_names},
                       {"alpha", f.alpha},
                       {"iters", f.iters},
                       {"mixer_iters", f.mixer_iters},
                       {"batch", f.batch},
                       {"m", f.m},
                       {"n", f.n},
                       {"test_n", f.test_n},
                       {"runs", f.runs},
                       {"jobs", f.jobs},
                       {"lambda", f.lambda},
                       {"lambda_feedback", f.lambda_feedback},
                       {"lr", f.lr},
                       {"seed", f.seed},
                       {"hidden", f.hidden}});
  std::cout << "wrote " << csv_path << "\n";
  return 0;
}

// ---- wiring ----

int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"multiscale generative model toolkit"};
  app.require_subcommand(1);

  const std::vector<std::string> kScenarios = {"full", "bias100", "bias90", "low32",
                                               "low64"};

  GenDataFlags gd;
  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic scenario");
  gen->add_option("--scenario", gd.scenario, "scenario kind")
      ->check(CLI::IsMember(kScenarios));
  gen->add_option("--beta", gd.beta, "mixing weight of agent 1")
      ->check(CLI::Range(0.0, 1.0));
  gen->add_option("--n", gd.n, "training rows")->check(CLI::PositiveNumber);
  gen->add_option("--test-n", gd.test_n, "test rows")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gd.seed, "master seed");
  gen->add_option("--out", gd.out, "output directory");

  PretrainFlags pf;
  CLI::App* pre = app.add_subcommand("pretrain-mixer", "train the conditional mixer");
  pre->add_option("--data", pf.data, "scenario directory")->required();
  pre->add_option("--iters", pf.iters, "generator iterations")
      ->check(CLI::NonNegativeNumber);
  pre->add_option("--batch", pf.batch, "minibatch size")->check(CLI::PositiveNumber);
  pre->add_option("--m", pf.m, "critic iterations per generator step")
      ->check(CLI::PositiveNumber);
  pre->add_option("--lambda", pf.lambda, "gradient penalty weight")
      ->check(CLI::NonNegativeNumber);
  pre->add_option("--lr", pf.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  pre->add_option("--seed", pf.seed, "master seed");
  pre->add_option("--hidden", pf.hidden, "hidden layer widths")->delimiter(',');
  pre->add_option("--out", pf.out, "checkpoint path");

  TrainFlags tf;
  CLI::App* tr = app.add_subcommand("train-agent", "train the data-starved agent");
  tr->add_option("--mode", tf.mode, "loss mode")
      ->check(CLI::IsMember({"baseline", "combined", "alternate"}));
  tr->add_option("--alpha", tf.alpha, "weight of the own loss in combined mode")
      ->check(CLI::Range(0.0, 1.0));
  tr->add_option("--mixer", tf.mixer, "mixer checkpoint (feedback modes)");
  tr->add_option("--data", tf.data, "scenario directory")->required();
  tr->add_option("--iters", tf.iters, "generator iterations")
      ->check(CLI::NonNegativeNumber);
  tr->add_option("--batch", tf.batch, "minibatch size")->check(CLI::PositiveNumber);
  tr->add_option("--m", tf.m, "critic iterations per generator step")
      ->check(CLI::PositiveNumber);
  tr->add_option("--lambda", tf.lambda, "agent gradient penalty weight")
      ->check(CLI::NonNegativeNumber);
  tr->add_option("--lambda-feedback", tf.lambda_feedback,
                 "feedback gradient penalty weight")
      ->check(CLI::NonNegativeNumber);
  tr->add_option("--lr", tf.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  tr->add_option("--seed", tf.seed, "master seed");
  tr->add_option("--hidden", tf.hidden, "hidden layer widths")->delimiter(',');
  tr->add_flag("--conditional-feedback", tf.conditional_feedback,
               "score (output, condition) with the warm-started mixer critic");
  tr->add_option("--out", tf.out, "checkpoint path");
  tr->add_option("--report", tf.report, "iteration log path (JSONL)");

  EvalFlags ef;
  CLI::App* ev = app.add_subcommand("evaluate", "distance of generator samples to a cloud");
  ev->add_option("--model", ef.model, "agent checkpoint")->required();
  ev->add_option("--test", ef.test, "reference CSV")->required();
  ev->add_option("--runs", ef.runs, "independent sampling runs")
      ->check(CLI::PositiveNumber);
  ev->add_option("--seed", ef.seed, "evaluation seed");
  ev->add_option("--out", ef.out, "report path");

  VerifyFlags vf;
  CLI::App* ve = app.add_subcommand("verify", "exact checks on random discrete systems");
  ve->add_option("--instances", vf.instances, "number of random systems")
      ->check(CLI::NonNegativeNumber);
  ve->add_option("--seed", vf.seed, "master seed");
  ve->add_option("--metric", vf.metric, "output metric (default: all)")
      ->check(CLI::IsMember({"euclid", "euclidean", "manhattan", "discrete"}));
  ve->add_option("--out", vf.out, "report path");

  SweepFlags sf;
  CLI::App* sw = app.add_subcommand("sweep", "full beta-by-mode experiment grid");
  sw->add_option("--scenario", sf.scenario, "scenario kind")
      ->check(CLI::IsMember(kScenarios));
  sw->add_option("--betas", sf.betas, "mixing weights")
      ->delimiter(',')
      ->check(CLI::Range(0.0, 1.0));
  sw->add_option("--modes", sf.modes, "loss modes")
      ->delimiter(',')
      ->check(CLI::IsMember({"baseline", "combined", "alternate"}));
  sw->add_option("--alpha", sf.alpha, "combined-mode weight")->check(CLI::Range(0.0, 1.0));
  sw->add_option("--iters", sf.iters, "agent generator iterations")
      ->check(CLI::NonNegativeNumber);
  sw->add_option("--mixer-iters", sf.mixer_iters, "mixer generator iterations")
      ->check(CLI::NonNegativeNumber);
  sw->add_option("--batch", sf.batch, "minibatch size")->check(CLI::PositiveNumber);
  sw->add_option("--m", sf.m, "critic iterations per generator step")
      ->check(CLI::PositiveNumber);
  sw->add_option("--n", sf.n, "training rows")->check(CLI::PositiveNumber);
  sw->add_option("--test-n", sf.test_n, "test rows")->check(CLI::PositiveNumber);
  sw->add_option("--runs", sf.runs, "evaluation runs per cell")
      ->check(CLI::PositiveNumber);
  sw->add_option("--jobs", sf.jobs, "worker pool width")->check(CLI::PositiveNumber);
  sw->add_option("--lambda", sf.lambda, "agent gradient penalty weight")
      ->check(CLI::NonNegativeNumber);
  sw->add_option("--lambda-feedback", sf.lambda_feedback,
                 "feedback/mixer gradient penalty weight")
      ->check(CLI::NonNegativeNumber);
  sw->add_option("--lr", sf.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  sw->add_option("--seed", sf.seed, "master seed");
  sw->add_option("--hidden", sf.hidden, "hidden layer widths")->delimiter(',');
  sw->add_option("--out", sf.out, "output directory");

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("mgm");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (app.got_subcommand(gen)) return run_gen_data(gd);
  if (app.got_subcommand(pre)) return run_pretrain(pf);
  if (app.got_subcommand(tr)) return run_train(tf);
  if (app.got_subcommand(ev)) return run_evaluate(ef);
  if (app.got_subcommand(ve)) return run_verify(vf);
  return run_sweep(sf);
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  try {
    return dispatch(args);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace mgm
