#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>

#include <json.hpp>

#include "mgm/common.hpp"
#include "mgm/nn.hpp"
#include "mgm/rng.hpp"
#include "mgm/train.hpp"

using namespace mgm;

namespace {

Mat randn(Rng& rng, long n, long c) {
  Mat m(n, c);
  for (auto& x : m.v) x = rng.normal();
  return m;
}

bool same_params(const MlpParams& a, const MlpParams& b) {
  if (a.w.size() != b.w.size()) return false;
  for (std::size_t l = 0; l < a.w.size(); ++l) {
    if (a.w[l].v != b.w[l].v || a.b[l].v != b.b[l].v) return false;
  }
  return true;
}

MlpConfig small(long in, long out, std::vector<long> hidden) {
  MlpConfig cfg;
  cfg.in = in;
  cfg.out = out;
  cfg.hidden = std::move(hidden);
  return cfg;
}

// Shared tiny setup: 2-d agent, 2-d partner, 2-d mixer output.
struct TinyWorld {
  AgentData data;
  Checkpoint mixer;
  AgentTrainConfig cfg;

  explicit TinyWorld(std::uint64_t seed = 11) {
    Rng r(5);
    data.agent_real = randn(r, 64, 2);
    data.partner_real = randn(r, 64, 2);
    data.y_real = randn(r, 64, 2);

    MixerTrainConfig mcfg;
    mcfg.gen = small(6, 2, {8, 8});
    mcfg.critic = small(6, 1, {8, 8});
    mcfg.iters = 0;
    MixerData mdata;
    mdata.cond = randn(r, 16, 4);
    mdata.y = randn(r, 16, 2);
    mixer = pretrain_mixer(mdata, mcfg);

    cfg.gen = small(2, 2, {8, 8});
    cfg.critic = small(2, 1, {8, 8});
    cfg.feedback_critic = small(2, 1, {8, 8});
    cfg.iters = 30;
    cfg.batch = 8;
    cfg.seed = seed;
  }
};

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "mgm_train_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("mode names round trip and unknown names are rejected") {
  for (LossMode m : {LossMode::kBaseline, LossMode::kCombined, LossMode::kAlternate}) {
    CHECK(mode_from_name(mode_name(m)) == m);
  }
  CHECK_THROWS_AS(mode_from_name("blended"), std::invalid_argument);
}

TEST_CASE("config validation rejects out-of-range settings") {
  AgentTrainConfig cfg;
  cfg.alpha = 1.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.alpha = 0.5;
  cfg.batch = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.batch = 8;
  cfg.critic.in = 3;  // generator emits 2 columns
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  MixerTrainConfig mcfg;
  mcfg.critic_iters = 0;
  CHECK_THROWS_AS(mcfg.validate(), std::invalid_argument);
}

TEST_CASE("zero-iteration mixer pre-training returns the initialization") {
  Rng r(3);
  MixerData data;
  data.cond = randn(r, 10, 4);
  data.y = randn(r, 10, 2);
  MixerTrainConfig cfg;
  cfg.gen = small(6, 2, {8});
  cfg.critic = small(6, 1, {8});
  cfg.iters = 0;
  cfg.seed = 42;

  const Checkpoint ck = pretrain_mixer(data, cfg);
  CHECK(ck.loss_mode == "mixer");
  CHECK(ck.iteration == 0);
  CHECK(ck.seed == 42);
  REQUIRE(ck.critic.has_value());
  CHECK(same_params(ck.generator.params, init_mlp(cfg.gen, derive_seed(42, "mixer_generator_init"))));
  CHECK(same_params(ck.critic->params, init_mlp(cfg.critic, derive_seed(42, "mixer_critic_init"))));
}

TEST_CASE("mixer pre-training is a pure function of data and seed") {
  Rng r(4);
  MixerData data;
  data.cond = randn(r, 32, 4);
  data.y = randn(r, 32, 2);
  MixerTrainConfig cfg;
  cfg.gen = small(6, 2, {8});
  cfg.critic = small(6, 1, {8});
  cfg.iters = 5;
  cfg.batch = 8;
  cfg.seed = 9;

  const Checkpoint a = pretrain_mixer(data, cfg);
  const Checkpoint b = pretrain_mixer(data, cfg);
  CHECK(same_params(a.generator.params, b.generator.params));
  CHECK(same_params(a.critic->params, b.critic->params));

  cfg.seed = 10;
  const Checkpoint c = pretrain_mixer(data, cfg);
  CHECK_FALSE(same_params(a.generator.params, c.generator.params));
}

TEST_CASE("mixer shape mismatches are rejected") {
  Rng r(6);
  MixerData data;
  data.cond = randn(r, 10, 4);
  data.y = randn(r, 9, 2);
  MixerTrainConfig cfg;
  cfg.gen = small(6, 2, {8});
  cfg.critic = small(6, 1, {8});
  CHECK_THROWS_AS(pretrain_mixer(data, cfg), std::invalid_argument);

  data.y = randn(r, 10, 2);
  cfg.gen.in = 4;  // no room left for noise columns
  CHECK_THROWS_AS(pretrain_mixer(data, cfg), std::invalid_argument);
}

TEST_CASE("pre-trained mixer reproduces a linear mixing rule on held-out conditions") {
  // y = (c1 + c2) / 2 with no noise; after training, samples drawn at fresh
  // conditions should sit within a tenth of the output scale of the rule.
  Rng rng(41);
  const long n = 4096;
  MixerData data;
  data.cond = Mat(n, 2);
  data.y = Mat(n, 1);
  for (long i = 0; i < n; ++i) {
    const double c1 = rng.uniform(-1.0, 1.0);
    const double c2 = rng.uniform(-1.0, 1.0);
    data.cond.at(i, 0) = c1;
    data.cond.at(i, 1) = c2;
    data.y.at(i, 0) = 0.5 * (c1 + c2);
  }

  MixerTrainConfig cfg;
  cfg.gen = small(3, 1, {32, 32});
  cfg.critic = small(3, 1, {32, 32});
  cfg.iters = 1500;
  cfg.batch = 64;
  cfg.seed = 7;
  const Checkpoint ck = pretrain_mixer(data, cfg);

  const long m = 512;
  Rng zr(99);
  Mat in(m, 3);
  double scale = 0.0;
  for (long i = 0; i < m; ++i) {
    in.at(i, 0) = zr.normal();
    in.at(i, 1) = rng.uniform(-1.0, 1.0);
    in.at(i, 2) = rng.uniform(-1.0, 1.0);
    const double y = 0.5 * (in.at(i, 1) + in.at(i, 2));
    scale += y * y;
  }
  scale = std::sqrt(scale / m);
  const Mat out = mlp_forward(ck.generator.params, ck.generator.cfg, in);
  double err = 0.0;
  for (long i = 0; i < m; ++i) {
    err += std::fabs(out.at(i, 0) - 0.5 * (in.at(i, 1) + in.at(i, 2)));
  }
  err /= m;
  CHECK(err < 0.1 * scale);
}

TEST_CASE("zero-iteration agent training returns the initialization") {
  TinyWorld w;
  w.cfg.iters = 0;
  w.cfg.mode = LossMode::kBaseline;
  const AgentTrainResult res = train_agent(w.data, w.cfg, nullptr);
  CHECK(res.report.records.empty());
  CHECK(res.checkpoint.iteration == 0);
  CHECK(res.checkpoint.loss_mode == "baseline");
  CHECK(same_params(res.checkpoint.generator.params,
                    init_mlp(w.cfg.gen, derive_seed(w.cfg.seed, "agent_generator_init"))));
  CHECK(same_params(res.checkpoint.critic->params,
                    init_mlp(w.cfg.critic, derive_seed(w.cfg.seed, "agent_critic_init"))));
}

TEST_CASE("agent training is reproducible and mode-sensitive") {
  TinyWorld w;
  w.cfg.mode = LossMode::kCombined;
  const AgentTrainResult a = train_agent(w.data, w.cfg, &w.mixer);
  const AgentTrainResult b = train_agent(w.data, w.cfg, &w.mixer);
  CHECK(same_params(a.checkpoint.generator.params, b.checkpoint.generator.params));
  REQUIRE(a.report.records.size() == b.report.records.size());
  for (std::size_t i = 0; i < a.report.records.size(); ++i) {
    CHECK(a.report.records[i].loss_feedback == b.report.records[i].loss_feedback);
    CHECK(a.report.records[i].w_agent == b.report.records[i].w_agent);
  }

  w.cfg.mode = LossMode::kAlternate;
  const AgentTrainResult c = train_agent(w.data, w.cfg, &w.mixer);
  CHECK_FALSE(same_params(a.checkpoint.generator.params, c.checkpoint.generator.params));
}

TEST_CASE("combined training with weight 1 on the own loss matches baseline bit for bit") {
  TinyWorld w;
  w.cfg.mode = LossMode::kBaseline;
  const AgentTrainResult base = train_agent(w.data, w.cfg, nullptr);

  const MlpParams mixer_before = w.mixer.generator.params;
  w.cfg.mode = LossMode::kCombined;
  w.cfg.alpha = 1.0;
  const AgentTrainResult comb = train_agent(w.data, w.cfg, &w.mixer);

  CHECK(same_params(base.checkpoint.generator.params, comb.checkpoint.generator.params));
  CHECK(same_params(base.checkpoint.critic->params, comb.checkpoint.critic->params));
  // the frozen mixer is read, never written
  CHECK(same_params(mixer_before, w.mixer.generator.params));

  // feedback critic still trains in combined mode, so its objective is live
  CHECK(comb.report.records.back().w_feedback != 0.0);
  CHECK(base.report.records.back().w_feedback == 0.0);

  w.cfg.alpha = 0.5;
  const AgentTrainResult half = train_agent(w.data, w.cfg, &w.mixer);
  CHECK_FALSE(same_params(base.checkpoint.generator.params, half.checkpoint.generator.params));
}

TEST_CASE("combined gradient is the alpha blend of the two pure gradients") {
  TinyWorld w;
  const MlpParams gen = init_mlp(w.cfg.gen, 71);
  const MlpParams critic = init_mlp(w.cfg.critic, 72);
  const MlpParams fb = init_mlp(w.cfg.feedback_critic, 73);

  Rng r(74);
  GenStepBatch batch;
  batch.z = randn(r, 9, 2);
  batch.z_mix = randn(r, 9, 2);
  batch.partner = randn(r, 9, 2);

  const double alpha = 0.3;
  const LossGrads a = agent_generator_grads(gen, w.cfg.gen, critic, w.cfg.critic, batch.z);
  const LossGrads f = feedback_generator_grads(gen, w.cfg.gen, w.mixer.generator.params,
                                               w.mixer.generator.cfg, fb,
                                               w.cfg.feedback_critic, false, batch);
  const LossGrads c = combined_generator_grads(gen, w.cfg.gen, critic, w.cfg.critic,
                                               w.mixer.generator.params, w.mixer.generator.cfg,
                                               fb, w.cfg.feedback_critic, false, alpha, batch);

  CHECK(c.value == doctest::Approx(alpha * a.value + (1 - alpha) * f.value).epsilon(1e-12));
  for (std::size_t l = 0; l < c.grad_w.size(); ++l) {
    for (std::size_t i = 0; i < c.grad_w[l].v.size(); ++i) {
      const double want = alpha * a.grad_w[l].v[i] + (1 - alpha) * f.grad_w[l].v[i];
      CHECK(std::fabs(c.grad_w[l].v[i] - want) < 1e-10);
    }
    for (std::size_t i = 0; i < c.grad_b[l].v.size(); ++i) {
      const double want = alpha * a.grad_b[l].v[i] + (1 - alpha) * f.grad_b[l].v[i];
      CHECK(std::fabs(c.grad_b[l].v[i] - want) < 1e-10);
    }
  }
}

TEST_CASE("feedback generator gradients match finite differences") {
  const MlpConfig gen_cfg = small(2, 2, {6});
  const MlpConfig mixer_cfg = small(6, 2, {6});
  MlpParams mixer = init_mlp(mixer_cfg, 81);

  Rng r(83);
  GenStepBatch batch;
  batch.z = randn(r, 5, 2);
  batch.z_mix = randn(r, 5, 2);
  batch.partner = randn(r, 5, 2);

  for (const bool conditional : {false, true}) {
    CAPTURE(conditional);
    const MlpConfig fb_cfg = small(conditional ? 6 : 2, 1, {6});
    const MlpParams fb = init_mlp(fb_cfg, 82);
    MlpParams gen = init_mlp(gen_cfg, 80);

    const LossGrads got = feedback_generator_grads(gen, gen_cfg, mixer, mixer_cfg, fb,
                                                   fb_cfg, conditional, batch);
    auto value = [&]() {
      return feedback_generator_grads(gen, gen_cfg, mixer, mixer_cfg, fb, fb_cfg,
                                      conditional, batch)
          .value;
    };

    double worst = 0.0;
    for (std::size_t l = 0; l < gen.w.size(); ++l) {
      for (int part = 0; part < 2; ++part) {
        Mat& target = part == 0 ? gen.w[l] : gen.b[l];
        const Mat& an = part == 0 ? got.grad_w[l] : got.grad_b[l];
        for (std::size_t i = 0; i < target.v.size(); ++i) {
          const double h = 1e-5 * std::max(1.0, std::fabs(target.v[i]));
          const double saved = target.v[i];
          target.v[i] = saved + h;
          const double up = value();
          target.v[i] = saved - h;
          const double dn = value();
          target.v[i] = saved;
          const double fd = (up - dn) / (2.0 * h);
          worst = std::max(worst, std::fabs(fd - an.v[i]) /
                                      std::max({1.0, std::fabs(fd), std::fabs(an.v[i])}));
        }
      }
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("a constant feedback critic sends no gradient into the generator") {
  const MlpConfig gen_cfg = small(2, 2, {6});
  const MlpConfig mixer_cfg = small(6, 2, {6});
  const MlpConfig fb_cfg = small(2, 1, {6});
  const MlpParams gen = init_mlp(gen_cfg, 91);
  const MlpParams mixer = init_mlp(mixer_cfg, 92);
  MlpParams fb = init_mlp(fb_cfg, 93);
  for (auto& m : fb.w)
    for (auto& x : m.v) x = 0.0;
  for (auto& m : fb.b)
    for (auto& x : m.v) x = 0.0;

  Rng r(94);
  GenStepBatch batch;
  batch.z = randn(r, 5, 2);
  batch.z_mix = randn(r, 5, 2);
  batch.partner = randn(r, 5, 2);

  const LossGrads g = feedback_generator_grads(gen, gen_cfg, mixer, mixer_cfg, fb, fb_cfg,
                                               false, batch);
  CHECK(g.value == 0.0);
  for (const Mat& m : g.grad_w)
    for (double x : m.v) CHECK(x == 0.0);
  for (const Mat& m : g.grad_b)
    for (double x : m.v) CHECK(x == 0.0);
}

TEST_CASE("a mixer that ignores the agent sends no gradient into the generator") {
  // Hand-built pass-through: the mixer input columns are z_mix (0-1), agent
  // (2-3), partner (4-5).  Each partner column feeds an (x, -x) hidden pair,
  // and leaky(x) - leaky(-x) = (1 + slope) * x, so the output reproduces the
  // partner block while every weight on the agent columns is exactly zero.
  const MlpConfig gen_cfg = small(2, 2, {6});
  const MlpConfig mixer_cfg = small(6, 2, {4});
  MlpParams mixer;
  mixer.w.push_back(Mat::zeros(6, 4));
  mixer.w.push_back(Mat::zeros(4, 2));
  mixer.b.push_back(Mat::zeros(1, 4));
  mixer.b.push_back(Mat::zeros(1, 2));
  const double a = 1.0 / (1.0 + mixer_cfg.slope);
  mixer.w[0].at(4, 0) = 1.0;
  mixer.w[0].at(4, 1) = -1.0;
  mixer.w[0].at(5, 2) = 1.0;
  mixer.w[0].at(5, 3) = -1.0;
  mixer.w[1].at(0, 0) = a;
  mixer.w[1].at(1, 0) = -a;
  mixer.w[1].at(2, 1) = a;
  mixer.w[1].at(3, 1) = -a;

  Rng r(95);
  const Mat probe = randn(r, 7, 6);
  const Mat y = mlp_forward(mixer, mixer_cfg, probe);
  for (long i = 0; i < y.rows; ++i) {
    CHECK(y.at(i, 0) == doctest::Approx(probe.at(i, 4)).epsilon(1e-14));
    CHECK(y.at(i, 1) == doctest::Approx(probe.at(i, 5)).epsilon(1e-14));
  }

  GenStepBatch batch;
  batch.z = randn(r, 7, 2);
  batch.z_mix = randn(r, 7, 2);
  batch.partner = randn(r, 7, 2);
  const MlpConfig fb_cfg = small(2, 1, {6});
  const MlpParams fb = init_mlp(fb_cfg, 96);
  const MlpParams gen = init_mlp(gen_cfg, 97);
  const LossGrads g = feedback_generator_grads(gen, gen_cfg, mixer, mixer_cfg, fb, fb_cfg,
                                               false, batch);
  // The critic scores a live spread of outputs, yet none of it reaches the
  // generator because the mixer never reads the agent samples.
  CHECK(g.value != 0.0);
  for (const Mat& m : g.grad_w)
    for (double x : m.v) CHECK(x == 0.0);
  for (const Mat& m : g.grad_b)
    for (double x : m.v) CHECK(x == 0.0);
}

TEST_CASE("alternate mode fills only the loss side it trained each iteration") {
  TinyWorld w;
  w.cfg.mode = LossMode::kAlternate;
  w.cfg.iters = 6;
  const AgentTrainResult res = train_agent(w.data, w.cfg, &w.mixer);
  REQUIRE(res.report.records.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    const IterationRecord& rec = res.report.records[i];
    CHECK(rec.iter == static_cast<long>(i) + 1);
    if (i % 2 == 0) {
      CHECK(rec.loss_agent != 0.0);
      CHECK(rec.loss_feedback == 0.0);
    } else {
      CHECK(rec.loss_agent == 0.0);
      CHECK(rec.loss_feedback != 0.0);
    }
    // both critics train every iteration regardless of whose turn it is
    CHECK(rec.w_agent != 0.0);
    CHECK(rec.w_feedback != 0.0);
  }
}

TEST_CASE("combined mode with weight 0 trains the generator purely on feedback") {
  TinyWorld w;
  w.cfg.mode = LossMode::kCombined;
  w.cfg.alpha = 0.0;
  w.cfg.iters = 4;
  const AgentTrainResult res = train_agent(w.data, w.cfg, &w.mixer);
  for (const IterationRecord& rec : res.report.records) {
    CHECK(rec.loss_agent == 0.0);
    CHECK(rec.loss_feedback != 0.0);
  }
}

TEST_CASE("feedback modes require a mixer and matching shapes") {
  TinyWorld w;
  w.cfg.mode = LossMode::kCombined;
  CHECK_THROWS_AS(train_agent(w.data, w.cfg, nullptr), std::invalid_argument);

  w.cfg.feedback_critic = small(3, 1, {8});
  CHECK_THROWS_WITH_AS(train_agent(w.data, w.cfg, &w.mixer),
                       "train_agent: feedback critic input width must be 2",
                       std::invalid_argument);

  w.cfg.feedback_critic = small(2, 1, {8});
  w.cfg.conditional_feedback = true;  // no joint_cond rows provided
  CHECK_THROWS_AS(train_agent(w.data, w.cfg, &w.mixer), std::invalid_argument);
}

TEST_CASE("conditional feedback warm start runs against row-aligned conditions") {
  TinyWorld w;
  Rng r(17);
  w.data.joint_cond = Mat(64, 4);
  for (long i = 0; i < 64; ++i) {
    for (long j = 0; j < 2; ++j) {
      w.data.joint_cond.at(i, j) = r.normal();
      w.data.joint_cond.at(i, 2 + j) = w.data.partner_real.at(i, j);
    }
  }
  w.cfg.mode = LossMode::kCombined;
  w.cfg.conditional_feedback = true;
  w.cfg.feedback_critic = small(6, 1, {8, 8});
  w.cfg.iters = 5;
  const AgentTrainResult res = train_agent(w.data, w.cfg, &w.mixer);
  CHECK(res.report.records.size() == 5);
  for (const IterationRecord& rec : res.report.records) {
    CHECK(std::isfinite(rec.w_feedback));
    CHECK(rec.w_feedback != 0.0);
  }
}

TEST_CASE("training aborts on non-finite values and leaves a recovery checkpoint") {
  TinyWorld w;
  w.data.agent_real.at(3, 1) = std::nan("");
  w.cfg.mode = LossMode::kBaseline;
  const std::string path = temp_file("last_good.json").string();
  std::filesystem::remove(path);
  w.cfg.last_good_path = path;

  bool thrown = false;
  try {
    train_agent(w.data, w.cfg, nullptr);
  } catch (const NumericError& e) {
    thrown = true;
    CHECK(e.last_good_checkpoint() == path);
    CHECK(std::string(e.what()).find("iteration 0") != std::string::npos);
    CHECK(std::string(e.what()).find(path) != std::string::npos);
  }
  CHECK(thrown);

  const Checkpoint rescued = load_checkpoint(path);
  CHECK(rescued.iteration == 0);
  CHECK(same_params(rescued.generator.params,
                    init_mlp(w.cfg.gen, derive_seed(w.cfg.seed, "agent_generator_init"))));
}

TEST_CASE("abort without a recovery path still raises, with no checkpoint attached") {
  TinyWorld w;
  w.data.agent_real.at(0, 0) = std::numeric_limits<double>::infinity();
  w.cfg.mode = LossMode::kBaseline;
  try {
    train_agent(w.data, w.cfg, nullptr);
    CHECK(false);
  } catch (const NumericError& e) {
    CHECK(e.last_good_checkpoint().empty());
  }
}

TEST_CASE("iteration reports serialize as one JSON object per line") {
  TrainReport report;
  for (long i = 1; i <= 3; ++i) {
    IterationRecord rec;
    rec.iter = i;
    rec.loss_agent = 0.5 * i;
    rec.w_agent = -1.25;
    report.records.push_back(rec);
  }
  const std::string path = temp_file("report.jsonl").string();
  write_report_jsonl(report, path);

  std::ifstream in(path);
  std::string line;
  long count = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    ++count;
    CHECK(j.at("iter").get<long>() == count);
    CHECK(j.at("L_a").get<double>() == 0.5 * count);
    CHECK(j.at("W_a").get<double>() == -1.25);
    CHECK(j.at("L_f").get<double>() == 0.0);
    CHECK(j.at("W_f").get<double>() == 0.0);
  }
  CHECK(count == 3);
}

TEST_CASE("generated samples are a deterministic function of seed and parameters") {
  const MlpConfig cfg = small(2, 2, {8});
  const MlpParams p = init_mlp(cfg, 55);
  const Mat a = generate_samples(p, cfg, 20, 7);
  const Mat b = generate_samples(p, cfg, 20, 7);
  const Mat c = generate_samples(p, cfg, 20, 8);
  CHECK(a.rows == 20);
  CHECK(a.cols == 2);
  CHECK(a.v == b.v);
  CHECK(a.v != c.v);
  CHECK_THROWS_AS(generate_samples(p, cfg, 0, 7), std::invalid_argument);
}

}  // TEST_SUITE
