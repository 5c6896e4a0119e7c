#include "mgm/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "mgm/common.hpp"
#include "mgm/rng.hpp"
#include "mgm/tensor.hpp"
#include "mgm/wgan.hpp"

namespace mgm {

LossMode mode_from_name(const std::string& name) {
  if (name == "baseline") return LossMode::kBaseline;
  if (name == "combined") return LossMode::kCombined;
  if (name == "alternate") return LossMode::kAlternate;
  throw std::invalid_argument("unknown mode: " + name);
}

const char* mode_name(LossMode mode) {
  switch (mode) {
    case LossMode::kBaseline: return "baseline";
    case LossMode::kCombined: return "combined";
    case LossMode::kAlternate: return "alternate";
  }
  std::abort();
}

MlpConfig default_agent_generator() { return MlpConfig{}; }

MlpConfig default_agent_critic() {
  MlpConfig cfg;
  cfg.out = 1;
  return cfg;
}

MlpConfig default_mixer_generator() {
  MlpConfig cfg;
  cfg.in = 6;
  return cfg;
}

MlpConfig default_mixer_critic() {
  MlpConfig cfg;
  cfg.in = 6;
  cfg.out = 1;
  return cfg;
}

void MixerTrainConfig::validate() const {
  if (iters < 0) throw std::invalid_argument("mixer config: iters must be >= 0");
  if (batch < 1) throw std::invalid_argument("mixer config: batch must be >= 1");
  if (critic_iters < 1) throw std::invalid_argument("mixer config: critic_iters must be >= 1");
  if (lambda < 0.0) throw std::invalid_argument("mixer config: lambda must be >= 0");
  gen.validate();
  critic.validate();
  if (critic.out != 1) throw std::invalid_argument("mixer config: critic must output a score");
}

void AgentTrainConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("agent config: alpha must lie in [0,1]");
  }
  if (iters < 0) throw std::invalid_argument("agent config: iters must be >= 0");
  if (batch < 1) throw std::invalid_argument("agent config: batch must be >= 1");
  if (critic_iters < 1) throw std::invalid_argument("agent config: critic_iters must be >= 1");
  if (lambda_agent < 0.0 || lambda_feedback < 0.0) {
    throw std::invalid_argument("agent config: lambda must be >= 0");
  }
  if (snapshot_every < 1) throw std::invalid_argument("agent config: snapshot_every must be >= 1");
  gen.validate();
  critic.validate();
  feedback_critic.validate();
  if (critic.in != gen.out) {
    throw std::invalid_argument("agent config: critic input does not match generator output");
  }
  if (critic.out != 1 || feedback_critic.out != 1) {
    throw std::invalid_argument("agent config: critics must output a score");
  }
}

namespace {

Mat noise_batch(long rows, long cols, Rng& rng) {
  Mat z(rows, cols);
  for (auto& x : z.v) x = rng.normal();
  return z;
}

std::vector<long> draw_indices(long n_src, long count, Rng& rng) {
  std::vector<long> idx(static_cast<size_t>(count));
  for (auto& i : idx) i = static_cast<long>(rng.index(static_cast<size_t>(n_src)));
  return idx;
}

Mat rows_at(const Mat& src, const std::vector<long>& idx) {
  Mat out(static_cast<long>(idx.size()), src.cols);
  for (size_t i = 0; i < idx.size(); ++i) {
    for (long j = 0; j < src.cols; ++j) out.at(static_cast<long>(i), j) = src.at(idx[i], j);
  }
  return out;
}

Mat sample_rows(const Mat& src, long count, Rng& rng) {
  return rows_at(src, draw_indices(src.rows, count, rng));
}

Mat hcat(const Mat& a, const Mat& b) {
  Mat out(a.rows, a.cols + b.cols);
  for (long i = 0; i < a.rows; ++i) {
    for (long j = 0; j < a.cols; ++j) out.at(i, j) = a.at(i, j);
    for (long j = 0; j < b.cols; ++j) out.at(i, a.cols + j) = b.at(i, j);
  }
  return out;
}

double scalar_value(const Tensor& t) { return t.scalar(); }

// One critic update; returns the objective value before the step.
double critic_update(MlpParams& params, const MlpConfig& cfg, AdamState& opt,
                     const AdamConfig& adam, const Mat& real, const Mat& fake,
                     const Mat* cond_real, const Mat* cond_fake, double lambda,
                     bool penalize_condition, Rng& gp_rng) {
  Graph g;
  TapedMlp critic = make_taped(g, params, cfg, true);
  const Tensor loss =
      critic_loss(g, [&](const Tensor& x) { return critic.forward(x); }, real, fake,
                  cond_real, cond_fake, lambda, penalize_condition, gp_rng);
  const auto leaves = critic.leaves();
  const auto grads = g.backward(loss, leaves, false);
  std::vector<Mat> gw, gb;
  split_leaf_grads(grads, cfg.layer_count(), gw, gb);
  adam_step(params, gw, gb, opt, adam);
  return scalar_value(loss);
}

LossGrads grads_from_backward(Graph& g, const Tensor& loss, const TapedMlp& gen) {
  LossGrads out;
  out.value = scalar_value(loss);
  const auto leaves = gen.leaves();
  const auto grads = g.backward(loss, leaves, false);
  split_leaf_grads(grads, gen.cfg.layer_count(), out.grad_w, out.grad_b);
  return out;
}

// Feedback path on an existing graph: push the tracked agent batch through
// the frozen mixer and score it with the feedback critic.
Tensor feedback_loss_on_graph(Graph& g, const Tensor& agent_fake, const MlpParams& mixer_gen,
                              const MlpConfig& mixer_cfg, const MlpParams& fb_critic,
                              const MlpConfig& fb_cfg, bool conditional_feedback,
                              const GenStepBatch& batch) {
  TapedMlp mixer = make_taped(g, mixer_gen, mixer_cfg, false);
  TapedMlp fb = make_taped(g, fb_critic, fb_cfg, false);
  const Tensor cond = concat_cols(agent_fake, Tensor::constant(batch.partner));
  const Tensor y_gen = mixer.forward(concat_cols(Tensor::constant(batch.z_mix), cond));
  const Tensor scored = conditional_feedback ? concat_cols(y_gen, cond) : y_gen;
  return generator_loss([&](const Tensor& x) { return fb.forward(x); }, scored, nullptr);
}

}  // namespace

LossGrads agent_generator_grads(const MlpParams& gen, const MlpConfig& gen_cfg,
                                const MlpParams& critic, const MlpConfig& critic_cfg,
                                const Mat& z) {
  Graph g;
  TapedMlp gen_net = make_taped(g, gen, gen_cfg, true);
  TapedMlp critic_net = make_taped(g, critic, critic_cfg, false);
  const Tensor fake = gen_net.forward(Tensor::constant(z));
  const Tensor loss =
      generator_loss([&](const Tensor& x) { return critic_net.forward(x); }, fake, nullptr);
  return grads_from_backward(g, loss, gen_net);
}

LossGrads feedback_generator_grads(const MlpParams& gen, const MlpConfig& gen_cfg,
                                   const MlpParams& mixer_gen, const MlpConfig& mixer_cfg,
                                   const MlpParams& fb_critic, const MlpConfig& fb_cfg,
                                   bool conditional_feedback, const GenStepBatch& batch) {
  Graph g;
  TapedMlp gen_net = make_taped(g, gen, gen_cfg, true);
  const Tensor fake = gen_net.forward(Tensor::constant(batch.z));
  const Tensor loss = feedback_loss_on_graph(g, fake, mixer_gen, mixer_cfg, fb_critic, fb_cfg,
                                             conditional_feedback, batch);
  return grads_from_backward(g, loss, gen_net);
}

LossGrads combined_generator_grads(const MlpParams& gen, const MlpConfig& gen_cfg,
                                   const MlpParams& critic, const MlpConfig& critic_cfg,
                                   const MlpParams& mixer_gen, const MlpConfig& mixer_cfg,
                                   const MlpParams& fb_critic, const MlpConfig& fb_cfg,
                                   bool conditional_feedback, double alpha,
                                   const GenStepBatch& batch) {
  Graph g;
  TapedMlp gen_net = make_taped(g, gen, gen_cfg, true);
  TapedMlp critic_net = make_taped(g, critic, critic_cfg, false);
  const Tensor fake = gen_net.forward(Tensor::constant(batch.z));
  const Tensor loss_agent =
      generator_loss([&](const Tensor& x) { return critic_net.forward(x); }, fake, nullptr);
  const Tensor loss_feedback = feedback_loss_on_graph(
      g, fake, mixer_gen, mixer_cfg, fb_critic, fb_cfg, conditional_feedback, batch);
  const Tensor loss =
      add(scalar_mul(loss_agent, alpha), scalar_mul(loss_feedback, 1.0 - alpha));
  return grads_from_backward(g, loss, gen_net);
}

Checkpoint pretrain_mixer(const MixerData& data, const MixerTrainConfig& cfg) {
  cfg.validate();
  if (data.cond.rows < 1 || data.cond.rows != data.y.rows) {
    throw std::invalid_argument("pretrain_mixer: condition and output rows disagree: " +
                                data.cond.shape_str() + " vs " + data.y.shape_str());
  }
  const long z_dim = cfg.gen.in - data.cond.cols;
  if (z_dim < 1) {
    throw std::invalid_argument("pretrain_mixer: generator input leaves no noise columns");
  }
  if (cfg.gen.out != data.y.cols || cfg.critic.in != data.y.cols + data.cond.cols) {
    throw std::invalid_argument("pretrain_mixer: network widths do not match the data");
  }

  MlpParams gen = init_mlp(cfg.gen, derive_seed(cfg.seed, "mixer_generator_init"));
  MlpParams critic = init_mlp(cfg.critic, derive_seed(cfg.seed, "mixer_critic_init"));
  AdamState gen_opt = adam_init(gen);
  AdamState critic_opt = adam_init(critic);
  Rng real_rng(derive_seed(cfg.seed, "mixer_real_idx"));
  Rng noise_rng(derive_seed(cfg.seed, "mixer_noise"));
  Rng gp_rng(derive_seed(cfg.seed, "gp_mixer"));

  for (long iter = 0; iter < cfg.iters; ++iter) {
    for (long k = 0; k < cfg.critic_iters; ++k) {
      const auto idx = draw_indices(data.y.rows, cfg.batch, real_rng);
      const Mat cond = rows_at(data.cond, idx);
      const Mat y_real = rows_at(data.y, idx);
      const Mat z = noise_batch(cfg.batch, z_dim, noise_rng);
      const Mat y_fake = mlp_forward(gen, cfg.gen, hcat(z, cond));
      const double w = critic_update(critic, cfg.critic, critic_opt, cfg.adam, y_real,
                                     y_fake, &cond, &cond, cfg.lambda, true, gp_rng);
      if (!std::isfinite(w)) {
        throw NumericError("pretrain_mixer: non-finite critic objective at iteration " +
                           std::to_string(iter));
      }
    }
    const auto idx = draw_indices(data.y.rows, cfg.batch, real_rng);
    const Mat cond = rows_at(data.cond, idx);
    const Mat z = noise_batch(cfg.batch, z_dim, noise_rng);
    Graph g;
    TapedMlp gen_net = make_taped(g, gen, cfg.gen, true);
    TapedMlp critic_net = make_taped(g, critic, cfg.critic, false);
    const Tensor fake = gen_net.forward(Tensor::constant(hcat(z, cond)));
    const Tensor loss = generator_loss(
        [&](const Tensor& x) { return critic_net.forward(x); }, fake, &cond);
    if (!std::isfinite(scalar_value(loss))) {
      throw NumericError("pretrain_mixer: non-finite generator loss at iteration " +
                         std::to_string(iter));
    }
    const auto grads = g.backward(loss, gen_net.leaves(), false);
    std::vector<Mat> gw, gb;
    split_leaf_grads(grads, cfg.gen.layer_count(), gw, gb);
    adam_step(gen, gw, gb, gen_opt, cfg.adam);
  }

  Checkpoint ckpt;
  ckpt.seed = cfg.seed;
  ckpt.iteration = cfg.iters;
  ckpt.loss_mode = "mixer";
  ckpt.generator = {cfg.gen, std::move(gen)};
  ckpt.critic = NetworkSnapshot{cfg.critic, std::move(critic)};
  return ckpt;
}

AgentTrainResult train_agent(const AgentData& data, const AgentTrainConfig& cfg,
                             const Checkpoint* mixer) {
  cfg.validate();
  const bool feedback = cfg.mode != LossMode::kBaseline;
  if (data.agent_real.rows < 1) throw std::invalid_argument("train_agent: empty agent data");
  if (data.agent_real.cols != cfg.gen.out) {
    throw std::invalid_argument("train_agent: agent data width does not match the generator");
  }
  if (feedback) {
    if (mixer == nullptr) {
      throw std::invalid_argument("train_agent: feedback mode requires a mixer checkpoint");
    }
    if (data.partner_real.rows < 1 || data.y_real.rows < 1) {
      throw std::invalid_argument("train_agent: feedback mode requires partner and output data");
    }
    const long cond_cols = cfg.gen.out + data.partner_real.cols;
    const long z_mix = mixer->generator.cfg.in - cond_cols;
    if (z_mix < 1 || mixer->generator.cfg.out != data.y_real.cols) {
      throw std::invalid_argument("train_agent: mixer shapes do not match the data");
    }
    const long fb_in = cfg.conditional_feedback ? data.y_real.cols + cond_cols : data.y_real.cols;
    if (cfg.feedback_critic.in != fb_in) {
      throw std::invalid_argument("train_agent: feedback critic input width must be " +
                                  std::to_string(fb_in));
    }
    if (cfg.conditional_feedback) {
      if (data.joint_cond.rows != data.y_real.rows || data.joint_cond.cols != cond_cols) {
        throw std::invalid_argument(
            "train_agent: conditional feedback needs joint condition rows");
      }
      if (!mixer->critic.has_value()) {
        throw std::invalid_argument(
            "train_agent: conditional feedback warm start needs the mixer critic");
      }
    }
  }

  const auto t0 = std::chrono::steady_clock::now();
  MlpParams gen = init_mlp(cfg.gen, derive_seed(cfg.seed, "agent_generator_init"));
  MlpParams critic = init_mlp(cfg.critic, derive_seed(cfg.seed, "agent_critic_init"));
  AdamState gen_opt = adam_init(gen);
  AdamState critic_opt = adam_init(critic);

  MlpParams fb_critic;
  AdamState fb_opt;
  if (feedback) {
    fb_critic = cfg.conditional_feedback
                    ? mixer->critic->params
                    : init_mlp(cfg.feedback_critic, derive_seed(cfg.seed, "feedback_critic_init"));
    fb_opt = adam_init(fb_critic);
  }
  const MlpConfig fb_cfg =
      (feedback && cfg.conditional_feedback) ? mixer->critic->cfg : cfg.feedback_critic;

  Rng agent_real_rng(derive_seed(cfg.seed, "agent_real_idx"));
  Rng agent_noise_rng(derive_seed(cfg.seed, "agent_noise"));
  Rng gp_agent_rng(derive_seed(cfg.seed, "gp_agent"));
  Rng partner_rng(derive_seed(cfg.seed, "partner_idx"));
  Rng y_real_rng(derive_seed(cfg.seed, "y_real_idx"));
  Rng mixer_noise_rng(derive_seed(cfg.seed, "mixer_noise"));
  Rng gp_feedback_rng(derive_seed(cfg.seed, "gp_feedback"));

  const long z_mix_dim = feedback ? mixer->generator.cfg.in - cfg.gen.out -
                                        data.partner_real.cols
                                  : 0;

  Checkpoint last_good;
  last_good.seed = cfg.seed;
  last_good.loss_mode = mode_name(cfg.mode);
  last_good.generator = {cfg.gen, gen};
  last_good.critic = NetworkSnapshot{cfg.critic, critic};

  AgentTrainResult result;
  result.report.seed = cfg.seed;
  result.report.records.reserve(static_cast<size_t>(cfg.iters));

  for (long iter = 0; iter < cfg.iters; ++iter) {
    IterationRecord rec;
    rec.iter = iter + 1;
    try {
      for (long k = 0; k < cfg.critic_iters; ++k) {
        const Mat z = noise_batch(cfg.batch, cfg.gen.in, agent_noise_rng);
        const Mat fake_x = mlp_forward(gen, cfg.gen, z);
        const Mat real_x = sample_rows(data.agent_real, cfg.batch, agent_real_rng);
        rec.w_agent = critic_update(critic, cfg.critic, critic_opt, cfg.adam, real_x, fake_x,
                                    nullptr, nullptr, cfg.lambda_agent, false, gp_agent_rng);
        if (!std::isfinite(rec.w_agent)) {
          throw NumericError("non-finite agent critic objective");
        }

        if (feedback) {
          const Mat z_mix = noise_batch(cfg.batch, z_mix_dim, mixer_noise_rng);
          const Mat partner = sample_rows(data.partner_real, cfg.batch, partner_rng);
          const Mat cond_fake = hcat(fake_x, partner);
          const Mat y_fake =
              mlp_forward(mixer->generator.params, mixer->generator.cfg, hcat(z_mix, cond_fake));
          const auto idx = draw_indices(data.y_real.rows, cfg.batch, y_real_rng);
          const Mat y_real = rows_at(data.y_real, idx);
          if (cfg.conditional_feedback) {
            const Mat cond_real = rows_at(data.joint_cond, idx);
            rec.w_feedback =
                critic_update(fb_critic, fb_cfg, fb_opt, cfg.adam, y_real, y_fake, &cond_real,
                              &cond_fake, cfg.lambda_feedback, true, gp_feedback_rng);
          } else {
            rec.w_feedback =
                critic_update(fb_critic, fb_cfg, fb_opt, cfg.adam, y_real, y_fake, nullptr,
                              nullptr, cfg.lambda_feedback, false, gp_feedback_rng);
          }
          if (!std::isfinite(rec.w_feedback)) {
            throw NumericError("non-finite feedback critic objective");
          }
        }
      }

      const bool agent_turn = cfg.mode == LossMode::kBaseline ||
                              (cfg.mode == LossMode::kCombined && cfg.alpha == 1.0) ||
                              (cfg.mode == LossMode::kAlternate && iter % 2 == 0);
      LossGrads step;
      if (agent_turn) {
        const Mat z = noise_batch(cfg.batch, cfg.gen.in, agent_noise_rng);
        step = agent_generator_grads(gen, cfg.gen, critic, cfg.critic, z);
        rec.loss_agent = step.value;
      } else {
        GenStepBatch batch;
        batch.z = noise_batch(cfg.batch, cfg.gen.in, agent_noise_rng);
        batch.z_mix = noise_batch(cfg.batch, z_mix_dim, mixer_noise_rng);
        batch.partner = sample_rows(data.partner_real, cfg.batch, partner_rng);
        if (cfg.mode == LossMode::kCombined && cfg.alpha > 0.0) {
          step = combined_generator_grads(gen, cfg.gen, critic, cfg.critic,
                                          mixer->generator.params, mixer->generator.cfg,
                                          fb_critic, fb_cfg, cfg.conditional_feedback,
                                          cfg.alpha, batch);
          rec.loss_feedback = step.value;
        } else {
          step = feedback_generator_grads(gen, cfg.gen, mixer->generator.params,
                                          mixer->generator.cfg, fb_critic, fb_cfg,
                                          cfg.conditional_feedback, batch);
          rec.loss_feedback = step.value;
        }
      }
      if (!std::isfinite(step.value)) throw NumericError("non-finite generator loss");
      adam_step(gen, step.grad_w, step.grad_b, gen_opt, cfg.adam);
    } catch (const NumericError& e) {
      std::string path;
      if (!cfg.last_good_path.empty()) {
        save_checkpoint(cfg.last_good_path, last_good);
        path = cfg.last_good_path;
      }
      throw NumericError("train_agent: " + std::string(e.what()) + " at iteration " +
                             std::to_string(iter) +
                             (path.empty() ? "" : "; last good checkpoint: " + path),
                         path);
    }
    result.report.records.push_back(rec);

    if ((iter + 1) % cfg.snapshot_every == 0) {
      last_good.iteration = iter + 1;
      last_good.generator.params = gen;
      last_good.critic->params = critic;
    }
  }

  result.checkpoint.seed = cfg.seed;
  result.checkpoint.iteration = cfg.iters;
  result.checkpoint.loss_mode = mode_name(cfg.mode);
  result.checkpoint.generator = {cfg.gen, std::move(gen)};
  result.checkpoint.critic = NetworkSnapshot{cfg.critic, std::move(critic)};
  result.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

void write_report_jsonl(const TrainReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("write_report_jsonl: cannot open " + path);
  for (const auto& r : report.records) {
    nlohmann::json j;
    j["iter"] = r.iter;
    j["L_a"] = r.loss_agent;
    j["L_f"] = r.loss_feedback;
    j["W_a"] = r.w_agent;
    j["W_f"] = r.w_feedback;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write_report_jsonl: write failed for " + path);
}

Mat generate_samples(const MlpParams& params, const MlpConfig& cfg, long n,
                     std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("generate_samples: n must be positive");
  Rng rng(seed);
  return mlp_forward(params, cfg, noise_batch(n, cfg.in, rng));
}

}  // namespace mgm
