#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mgm/mat.hpp"
#include "mgm/nn.hpp"

namespace mgm {

enum class LossMode { kBaseline, kCombined, kAlternate };

LossMode mode_from_name(const std::string& name);
const char* mode_name(LossMode mode);

MlpConfig default_agent_generator();  // noise 2 -> sample 2
MlpConfig default_agent_critic();     // sample 2 -> score
MlpConfig default_mixer_generator();  // noise 2 + condition 4 -> sample 2
MlpConfig default_mixer_critic();     // sample 2 + condition 4 -> score

// Conditional WGAN-GP pre-training on row-aligned (condition, output) pairs.
struct MixerData {
  Mat cond;  // concatenated agent samples
  Mat y;     // mixer outputs
};

struct MixerTrainConfig {
  long iters = 20000;
  long batch = 256;
  long critic_iters = 5;
  double lambda = 1.0;
  AdamConfig adam;
  std::uint64_t seed = 1;
  MlpConfig gen = default_mixer_generator();
  MlpConfig critic = default_mixer_critic();

  void validate() const;
};

Checkpoint pretrain_mixer(const MixerData& data, const MixerTrainConfig& cfg);

// Training data for the data-starved agent.  The joint rows stay untreated;
// only agent_real reflects the scenario treatment.
struct AgentData {
  Mat agent_real;    // treated sample set of the trained agent
  Mat partner_real;  // other agents' samples, full
  Mat y_real;        // mixer outputs, full, row-aligned with joint_cond
  Mat joint_cond;    // full condition rows; used by the conditional feedback
                     // critic variant, may be empty otherwise
};

struct AgentTrainConfig {
  LossMode mode = LossMode::kCombined;
  double alpha = 0.5;  // weight of the own-critic loss in combined mode
  long iters = 20000;
  long batch = 256;
  long critic_iters = 5;
  double lambda_agent = 0.1;
  double lambda_feedback = 1.0;
  AdamConfig adam;
  std::uint64_t seed = 1;
  MlpConfig gen = default_agent_generator();
  MlpConfig critic = default_agent_critic();
  MlpConfig feedback_critic = default_agent_critic();
  // Score feedback on (y, condition) with the critic carried over from
  // pre-training instead of a fresh unconditional head on y alone.
  bool conditional_feedback = false;
  long snapshot_every = 1000;
  std::string last_good_path;  // where a non-finite abort dumps the snapshot

  void validate() const;
};

// One record per generator iteration.  Fields not evaluated in the active
// mode that iteration stay 0 (baseline never has feedback values; alternate
// fills only the side it trained).
struct IterationRecord {
  long iter = 0;
  double loss_agent = 0.0;
  double loss_feedback = 0.0;
  double w_agent = 0.0;
  double w_feedback = 0.0;
};

struct TrainReport {
  std::vector<IterationRecord> records;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
};

struct AgentTrainResult {
  Checkpoint checkpoint;
  TrainReport report;
};

// Algorithm: per generator iteration, critic_iters updates of the agent
// critic (and of the feedback critic in feedback modes), then one generator
// update with the mode's loss.  mixer must be null in baseline mode's view
// (it is ignored) and non-null otherwise.
AgentTrainResult train_agent(const AgentData& data, const AgentTrainConfig& cfg,
                             const Checkpoint* mixer);

void write_report_jsonl(const TrainReport& report, const std::string& path);

// Samples from a generator: noise rows from the seed pushed through the net.
Mat generate_samples(const MlpParams& params, const MlpConfig& cfg, long n,
                     std::uint64_t seed);

// --- generator update directions, exposed for verification ---

// Fixed batch for one generator step in a feedback mode.
struct GenStepBatch {
  Mat z;        // agent generator noise
  Mat z_mix;    // mixer noise
  Mat partner;  // partner rows completing the condition
};

struct LossGrads {
  double value = 0.0;
  std::vector<Mat> grad_w, grad_b;  // per generator layer
};

LossGrads agent_generator_grads(const MlpParams& gen, const MlpConfig& gen_cfg,
                                const MlpParams& critic, const MlpConfig& critic_cfg,
                                const Mat& z);

LossGrads feedback_generator_grads(const MlpParams& gen, const MlpConfig& gen_cfg,
                                   const MlpParams& mixer_gen, const MlpConfig& mixer_cfg,
                                   const MlpParams& fb_critic, const MlpConfig& fb_cfg,
                                   bool conditional_feedback, const GenStepBatch& batch);

// The exact direction train_agent applies in combined mode: one graph over
// alpha * agent loss + (1 - alpha) * feedback loss with a shared generator
// batch.
LossGrads combined_generator_grads(const MlpParams& gen, const MlpConfig& gen_cfg,
                                   const MlpParams& critic, const MlpConfig& critic_cfg,
                                   const MlpParams& mixer_gen, const MlpConfig& mixer_cfg,
                                   const MlpParams& fb_critic, const MlpConfig& fb_cfg,
                                   bool conditional_feedback, double alpha,
                                   const GenStepBatch& batch);

}  // namespace mgm
