#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mgm/mat.hpp"
#include "mgm/tensor.hpp"

namespace mgm {

// Fully connected LeakyReLU network: every hidden layer is affine + LeakyReLU,
// the output layer is affine only.
struct MlpConfig {
  long in = 2;
  long out = 2;
  std::vector<long> hidden = {512, 512, 512};
  double slope = 0.2;

  void validate() const;
  long layer_count() const { return static_cast<long>(hidden.size()) + 1; }
};

struct MlpParams {
  std::vector<Mat> w;
  std::vector<Mat> b;
};

// Uniform(-a, a) weights with a chosen so Var = 2 / (fan_in * (1 + slope^2)),
// the He bound adjusted for the leaky slope.  Biases start at zero.
MlpParams init_mlp(const MlpConfig& cfg, std::uint64_t seed);

// Network parameters pushed onto a graph for one minibatch.
struct TapedMlp {
  MlpConfig cfg;
  std::vector<Tensor> w;
  std::vector<Tensor> b;

  Tensor forward(const Tensor& x) const;
  std::vector<Tensor> leaves() const;  // w and b interleaved per layer
};

TapedMlp make_taped(Graph& g, const MlpParams& params, const MlpConfig& cfg,
                    bool requires_grad);

// Forward pass on plain values, no graph involved.
Mat mlp_forward(const MlpParams& params, const MlpConfig& cfg, const Mat& x);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Mat> mw, vw, mb, vb;
  long t = 0;
};

AdamState adam_init(const MlpParams& params);

// One bias-corrected Adam update, in place.  Gradients are given in the same
// layer order as the parameters; a non-finite gradient raises NumericError
// naming the layer.
void adam_step(MlpParams& params, const std::vector<Mat>& grad_w,
               const std::vector<Mat>& grad_b, AdamState& state,
               const AdamConfig& cfg);

// Extract per-layer gradient matrices from a backward() result laid out as
// TapedMlp::leaves().
void split_leaf_grads(const std::vector<Tensor>& grads, long layers,
                      std::vector<Mat>& grad_w, std::vector<Mat>& grad_b);

// A saved model: one or two networks plus provenance.  Serialized as JSON
// with round-trip-exact doubles, so save/load/save is byte identical.
struct NetworkSnapshot {
  MlpConfig cfg;
  MlpParams params;
};

struct Checkpoint {
  std::uint64_t seed = 0;
  long iteration = 0;
  std::string loss_mode;  // "baseline" | "combined" | "alternate" | "mixer"
  NetworkSnapshot generator;
  std::optional<NetworkSnapshot> critic;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mgm
