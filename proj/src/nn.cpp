#include "mgm/nn.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mgm/common.hpp"
#include "mgm/rng.hpp"

namespace mgm {

using nlohmann::json;

void MlpConfig::validate() const {
  if (in <= 0 || out <= 0)
    throw std::invalid_argument("MlpConfig: in and out must be positive");
  if (hidden.empty())
    throw std::invalid_argument("MlpConfig: hidden widths must be non-empty");
  for (long h : hidden)
    if (h <= 0) throw std::invalid_argument("MlpConfig: hidden widths must be positive");
  if (!(slope > 0.0 && slope < 1.0))
    throw std::invalid_argument("MlpConfig: slope must lie in (0, 1)");
}

namespace {

std::vector<long> layer_dims(const MlpConfig& cfg) {
  std::vector<long> dims;
  dims.push_back(cfg.in);
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(cfg.out);
  return dims;
}

}  // namespace

MlpParams init_mlp(const MlpConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  MlpParams p;
  const auto dims = layer_dims(cfg);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Rng rng(derive_seed(seed, "init_layer", l));
    const double fan_in = static_cast<double>(dims[l]);
    const double bound = std::sqrt(6.0 / fan_in) / std::sqrt(1.0 + cfg.slope * cfg.slope);
    Mat w(dims[l], dims[l + 1]);
    for (auto& x : w.v) x = rng.uniform(-bound, bound);
    p.w.push_back(std::move(w));
    p.b.push_back(Mat(1, dims[l + 1]));
  }
  return p;
}

TapedMlp make_taped(Graph& g, const MlpParams& params, const MlpConfig& cfg,
                    bool requires_grad) {
  cfg.validate();
  TapedMlp t;
  t.cfg = cfg;
  for (std::size_t l = 0; l < params.w.size(); ++l) {
    t.w.push_back(g.leaf(params.w[l], requires_grad));
    t.b.push_back(g.leaf(params.b[l], requires_grad));
  }
  return t;
}

Tensor TapedMlp::forward(const Tensor& x) const {
  if (x.shape().cols != cfg.in) {
    std::ostringstream os;
    os << "TapedMlp::forward: input has " << x.shape().cols << " columns, expected "
       << cfg.in;
    throw std::invalid_argument(os.str());
  }
  Tensor h = x;
  for (std::size_t l = 0; l < w.size(); ++l) {
    h = add_row_bias(matmul(h, w[l]), b[l]);
    if (l + 1 < w.size()) h = leaky_relu(h, cfg.slope);
  }
  return h;
}

std::vector<Tensor> TapedMlp::leaves() const {
  std::vector<Tensor> out;
  for (std::size_t l = 0; l < w.size(); ++l) {
    out.push_back(w[l]);
    out.push_back(b[l]);
  }
  return out;
}

Mat mlp_forward(const MlpParams& params, const MlpConfig& cfg, const Mat& x) {
  Graph g;
  TapedMlp net = make_taped(g, params, cfg, false);
  return net.forward(Tensor::constant(x)).to_mat();
}

AdamState adam_init(const MlpParams& params) {
  AdamState s;
  for (const Mat& w : params.w) {
    s.mw.push_back(Mat::zeros(w.rows, w.cols));
    s.vw.push_back(Mat::zeros(w.rows, w.cols));
  }
  for (const Mat& b : params.b) {
    s.mb.push_back(Mat::zeros(b.rows, b.cols));
    s.vb.push_back(Mat::zeros(b.rows, b.cols));
  }
  return s;
}

namespace {

void adam_update(Mat& p, const Mat& g, Mat& m, Mat& v, long t, const AdamConfig& cfg,
                 const char* what, std::size_t layer) {
  for (std::size_t i = 0; i < p.v.size(); ++i) {
    const double gi = g.v[i];
    if (!std::isfinite(gi)) {
      std::ostringstream os;
      os << "adam_step: non-finite gradient in " << what << " of layer " << layer;
      throw NumericError(os.str());
    }
    m.v[i] = cfg.beta1 * m.v[i] + (1.0 - cfg.beta1) * gi;
    v.v[i] = cfg.beta2 * v.v[i] + (1.0 - cfg.beta2) * gi * gi;
    const double mhat = m.v[i] / (1.0 - std::pow(cfg.beta1, t));
    const double vhat = v.v[i] / (1.0 - std::pow(cfg.beta2, t));
    p.v[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

}  // namespace

void adam_step(MlpParams& params, const std::vector<Mat>& grad_w,
               const std::vector<Mat>& grad_b, AdamState& state, const AdamConfig& cfg) {
  if (grad_w.size() != params.w.size() || grad_b.size() != params.b.size())
    throw std::invalid_argument("adam_step: gradient count does not match layers");
  state.t += 1;
  for (std::size_t l = 0; l < params.w.size(); ++l) {
    adam_update(params.w[l], grad_w[l], state.mw[l], state.vw[l], state.t, cfg,
                "weights", l);
    adam_update(params.b[l], grad_b[l], state.mb[l], state.vb[l], state.t, cfg, "bias",
                l);
  }
}

void split_leaf_grads(const std::vector<Tensor>& grads, long layers,
                      std::vector<Mat>& grad_w, std::vector<Mat>& grad_b) {
  grad_w.clear();
  grad_b.clear();
  for (long l = 0; l < layers; ++l) {
    grad_w.push_back(grads[static_cast<std::size_t>(2 * l)].to_mat());
    grad_b.push_back(grads[static_cast<std::size_t>(2 * l + 1)].to_mat());
  }
}

// ---- checkpoints -----------------------------------------------------------

namespace {

constexpr int kCheckpointFormat = 1;

json config_to_json(const MlpConfig& cfg) {
  return json{{"in", cfg.in}, {"out", cfg.out}, {"hidden", cfg.hidden}, {"slope", cfg.slope}};
}

MlpConfig config_from_json(const json& j) {
  MlpConfig cfg;
  cfg.in = j.at("in").get<long>();
  cfg.out = j.at("out").get<long>();
  cfg.hidden = j.at("hidden").get<std::vector<long>>();
  cfg.slope = j.at("slope").get<double>();
  return cfg;
}

json mat_to_json(const Mat& m) {
  json rows = json::array();
  for (long i = 0; i < m.rows; ++i) {
    json row = json::array();
    for (long j = 0; j < m.cols; ++j) row.push_back(m.at(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Mat mat_from_json(const json& j) {
  const long rows = static_cast<long>(j.size());
  const long cols = rows > 0 ? static_cast<long>(j.at(0).size()) : 0;
  Mat m(rows, cols);
  for (long i = 0; i < rows; ++i)
    for (long c = 0; c < cols; ++c) m.at(i, c) = j.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(c)).get<double>();
  return m;
}

json network_to_json(const NetworkSnapshot& net) {
  json layers = json::array();
  for (std::size_t l = 0; l < net.params.w.size(); ++l)
    layers.push_back(json{{"w", mat_to_json(net.params.w[l])},
                          {"b", mat_to_json(net.params.b[l])}});
  return json{{"config", config_to_json(net.cfg)}, {"layers", std::move(layers)}};
}

NetworkSnapshot network_from_json(const json& j) {
  NetworkSnapshot net;
  net.cfg = config_from_json(j.at("config"));
  for (const json& layer : j.at("layers")) {
    net.params.w.push_back(mat_from_json(layer.at("w")));
    net.params.b.push_back(mat_from_json(layer.at("b")));
  }
  return net;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  json j{{"format", kCheckpointFormat},
         {"seed", ckpt.seed},
         {"iteration", ckpt.iteration},
         {"loss_mode", ckpt.loss_mode},
         {"generator", network_to_json(ckpt.generator)}};
  if (ckpt.critic) j["critic"] = network_to_json(*ckpt.critic);
  std::ofstream out(path);
  if (!out) throw IoError("save_checkpoint: cannot open " + path);
  out << j.dump(1) << "\n";
  if (!out) throw IoError("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_checkpoint: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("load_checkpoint: malformed JSON in " + path + ": " + e.what());
  }
  if (!j.contains("format") || j.at("format").get<int>() != kCheckpointFormat)
    throw IoError("load_checkpoint: unsupported checkpoint format in " + path);
  Checkpoint ckpt;
  try {
    ckpt.seed = j.at("seed").get<std::uint64_t>();
    ckpt.iteration = j.at("iteration").get<long>();
    ckpt.loss_mode = j.at("loss_mode").get<std::string>();
    ckpt.generator = network_from_json(j.at("generator"));
    if (j.contains("critic")) ckpt.critic = network_from_json(j.at("critic"));
  } catch (const json::exception& e) {
    throw IoError("load_checkpoint: missing field in " + path + ": " + e.what());
  }
  return ckpt;
}

}  // namespace mgm
