#include "mgm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "mgm/common.hpp"
#include "mgm/rng.hpp"

namespace mgm {

Mat swiss_roll(long n, std::uint64_t seed, const SwissRollConfig& cfg) {
  if (n < 1) throw std::invalid_argument("swiss_roll: n must be positive");
  if (!(cfg.t_min < cfg.t_max)) throw std::invalid_argument("swiss_roll: empty t range");
  Rng rng(seed);
  Mat out(n, 2);
  for (long i = 0; i < n; ++i) {
    const double t = rng.uniform(cfg.t_min, cfg.t_max);
    out.at(i, 0) = t * std::cos(t) * cfg.radius_scale + cfg.noise * rng.normal();
    out.at(i, 1) = t * std::sin(t) * cfg.radius_scale + cfg.noise * rng.normal();
  }
  return out;
}

Mat gaussian2d(long n, const double mean[2], const Mat& cov, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("gaussian2d: n must be positive");
  if (cov.rows != 2 || cov.cols != 2) {
    throw std::invalid_argument("gaussian2d: covariance must be 2x2, got " + cov.shape_str());
  }
  const double c00 = cov.at(0, 0), c01 = cov.at(0, 1), c10 = cov.at(1, 0), c11 = cov.at(1, 1);
  if (std::fabs(c01 - c10) > 1e-12) {
    throw std::invalid_argument("gaussian2d: covariance is not symmetric");
  }
  if (c00 < 0.0 || c11 < 0.0 || c00 * c11 - c01 * c01 < -1e-12) {
    throw std::invalid_argument("gaussian2d: covariance is not positive semidefinite");
  }
  // Cholesky factor, with the rank-deficient cases spelled out.
  double l00 = std::sqrt(std::max(0.0, c00));
  double l10 = (l00 > 0.0) ? c01 / l00 : 0.0;
  double l11 = std::sqrt(std::max(0.0, c11 - l10 * l10));
  Rng rng(seed);
  Mat out(n, 2);
  for (long i = 0; i < n; ++i) {
    const double z0 = rng.normal();
    const double z1 = rng.normal();
    out.at(i, 0) = mean[0] + l00 * z0;
    out.at(i, 1) = mean[1] + l10 * z0 + l11 * z1;
  }
  return out;
}

ScenarioKind scenario_from_name(const std::string& name, long* low_n) {
  *low_n = 0;
  if (name == "full") return ScenarioKind::kFull;
  if (name == "bias100") return ScenarioKind::kBias100;
  if (name == "bias90") return ScenarioKind::kBias90;
  if (name.size() > 3 && name.compare(0, 3, "low") == 0) {
    const std::string digits = name.substr(3);
    if (std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      *low_n = std::stol(digits);
      if (*low_n >= 1) return ScenarioKind::kLowN;
    }
  }
  throw std::invalid_argument("unknown scenario: " + name);
}

std::string scenario_name(ScenarioKind kind, long low_n) {
  switch (kind) {
    case ScenarioKind::kFull: return "full";
    case ScenarioKind::kBias100: return "bias100";
    case ScenarioKind::kBias90: return "bias90";
    case ScenarioKind::kLowN: return "low" + std::to_string(low_n);
  }
  std::abort();
}

void ScenarioSpec::validate() const {
  if (n_train < 1 || n_test < 1) throw std::invalid_argument("scenario: counts must be >= 1");
  if (!(beta >= 0.0 && beta <= 1.0)) {
    throw std::invalid_argument("scenario: beta must lie in [0,1]");
  }
  if (kind == ScenarioKind::kLowN) {
    if (low_n < 1) throw std::invalid_argument("scenario: low-data size must be >= 1");
    if (low_n > n_train) {
      throw std::invalid_argument("scenario: low-data size exceeds the training draw");
    }
  }
}

bool in_bias_region(double c0, double c1, const double threshold[2]) {
  return c0 > threshold[0] && c1 > threshold[1];
}

namespace {

// Nearest-rank percentile: the smallest value with at least q of the sample
// at or below it.
double percentile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  const size_t k = static_cast<size_t>(
      std::ceil(q * static_cast<double>(values.size())));
  return values[std::max<size_t>(k, 1) - 1];
}

Mat mix_outputs(const Mat& x1, const Mat& x2, double beta) {
  Mat y(x1.rows, 2);
  for (long i = 0; i < x1.rows; ++i) {
    y.at(i, 0) = beta * x1.at(i, 0) + (1.0 - beta) * x2.at(i, 0);
    y.at(i, 1) = beta * x1.at(i, 1) + (1.0 - beta) * x2.at(i, 1);
  }
  return y;
}

Mat take_rows(const Mat& src, const std::vector<long>& rows) {
  Mat out(static_cast<long>(rows.size()), src.cols);
  for (size_t i = 0; i < rows.size(); ++i) {
    for (long j = 0; j < src.cols; ++j) {
      out.at(static_cast<long>(i), j) = src.at(rows[i], j);
    }
  }
  return out;
}

// k distinct indices from [0, n), in ascending order.
std::vector<long> sample_without_replacement(Rng& rng, long n, long k) {
  std::vector<long> pool(static_cast<size_t>(n));
  for (long i = 0; i < n; ++i) pool[static_cast<size_t>(i)] = i;
  for (long i = 0; i < k; ++i) {
    const long j = i + static_cast<long>(rng.index(static_cast<size_t>(n - i)));
    std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
  }
  pool.resize(static_cast<size_t>(k));
  std::sort(pool.begin(), pool.end());
  return pool;
}

constexpr double kAgent2Mean[2] = {0.0, 0.0};

Mat agent2_cov() { return Mat(2, 2, {0.25, 0.0, 0.0, 0.25}); }

}  // namespace

ScenarioData make_scenario(const ScenarioSpec& spec) {
  spec.validate();
  ScenarioData d;
  d.spec = spec;
  d.train_x1_full = swiss_roll(spec.n_train, derive_seed(spec.seed, "train_x1"));
  d.train_x2 = gaussian2d(spec.n_train, kAgent2Mean, agent2_cov(),
                          derive_seed(spec.seed, "train_x2"));
  d.train_y = mix_outputs(d.train_x1_full, d.train_x2, spec.beta);
  d.test_x1 = swiss_roll(spec.n_test, derive_seed(spec.seed, "test_x1"));
  d.test_x2 = gaussian2d(spec.n_test, kAgent2Mean, agent2_cov(),
                         derive_seed(spec.seed, "test_x2"));
  d.test_y = mix_outputs(d.test_x1, d.test_x2, spec.beta);

  std::vector<double> c0(static_cast<size_t>(spec.n_train)), c1(c0);
  for (long i = 0; i < spec.n_train; ++i) {
    c0[static_cast<size_t>(i)] = d.train_x1_full.at(i, 0);
    c1[static_cast<size_t>(i)] = d.train_x1_full.at(i, 1);
  }
  d.mask_threshold[0] = percentile(std::move(c0), 0.6);
  d.mask_threshold[1] = percentile(std::move(c1), 0.6);

  Rng treatment_rng(derive_seed(spec.seed, "treatment"));
  std::vector<long> kept;
  switch (spec.kind) {
    case ScenarioKind::kFull:
      for (long i = 0; i < spec.n_train; ++i) kept.push_back(i);
      break;
    case ScenarioKind::kBias100:
      for (long i = 0; i < spec.n_train; ++i) {
        if (!in_bias_region(d.train_x1_full.at(i, 0), d.train_x1_full.at(i, 1),
                            d.mask_threshold)) {
          kept.push_back(i);
        }
      }
      break;
    case ScenarioKind::kBias90: {
      std::vector<long> in_region;
      for (long i = 0; i < spec.n_train; ++i) {
        if (in_bias_region(d.train_x1_full.at(i, 0), d.train_x1_full.at(i, 1),
                           d.mask_threshold)) {
          in_region.push_back(i);
        } else {
          kept.push_back(i);
        }
      }
      const long retain = static_cast<long>(
          std::ceil(0.1 * static_cast<double>(in_region.size())));
      const auto picks = sample_without_replacement(
          treatment_rng, static_cast<long>(in_region.size()), retain);
      for (long p : picks) kept.push_back(in_region[static_cast<size_t>(p)]);
      std::sort(kept.begin(), kept.end());
      break;
    }
    case ScenarioKind::kLowN:
      kept = sample_without_replacement(treatment_rng, spec.n_train, spec.low_n);
      break;
  }
  if (kept.empty()) throw std::invalid_argument("scenario: treatment removed every row");
  d.train_x1 = take_rows(d.train_x1_full, kept);
  return d;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const Mat& data) {
  if (static_cast<long>(header.size()) != data.cols) {
    throw std::invalid_argument("write_csv: header has " + std::to_string(header.size()) +
                                " names for " + std::to_string(data.cols) + " columns");
  }
  std::ofstream out(path);
  if (!out) throw IoError("write_csv: cannot open " + path);
  for (size_t j = 0; j < header.size(); ++j) {
    if (j) out << ',';
    out << header[j];
  }
  out << '\n';
  char buf[40];
  for (long i = 0; i < data.rows; ++i) {
    for (long j = 0; j < data.cols; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", data.at(i, j));
      if (j) out << ',';
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("write_csv: write failed for " + path);
}

CsvFile read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("read_csv: cannot open " + path);
  CsvFile f;
  std::string line;
  if (!std::getline(in, line)) throw IoError("read_csv: empty file " + path);
  std::stringstream hs(line);
  std::string field;
  while (std::getline(hs, field, ',')) f.header.push_back(field);
  if (f.header.empty()) throw IoError("read_csv: no header in " + path);

  std::vector<double> values;
  long rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    size_t start = 0;
    long cols = 0;
    while (start <= line.size()) {
      size_t end = line.find(',', start);
      if (end == std::string::npos) end = line.size();
      const std::string cell = line.substr(start, end - start);
      char* tail = nullptr;
      const double v = std::strtod(cell.c_str(), &tail);
      if (tail == cell.c_str() || *tail != '\0') {
        throw IoError("read_csv: bad number '" + cell + "' in " + path);
      }
      values.push_back(v);
      ++cols;
      start = end + 1;
      if (end == line.size()) break;
    }
    if (cols != static_cast<long>(f.header.size())) {
      throw IoError("read_csv: row " + std::to_string(rows + 1) + " has " +
                    std::to_string(cols) + " fields in " + path);
    }
    ++rows;
  }
  f.data = Mat(rows, static_cast<long>(f.header.size()), std::move(values));
  return f;
}

namespace {

const std::vector<std::string> kJointHeader = {"x1_0", "x1_1", "x2_0", "x2_1", "y_0", "y_1"};
const std::vector<std::string> kAgentHeader = {"x1_0", "x1_1"};

Mat join_columns(const Mat& a, const Mat& b, const Mat& c) {
  Mat out(a.rows, a.cols + b.cols + c.cols);
  for (long i = 0; i < a.rows; ++i) {
    long j = 0;
    for (long k = 0; k < a.cols; ++k) out.at(i, j++) = a.at(i, k);
    for (long k = 0; k < b.cols; ++k) out.at(i, j++) = b.at(i, k);
    for (long k = 0; k < c.cols; ++k) out.at(i, j++) = c.at(i, k);
  }
  return out;
}

Mat slice_columns(const Mat& src, long first, long count) {
  Mat out(src.rows, count);
  for (long i = 0; i < src.rows; ++i) {
    for (long j = 0; j < count; ++j) out.at(i, j) = src.at(i, first + j);
  }
  return out;
}

}  // namespace

void save_scenario(const ScenarioData& d, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("save_scenario: cannot create " + dir);
  write_csv(dir + "/train_full.csv", kJointHeader,
            join_columns(d.train_x1_full, d.train_x2, d.train_y));
  write_csv(dir + "/train_agent1.csv", kAgentHeader, d.train_x1);
  write_csv(dir + "/test.csv", kJointHeader, join_columns(d.test_x1, d.test_x2, d.test_y));

  nlohmann::json j;
  j["scenario"] = d.spec.name();
  j["beta"] = d.spec.beta;
  j["n_train"] = d.spec.n_train;
  j["n_test"] = d.spec.n_test;
  j["seed"] = d.spec.seed;
  j["mask_threshold"] = {d.mask_threshold[0], d.mask_threshold[1]};
  j["treated_rows"] = d.train_x1.rows;
  j["files"] = {{"train_full", "train_full.csv"},
                {"train_agent1", "train_agent1.csv"},
                {"test", "test.csv"}};
  std::ofstream out(dir + "/scenario.json");
  if (!out) throw IoError("save_scenario: cannot open " + dir + "/scenario.json");
  out << j.dump(1) << '\n';
  if (!out) throw IoError("save_scenario: write failed in " + dir);
}

ScenarioData load_scenario(const std::string& dir) {
  std::ifstream in(dir + "/scenario.json");
  if (!in) throw IoError("load_scenario: cannot open " + dir + "/scenario.json");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("load_scenario: malformed json in " + dir + ": " + e.what());
  }
  ScenarioData d;
  try {
    d.spec.kind = scenario_from_name(j.at("scenario").get<std::string>(), &d.spec.low_n);
    d.spec.beta = j.at("beta").get<double>();
    d.spec.n_train = j.at("n_train").get<long>();
    d.spec.n_test = j.at("n_test").get<long>();
    d.spec.seed = j.at("seed").get<std::uint64_t>();
    d.mask_threshold[0] = j.at("mask_threshold").at(0).get<double>();
    d.mask_threshold[1] = j.at("mask_threshold").at(1).get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("load_scenario: missing field in " + dir + ": " + e.what());
  }

  const CsvFile train = read_csv(dir + "/train_full.csv");
  if (train.header != kJointHeader) throw IoError("load_scenario: bad train_full header");
  d.train_x1_full = slice_columns(train.data, 0, 2);
  d.train_x2 = slice_columns(train.data, 2, 2);
  d.train_y = slice_columns(train.data, 4, 2);

  const CsvFile agent = read_csv(dir + "/train_agent1.csv");
  if (agent.header != kAgentHeader) throw IoError("load_scenario: bad train_agent1 header");
  d.train_x1 = agent.data;

  const CsvFile test = read_csv(dir + "/test.csv");
  if (test.header != kJointHeader) throw IoError("load_scenario: bad test header");
  d.test_x1 = slice_columns(test.data, 0, 2);
  d.test_x2 = slice_columns(test.data, 2, 2);
  d.test_y = slice_columns(test.data, 4, 2);
  return d;
}

}  // namespace mgm
