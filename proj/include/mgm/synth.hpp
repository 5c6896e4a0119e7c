#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mgm/mat.hpp"

namespace mgm {

struct SwissRollConfig {
  double t_min = 1.5 * 3.14159265358979323846;
  double t_max = 4.5 * 3.14159265358979323846;
  double radius_scale = 1.0 / 15.0;
  double noise = 0.02;
};

// Spiral t -> (t cos t, t sin t) * radius_scale with isotropic noise,
// t uniform on [t_min, t_max].
Mat swiss_roll(long n, std::uint64_t seed, const SwissRollConfig& cfg = {});

// Box-Muller draws pushed through the Cholesky factor of cov (2x2, PSD).
Mat gaussian2d(long n, const double mean[2], const Mat& cov, std::uint64_t seed);

enum class ScenarioKind { kFull, kBias100, kBias90, kLowN };

ScenarioKind scenario_from_name(const std::string& name, long* low_n);
std::string scenario_name(ScenarioKind kind, long low_n);

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::kFull;
  long low_n = 0;  // used by kLowN only
  double beta = 0.5;
  long n_train = 128000;
  long n_test = 2000;
  std::uint64_t seed = 1;

  void validate() const;
  std::string name() const { return scenario_name(kind, low_n); }
};

// One generated scenario.  The joint rows stay untreated (the mixer and the
// partner agent read them); the treatment only shrinks the agent-1 view.
struct ScenarioData {
  ScenarioSpec spec;
  Mat train_x1_full, train_x2, train_y;  // row-aligned, n_train rows
  Mat train_x1;                          // treated agent-1 training rows
  Mat test_x1, test_x2, test_y;          // n_test rows, untreated
  double mask_threshold[2] = {0.0, 0.0};  // per-coordinate cut for the mask
};

// True when both coordinates exceed the thresholds (the removed region).
bool in_bias_region(double c0, double c1, const double threshold[2]);

ScenarioData make_scenario(const ScenarioSpec& spec);

// CSV with 17-significant-digit decimals; round trip is bit exact.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const Mat& data);
struct CsvFile {
  std::vector<std::string> header;
  Mat data;
};
CsvFile read_csv(const std::string& path);

// Writes train_full.csv / train_agent1.csv / test.csv plus a scenario.json
// sidecar into dir; load restores the same ScenarioData bit for bit.
void save_scenario(const ScenarioData& data, const std::string& dir);
ScenarioData load_scenario(const std::string& dir);

}  // namespace mgm
