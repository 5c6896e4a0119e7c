#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "mgm/common.hpp"
#include "mgm/mat.hpp"
#include "mgm/rng.hpp"
#include "mgm/synth.hpp"

using namespace mgm;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Kolmogorov-Smirnov statistic of a sample against U(lo, hi).
double ks_uniform(std::vector<double> sample, double lo, double hi) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (size_t i = 0; i < sample.size(); ++i) {
    const double f = std::clamp((sample[i] - lo) / (hi - lo), 0.0, 1.0);
    d = std::max(d, std::fabs(f - static_cast<double>(i) / n));
    d = std::max(d, std::fabs(f - static_cast<double>(i + 1) / n));
  }
  return d;
}

std::string temp_dir(const char* tag) {
  const auto dir = std::filesystem::temp_directory_path() / (std::string("mgm_synth_") + tag);
  std::filesystem::remove_all(dir);
  return dir.string();
}

long region_count(const Mat& pts, const double threshold[2]) {
  long c = 0;
  for (long i = 0; i < pts.rows; ++i) {
    if (in_bias_region(pts.at(i, 0), pts.at(i, 1), threshold)) ++c;
  }
  return c;
}

std::multiset<std::pair<double, double>> row_set(const Mat& m) {
  std::multiset<std::pair<double, double>> s;
  for (long i = 0; i < m.rows; ++i) s.insert({m.at(i, 0), m.at(i, 1)});
  return s;
}

bool rows_subset(const Mat& small, const Mat& big) {
  auto bigset = row_set(big);
  for (long i = 0; i < small.rows; ++i) {
    const auto it = bigset.find({small.at(i, 0), small.at(i, 1)});
    if (it == bigset.end()) return false;
    bigset.erase(it);
  }
  return true;
}

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("swiss roll rejects n=0 and reproduces from the seed") {
  CHECK_THROWS_AS(swiss_roll(0, 1), std::invalid_argument);
  const Mat a = swiss_roll(1, 7);
  const Mat b = swiss_roll(1, 7);
  CHECK(a.v == b.v);
  const Mat c = swiss_roll(1, 8);
  CHECK(a.v != c.v);
}

TEST_CASE("swiss roll stays inside the parametrization bound") {
  const SwissRollConfig cfg;
  const double bound = 4.5 * kPi * cfg.radius_scale + 5.0 * cfg.noise;
  const Mat pts = swiss_roll(20000, 11);
  for (long i = 0; i < pts.rows; ++i) {
    CHECK(std::hypot(pts.at(i, 0), pts.at(i, 1)) <= bound);
  }
}

TEST_CASE("swiss roll parameter recovered from the radius is uniform") {
  const Mat pts = swiss_roll(100000, 13);
  std::vector<double> t_hat(static_cast<size_t>(pts.rows));
  for (long i = 0; i < pts.rows; ++i) {
    t_hat[static_cast<size_t>(i)] = 15.0 * std::hypot(pts.at(i, 0), pts.at(i, 1));
  }
  CHECK(ks_uniform(std::move(t_hat), 1.5 * kPi, 4.5 * kPi) < 0.02);
}

TEST_CASE("gaussian2d with zero covariance collapses to the mean") {
  const double mean[2] = {1.5, -2.0};
  const Mat pts = gaussian2d(100, mean, Mat::zeros(2, 2), 3);
  for (long i = 0; i < pts.rows; ++i) {
    CHECK(pts.at(i, 0) == 1.5);
    CHECK(pts.at(i, 1) == -2.0);
  }
}

TEST_CASE("gaussian2d sample statistics match the requested moments") {
  const double mean[2] = {0.0, 0.0};
  const Mat cov(2, 2, {0.25, 0.1, 0.1, 0.5});
  const Mat pts = gaussian2d(100000, mean, cov, 17);
  double m0 = 0.0, m1 = 0.0;
  for (long i = 0; i < pts.rows; ++i) {
    m0 += pts.at(i, 0);
    m1 += pts.at(i, 1);
  }
  m0 /= static_cast<double>(pts.rows);
  m1 /= static_cast<double>(pts.rows);
  CHECK(std::fabs(m0) < 0.02);
  CHECK(std::fabs(m1) < 0.02);
  double s00 = 0.0, s01 = 0.0, s11 = 0.0;
  for (long i = 0; i < pts.rows; ++i) {
    const double d0 = pts.at(i, 0) - m0;
    const double d1 = pts.at(i, 1) - m1;
    s00 += d0 * d0;
    s01 += d0 * d1;
    s11 += d1 * d1;
  }
  const double n1 = static_cast<double>(pts.rows - 1);
  CHECK(std::fabs(s00 / n1 - 0.25) < 0.05 * 0.25);
  CHECK(std::fabs(s01 / n1 - 0.1) < 0.05 * 0.1);
  CHECK(std::fabs(s11 / n1 - 0.5) < 0.05 * 0.5);
}

TEST_CASE("gaussian2d rejects bad covariances") {
  const double mean[2] = {0.0, 0.0};
  CHECK_THROWS_AS(gaussian2d(10, mean, Mat(2, 2, {1.0, 2.0, 2.0, 1.0}), 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(gaussian2d(10, mean, Mat(2, 2, {1.0, 0.5, 0.2, 1.0}), 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(gaussian2d(10, mean, Mat(1, 2, {1.0, 0.0}), 1), std::invalid_argument);
  CHECK_THROWS_AS(gaussian2d(0, mean, Mat::zeros(2, 2), 1), std::invalid_argument);
}

TEST_CASE("scenario names round trip") {
  long n = 0;
  CHECK(scenario_from_name("full", &n) == ScenarioKind::kFull);
  CHECK(scenario_from_name("bias100", &n) == ScenarioKind::kBias100);
  CHECK(scenario_from_name("bias90", &n) == ScenarioKind::kBias90);
  CHECK(scenario_from_name("low32", &n) == ScenarioKind::kLowN);
  CHECK(n == 32);
  CHECK(scenario_from_name("low64", &n) == ScenarioKind::kLowN);
  CHECK(n == 64);
  CHECK(scenario_name(ScenarioKind::kLowN, 32) == "low32");
  CHECK_THROWS_AS(scenario_from_name("lowX", &n), std::invalid_argument);
  CHECK_THROWS_AS(scenario_from_name("biased", &n), std::invalid_argument);
}

TEST_CASE("spec defaults and validation") {
  ScenarioSpec spec;
  CHECK(spec.n_train == 128000);
  CHECK(spec.n_test == 2000);
  CHECK_NOTHROW(spec.validate());
  spec.beta = 1.5;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec.beta = 0.5;
  spec.kind = ScenarioKind::kLowN;
  spec.low_n = 0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec.low_n = spec.n_train + 1;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec.n_test = 0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}

TEST_CASE("full scenario keeps every row and the mixer identity holds") {
  ScenarioSpec spec;
  spec.kind = ScenarioKind::kFull;
  spec.beta = 0.7;
  spec.n_train = 4000;
  spec.n_test = 500;
  spec.seed = 21;
  const ScenarioData d = make_scenario(spec);
  CHECK(d.train_x1.rows == 4000);
  CHECK(d.train_x1.v == d.train_x1_full.v);
  CHECK(d.test_x1.rows == 500);
  for (long i = 0; i < d.train_y.rows; ++i) {
    for (long j = 0; j < 2; ++j) {
      const double want = 0.7 * d.train_x1_full.at(i, j) + 0.3 * d.train_x2.at(i, j);
      CHECK(std::fabs(d.train_y.at(i, j) - want) < 1e-12);
    }
  }
  for (long i = 0; i < d.test_y.rows; ++i) {
    for (long j = 0; j < 2; ++j) {
      const double want = 0.7 * d.test_x1.at(i, j) + 0.3 * d.test_x2.at(i, j);
      CHECK(std::fabs(d.test_y.at(i, j) - want) < 1e-12);
    }
  }
}

TEST_CASE("default sample count is the documented 128000") {
  ScenarioSpec spec;
  spec.seed = 5;
  const ScenarioData d = make_scenario(spec);
  CHECK(d.train_x1_full.rows == 128000);
  CHECK(d.train_x1.rows == 128000);
  CHECK(d.test_x1.rows == 2000);
}

TEST_CASE("bias100 empties the masked region but the test set still covers it") {
  ScenarioSpec spec;
  spec.kind = ScenarioKind::kBias100;
  spec.n_train = 6000;
  spec.n_test = 1500;
  spec.seed = 22;
  const ScenarioData d = make_scenario(spec);

  // Thresholds are the per-coordinate nearest-rank 60th percentiles.
  for (int c = 0; c < 2; ++c) {
    std::vector<double> col(static_cast<size_t>(spec.n_train));
    for (long i = 0; i < spec.n_train; ++i) col[static_cast<size_t>(i)] = d.train_x1_full.at(i, c);
    std::sort(col.begin(), col.end());
    CHECK(d.mask_threshold[c] == col[static_cast<size_t>(std::ceil(0.6 * 6000)) - 1]);
  }

  CHECK(region_count(d.train_x1, d.mask_threshold) == 0);
  const long removed = region_count(d.train_x1_full, d.mask_threshold);
  CHECK(removed > 0);
  CHECK(d.train_x1.rows == spec.n_train - removed);
  CHECK(region_count(d.test_x1, d.mask_threshold) > 0);
  CHECK(rows_subset(d.train_x1, d.train_x1_full));
}

TEST_CASE("bias90 retains exactly the ceiling of ten percent in region") {
  ScenarioSpec spec;
  spec.kind = ScenarioKind::kBias90;
  spec.n_train = 5000;
  spec.n_test = 200;
  spec.seed = 23;
  const ScenarioData d = make_scenario(spec);
  const long region_full = region_count(d.train_x1_full, d.mask_threshold);
  const long region_kept = region_count(d.train_x1, d.mask_threshold);
  CHECK(region_kept ==
        static_cast<long>(std::ceil(0.1 * static_cast<double>(region_full))));
  const long outside = spec.n_train - region_full;
  CHECK(d.train_x1.rows == outside + region_kept);
  CHECK(rows_subset(d.train_x1, d.train_x1_full));
}

TEST_CASE("low data scenarios keep an exact subset of the draw") {
  for (long size : {32L, 64L}) {
    ScenarioSpec spec;
    spec.kind = ScenarioKind::kLowN;
    spec.low_n = size;
    spec.n_train = 3000;
    spec.n_test = 100;
    spec.seed = 24;
    const ScenarioData d = make_scenario(spec);
    CHECK(d.train_x1.rows == size);
    CHECK(d.train_x1_full.rows == 3000);
    CHECK(rows_subset(d.train_x1, d.train_x1_full));
  }
}

TEST_CASE("scenarios are reproducible and respond to the seed") {
  ScenarioSpec spec;
  spec.kind = ScenarioKind::kBias90;
  spec.n_train = 2000;
  spec.n_test = 100;
  spec.seed = 25;
  const ScenarioData a = make_scenario(spec);
  const ScenarioData b = make_scenario(spec);
  CHECK(a.train_x1_full.v == b.train_x1_full.v);
  CHECK(a.train_x1.v == b.train_x1.v);
  CHECK(a.test_y.v == b.test_y.v);
  spec.seed = 26;
  const ScenarioData c = make_scenario(spec);
  CHECK(a.train_x1_full.v != c.train_x1_full.v);
}

TEST_CASE("csv writing round trips bit exactly") {
  const std::string dir = temp_dir("csv");
  std::filesystem::create_directories(dir);
  const std::string path = dir + "/t.csv";
  Rng rng(31);
  Mat m(50, 3);
  for (auto& x : m.v) x = rng.uniform(-1e3, 1e3) * std::pow(10.0, rng.uniform(-12, 12));
  m.at(0, 0) = 0.1 + 0.2;  // classic rounding witness
  m.at(0, 1) = -0.0;
  write_csv(path, {"a", "b", "c"}, m);
  const CsvFile back = read_csv(path);
  CHECK(back.header == std::vector<std::string>{"a", "b", "c"});
  REQUIRE(back.data.rows == 50);
  for (size_t i = 0; i < m.v.size(); ++i) {
    CHECK(std::memcmp(&back.data.v[i], &m.v[i], sizeof(double)) == 0);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("csv reader rejects malformed input") {
  const std::string dir = temp_dir("badcsv");
  std::filesystem::create_directories(dir);
  CHECK_THROWS_AS(read_csv(dir + "/absent.csv"), IoError);
  {
    std::ofstream f(dir + "/ragged.csv");
    f << "a,b\n1,2\n3\n";
  }
  CHECK_THROWS_AS(read_csv(dir + "/ragged.csv"), IoError);
  {
    std::ofstream f(dir + "/text.csv");
    f << "a,b\n1,banana\n";
  }
  CHECK_THROWS_AS(read_csv(dir + "/text.csv"), IoError);
  CHECK_THROWS_AS(write_csv(dir + "/w.csv", {"a"}, Mat(1, 2, {1.0, 2.0})),
                  std::invalid_argument);
  std::filesystem::remove_all(dir);
}

TEST_CASE("scenario files round trip through disk") {
  ScenarioSpec spec;
  spec.kind = ScenarioKind::kBias100;
  spec.beta = 0.3;
  spec.n_train = 1500;
  spec.n_test = 120;
  spec.seed = 33;
  const ScenarioData d = make_scenario(spec);
  const std::string dir = temp_dir("scenario");
  save_scenario(d, dir);
  const ScenarioData back = load_scenario(dir);
  CHECK(back.spec.kind == spec.kind);
  CHECK(back.spec.beta == spec.beta);
  CHECK(back.spec.n_train == spec.n_train);
  CHECK(back.spec.seed == spec.seed);
  CHECK(back.mask_threshold[0] == d.mask_threshold[0]);
  CHECK(back.mask_threshold[1] == d.mask_threshold[1]);
  CHECK(back.train_x1_full.v == d.train_x1_full.v);
  CHECK(back.train_x1.v == d.train_x1.v);
  CHECK(back.train_x2.v == d.train_x2.v);
  CHECK(back.train_y.v == d.train_y.v);
  CHECK(back.test_x1.v == d.test_x1.v);
  CHECK(back.test_y.v == d.test_y.v);
  CHECK_THROWS_AS(load_scenario(dir + "/nope"), IoError);
  std::filesystem::remove_all(dir);
}

}  // TEST_SUITE("synth")
