#pragma once

#include <string>
#include <vector>

#include "mgm/mat.hpp"

namespace mgm {

enum class Metric { kEuclidean, kManhattan, kDiscrete };

Metric metric_from_name(const std::string& name);
const char* metric_name(Metric m);

double point_distance(const double* a, const double* b, long dim, Metric m);

// Pairwise distance table between the rows of two point sets.
Mat distance_matrix(const Mat& a, const Mat& b, Metric m);

// Finitely supported distribution over points in R^d.
struct DiscreteDistribution {
  Mat support;               // n x d
  std::vector<double> prob;  // non-negative, sums to 1 within 1e-12

  void validate() const;
};

// Exact solution of the discrete transport problem.
struct TransportPlan {
  Mat coupling;           // row marginals = a, column marginals = b
  std::vector<double> f;  // dual potential on the source side
  std::vector<double> g;  // dual potential on the target side
  double objective = 0.0;
};

// Exact Wasserstein-1 between discrete distributions under an arbitrary
// non-negative cost table, via the transportation simplex.  Degenerate pivot
// ties are broken by lowest index, so the result is deterministic.  The
// returned plan satisfies f[i] + g[j] <= cost(i,j) + 1e-9 everywhere and
// closes the primal-dual gap below 1e-9.
TransportPlan w1_discrete_cost(const std::vector<double>& a,
                               const std::vector<double>& b, const Mat& cost);

TransportPlan w1_discrete(const DiscreteDistribution& a, const DiscreteDistribution& b,
                          Metric metric);

// Exact Wasserstein-1 between two equal-size point clouds with uniform
// weights, via an exact assignment solver.
double w1_empirical(const Mat& a, const Mat& b, Metric metric);

}  // namespace mgm
