#pragma once

#include <cstdint>
#include <vector>

#include "mgm/mat.hpp"
#include "mgm/ot.hpp"

namespace mgm {

// Finite model of the mixing pipeline: independent agents with finite
// supports feed a stochastic kernel that emits a point in Y.  Agent i0 is
// the one whose marginal gets swapped between a reference and a generator
// version; everything downstream of that swap is computable exactly here.
struct DiscreteSystem {
  std::vector<Mat> supports;                   // per agent, rows are points
  std::vector<std::vector<double>> marginals;  // per agent, reference law
  long i0 = 0;
  std::vector<double> gen_marginal;  // generator law for agent i0
  Mat y_support;                     // rows are output points
  Mat kernel;                        // joint config rows -> law over y_support

  long agent_count() const { return static_cast<long>(supports.size()); }
  long joint_count() const;
  // Mixed-radix joint index; agent 0 is the most significant digit.
  long joint_index(const std::vector<long>& cfg) const;
  std::vector<long> joint_config(long index) const;

  void validate() const;
};

// Law of the output when agent i0 draws from `marginal_i0` and every other
// agent draws from its reference marginal.
std::vector<double> output_marginal(const DiscreteSystem& sys,
                                    const std::vector<double>& marginal_i0);

// Pairwise table over the i0 support: expected Wasserstein-1 distance
// between the conditional output laws of two i0 values, averaged over the
// partner agents.
Mat induced_d0(const DiscreteSystem& sys, Metric y_metric);

// Wasserstein-1 between the output laws of two joint agent configurations
// (kernel rows), under a point metric on the output support.
double w1_between_conditionals(const DiscreteSystem& sys, long cfg_a, long cfg_b,
                               Metric y_metric);

struct IdentityReport {
  double lhs = 0.0;  // W1 between the two output laws
  double rhs = 0.0;  // transport cost between the i0 marginals under d0
  double gap = 0.0;
  bool lhs_le_rhs = false;  // the direction that holds for every system
};

// Compares the output-space distance with the induced transport cost on the
// swapped agent.  The inequality lhs <= rhs always holds; the report shows
// how far the two sides actually are for this system.
IdentityReport verify_identity(const DiscreteSystem& sys, Metric y_metric);

// Same comparison, but the coupling between the i0 marginals is the one
// optimal for a ground distance table on the i0 points; the induced table is
// then priced under that plan.  Since the plan ignores the induced distances,
// this rhs is never below the one from verify_identity.  ground must satisfy
// the metric axioms or the call is rejected.
IdentityReport verify_identity_coupled(const DiscreteSystem& sys, const Mat& ground,
                                       Metric y_metric);

// Convenience overload: ground distances measured between the i0 support
// points themselves.
IdentityReport verify_identity_coupled(const DiscreteSystem& sys, Metric ground,
                                       Metric y_metric);

struct InducedMetricReport {
  bool symmetric = false;
  bool zero_diagonal = false;
  bool triangle = false;
  bool pseudo_metric = false;          // the three axioms above
  bool positive_off_diagonal = false;  // full metric
  bool slice_injective = false;        // some positive-probability partner
                                       // config separates every value pair
  long zero_pair_a = -1, zero_pair_b = -1;  // witness when d0 degenerates
};

// Checks the metric axioms of the induced table and whether degeneracy is
// exactly explained by indistinguishable i0 values.
InducedMetricReport verify_induced_metric(const DiscreteSystem& sys, Metric y_metric);

struct SystemSpec {
  std::vector<long> support_sizes;  // one entry per agent
  long y_size = 4;
  long i0 = 0;
  bool deterministic_kernel = false;
};

// Seeded random system on integer grid points; kernel rows are Dirichlet(1)
// draws, or point masses when deterministic_kernel is set.
DiscreteSystem random_system(const SystemSpec& spec, std::uint64_t seed);

// Deterministic scalar mixer y = sum_i beta[i] * value_i.  Agent supports
// and the output support are 1-d points; the output support holds every
// reachable sum.
DiscreteSystem linear_mixer_system(const std::vector<std::vector<double>>& agent_values,
                                   const std::vector<std::vector<double>>& ref_marginals,
                                   long i0, const std::vector<double>& gen_marginal,
                                   const std::vector<double>& betas);

}  // namespace mgm
