#include "mgm/theory.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "mgm/rng.hpp"

namespace mgm {

long DiscreteSystem::joint_count() const {
  long n = 1;
  for (const Mat& s : supports) n *= s.rows;
  return n;
}

long DiscreteSystem::joint_index(const std::vector<long>& cfg) const {
  if (cfg.size() != supports.size()) {
    throw std::invalid_argument("joint_index: wrong config length");
  }
  long idx = 0;
  for (size_t i = 0; i < cfg.size(); ++i) {
    if (cfg[i] < 0 || cfg[i] >= supports[i].rows) {
      throw std::invalid_argument("joint_index: value out of range for agent " +
                                  std::to_string(i));
    }
    idx = idx * supports[i].rows + cfg[i];
  }
  return idx;
}

std::vector<long> DiscreteSystem::joint_config(long index) const {
  std::vector<long> cfg(supports.size(), 0);
  for (size_t i = supports.size(); i-- > 0;) {
    cfg[i] = index % supports[i].rows;
    index /= supports[i].rows;
  }
  return cfg;
}

void DiscreteSystem::validate() const {
  if (supports.empty()) throw std::invalid_argument("system: no agents");
  if (marginals.size() != supports.size()) {
    throw std::invalid_argument("system: marginal count does not match agent count");
  }
  if (i0 < 0 || i0 >= agent_count()) throw std::invalid_argument("system: i0 out of range");
  auto check_law = [](const std::vector<double>& p, long n, const std::string& what) {
    if (static_cast<long>(p.size()) != n) {
      throw std::invalid_argument("system: " + what + " has wrong size");
    }
    double s = 0.0;
    for (double x : p) {
      if (!(x >= 0.0)) throw std::invalid_argument("system: " + what + " has negative mass");
      s += x;
    }
    if (std::fabs(s - 1.0) > 1e-12) {
      throw std::invalid_argument("system: " + what + " sums to " + std::to_string(s));
    }
  };
  for (size_t i = 0; i < supports.size(); ++i) {
    if (supports[i].rows <= 0) throw std::invalid_argument("system: empty agent support");
    check_law(marginals[i], supports[i].rows, "marginal " + std::to_string(i));
  }
  check_law(gen_marginal, supports[static_cast<size_t>(i0)].rows, "generator marginal");
  if (y_support.rows <= 0) throw std::invalid_argument("system: empty output support");
  if (kernel.rows != joint_count() || kernel.cols != y_support.rows) {
    throw std::invalid_argument("system: kernel is " + kernel.shape_str() + ", expected " +
                                std::to_string(joint_count()) + "x" +
                                std::to_string(y_support.rows));
  }
  for (long r = 0; r < kernel.rows; ++r) {
    double s = 0.0;
    for (long c = 0; c < kernel.cols; ++c) {
      if (!(kernel.at(r, c) >= 0.0)) {
        throw std::invalid_argument("system: kernel row " + std::to_string(r) +
                                    " has negative mass");
      }
      s += kernel.at(r, c);
    }
    if (std::fabs(s - 1.0) > 1e-12) {
      throw std::invalid_argument("system: kernel row " + std::to_string(r) + " sums to " +
                                  std::to_string(s));
    }
  }
}

namespace {

// Partner configurations (all agents except i0) with their joint reference
// probability, in mixed-radix order.
struct PartnerSlice {
  std::vector<double> prob;
  std::vector<std::vector<long>> cfg;  // full-length configs, slot i0 left 0
};

PartnerSlice partner_slice(const DiscreteSystem& sys) {
  PartnerSlice out;
  const long agents = sys.agent_count();
  std::vector<long> cfg(static_cast<size_t>(agents), 0);
  // Odometer over every agent but i0.
  while (true) {
    double p = 1.0;
    for (long i = 0; i < agents; ++i) {
      if (i == sys.i0) continue;
      p *= sys.marginals[static_cast<size_t>(i)][static_cast<size_t>(cfg[static_cast<size_t>(i)])];
    }
    out.prob.push_back(p);
    out.cfg.push_back(cfg);
    long i = agents - 1;
    while (i >= 0) {
      if (i == sys.i0) {
        --i;
        continue;
      }
      if (++cfg[static_cast<size_t>(i)] < sys.supports[static_cast<size_t>(i)].rows) break;
      cfg[static_cast<size_t>(i)] = 0;
      --i;
    }
    if (i < 0) break;
  }
  return out;
}

std::vector<double> dirichlet_row(Rng& rng, long n) {
  std::vector<double> p(static_cast<size_t>(n));
  double s = 0.0;
  for (auto& x : p) {
    x = -std::log(1.0 - rng.uniform());
    s += x;
  }
  for (auto& x : p) x /= s;
  double again = 0.0;
  for (double x : p) again += x;
  p[0] += 1.0 - again;
  if (p[0] < 0.0) p[0] = 0.0;
  return p;
}

// Distinct points from the 5x5 integer grid.
Mat grid_points(Rng& rng, long n) {
  if (n > 25) throw std::invalid_argument("random_system: support larger than the grid");
  std::vector<long> cells(25);
  for (long i = 0; i < 25; ++i) cells[static_cast<size_t>(i)] = i;
  for (long i = 0; i < n; ++i) {
    const long j = i + static_cast<long>(rng.index(static_cast<size_t>(25 - i)));
    std::swap(cells[static_cast<size_t>(i)], cells[static_cast<size_t>(j)]);
  }
  Mat pts(n, 2);
  for (long i = 0; i < n; ++i) {
    pts.at(i, 0) = static_cast<double>(cells[static_cast<size_t>(i)] % 5);
    pts.at(i, 1) = static_cast<double>(cells[static_cast<size_t>(i)] / 5);
  }
  return pts;
}

}  // namespace

std::vector<double> output_marginal(const DiscreteSystem& sys,
                                    const std::vector<double>& marginal_i0) {
  const size_t i0 = static_cast<size_t>(sys.i0);
  if (marginal_i0.size() != static_cast<size_t>(sys.supports[i0].rows)) {
    throw std::invalid_argument("output_marginal: marginal has wrong size");
  }
  std::vector<double> out(static_cast<size_t>(sys.y_support.rows), 0.0);
  const PartnerSlice slice = partner_slice(sys);
  for (size_t k = 0; k < slice.prob.size(); ++k) {
    std::vector<long> cfg = slice.cfg[k];
    for (long x = 0; x < sys.supports[i0].rows; ++x) {
      cfg[i0] = x;
      const double w = slice.prob[k] * marginal_i0[static_cast<size_t>(x)];
      if (w == 0.0) continue;
      const long row = sys.joint_index(cfg);
      for (long y = 0; y < sys.y_support.rows; ++y) {
        out[static_cast<size_t>(y)] += w * sys.kernel.at(row, y);
      }
    }
  }
  return out;
}

Mat induced_d0(const DiscreteSystem& sys, Metric y_metric) {
  const size_t i0 = static_cast<size_t>(sys.i0);
  const long nx = sys.supports[i0].rows;
  const long ny = sys.y_support.rows;
  const Mat dy = distance_matrix(sys.y_support, sys.y_support, y_metric);
  const PartnerSlice slice = partner_slice(sys);
  Mat d0 = Mat::zeros(nx, nx);
  for (long a = 0; a < nx; ++a) {
    for (long b = a + 1; b < nx; ++b) {
      double acc = 0.0;
      for (size_t k = 0; k < slice.prob.size(); ++k) {
        if (slice.prob[k] == 0.0) continue;
        std::vector<long> cfg = slice.cfg[k];
        cfg[i0] = a;
        const long ra = sys.joint_index(cfg);
        cfg[i0] = b;
        const long rb = sys.joint_index(cfg);
        std::vector<double> pa(static_cast<size_t>(ny)), pb(static_cast<size_t>(ny));
        for (long y = 0; y < ny; ++y) {
          pa[static_cast<size_t>(y)] = sys.kernel.at(ra, y);
          pb[static_cast<size_t>(y)] = sys.kernel.at(rb, y);
        }
        acc += slice.prob[k] * w1_discrete_cost(pa, pb, dy).objective;
      }
      d0.at(a, b) = acc;
      d0.at(b, a) = acc;
    }
  }
  return d0;
}

double w1_between_conditionals(const DiscreteSystem& sys, long cfg_a, long cfg_b,
                               Metric y_metric) {
  if (cfg_a < 0 || cfg_a >= sys.kernel.rows || cfg_b < 0 || cfg_b >= sys.kernel.rows) {
    throw std::invalid_argument(
        "w1_between_conditionals: configuration index out of range");
  }
  const long ny = sys.y_support.rows;
  std::vector<double> pa(static_cast<size_t>(ny)), pb(static_cast<size_t>(ny));
  for (long y = 0; y < ny; ++y) {
    pa[static_cast<size_t>(y)] = sys.kernel.at(cfg_a, y);
    pb[static_cast<size_t>(y)] = sys.kernel.at(cfg_b, y);
  }
  const Mat dy = distance_matrix(sys.y_support, sys.y_support, y_metric);
  return w1_discrete_cost(pa, pb, dy).objective;
}

IdentityReport verify_identity(const DiscreteSystem& sys, Metric y_metric) {
  sys.validate();
  const size_t i0 = static_cast<size_t>(sys.i0);
  const Mat dy = distance_matrix(sys.y_support, sys.y_support, y_metric);
  const std::vector<double> py_ref = output_marginal(sys, sys.marginals[i0]);
  const std::vector<double> py_gen = output_marginal(sys, sys.gen_marginal);

  IdentityReport rep;
  rep.lhs = w1_discrete_cost(py_ref, py_gen, dy).objective;
  const Mat d0 = induced_d0(sys, y_metric);
  rep.rhs = w1_discrete_cost(sys.marginals[i0], sys.gen_marginal, d0).objective;
  rep.gap = std::fabs(rep.lhs - rep.rhs);
  rep.lhs_le_rhs = rep.lhs <= rep.rhs + 1e-9;
  return rep;
}

namespace {

void require_metric_table(const Mat& d, long n) {
  if (d.rows != n || d.cols != n) {
    throw std::invalid_argument("identity: ground table must be " + std::to_string(n) +
                                "x" + std::to_string(n) + ", got " + d.shape_str());
  }
  for (long a = 0; a < n; ++a) {
    if (std::fabs(d.at(a, a)) > 1e-12) {
      throw std::invalid_argument("identity: ground table has a nonzero diagonal");
    }
    for (long b = 0; b < n; ++b) {
      if (std::fabs(d.at(a, b) - d.at(b, a)) > 1e-12) {
        throw std::invalid_argument("identity: ground table is not symmetric");
      }
      if (a != b && !(d.at(a, b) > 0.0)) {
        throw std::invalid_argument("identity: ground table is not positive off-diagonal");
      }
      for (long c = 0; c < n; ++c) {
        if (d.at(a, c) > d.at(a, b) + d.at(b, c) + 1e-9) {
          throw std::invalid_argument("identity: ground table violates the triangle inequality");
        }
      }
    }
  }
}

}  // namespace

IdentityReport verify_identity_coupled(const DiscreteSystem& sys, const Mat& ground,
                                       Metric y_metric) {
  sys.validate();
  const size_t i0 = static_cast<size_t>(sys.i0);
  require_metric_table(ground, sys.supports[i0].rows);

  const Mat dy = distance_matrix(sys.y_support, sys.y_support, y_metric);
  const std::vector<double> py_ref = output_marginal(sys, sys.marginals[i0]);
  const std::vector<double> py_gen = output_marginal(sys, sys.gen_marginal);

  IdentityReport rep;
  rep.lhs = w1_discrete_cost(py_ref, py_gen, dy).objective;
  const Mat plan = w1_discrete_cost(sys.marginals[i0], sys.gen_marginal, ground).coupling;
  const Mat d0 = induced_d0(sys, y_metric);
  rep.rhs = 0.0;
  for (long a = 0; a < plan.rows; ++a) {
    for (long b = 0; b < plan.cols; ++b) rep.rhs += plan.at(a, b) * d0.at(a, b);
  }
  rep.gap = std::fabs(rep.lhs - rep.rhs);
  rep.lhs_le_rhs = rep.lhs <= rep.rhs + 1e-9;
  return rep;
}

IdentityReport verify_identity_coupled(const DiscreteSystem& sys, Metric ground,
                                       Metric y_metric) {
  sys.validate();
  const size_t i0 = static_cast<size_t>(sys.i0);
  return verify_identity_coupled(
      sys, distance_matrix(sys.supports[i0], sys.supports[i0], ground), y_metric);
}

InducedMetricReport verify_induced_metric(const DiscreteSystem& sys, Metric y_metric) {
  sys.validate();
  const size_t i0 = static_cast<size_t>(sys.i0);
  const long nx = sys.supports[i0].rows;
  const long ny = sys.y_support.rows;
  const Mat d0 = induced_d0(sys, y_metric);

  InducedMetricReport rep;
  rep.symmetric = true;
  rep.zero_diagonal = true;
  rep.triangle = true;
  rep.positive_off_diagonal = true;
  for (long a = 0; a < nx; ++a) {
    if (std::fabs(d0.at(a, a)) > 1e-12) rep.zero_diagonal = false;
    for (long b = 0; b < nx; ++b) {
      if (std::fabs(d0.at(a, b) - d0.at(b, a)) > 1e-12) rep.symmetric = false;
      if (a != b && d0.at(a, b) <= 1e-12) {
        rep.positive_off_diagonal = false;
        if (rep.zero_pair_a < 0) {
          rep.zero_pair_a = a;
          rep.zero_pair_b = b;
        }
      }
      for (long c = 0; c < nx; ++c) {
        if (d0.at(a, c) > d0.at(a, b) + d0.at(b, c) + 1e-9) rep.triangle = false;
      }
    }
  }
  rep.pseudo_metric = rep.symmetric && rep.zero_diagonal && rep.triangle;

  // A pair of i0 values is separated when some partner configuration with
  // positive probability gives them different conditional output laws.
  rep.slice_injective = true;
  const PartnerSlice slice = partner_slice(sys);
  for (long a = 0; a < nx && rep.slice_injective; ++a) {
    for (long b = a + 1; b < nx && rep.slice_injective; ++b) {
      bool separated = false;
      for (size_t k = 0; k < slice.prob.size() && !separated; ++k) {
        if (slice.prob[k] == 0.0) continue;
        std::vector<long> cfg = slice.cfg[k];
        cfg[i0] = a;
        const long ra = sys.joint_index(cfg);
        cfg[i0] = b;
        const long rb = sys.joint_index(cfg);
        for (long y = 0; y < ny; ++y) {
          if (std::fabs(sys.kernel.at(ra, y) - sys.kernel.at(rb, y)) > 1e-12) {
            separated = true;
            break;
          }
        }
      }
      if (!separated) rep.slice_injective = false;
    }
  }
  return rep;
}

DiscreteSystem random_system(const SystemSpec& spec, std::uint64_t seed) {
  if (spec.support_sizes.empty()) throw std::invalid_argument("random_system: no agents");
  DiscreteSystem sys;
  sys.i0 = spec.i0;
  Rng support_rng(derive_seed(seed, "system_supports"));
  Rng law_rng(derive_seed(seed, "system_laws"));
  Rng kernel_rng(derive_seed(seed, "system_kernel"));
  for (long n : spec.support_sizes) {
    sys.supports.push_back(grid_points(support_rng, n));
    sys.marginals.push_back(dirichlet_row(law_rng, n));
  }
  sys.gen_marginal = dirichlet_row(law_rng, spec.support_sizes[static_cast<size_t>(spec.i0)]);
  sys.y_support = grid_points(support_rng, spec.y_size);
  sys.kernel = Mat::zeros(sys.joint_count(), spec.y_size);
  for (long r = 0; r < sys.kernel.rows; ++r) {
    if (spec.deterministic_kernel) {
      sys.kernel.at(r, static_cast<long>(kernel_rng.index(static_cast<size_t>(spec.y_size)))) =
          1.0;
    } else {
      const auto row = dirichlet_row(kernel_rng, spec.y_size);
      for (long c = 0; c < spec.y_size; ++c) sys.kernel.at(r, c) = row[static_cast<size_t>(c)];
    }
  }
  sys.validate();
  return sys;
}

DiscreteSystem linear_mixer_system(const std::vector<std::vector<double>>& agent_values,
                                   const std::vector<std::vector<double>>& ref_marginals,
                                   long i0, const std::vector<double>& gen_marginal,
                                   const std::vector<double>& betas) {
  if (agent_values.empty() || agent_values.size() != ref_marginals.size() ||
      agent_values.size() != betas.size()) {
    throw std::invalid_argument("linear_mixer_system: inconsistent agent lists");
  }
  DiscreteSystem sys;
  sys.i0 = i0;
  sys.gen_marginal = gen_marginal;
  for (size_t i = 0; i < agent_values.size(); ++i) {
    const long n = static_cast<long>(agent_values[i].size());
    Mat pts(n, 1);
    for (long k = 0; k < n; ++k) pts.at(k, 0) = agent_values[i][static_cast<size_t>(k)];
    sys.supports.push_back(std::move(pts));
    sys.marginals.push_back(ref_marginals[i]);
  }

  // Collect every reachable weighted sum as the output support.
  const long joints = sys.joint_count();
  std::vector<double> sums(static_cast<size_t>(joints));
  for (long r = 0; r < joints; ++r) {
    const auto cfg = sys.joint_config(r);
    double y = 0.0;
    for (size_t i = 0; i < betas.size(); ++i) {
      y += betas[i] * agent_values[i][static_cast<size_t>(cfg[i])];
    }
    sums[static_cast<size_t>(r)] = y;
  }
  std::vector<double> levels = sums;
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  sys.y_support = Mat(static_cast<long>(levels.size()), 1, levels);
  sys.kernel = Mat::zeros(joints, sys.y_support.rows);
  for (long r = 0; r < joints; ++r) {
    const auto it = std::lower_bound(levels.begin(), levels.end(), sums[static_cast<size_t>(r)]);
    sys.kernel.at(r, static_cast<long>(it - levels.begin())) = 1.0;
  }
  sys.validate();
  return sys;
}

}  // namespace mgm
