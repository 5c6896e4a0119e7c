#include "mgm/ot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <stdexcept>
#include <vector>

#include "mgm/common.hpp"

namespace mgm {

Metric metric_from_name(const std::string& name) {
  if (name == "euclidean" || name == "euclid") return Metric::kEuclidean;
  if (name == "manhattan") return Metric::kManhattan;
  if (name == "discrete") return Metric::kDiscrete;
  throw std::invalid_argument("unknown metric: " + name);
}

const char* metric_name(Metric m) {
  switch (m) {
    case Metric::kEuclidean: return "euclidean";
    case Metric::kManhattan: return "manhattan";
    case Metric::kDiscrete: return "discrete";
  }
  std::abort();
}

double point_distance(const double* a, const double* b, long dim, Metric m) {
  switch (m) {
    case Metric::kEuclidean: {
      double s = 0.0;
      for (long k = 0; k < dim; ++k) {
        const double d = a[k] - b[k];
        s += d * d;
      }
      return std::sqrt(s);
    }
    case Metric::kManhattan: {
      double s = 0.0;
      for (long k = 0; k < dim; ++k) s += std::fabs(a[k] - b[k]);
      return s;
    }
    case Metric::kDiscrete: {
      for (long k = 0; k < dim; ++k) {
        if (a[k] != b[k]) return 1.0;
      }
      return 0.0;
    }
  }
  std::abort();
}

Mat distance_matrix(const Mat& a, const Mat& b, Metric m) {
  if (a.cols != b.cols) {
    throw std::invalid_argument("distance_matrix: dimension mismatch: " + a.shape_str() +
                                " vs " + b.shape_str());
  }
  Mat out = Mat::zeros(a.rows, b.rows);
  for (long i = 0; i < a.rows; ++i) {
    const double* pa = &a.v[static_cast<size_t>(i) * a.cols];
    for (long j = 0; j < b.rows; ++j) {
      out.at(i, j) = point_distance(pa, &b.v[static_cast<size_t>(j) * b.cols], a.cols, m);
    }
  }
  return out;
}

void DiscreteDistribution::validate() const {
  if (support.rows <= 0) throw std::invalid_argument("distribution: empty support");
  if (static_cast<long>(prob.size()) != support.rows) {
    throw std::invalid_argument("distribution: " + std::to_string(prob.size()) +
                                " weights for " + std::to_string(support.rows) +
                                " support points");
  }
  double sum = 0.0;
  for (double p : prob) {
    if (!(p >= 0.0)) throw std::invalid_argument("distribution: negative weight");
    sum += p;
  }
  if (std::fabs(sum - 1.0) > 1e-12) {
    throw std::invalid_argument("distribution: weights sum to " + std::to_string(sum));
  }
}

namespace {

// Transportation simplex state.  The basis is a spanning tree over the
// bipartite graph of m source nodes and n target nodes with m+n-1 cells.
struct SimplexState {
  long m = 0, n = 0;
  std::vector<double> flow;   // m*n, nonzero only on basic cells
  std::vector<char> basic;    // m*n
  std::vector<double> u, v;   // dual potentials, u[0] fixed to 0

  long idx(long i, long j) const { return i * n + j; }
};

// Northwest-corner initial basis.  Exactly m+n-1 cells become basic; when a
// step exhausts both the row and the column, only the row advances, leaving
// a zero-flow basic cell behind.
void northwest_corner(SimplexState& s, std::vector<double> a, std::vector<double> b) {
  long i = 0, j = 0;
  while (true) {
    const double t = std::min(a[i], b[j]);
    s.flow[s.idx(i, j)] = t;
    s.basic[s.idx(i, j)] = 1;
    a[i] -= t;
    b[j] -= t;
    if (i == s.m - 1 && j == s.n - 1) break;
    if ((a[i] <= b[j] && i + 1 < s.m) || j + 1 >= s.n) {
      ++i;
    } else {
      ++j;
    }
  }
}

// Solves u[i] + v[j] = cost(i,j) on the basic cells by walking the tree.
void compute_duals(SimplexState& s, const Mat& cost) {
  const long m = s.m, n = s.n;
  std::vector<std::vector<long>> row_cells(m), col_cells(n);
  for (long i = 0; i < m; ++i) {
    for (long j = 0; j < n; ++j) {
      if (s.basic[s.idx(i, j)]) {
        row_cells[i].push_back(j);
        col_cells[j].push_back(i);
      }
    }
  }
  std::fill(s.u.begin(), s.u.end(), std::numeric_limits<double>::quiet_NaN());
  std::fill(s.v.begin(), s.v.end(), std::numeric_limits<double>::quiet_NaN());
  s.u[0] = 0.0;
  std::vector<long> stack = {0};  // rows 0..m-1, cols m..m+n-1
  while (!stack.empty()) {
    const long node = stack.back();
    stack.pop_back();
    if (node < m) {
      for (long j : row_cells[node]) {
        if (std::isnan(s.v[j])) {
          s.v[j] = cost.at(node, j) - s.u[node];
          stack.push_back(m + j);
        }
      }
    } else {
      const long j = node - m;
      for (long i : col_cells[j]) {
        if (std::isnan(s.u[i])) {
          s.u[i] = cost.at(i, j) - s.v[j];
          stack.push_back(i);
        }
      }
    }
  }
  for (long i = 0; i < m; ++i) {
    if (std::isnan(s.u[i])) throw NumericError("transport: basis is not connected");
  }
  for (long j = 0; j < n; ++j) {
    if (std::isnan(s.v[j])) throw NumericError("transport: basis is not connected");
  }
}

// Unique tree path from row node i0 to column node j0, returned as the list
// of basic cells along the way.
std::vector<std::pair<long, long>> tree_path(const SimplexState& s, long i0, long j0) {
  const long m = s.m, n = s.n;
  std::vector<std::vector<long>> row_cells(m), col_cells(n);
  for (long i = 0; i < m; ++i) {
    for (long j = 0; j < n; ++j) {
      if (s.basic[s.idx(i, j)]) {
        row_cells[i].push_back(j);
        col_cells[j].push_back(i);
      }
    }
  }
  // parent[node] = cell used to reach the node
  std::vector<std::pair<long, long>> parent(static_cast<size_t>(m + n), {-1, -1});
  std::vector<char> seen(static_cast<size_t>(m + n), 0);
  std::vector<long> queue = {i0};
  seen[i0] = 1;
  size_t head = 0;
  while (head < queue.size()) {
    const long node = queue[head++];
    if (node == m + j0) break;
    if (node < m) {
      for (long j : row_cells[node]) {
        if (!seen[m + j]) {
          seen[m + j] = 1;
          parent[m + j] = {node, j};
          queue.push_back(m + j);
        }
      }
    } else {
      const long j = node - m;
      for (long i : col_cells[j]) {
        if (!seen[i]) {
          seen[i] = 1;
          parent[i] = {i, j};
          queue.push_back(i);
        }
      }
    }
  }
  if (!seen[m + j0]) throw NumericError("transport: entering cell closes no cycle");
  std::vector<std::pair<long, long>> path;
  long node = m + j0;
  while (node != i0) {
    const auto cell = parent[node];
    path.push_back(cell);
    node = (node < m) ? m + cell.second : cell.first;
  }
  std::reverse(path.begin(), path.end());
  return path;
}

}  // namespace

TransportPlan w1_discrete_cost(const std::vector<double>& a, const std::vector<double>& b,
                               const Mat& cost) {
  const long m = static_cast<long>(a.size());
  const long n = static_cast<long>(b.size());
  if (m <= 0 || n <= 0) throw std::invalid_argument("transport: empty marginal");
  if (cost.rows != m || cost.cols != n) {
    throw std::invalid_argument("transport: cost table is " + cost.shape_str() +
                                ", marginals are " + std::to_string(m) + " and " +
                                std::to_string(n));
  }
  double sa = 0.0, sb = 0.0;
  for (double x : a) {
    if (!(x >= 0.0)) throw std::invalid_argument("transport: negative mass");
    sa += x;
  }
  for (double x : b) {
    if (!(x >= 0.0)) throw std::invalid_argument("transport: negative mass");
    sb += x;
  }
  if (std::fabs(sa - sb) > 1e-9) {
    throw std::invalid_argument("transport: marginals carry unequal mass");
  }
  for (double c : cost.v) {
    if (!std::isfinite(c)) throw std::invalid_argument("transport: non-finite cost");
  }

  SimplexState s;
  s.m = m;
  s.n = n;
  s.flow.assign(static_cast<size_t>(m) * n, 0.0);
  s.basic.assign(static_cast<size_t>(m) * n, 0);
  s.u.resize(m);
  s.v.resize(n);
  northwest_corner(s, a, b);

  const double kEnterTol = 1e-12;
  const long max_pivots = 4000 * (m + n);
  for (long pivot = 0;; ++pivot) {
    if (pivot >= max_pivots) throw NumericError("transport: pivot limit exceeded");
    compute_duals(s, cost);

    // Bland's rule: enter the lowest-index cell with negative reduced cost.
    long ei = -1, ej = -1;
    for (long i = 0; i < m && ei < 0; ++i) {
      for (long j = 0; j < n; ++j) {
        if (s.basic[s.idx(i, j)]) continue;
        if (cost.at(i, j) - s.u[i] - s.v[j] < -kEnterTol) {
          ei = i;
          ej = j;
          break;
        }
      }
    }
    if (ei < 0) break;

    const auto path = tree_path(s, ei, ej);
    // Entering cell gains flow; cells along the path alternate starting from
    // a losing cell (path[0] shares row ei with the entering cell).
    double theta = std::numeric_limits<double>::infinity();
    for (size_t k = 0; k < path.size(); k += 2) {
      theta = std::min(theta, s.flow[s.idx(path[k].first, path[k].second)]);
    }
    std::pair<long, long> leaving{-1, -1};
    for (size_t k = 0; k < path.size(); k += 2) {
      if (s.flow[s.idx(path[k].first, path[k].second)] == theta) {
        if (leaving.first < 0 || path[k] < leaving) leaving = path[k];
      }
    }
    s.flow[s.idx(ei, ej)] = theta;
    s.basic[s.idx(ei, ej)] = 1;
    for (size_t k = 0; k < path.size(); ++k) {
      double& fl = s.flow[s.idx(path[k].first, path[k].second)];
      fl += (k % 2 == 0) ? -theta : theta;
      if (fl < 0.0) {
        if (fl < -1e-9) throw NumericError("transport: flow went negative");
        fl = 0.0;
      }
    }
    s.flow[s.idx(leaving.first, leaving.second)] = 0.0;
    s.basic[s.idx(leaving.first, leaving.second)] = 0;
  }

  TransportPlan plan;
  plan.coupling = Mat::zeros(m, n);
  plan.f = s.u;
  plan.g = s.v;
  double obj = 0.0;
  for (long i = 0; i < m; ++i) {
    for (long j = 0; j < n; ++j) {
      const double fl = s.flow[s.idx(i, j)];
      plan.coupling.at(i, j) = fl;
      obj += fl * cost.at(i, j);
    }
  }
  plan.objective = obj;
  return plan;
}

TransportPlan w1_discrete(const DiscreteDistribution& a, const DiscreteDistribution& b,
                          Metric metric) {
  a.validate();
  b.validate();
  return w1_discrete_cost(a.prob, b.prob, distance_matrix(a.support, b.support, metric));
}

// Exact assignment by shortest augmenting paths with dual potentials.
// Ties in the Dijkstra step resolve to the lowest column index.
double w1_empirical(const Mat& a, const Mat& b, Metric metric) {
  if (a.rows != b.rows) {
    throw std::invalid_argument("w1_empirical: clouds have " + std::to_string(a.rows) +
                                " and " + std::to_string(b.rows) + " points");
  }
  const Mat cost = distance_matrix(a, b, metric);
  const long n = a.rows;
  const double kInf = std::numeric_limits<double>::infinity();

  // 1-indexed arrays; column 0 is the staging slot for the current row.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1, 0.0);
  std::vector<long> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1, 0);
  for (long i = 1; i <= n; ++i) {
    p[0] = i;
    long j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const long i0 = p[j0];
      double delta = kInf;
      long j1 = -1;
      for (long j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost.at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (long j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const long j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  double total = 0.0;
  for (long j = 1; j <= n; ++j) total += cost.at(p[j] - 1, j - 1);
  return total / static_cast<double>(n);
}

}  // namespace mgm
