#pragma once

#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace mgm {

// Plain row-major double matrix.  This is the value type that crosses module
// boundaries; the autodiff tape wraps these into tracked tensors on demand.
struct Mat {
  long rows = 0;
  long cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(long r, long c) : rows(r), cols(c), v(static_cast<std::size_t>(r * c), 0.0) {
    if (r < 0 || c < 0) throw std::invalid_argument("Mat: negative dimension");
  }
  Mat(long r, long c, std::vector<double> data) : rows(r), cols(c), v(std::move(data)) {
    if (static_cast<long>(v.size()) != r * c)
      throw std::invalid_argument("Mat: data size does not match dimensions");
  }

  static Mat zeros(long r, long c) { return Mat(r, c); }

  static Mat row(std::vector<double> data) {
    const long n = static_cast<long>(data.size());
    return Mat(1, n, std::move(data));
  }

  static Mat scalar(double x) { return Mat(1, 1, {x}); }

  double& at(long i, long j) { return v[static_cast<std::size_t>(i * cols + j)]; }
  double at(long i, long j) const { return v[static_cast<std::size_t>(i * cols + j)]; }

  long size() const { return rows * cols; }

  std::string shape_str() const {
    std::ostringstream os;
    os << rows << "x" << cols;
    return os.str();
  }
};

}  // namespace mgm
