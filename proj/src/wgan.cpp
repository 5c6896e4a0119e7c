#include "mgm/wgan.hpp"

#include <sstream>
#include <vector>

namespace mgm {

namespace {

void check_pair(const char* what, const Mat& real, const Mat& fake) {
  if (real.rows != fake.rows || real.cols != fake.cols) {
    std::ostringstream os;
    os << what << ": real and fake batches disagree: " << real.shape_str() << " vs "
       << fake.shape_str();
    throw std::invalid_argument(os.str());
  }
  if (real.rows == 0) throw std::invalid_argument(std::string(what) + ": empty batch");
}

Mat interpolate(const Mat& a, const Mat& b, const std::vector<double>& eps) {
  Mat out(a.rows, a.cols);
  for (long i = 0; i < a.rows; ++i) {
    const double e = eps[static_cast<std::size_t>(i)];
    for (long j = 0; j < a.cols; ++j)
      out.at(i, j) = e * a.at(i, j) + (1.0 - e) * b.at(i, j);
  }
  return out;
}

Tensor scores_checked(const CriticFn& critic, const Tensor& input) {
  Tensor s = critic(input);
  if (s.shape().cols != 1 || s.shape().rows != input.shape().rows)
    throw std::invalid_argument("critic must return one score per row, got " +
                                s.shape().str());
  return s;
}

}  // namespace

Tensor gradient_penalty(Graph& g, const CriticFn& critic, const Mat& real,
                        const Mat& fake, const Mat* cond_real, const Mat* cond_fake,
                        bool penalize_condition, Rng& rng) {
  check_pair("gradient_penalty", real, fake);
  if (penalize_condition && (!cond_real || !cond_fake))
    throw std::invalid_argument(
        "gradient_penalty: penalize_condition requires condition batches");
  if (cond_real && cond_fake) check_pair("gradient_penalty(cond)", *cond_real, *cond_fake);

  std::vector<double> eps(static_cast<std::size_t>(real.rows));
  for (auto& e : eps) e = rng.uniform();

  Tensor probe;  // the leaf the gradient is taken against
  Tensor input;
  if (penalize_condition) {
    Mat joint_real(real.rows, real.cols + cond_real->cols);
    Mat joint_fake(real.rows, real.cols + cond_real->cols);
    for (long i = 0; i < real.rows; ++i) {
      for (long j = 0; j < real.cols; ++j) {
        joint_real.at(i, j) = real.at(i, j);
        joint_fake.at(i, j) = fake.at(i, j);
      }
      for (long j = 0; j < cond_real->cols; ++j) {
        joint_real.at(i, real.cols + j) = cond_real->at(i, j);
        joint_fake.at(i, real.cols + j) = cond_fake->at(i, j);
      }
    }
    probe = g.leaf(interpolate(joint_real, joint_fake, eps), true);
    input = probe;
  } else {
    probe = g.leaf(interpolate(real, fake, eps), true);
    input = cond_real ? concat_cols(probe, Tensor::constant(*cond_real)) : probe;
  }

  Tensor s = scores_checked(critic, input);
  Tensor grad = g.backward(sum_all(s), std::vector<Tensor>{probe}, /*create_graph=*/true)[0];
  return mean(square(add_scalar(l2_norm_rows(grad), -1.0)));
}

Tensor critic_loss(Graph& g, const CriticFn& critic, const Mat& real, const Mat& fake,
                   const Mat* cond_real, const Mat* cond_fake, double lambda,
                   bool penalize_condition, Rng& rng) {
  check_pair("critic_loss", real, fake);
  if (lambda < 0.0) throw std::invalid_argument("critic_loss: lambda must be >= 0");

  auto attach = [](const Mat& x, const Mat* c) {
    Tensor t = Tensor::constant(x);
    return c ? Tensor::constant([&] {
      Mat j(x.rows, x.cols + c->cols);
      for (long i = 0; i < x.rows; ++i) {
        for (long k = 0; k < x.cols; ++k) j.at(i, k) = x.at(i, k);
        for (long k = 0; k < c->cols; ++k) j.at(i, x.cols + k) = c->at(i, k);
      }
      return j;
    }())
             : t;
  };

  Tensor loss = sub(mean(scores_checked(critic, attach(fake, cond_fake))),
                    mean(scores_checked(critic, attach(real, cond_real))));
  if (lambda > 0.0) {
    Tensor pen =
        gradient_penalty(g, critic, real, fake, cond_real, cond_fake, penalize_condition, rng);
    loss = add(loss, scalar_mul(pen, lambda));
  }
  return loss;
}

Tensor generator_loss(const CriticFn& critic, const Tensor& fake, const Mat* cond) {
  Tensor input = cond ? concat_cols(fake, Tensor::constant(*cond)) : fake;
  Tensor s = scores_checked(critic, input);
  return scalar_mul(mean(s), -1.0);
}

}  // namespace mgm
