#pragma once

#include <functional>

#include "mgm/mat.hpp"
#include "mgm/rng.hpp"
#include "mgm/tensor.hpp"

namespace mgm {

// A critic evaluated on a prepared input batch (already concatenated with its
// condition columns when conditional); returns one score per row.
using CriticFn = std::function<Tensor(const Tensor&)>;

// Gradient penalty of WGAN-GP: mean((||grad C(x_hat)|| - 1)^2) where x_hat
// mixes real and fake rows with per-row epsilon ~ U[0,1).
//
// Conditional critics distinguish two penalties.  With penalize_condition the
// interpolation and the gradient cover the full (sample, condition) point;
// without it the gradient is taken with respect to the sample columns only
// and each interpolated row keeps the real condition attached to its pair.
// The returned tensor stays differentiable with respect to the critic
// parameters (the penalty itself is built from a create_graph backward).
Tensor gradient_penalty(Graph& g, const CriticFn& critic, const Mat& real,
                        const Mat& fake, const Mat* cond_real, const Mat* cond_fake,
                        bool penalize_condition, Rng& rng);

// Critic objective: mean C(fake) - mean C(real) + lambda * penalty.
// With lambda == 0 the penalty term is skipped entirely.
Tensor critic_loss(Graph& g, const CriticFn& critic, const Mat& real, const Mat& fake,
                   const Mat* cond_real, const Mat* cond_fake, double lambda,
                   bool penalize_condition, Rng& rng);

// Generator objective: -mean C(fake).  fake is a tracked tensor so gradients
// flow into whatever produced it; cond (optional) is attached as constant
// columns.
Tensor generator_loss(const CriticFn& critic, const Tensor& fake, const Mat* cond);

}  // namespace mgm
