#pragma once

// Task loss and the entropy-based gating regularizer, combined into the
// training objective  total = task + lambda_ent * entropy.

#include <vector>

#include "gatera/tensor.hpp"

namespace gatera {

struct LossReport {
    double task_loss = 0.0;
    double entropy_loss = 0.0;
    double total = 0.0;  // task_loss + lambda_ent * entropy_loss, exact
    Index gate_count = 0;
};

// Mean negative log-softmax probability of targets over mask-selected rows,
// computed with a max-shifted log-sum-exp (no log of a bare softmax, so no
// domain issues). ContractError when the mask selects nothing.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     const std::vector<bool>& mask);

// Mean binary entropy -[g log g + (1-g) log(1-g)] over every element of the
// given gate tensors, clamped to [1e-7, 1-1e-7] before the logs (the clamp
// lives here only; forward gate values stay untouched). Differentiable into
// the gate parameters. ContractError on an empty gate set.
Tensor entropy_regularizer(const std::vector<Tensor>& gates, Index* gate_count = nullptr);

// task + lambda_ent * ent; ConfigError on negative lambda_ent.
Tensor total_loss(const Tensor& task, const Tensor& ent, double lambda_ent);

constexpr double kGateClampEps = 1e-7;

}  // namespace gatera
