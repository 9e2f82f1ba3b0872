#pragma once

// AdamW (decoupled weight decay) over Tensor parameters, plus the linear
// warmup schedule. The update, per parameter p with gradient g at step t:
//   m <- b1 m + (1-b1) g
//   v <- b2 v + (1-b2) g^2
//   mhat = m / (1 - b1^t),  vhat = v / (1 - b2^t)
//   p <- p - lr * (mhat / (sqrt(vhat) + eps) + weight_decay * p)
// A parameter with no grad buffer is treated as having a zero gradient.

#include <cstdint>
#include <vector>

#include "gatera/tensor.hpp"

namespace gatera {

struct AdamWHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class AdamW {
   public:
    struct Group {
        std::vector<Tensor> params;
        double weight_decay = 0.01;
    };

    AdamW(std::vector<Group> groups, AdamWHyper hyper = {});

    // One optimizer step at the given learning rate; advances the shared
    // step counter used for bias correction.
    void step(double lr);
    void zero_grad();
    std::int64_t step_count() const { return step_; }

   private:
    struct Slot {
        Flat m, v;
    };
    std::vector<Group> groups_;
    std::vector<std::vector<Slot>> slots_;
    AdamWHyper hyper_;
    std::int64_t step_ = 0;
};

// base_lr * min(1, step / warmup_steps); constant base_lr once warmed up
// (and immediately when warmup_steps == 0). ContractError for step < 1.
double lr_schedule(std::int64_t step, std::int64_t warmup_steps, double base_lr);

}  // namespace gatera
