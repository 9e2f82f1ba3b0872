#include "gatera/optim.hpp"

#include <cmath>

namespace gatera {

AdamW::AdamW(std::vector<Group> groups, AdamWHyper hyper)
    : groups_(std::move(groups)), hyper_(hyper) {
    slots_.resize(groups_.size());
    for (std::size_t g = 0; g < groups_.size(); ++g) {
        slots_[g].resize(groups_[g].params.size());
        for (std::size_t i = 0; i < groups_[g].params.size(); ++i) {
            const Index n = groups_[g].params[i].numel();
            slots_[g][i].m = Flat::Zero(n);
            slots_[g][i].v = Flat::Zero(n);
        }
    }
}

void AdamW::step(double lr) {
    ++step_;
    const double bc1 = 1.0 - std::pow(hyper_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(hyper_.beta2, static_cast<double>(step_));
    for (std::size_t g = 0; g < groups_.size(); ++g) {
        for (std::size_t i = 0; i < groups_[g].params.size(); ++i) {
            Tensor& p = groups_[g].params[i];
            Slot& s = slots_[g][i];
            if (p.has_grad()) {
                const Flat& grad = p.grad();
                if (grad.size() != p.numel()) {
                    throw ContractError("AdamW: grad/param size mismatch");
                }
                s.m = hyper_.beta1 * s.m + (1.0 - hyper_.beta1) * grad;
                s.v = hyper_.beta2 * s.v + (1.0 - hyper_.beta2) * grad.square();
            } else {
                s.m *= hyper_.beta1;
                s.v *= hyper_.beta2;
            }
            const Flat mhat = s.m / bc1;
            const Flat vhat = s.v / bc2;
            p.value() -= lr * (mhat / (vhat.sqrt() + hyper_.eps) +
                               groups_[g].weight_decay * p.value());
        }
    }
}

void AdamW::zero_grad() {
    for (auto& group : groups_) {
        for (Tensor& p : group.params) p.zero_grad();
    }
}

double lr_schedule(std::int64_t step, std::int64_t warmup_steps, double base_lr) {
    if (step < 1) throw ContractError("lr_schedule: step must be >= 1");
    if (warmup_steps <= 0 || step >= warmup_steps) return base_lr;
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
}

}  // namespace gatera
