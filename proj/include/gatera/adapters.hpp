#pragma once

// Frozen linear layers with pluggable adaptation branches.
//
// Forward rules, for a row-of-tokens input X [T, d_in] and frozen W0
// [d_out, d_in] (1 below is the all-ones matrix, (.) elementwise product):
//   none          y = X W0^T (+ b0)
//   lora          y = X W0^T + lora_scale * (X B^T) A^T (+ b0)
//   hira          y = X ((A B + 1) (.) W0)^T (+ b0)
//   gatera        y_t = X_t ((g(x_t) A B + 1) (.) W0)^T (+ b0), g = sigmoid(Wg x + bg)
//   static-gatera y = X ((G (.) A B + 1) (.) W0)^T (+ b0), learnable G [d_out, d_in]
//
// The gatera forward is computed in the residual order
//   y = X W0^T + b0 + g (.) (X (A B (.) W0)^T)
// by default; the per-token materialized order is available for cross-checks.

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gatera/tensor.hpp"

namespace gatera {

enum class AdapterKind { kNone, kLoRA, kHiRA, kGateRA, kStaticGateRA };

std::string_view adapter_kind_name(AdapterKind kind);
// Accepts the CLI spellings: none, lora, hira, gatera, static-gatera.
std::optional<AdapterKind> adapter_kind_from_name(std::string_view name);

struct FrozenLinear {
    Tensor weight;  // W0 [d_out, d_in], requires_grad=false during adaptation
    Tensor bias;    // optional b0 [1, d_out]; leave undefined for no bias

    Index d_out() const { return weight.shape()[0]; }
    Index d_in() const { return weight.shape()[1]; }
};

struct LowRankPair {
    Tensor a;  // [d_out, r]
    Tensor b;  // [r, d_in]
    Index rank = 0;
};

// Per-token scalar gate g(x) = sigmoid(Wg x + bg), strictly in (0,1).
struct GateNet {
    Tensor weight;  // Wg [1, d_in]
    Tensor bias;    // bg [1, 1]

    // X [T, d_in] -> [T, 1]; differentiable into Wg, bg and X.
    Tensor forward(const Tensor& x) const;
};

// Debug-only gate overrides ("clamp switch"); never active during training.
//   kLearned  - gate on the tape, grads reach Wg/bg.
//   kDetached - gate values computed then detached: the AB path sees g as a
//               constant (the theorem's setup), nothing flows into Wg/bg.
//   kClamped  - gate replaced by a constant.
enum class GateMode { kLearned, kDetached, kClamped };

enum class GateraForm { kResidual, kPerToken };

class AdaptedLinear {
   public:
    AdaptedLinear() = default;
    // Allocates adapter parameters of the right shapes (zeros; call
    // init_adapter before training). ConfigError when the kind/rank
    // combination is invalid, so forward never has to re-check.
    AdaptedLinear(FrozenLinear base, AdapterKind kind, Index rank, double lora_scale = 2.0);

    // B ~ U(-1/sqrt(d_in), 1/sqrt(d_in)), A = 0 so every adapter starts as
    // the frozen map; Wg = 0, bg = 0 so initial gates are exactly 0.5;
    // static G = 0.5.
    void init_adapter(Rng& rng);

    Tensor forward(const Tensor& x) const;

    Index count_params() const;

    AdapterKind kind() const { return kind_; }
    Index rank() const { return pair_.rank; }
    const FrozenLinear& base() const { return base_; }
    FrozenLinear& base() { return base_; }
    const LowRankPair& pair() const { return pair_; }
    LowRankPair& pair() { return pair_; }
    const GateNet& gate() const { return gate_; }
    GateNet& gate() { return gate_; }
    const Tensor& static_gate() const { return static_gate_; }
    double lora_scale() const { return lora_scale_; }

    void set_gate_mode(GateMode mode, double clamp_value = 0.0);
    GateMode gate_mode() const { return gate_mode_; }
    void set_gatera_form(GateraForm form) { form_ = form; }

    // Adapter parameters in a stable order, names prefixed.
    void append_adapter_params(const std::string& prefix,
                               std::vector<std::pair<std::string, Tensor>>& out) const;
    void append_base_params(const std::string& prefix,
                            std::vector<std::pair<std::string, Tensor>>& out) const;

    // Gate tensor [T, 1] produced by the most recent forward (gatera only);
    // used for the entropy loss and gate collection.
    const Tensor& last_gate() const { return last_gate_; }
    // Input of the most recent forward; used by capture-and-replay checks.
    const Tensor& last_input() const { return last_input_; }

   private:
    Tensor gate_values(const Tensor& x) const;

    FrozenLinear base_;
    LowRankPair pair_;
    GateNet gate_;
    Tensor static_gate_;  // G [d_out, d_in]
    AdapterKind kind_ = AdapterKind::kNone;
    double lora_scale_ = 2.0;
    GateMode gate_mode_ = GateMode::kLearned;
    double gate_clamp_value_ = 0.0;
    GateraForm form_ = GateraForm::kResidual;
    mutable Tensor last_gate_;
    mutable Tensor last_input_;
};

// Closed-form trainable-parameter count for one adapted layer.
Index count_params(AdapterKind kind, Index d_out, Index d_in, Index rank);

}  // namespace gatera
