#include "gatera/adapters.hpp"

#include <algorithm>
#include <cmath>

namespace gatera {

std::string_view adapter_kind_name(AdapterKind kind) {
    switch (kind) {
        case AdapterKind::kNone: return "none";
        case AdapterKind::kLoRA: return "lora";
        case AdapterKind::kHiRA: return "hira";
        case AdapterKind::kGateRA: return "gatera";
        case AdapterKind::kStaticGateRA: return "static-gatera";
    }
    return "?";
}

std::optional<AdapterKind> adapter_kind_from_name(std::string_view name) {
    if (name == "none") return AdapterKind::kNone;
    if (name == "lora") return AdapterKind::kLoRA;
    if (name == "hira") return AdapterKind::kHiRA;
    if (name == "gatera") return AdapterKind::kGateRA;
    if (name == "static-gatera") return AdapterKind::kStaticGateRA;
    return std::nullopt;
}

Tensor GateNet::forward(const Tensor& x) const {
    // g = sigmoid(x Wg^T + bg), one scalar per row of x.
    return sigmoid(add(matmul(x, transpose(weight)), bias));
}

Index count_params(AdapterKind kind, Index d_out, Index d_in, Index rank) {
    switch (kind) {
        case AdapterKind::kNone: return 0;
        case AdapterKind::kLoRA:
        case AdapterKind::kHiRA: return rank * (d_in + d_out);
        case AdapterKind::kGateRA: return rank * (d_in + d_out) + d_in + 1;
        case AdapterKind::kStaticGateRA: return rank * (d_in + d_out) + d_in * d_out;
    }
    return 0;
}

AdaptedLinear::AdaptedLinear(FrozenLinear base, AdapterKind kind, Index rank, double lora_scale)
    : base_(std::move(base)), kind_(kind), lora_scale_(lora_scale) {
    const Index d_out = base_.d_out();
    const Index d_in = base_.d_in();
    if (kind_ == AdapterKind::kNone) return;
    if (rank < 1 || rank > std::min(d_out, d_in)) {
        throw ConfigError("AdaptedLinear: rank " + std::to_string(rank) +
                          " invalid for a " + std::to_string(d_out) + "x" +
                          std::to_string(d_in) + " layer");
    }
    pair_.a = Tensor::zeros({d_out, rank}, true);
    pair_.b = Tensor::zeros({rank, d_in}, true);
    pair_.rank = rank;
    if (kind_ == AdapterKind::kGateRA) {
        gate_.weight = Tensor::zeros({1, d_in}, true);
        gate_.bias = Tensor::zeros({1, 1}, true);
    }
    if (kind_ == AdapterKind::kStaticGateRA) {
        static_gate_ = Tensor::zeros({d_out, d_in}, true);
    }
}

void AdaptedLinear::init_adapter(Rng& rng) {
    if (kind_ == AdapterKind::kNone) return;
    const double bound = 1.0 / std::sqrt(static_cast<double>(base_.d_in()));
    for (Index i = 0; i < pair_.b.numel(); ++i) pair_.b.value()[i] = rng.uniform(-bound, bound);
    pair_.a.value().setZero();
    pair_.a.zero_grad();
    pair_.b.zero_grad();
    if (kind_ == AdapterKind::kGateRA) {
        gate_.weight.value().setZero();
        gate_.bias.value().setZero();
        gate_.weight.zero_grad();
        gate_.bias.zero_grad();
    }
    if (kind_ == AdapterKind::kStaticGateRA) {
        static_gate_.value().setConstant(0.5);
        static_gate_.zero_grad();
    }
}

Tensor AdaptedLinear::gate_values(const Tensor& x) const {
    switch (gate_mode_) {
        case GateMode::kLearned: return gate_.forward(x);
        case GateMode::kDetached: return detach(gate_.forward(x));
        case GateMode::kClamped:
            return Tensor::full({x.shape()[0], 1}, gate_clamp_value_);
    }
    throw ContractError("AdaptedLinear: bad gate mode");
}

Tensor AdaptedLinear::forward(const Tensor& x) const {
    last_input_ = x;
    Tensor y;
    switch (kind_) {
        case AdapterKind::kNone: {
            y = matmul(x, transpose(base_.weight));
            break;
        }
        case AdapterKind::kLoRA: {
            Tensor delta = matmul(matmul(x, transpose(pair_.b)), transpose(pair_.a));
            y = add(matmul(x, transpose(base_.weight)), scalar_mul(delta, lora_scale_));
            break;
        }
        case AdapterKind::kHiRA: {
            Tensor e = matmul(pair_.a, pair_.b);
            Tensor w = hadamard(scalar_add(e, 1.0), base_.weight);
            y = matmul(x, transpose(w));
            break;
        }
        case AdapterKind::kGateRA: {
            Tensor g = gate_values(x);
            last_gate_ = g;
            Tensor e = matmul(pair_.a, pair_.b);
            if (form_ == GateraForm::kResidual) {
                Tensor delta = matmul(x, transpose(hadamard(e, base_.weight)));
                y = add(matmul(x, transpose(base_.weight)), hadamard(delta, g));
            } else {
                // Per-token order: materialize W' = (g_t AB + 1) (.) W0 row by row.
                std::vector<Tensor> rows;
                rows.reserve(static_cast<std::size_t>(x.shape()[0]));
                for (Index t = 0; t < x.shape()[0]; ++t) {
                    Tensor gt = slice_rows(g, t, 1);  // [1,1], broadcasts over e
                    Tensor w = hadamard(scalar_add(hadamard(e, gt), 1.0), base_.weight);
                    rows.push_back(matmul(slice_rows(x, t, 1), transpose(w)));
                }
                y = concat_rows(rows);
            }
            break;
        }
        case AdapterKind::kStaticGateRA: {
            Tensor e = matmul(pair_.a, pair_.b);
            Tensor w = hadamard(scalar_add(hadamard(e, static_gate_), 1.0), base_.weight);
            y = matmul(x, transpose(w));
            break;
        }
    }
    if (base_.bias.defined()) y = add(y, base_.bias);
    return y;
}

Index AdaptedLinear::count_params() const {
    return gatera::count_params(kind_, base_.d_out(), base_.d_in(), pair_.rank);
}

void AdaptedLinear::set_gate_mode(GateMode mode, double clamp_value) {
    gate_mode_ = mode;
    gate_clamp_value_ = clamp_value;
}

void AdaptedLinear::append_adapter_params(const std::string& prefix,
                                          std::vector<std::pair<std::string, Tensor>>& out) const {
    if (kind_ == AdapterKind::kNone) return;
    out.emplace_back(prefix + ".A", pair_.a);
    out.emplace_back(prefix + ".B", pair_.b);
    if (kind_ == AdapterKind::kGateRA) {
        out.emplace_back(prefix + ".Wg", gate_.weight);
        out.emplace_back(prefix + ".bg", gate_.bias);
    }
    if (kind_ == AdapterKind::kStaticGateRA) {
        out.emplace_back(prefix + ".G", static_gate_);
    }
}

void AdaptedLinear::append_base_params(const std::string& prefix,
                                       std::vector<std::pair<std::string, Tensor>>& out) const {
    out.emplace_back(prefix + ".weight", base_.weight);
    if (base_.bias.defined()) out.emplace_back(prefix + ".bias", base_.bias);
}

}  // namespace gatera
