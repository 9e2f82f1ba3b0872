#include "gatera/losses.hpp"

#include <cmath>

namespace gatera {

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     const std::vector<bool>& mask) {
    if (logits.rank() != 2) {
        throw DimensionError("cross_entropy: logits must be rank-2, got " +
                             shape_str(logits.shape()));
    }
    const Index t = logits.shape()[0];
    const Index v = logits.shape()[1];
    if (static_cast<Index>(targets.size()) != t || static_cast<Index>(mask.size()) != t) {
        throw DimensionError("cross_entropy: targets/mask length must equal row count " +
                             std::to_string(t));
    }
    Index n_masked = 0;
    for (Index i = 0; i < t; ++i) {
        if (!mask[static_cast<std::size_t>(i)]) continue;
        ++n_masked;
        int tgt = targets[static_cast<std::size_t>(i)];
        if (tgt < 0 || tgt >= v) {
            throw InputError("cross_entropy: target " + std::to_string(tgt) +
                             " outside vocab of size " + std::to_string(v));
        }
    }
    if (n_masked == 0) throw ContractError("cross_entropy: mask selects no positions");

    double loss = 0.0;
    for (Index i = 0; i < t; ++i) {
        if (!mask[static_cast<std::size_t>(i)]) continue;
        const double* row = logits.value().data() + i * v;
        double mx = row[0];
        for (Index j = 1; j < v; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (Index j = 0; j < v; ++j) denom += std::exp(row[j] - mx);
        loss += mx + std::log(denom) - row[targets[static_cast<std::size_t>(i)]];
    }
    loss /= static_cast<double>(n_masked);

    Tensor y = Tensor::scalar(loss);
    Tape* tape = Tape::active();
    if (tape != nullptr && logits.requires_grad()) {
        y.set_requires_grad(true);
        tape->record(y, [=]() {
            if (!y.has_grad() || !logits.requires_grad()) return;
            const double go = y.grad()[0] / static_cast<double>(n_masked);
            Flat g = Flat::Zero(logits.numel());
            for (Index i = 0; i < t; ++i) {
                if (!mask[static_cast<std::size_t>(i)]) continue;
                const double* row = logits.value().data() + i * v;
                double mx = row[0];
                for (Index j = 1; j < v; ++j) mx = std::max(mx, row[j]);
                double denom = 0.0;
                for (Index j = 0; j < v; ++j) denom += std::exp(row[j] - mx);
                for (Index j = 0; j < v; ++j) {
                    g[i * v + j] = go * std::exp(row[j] - mx) / denom;
                }
                g[i * v + targets[static_cast<std::size_t>(i)]] -= go;
            }
            logits.accumulate_grad(g);
        });
    }
    return y;
}

Tensor entropy_regularizer(const std::vector<Tensor>& gates, Index* gate_count) {
    Index n = 0;
    for (const Tensor& g : gates) n += g.defined() ? g.numel() : 0;
    if (n == 0) throw ContractError("entropy_regularizer: empty gate set");
    if (gate_count != nullptr) *gate_count = n;

    std::vector<Tensor> cols;
    cols.reserve(gates.size());
    for (const Tensor& g : gates) {
        if (!g.defined() || g.numel() == 0) continue;
        if (!(g.rank() == 2 && g.shape()[1] == 1)) {
            throw ContractError("entropy_regularizer: gate tensors must be [T,1], got " +
                                shape_str(g.shape()));
        }
        cols.push_back(g);
    }
    Tensor all = cols.size() == 1 ? cols[0] : concat_rows(cols);
    Tensor p = clamp(all, kGateClampEps, 1.0 - kGateClampEps);
    Tensor q = scalar_add(scalar_mul(p, -1.0), 1.0);  // 1 - p, also in clamp range
    Tensor ent_terms = add(hadamard(p, log(p)), hadamard(q, log(q)));
    return scalar_mul(mean(ent_terms), -1.0);
}

Tensor total_loss(const Tensor& task, const Tensor& ent, double lambda_ent) {
    if (lambda_ent < 0.0) {
        throw ConfigError("total_loss: lambda_ent must be >= 0, got " +
                          std::to_string(lambda_ent));
    }
    return add(task, scalar_mul(ent, lambda_ent));
}

}  // namespace gatera
