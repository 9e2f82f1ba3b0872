#include "gatera/model.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace gatera {

namespace {
constexpr double kLayerNormEps = 1e-5;
constexpr double kMaskedScore = -1e9;  // exp underflows to exact 0 after max-shift
}  // namespace

std::string_view target_name(Target t) {
    switch (t) {
        case Target::kQ: return "Q";
        case Target::kK: return "K";
        case Target::kV: return "V";
        case Target::kFC: return "FC";
    }
    return "?";
}

std::optional<Target> target_from_name(std::string_view s) {
    if (s == "q" || s == "Q") return Target::kQ;
    if (s == "k" || s == "K") return Target::kK;
    if (s == "v" || s == "V") return Target::kV;
    if (s == "fc" || s == "FC") return Target::kFC;
    return std::nullopt;
}

std::set<Target> parse_targets(std::string_view csv) {
    std::set<Target> out;
    std::string token;
    std::istringstream ss{std::string(csv)};
    while (std::getline(ss, token, ',')) {
        if (token.empty()) continue;
        auto t = target_from_name(token);
        if (!t) throw ConfigError("unknown injection target '" + token + "' (use q,k,v,fc)");
        out.insert(*t);
    }
    return out;
}

std::string targets_csv(const std::set<Target>& targets) {
    std::string out;
    for (Target t : {Target::kQ, Target::kK, Target::kV, Target::kFC}) {
        if (!targets.count(t)) continue;
        if (!out.empty()) out += ",";
        std::string name(target_name(t));
        for (char& c : name) c = static_cast<char>(std::tolower(c));
        out += name;
    }
    return out;
}

void ModelConfig::validate() const {
    if (vocab_size < 2) throw ConfigError("vocab_size must be >= 2");
    if (d_model <= 0 || n_heads <= 0 || n_layers <= 0 || d_ff <= 0 || max_seq_len <= 0) {
        throw ConfigError("model dimensions must be positive");
    }
    if (d_model % n_heads != 0) {
        throw ConfigError("d_model " + std::to_string(d_model) + " not divisible by n_heads " +
                          std::to_string(n_heads));
    }
    if (adapter_kind != AdapterKind::kNone) {
        if (injection_targets.empty()) {
            throw ConfigError("injection_targets must be nonempty when an adapter is enabled");
        }
        if (rank < 1) throw ConfigError("rank must be >= 1");
    }
}

TinyTransformer::TinyTransformer(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const Index d = cfg_.d_model;
    embed_ = Tensor::zeros({cfg_.vocab_size, d});
    pos_ = Tensor::zeros({cfg_.max_seq_len, d});
    lnf_gain_ = Tensor::full({1, d}, 1.0);
    lnf_bias_ = Tensor::zeros({1, d});

    auto make_linear = [&](Index d_out, Index d_in, bool adapted) {
        FrozenLinear base{Tensor::zeros({d_out, d_in}), Tensor::zeros({1, d_out})};
        AdapterKind kind = adapted ? cfg_.adapter_kind : AdapterKind::kNone;
        return AdaptedLinear(std::move(base), kind, cfg_.rank, cfg_.lora_scale);
    };

    blocks_.resize(static_cast<std::size_t>(cfg_.n_layers));
    for (auto& blk : blocks_) {
        blk.ln1_gain = Tensor::full({1, d}, 1.0);
        blk.ln1_bias = Tensor::zeros({1, d});
        blk.ln2_gain = Tensor::full({1, d}, 1.0);
        blk.ln2_bias = Tensor::zeros({1, d});
        blk.q = make_linear(d, d, is_injected(Target::kQ));
        blk.k = make_linear(d, d, is_injected(Target::kK));
        blk.v = make_linear(d, d, is_injected(Target::kV));
        blk.o = make_linear(d, d, false);
        blk.up = make_linear(cfg_.d_ff, d, is_injected(Target::kFC));
        blk.down = make_linear(d, cfg_.d_ff, false);
    }
}

bool TinyTransformer::is_injected(Target t) const {
    return cfg_.adapter_kind != AdapterKind::kNone && cfg_.injection_targets.count(t) != 0;
}

void TinyTransformer::init_base(std::uint64_t seed) {
    Rng rng(seed);
    auto fill_uniform = [&](Tensor& t, double bound) {
        for (Index i = 0; i < t.numel(); ++i) t.value()[i] = rng.uniform(-bound, bound);
    };
    fill_uniform(embed_, 0.1);
    fill_uniform(pos_, 0.1);
    for (auto& blk : blocks_) {
        for (AdaptedLinear* lin : {&blk.q, &blk.k, &blk.v, &blk.o, &blk.up, &blk.down}) {
            double bound = 1.0 / std::sqrt(static_cast<double>(lin->base().d_in()));
            fill_uniform(lin->base().weight, bound);
            lin->base().bias.value().setZero();
        }
    }
}

void TinyTransformer::init_adapters(std::uint64_t seed) {
    Rng rng(seed);
    std::uint64_t stream = 0;
    for (auto& blk : blocks_) {
        for (AdaptedLinear* lin : {&blk.q, &blk.k, &blk.v, &blk.up}) {
            Rng sub = rng.fork(stream++);
            lin->init_adapter(sub);
        }
    }
}

Tensor TinyTransformer::layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) const {
    // Per-row mean/variance via matmul with a constant averaging vector, so
    // the whole op is built from primitives with audited backward rules.
    const Index d = x.shape()[1];
    Tensor avg = Tensor::full({d, 1}, 1.0 / static_cast<double>(d));
    Tensor mu = matmul(x, avg);                      // [T,1]
    Tensor centered = sub(x, mu);                    // broadcast over columns
    Tensor var = matmul(hadamard(centered, centered), avg);
    Tensor inv_std = rsqrt(scalar_add(var, kLayerNormEps));
    Tensor normed = hadamard(centered, inv_std);
    return add(hadamard(normed, gain), bias);
}

Tensor TinyTransformer::attention(const Tensor& q, const Tensor& k, const Tensor& v) const {
    const Index t = q.shape()[0];
    const Index head_dim = cfg_.d_model / cfg_.n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

    Flat mask_data(t * t);
    for (Index i = 0; i < t; ++i) {
        for (Index j = 0; j < t; ++j) mask_data[i * t + j] = j <= i ? 0.0 : kMaskedScore;
    }
    Tensor mask = Tensor::from_flat({t, t}, std::move(mask_data));

    std::vector<Tensor> heads;
    heads.reserve(static_cast<std::size_t>(cfg_.n_heads));
    for (Index h = 0; h < cfg_.n_heads; ++h) {
        Tensor qh = slice_cols(q, h * head_dim, head_dim);
        Tensor kh = slice_cols(k, h * head_dim, head_dim);
        Tensor vh = slice_cols(v, h * head_dim, head_dim);
        Tensor scores = add(scalar_mul(matmul(qh, transpose(kh)), scale), mask);
        heads.push_back(matmul(softmax_lastdim(scores), vh));
    }
    return concat_cols(heads);
}

Tensor TinyTransformer::forward_logits(const std::vector<int>& tokens) {
    const Index t = static_cast<Index>(tokens.size());
    if (t == 0) throw InputError("forward_logits: empty token sequence");
    if (t > cfg_.max_seq_len) {
        throw InputError("forward_logits: sequence length " + std::to_string(t) +
                         " exceeds max_seq_len " + std::to_string(cfg_.max_seq_len));
    }
    for (int id : tokens) {
        if (id < 0 || id >= cfg_.vocab_size) {
            throw InputError("forward_logits: token id " + std::to_string(id) +
                             " outside vocab of size " + std::to_string(cfg_.vocab_size));
        }
    }
    min_abs_relu_input_ = std::numeric_limits<double>::infinity();

    Tensor h = add(row_gather(embed_, tokens), slice_rows(pos_, 0, t));
    for (auto& blk : blocks_) {
        Tensor a_in = layer_norm(h, blk.ln1_gain, blk.ln1_bias);
        Tensor attn = attention(blk.q.forward(a_in), blk.k.forward(a_in), blk.v.forward(a_in));
        h = add(h, blk.o.forward(attn));

        Tensor m_in = layer_norm(h, blk.ln2_gain, blk.ln2_bias);
        Tensor pre = blk.up.forward(m_in);
        min_abs_relu_input_ = std::min(min_abs_relu_input_, pre.value().abs().minCoeff());
        h = add(h, blk.down.forward(relu(pre)));
    }
    h = layer_norm(h, lnf_gain_, lnf_bias_);
    return matmul(h, transpose(embed_));
}

std::vector<GateRecord> TinyTransformer::collect_gates(const std::vector<int>& tokens) {
    if (cfg_.adapter_kind != AdapterKind::kGateRA) {
        throw ConfigError("collect_gates: model adapter kind is not gatera");
    }
    forward_logits(tokens);
    std::vector<GateRecord> records;
    for (auto& [layer, proj, tensor] : last_gate_tensors()) {
        for (Index p = 0; p < tensor.numel(); ++p) {
            records.push_back(GateRecord{layer, proj, static_cast<int>(p), tensor.value()[p]});
        }
    }
    return records;
}

std::vector<std::tuple<int, Target, AdaptedLinear*>> TinyTransformer::gated_layers() {
    std::vector<std::tuple<int, Target, AdaptedLinear*>> out;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        Block& blk = blocks_[i];
        const std::pair<Target, AdaptedLinear*> candidates[] = {
            {Target::kQ, &blk.q}, {Target::kK, &blk.k}, {Target::kV, &blk.v},
            {Target::kFC, &blk.up}};
        for (auto [t, lin] : candidates) {
            if (lin->kind() == AdapterKind::kGateRA) {
                out.emplace_back(static_cast<int>(i), t, lin);
            }
        }
    }
    return out;
}

std::vector<std::tuple<int, Target, Tensor>> TinyTransformer::last_gate_tensors() const {
    std::vector<std::tuple<int, Target, Tensor>> out;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const Block& blk = blocks_[i];
        const std::pair<Target, const AdaptedLinear*> candidates[] = {
            {Target::kQ, &blk.q}, {Target::kK, &blk.k}, {Target::kV, &blk.v},
            {Target::kFC, &blk.up}};
        for (auto [t, lin] : candidates) {
            if (lin->kind() == AdapterKind::kGateRA && lin->last_gate().defined()) {
                out.emplace_back(static_cast<int>(i), t, lin->last_gate());
            }
        }
    }
    return out;
}

std::vector<std::pair<std::string, Tensor>> TinyTransformer::base_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("embed.weight", embed_);
    out.emplace_back("pos.weight", pos_);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const Block& blk = blocks_[i];
        const std::string p = "block" + std::to_string(i);
        out.emplace_back(p + ".ln1.gain", blk.ln1_gain);
        out.emplace_back(p + ".ln1.bias", blk.ln1_bias);
        blk.q.append_base_params(p + ".q", out);
        blk.k.append_base_params(p + ".k", out);
        blk.v.append_base_params(p + ".v", out);
        blk.o.append_base_params(p + ".o", out);
        out.emplace_back(p + ".ln2.gain", blk.ln2_gain);
        out.emplace_back(p + ".ln2.bias", blk.ln2_bias);
        blk.up.append_base_params(p + ".up", out);
        blk.down.append_base_params(p + ".down", out);
    }
    out.emplace_back("lnf.gain", lnf_gain_);
    out.emplace_back("lnf.bias", lnf_bias_);
    return out;
}

std::vector<std::pair<std::string, Tensor>> TinyTransformer::adapter_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const Block& blk = blocks_[i];
        const std::string p = "block" + std::to_string(i);
        blk.q.append_adapter_params(p + ".q", out);
        blk.k.append_adapter_params(p + ".k", out);
        blk.v.append_adapter_params(p + ".v", out);
        blk.up.append_adapter_params(p + ".up", out);
    }
    return out;
}

std::vector<std::pair<std::string, Tensor>> TinyTransformer::named_parameters() const {
    auto out = base_parameters();
    auto adapters = adapter_parameters();
    out.insert(out.end(), adapters.begin(), adapters.end());
    return out;
}

void TinyTransformer::set_base_requires_grad(bool v) {
    for (auto& [name, t] : base_parameters()) {
        Tensor tensor = t;
        tensor.set_requires_grad(v);
    }
}

void TinyTransformer::set_adapter_requires_grad(bool v) {
    for (auto& [name, t] : adapter_parameters()) {
        Tensor tensor = t;
        tensor.set_requires_grad(v);
    }
}

void TinyTransformer::zero_all_grads() {
    for (auto& [name, t] : named_parameters()) t.zero_grad();
}

Index TinyTransformer::count_adapter_params() const {
    Index total = 0;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const Block& blk = blocks_[i];
        for (const AdaptedLinear* lin : {&blk.q, &blk.k, &blk.v, &blk.up}) {
            total += lin->count_params();
        }
    }
    return total;
}

void TinyTransformer::set_gate_mode(GateMode mode, double clamp_value) {
    for (auto& [layer, t, lin] : gated_layers()) lin->set_gate_mode(mode, clamp_value);
}

void TinyTransformer::set_gatera_form(GateraForm form) {
    for (auto& [layer, t, lin] : gated_layers()) lin->set_gatera_form(form);
}

void TinyTransformer::shift_gate_bias(double delta) {
    for (auto& [layer, t, lin] : gated_layers()) lin->gate().bias.value()[0] += delta;
}

}  // namespace gatera
