#pragma once

// Decoder-only transformer, desk scale. Pre-norm residual blocks, causal
// self-attention, relu MLP, output head tied to the token embedding. The
// Q/K/V projections and the MLP up-projection (FC) can each be wrapped in an
// AdaptedLinear; O and the MLP down-projection are never adapter targets.

#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "gatera/adapters.hpp"
#include "gatera/tensor.hpp"

namespace gatera {

enum class Target { kQ, kK, kV, kFC };

std::string_view target_name(Target t);                      // "Q","K","V","FC"
std::optional<Target> target_from_name(std::string_view s);  // accepts q/k/v/fc
// Parses a comma list like "q,k,v,fc"; ConfigError on unknown names.
std::set<Target> parse_targets(std::string_view csv);
std::string targets_csv(const std::set<Target>& targets);

struct ModelConfig {
    Index vocab_size = 32;
    Index d_model = 64;
    Index n_heads = 4;
    Index n_layers = 2;
    Index d_ff = 128;
    Index max_seq_len = 32;
    std::set<Target> injection_targets = {Target::kQ, Target::kK, Target::kV, Target::kFC};
    AdapterKind adapter_kind = AdapterKind::kNone;
    Index rank = 4;
    double lora_scale = 2.0;

    void validate() const;  // ConfigError on bad combinations
};

struct GateRecord {
    int layer;
    Target projection;
    int position;
    double value;
};

class TinyTransformer {
   public:
    struct Block {
        Tensor ln1_gain, ln1_bias;
        AdaptedLinear q, k, v, o;
        Tensor ln2_gain, ln2_bias;
        AdaptedLinear up, down;
    };

    explicit TinyTransformer(ModelConfig cfg);

    void init_base(std::uint64_t seed);
    void init_adapters(std::uint64_t seed);

    // Next-token logits [T, vocab]; InputError on out-of-range ids or T too
    // long. Builds graph nodes only while a tape is active.
    Tensor forward_logits(const std::vector<int>& tokens);

    // One row per gated projection per position, from a single forward pass.
    // ConfigError unless adapter_kind is gatera.
    std::vector<GateRecord> collect_gates(const std::vector<int>& tokens);

    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
    std::vector<std::pair<std::string, Tensor>> base_parameters() const;
    std::vector<std::pair<std::string, Tensor>> adapter_parameters() const;

    void set_base_requires_grad(bool v);
    void set_adapter_requires_grad(bool v);
    void zero_all_grads();

    Index count_adapter_params() const;  // closed-form sum over injected layers

    void set_gate_mode(GateMode mode, double clamp_value = 0.0);
    void set_gatera_form(GateraForm form);
    // Adds delta to every gate bias (suppression sweeps); negative to undo.
    void shift_gate_bias(double delta);

    const ModelConfig& config() const { return cfg_; }
    std::vector<Block>& blocks() { return blocks_; }
    const std::vector<Block>& blocks() const { return blocks_; }
    Tensor& embedding() { return embed_; }

    // Gated projections in (layer, Q,K,V,FC) order.
    std::vector<std::tuple<int, Target, AdaptedLinear*>> gated_layers();

    // Taped gate tensors [T,1] from the most recent forward, same order as
    // gated_layers(); feeds the entropy regularizer.
    std::vector<std::tuple<int, Target, Tensor>> last_gate_tensors() const;

    // Smallest |x| seen at a relu input during the most recent forward;
    // finite-difference fixtures use it to stay away from the kink.
    double min_abs_relu_input() const { return min_abs_relu_input_; }

   private:
    Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) const;
    Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v) const;
    bool is_injected(Target t) const;

    ModelConfig cfg_;
    Tensor embed_;  // [vocab, d_model], output head is tied to this
    Tensor pos_;    // [max_seq_len, d_model]
    Tensor lnf_gain_, lnf_bias_;
    std::vector<Block> blocks_;
    double min_abs_relu_input_ = 0.0;
};

}  // namespace gatera
