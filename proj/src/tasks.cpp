#include "gatera/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "gatera/rng.hpp"

namespace gatera {

namespace {

// Cipher structure is a pure function of the spec so that every corpus
// (train, eval, any seed) sees the same shift.
constexpr std::uint64_t kCipherStreamSeed = 0xC1F3A5ULL;

std::vector<int> base_answer(const TaskSpec& spec, const std::vector<int>& prompt) {
    std::vector<int> ans(prompt);
    switch (spec.name) {
        case TaskName::kCopy:
            break;
        case TaskName::kReverse:
            std::reverse(ans.begin(), ans.end());
            break;
        case TaskName::kCipher: {
            // Fixed full-vocab rotation of the data symbols.
            for (int& s : ans) s = static_cast<int>((s + 1) % spec.data_symbols());
            break;
        }
    }
    return ans;
}

SeqExample build_example(const TaskSpec& spec, const std::vector<int>& prompt,
                         const std::vector<int>& base_ans, const std::vector<int>& answer) {
    const Index t = spec.seq_len();
    SeqExample ex;
    ex.tokens.reserve(static_cast<std::size_t>(t));
    for (int s : prompt) ex.tokens.push_back(s);
    ex.tokens.push_back(static_cast<int>(spec.separator_id()));
    for (int s : answer) ex.tokens.push_back(s);
    ex.loss_mask.assign(static_cast<std::size_t>(t), false);
    ex.ood_mask.assign(static_cast<std::size_t>(t), false);
    // Position p predicts tokens[p+1]; answer tokens sit at positions
    // prompt_len+1 .. seq_len-1, so predictions happen at prompt_len .. -2.
    for (Index p = spec.prompt_len; p < spec.prompt_len + spec.answer_len; ++p) {
        ex.loss_mask[static_cast<std::size_t>(p)] = true;
        const std::size_t ai = static_cast<std::size_t>(p - spec.prompt_len);
        ex.ood_mask[static_cast<std::size_t>(p)] = answer[ai] != base_ans[ai];
    }
    return ex;
}

std::vector<SeqExample> generate(const TaskSpec& spec, int n, std::uint64_t seed, bool shifted) {
    if (n <= 0) throw ContractError("task generator: n must be > 0");
    spec.validate(spec.seq_len());
    std::vector<int> perm = shift_permutation(spec);
    Rng rng(seed);
    std::vector<SeqExample> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        std::vector<int> prompt(static_cast<std::size_t>(spec.prompt_len));
        for (int& s : prompt) s = static_cast<int>(rng.uniform_int(spec.data_symbols()));
        std::vector<int> base_ans = base_answer(spec, prompt);
        std::vector<int> answer = base_ans;
        if (shifted) {
            for (int& s : answer) s = perm[static_cast<std::size_t>(s)];
        }
        out.push_back(build_example(spec, prompt, base_ans, answer));
    }
    return out;
}

}  // namespace

std::string_view task_name_str(TaskName name) {
    switch (name) {
        case TaskName::kCopy: return "copy";
        case TaskName::kReverse: return "reverse";
        case TaskName::kCipher: return "cipher";
    }
    return "?";
}

std::optional<TaskName> task_from_name(std::string_view s) {
    if (s == "copy") return TaskName::kCopy;
    if (s == "reverse") return TaskName::kReverse;
    if (s == "cipher") return TaskName::kCipher;
    return std::nullopt;
}

void TaskSpec::validate(Index max_seq_len) const {
    if (vocab_size < 3) throw ConfigError("task: vocab_size must be >= 3");
    if (prompt_len < 1 || answer_len < 1) throw ConfigError("task: lengths must be >= 1");
    if (prompt_len + answer_len + 1 > max_seq_len) {
        throw ConfigError("task: prompt_len + answer_len + 1 exceeds max_seq_len " +
                          std::to_string(max_seq_len));
    }
    if (shift_fraction < 0.0 || shift_fraction > 1.0) {
        throw ConfigError("task: shift_fraction must be in [0,1]");
    }
}

std::vector<int> shifted_symbols(const TaskSpec& spec) {
    const Index n_data = spec.data_symbols();
    Index count = static_cast<Index>(std::llround(spec.shift_fraction * static_cast<double>(n_data)));
    count = std::clamp<Index>(count, 0, n_data);
    if (count == 1) count = 2;  // a 1-cycle cannot change its symbol
    std::vector<int> all(static_cast<std::size_t>(n_data));
    for (Index i = 0; i < n_data; ++i) all[static_cast<std::size_t>(i)] = static_cast<int>(i);
    Rng rng(kCipherStreamSeed ^ (static_cast<std::uint64_t>(spec.vocab_size) << 8));
    rng.shuffle(all);
    all.resize(static_cast<std::size_t>(count));
    std::sort(all.begin(), all.end());
    return all;
}

std::vector<int> shift_permutation(const TaskSpec& spec) {
    std::vector<int> perm(static_cast<std::size_t>(spec.vocab_size));
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
    std::vector<int> subset = shifted_symbols(spec);
    if (subset.size() < 2) return perm;  // shift_fraction == 0
    // One cycle over a shuffled ordering of the subset: no fixed points, so
    // ood_mask == "target differs" holds exactly.
    std::vector<int> order = subset;
    Rng rng(kCipherStreamSeed ^ 0x5EEDULL ^ (static_cast<std::uint64_t>(spec.vocab_size) << 8));
    rng.shuffle(order);
    for (std::size_t i = 0; i < order.size(); ++i) {
        perm[static_cast<std::size_t>(order[i])] = order[(i + 1) % order.size()];
    }
    return perm;
}

std::vector<SeqExample> gen_pretrain(const TaskSpec& spec, int n, std::uint64_t seed) {
    return generate(spec, n, seed, /*shifted=*/false);
}

std::vector<SeqExample> gen_finetune(const TaskSpec& spec, int n, std::uint64_t seed) {
    if (spec.shift_fraction == 0.0) return generate(spec, n, seed, /*shifted=*/false);
    return generate(spec, n, seed, /*shifted=*/true);
}

void save_corpus(const std::vector<SeqExample>& corpus, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("save_corpus: cannot open " + path);
    out << "# gatera corpus v1: one example per line, fields separated by '|'\n";
    out << "# tokens (space-separated ids) | loss_mask (0/1 per position) | ood_mask (0/1)\n";
    for (const SeqExample& ex : corpus) {
        for (std::size_t i = 0; i < ex.tokens.size(); ++i) {
            if (i) out << ' ';
            out << ex.tokens[i];
        }
        out << '|';
        for (bool b : ex.loss_mask) out << (b ? '1' : '0');
        out << '|';
        for (bool b : ex.ood_mask) out << (b ? '1' : '0');
        out << '\n';
    }
    if (!out) throw IoError("save_corpus: write failed for " + path);
}

std::vector<SeqExample> load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_corpus: cannot open " + path);
    std::vector<SeqExample> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string tokens_part, loss_part, ood_part;
        if (!std::getline(ls, tokens_part, '|') || !std::getline(ls, loss_part, '|') ||
            !std::getline(ls, ood_part, '|')) {
            throw IoError("load_corpus: malformed line in " + path);
        }
        SeqExample ex;
        std::istringstream ts(tokens_part);
        int id = 0;
        while (ts >> id) ex.tokens.push_back(id);
        for (char c : loss_part) ex.loss_mask.push_back(c == '1');
        for (char c : ood_part) ex.ood_mask.push_back(c == '1');
        if (ex.loss_mask.size() != ex.tokens.size() || ex.ood_mask.size() != ex.tokens.size()) {
            throw IoError("load_corpus: mask length mismatch in " + path);
        }
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace gatera
