#pragma once

// Deterministic synthetic sequence tasks: a base corpus for pretraining and a
// symbol-shifted corpus for fine-tuning, with per-position labels marking
// which supervised positions changed between the two (the "out of
// distribution" positions).
//
// A sequence is [prompt tokens..., SEP, answer tokens...]; SEP is the highest
// vocab id and never appears in prompts or answers. Masks follow next-token
// convention: loss_mask[t] is true when position t predicts an answer token
// (i.e. tokens[t+1] is in the answer region), and ood_mask[t] is true when
// that prediction target differs between the base and shifted task.

#include <cstdint>
#include <string>
#include <vector>

#include "gatera/error.hpp"
#include "gatera/tensor.hpp"

namespace gatera {

enum class TaskName { kCopy, kReverse, kCipher };

std::string_view task_name_str(TaskName name);
std::optional<TaskName> task_from_name(std::string_view s);  // copy|reverse|cipher

struct TaskSpec {
    TaskName name = TaskName::kCopy;
    Index vocab_size = 32;
    Index prompt_len = 8;
    Index answer_len = 8;
    double shift_fraction = 0.5;

    Index seq_len() const { return prompt_len + 1 + answer_len; }
    Index separator_id() const { return vocab_size - 1; }
    Index data_symbols() const { return vocab_size - 1; }
    void validate(Index max_seq_len) const;  // ConfigError
};

struct SeqExample {
    std::vector<int> tokens;
    std::vector<bool> loss_mask;
    std::vector<bool> ood_mask;
};

std::vector<SeqExample> gen_pretrain(const TaskSpec& spec, int n, std::uint64_t seed);
std::vector<SeqExample> gen_finetune(const TaskSpec& spec, int n, std::uint64_t seed);

// The set of data symbols the fine-tune task remaps, and the full-vocab
// permutation applied to them (one cycle over the set, so every remapped
// symbol actually changes). Both depend only on the spec, never on the
// corpus seed.
std::vector<int> shifted_symbols(const TaskSpec& spec);
std::vector<int> shift_permutation(const TaskSpec& spec);

// Plain-text corpus format: a comment header, then one line per example of
// "tokens|loss_mask|ood_mask" with the masks as 0/1 strings.
void save_corpus(const std::vector<SeqExample>& corpus, const std::string& path);
std::vector<SeqExample> load_corpus(const std::string& path);

}  // namespace gatera
