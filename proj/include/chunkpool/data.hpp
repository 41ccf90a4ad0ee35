#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "chunkpool/classifier.hpp"
#include "chunkpool/tokenizer.hpp"

namespace chunkpool {

struct Document {
    std::string id;
    std::string text;
    std::vector<std::string> gold_labels;
};

// Newline-delimited records {"id": str, "text": str, "labels": [str...]},
// validated against the label space in file order.
std::vector<Document> load_jsonl_corpus(const std::string& path, const LabelSpace& space);
void save_jsonl_corpus(const std::vector<Document>& docs, const std::string& path);

// Corpus-wide validation shared by training and evaluation: unique ids,
// labels inside the space, exactly one gold label per doc for multiclass.
void validate_corpus(const std::vector<Document>& docs, const LabelSpace& space);

// {0,1} target vector over the label space (one-hot for multiclass).
std::vector<double> target_vector(const Document& doc, const LabelSpace& space);

enum class TriggerPosition { uniform, fixed, beyond_first };

TriggerPosition trigger_position_from_string(const std::string& name);
std::string trigger_position_to_string(TriggerPosition pos);

// Synthetic corpus: background words drawn uniformly, one dedicated trigger
// word per label placed by replacing a background slot, so chunk geometry is
// untouched and gold labels are exactly the triggers present in the text.
struct SyntheticSpec {
    std::size_t n_docs = 1000;
    std::size_t n_labels = 3;
    std::size_t chunks_per_doc = 4;
    std::size_t tokens_per_chunk = 32;
    TriggerPosition trigger_position = TriggerPosition::uniform;
    std::size_t fixed_chunk = 0;  // 0-based chunk index for TriggerPosition::fixed
    std::size_t background_vocab_size = 50;
    std::vector<double> label_prevalence = {0.5};  // one entry broadcasts to all
    std::uint64_t seed = 0;

    void validate(std::size_t content_len) const;
    double prevalence_of(std::size_t label) const;
};

// Labels LABEL0..LABELn-1, multilabel.
LabelSpace synthetic_label_space(const SyntheticSpec& spec);

// Background words bg0..bgB-1 plus trigger words trig0..trign-1.
Vocabulary synthetic_vocabulary(const SyntheticSpec& spec);

// Deterministic (spec.seed) generation and 80/20 split: (train, test).
std::pair<std::vector<Document>, std::vector<Document>> generate_synthetic_corpus(
    const SyntheticSpec& spec, const Vocabulary& vocab);

}  // namespace chunkpool
