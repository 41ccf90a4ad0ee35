#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "chunkpool/data.hpp"
#include "chunkpool/model.hpp"

namespace chunkpool {

struct LabelCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
};

struct EvalReport {
    double micro_f1 = 0.0;
    std::vector<std::string> label_names;
    std::vector<LabelCounts> per_label;  // aligned with label_names
    std::size_t n_docs = 0;
    std::string aggregator;
    std::string config_digest;

    nlohmann::json to_json() const;
};

// A document id paired with the set of label indices assigned to it.
struct LabeledSet {
    std::string id;
    std::vector<std::size_t> labels;
};

// Micro-averaged F1 = 2·TP / (2·TP + FP + FN) over all labels, 0 when the
// denominator vanishes. Predictions and golds must align id-for-id.
EvalReport micro_f1(const std::vector<LabeledSet>& predictions,
                    const std::vector<LabeledSet>& golds, const LabelSpace& space);

// FNV-1a over the canonical config JSON, as 16 hex digits.
std::string config_digest(const ModelConfig& cfg);

// Eval-mode inference over the corpus followed by micro_f1. The decision
// threshold defaults to the one in the model config.
EvalReport evaluate(const Model& model, const std::vector<Document>& corpus,
                    std::optional<double> threshold = std::nullopt);

}  // namespace chunkpool
