#include "chunkpool/evaluation.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "chunkpool/errors.hpp"

namespace chunkpool {

nlohmann::json EvalReport::to_json() const {
    if (per_label.size() != label_names.size())
        throw ShapeError("per-label counts do not match the label names");
    nlohmann::json j;
    j["micro_f1"] = micro_f1;
    j["n_docs"] = n_docs;
    j["aggregator"] = aggregator;
    j["config_digest"] = config_digest;
    nlohmann::json labels;
    for (std::size_t i = 0; i < per_label.size(); ++i) {
        labels[label_names[i]] = {
            {"tp", per_label[i].tp}, {"fp", per_label[i].fp}, {"fn", per_label[i].fn}};
    }
    j["per_label"] = labels;
    return j;
}

EvalReport micro_f1(const std::vector<LabeledSet>& predictions,
                    const std::vector<LabeledSet>& golds, const LabelSpace& space) {
    if (predictions.size() != golds.size())
        throw DataError("prediction/gold document counts differ: " +
                        std::to_string(predictions.size()) + " vs " +
                        std::to_string(golds.size()));

    EvalReport report;
    report.label_names = space.names;
    report.per_label.resize(space.size());
    report.n_docs = predictions.size();

    std::vector<char> in_pred(space.size()), in_gold(space.size());
    for (std::size_t d = 0; d < predictions.size(); ++d) {
        if (predictions[d].id != golds[d].id)
            throw DataError("prediction/gold id mismatch at position " + std::to_string(d) +
                            ": \"" + predictions[d].id + "\" vs \"" + golds[d].id + "\"");
        std::fill(in_pred.begin(), in_pred.end(), 0);
        std::fill(in_gold.begin(), in_gold.end(), 0);
        for (std::size_t j : predictions[d].labels) {
            if (j >= space.size()) throw IndexError("predicted label index out of range");
            in_pred[j] = 1;
        }
        for (std::size_t j : golds[d].labels) {
            if (j >= space.size()) throw IndexError("gold label index out of range");
            in_gold[j] = 1;
        }
        for (std::size_t j = 0; j < space.size(); ++j) {
            if (in_pred[j] && in_gold[j])
                ++report.per_label[j].tp;
            else if (in_pred[j])
                ++report.per_label[j].fp;
            else if (in_gold[j])
                ++report.per_label[j].fn;
        }
    }

    std::size_t tp = 0, fp = 0, fn = 0;
    for (const auto& c : report.per_label) {
        tp += c.tp;
        fp += c.fp;
        fn += c.fn;
    }
    std::size_t denom = 2 * tp + fp + fn;
    report.micro_f1 = denom == 0 ? 0.0
                                 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
    return report;
}

std::string config_digest(const ModelConfig& cfg) {
    std::string text = cfg.to_json().dump();
    std::uint64_t hash = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        hash ^= c;
        hash *= 0x100000001b3ull;
    }
    std::ostringstream out;
    out << std::hex << std::setfill('0') << std::setw(16) << hash;
    return out.str();
}

EvalReport evaluate(const Model& model, const std::vector<Document>& corpus,
                    std::optional<double> threshold) {
    const LabelSpace& space = model.config().labels;
    validate_corpus(corpus, space);
    double theta = threshold.value_or(model.config().classifier.threshold);
    if (!(theta > 0.0) || !(theta < 1.0))
        throw ConfigError("decision threshold must lie in (0, 1)");

    NoGradGuard guard;
    Prng unused(0);  // eval-mode forward consumes no draws
    std::vector<LabeledSet> predictions, golds;
    predictions.reserve(corpus.size());
    golds.reserve(corpus.size());
    for (const auto& doc : corpus) {
        Tensor probs = model.forward_text(doc.text, Mode::eval, unused);
        LabeledSet pred{doc.id, decide(probs, space, theta)};
        LabeledSet gold{doc.id, {}};
        for (const auto& name : doc.gold_labels)
            gold.labels.push_back(static_cast<std::size_t>(space.index_of(name)));
        std::sort(gold.labels.begin(), gold.labels.end());
        predictions.push_back(std::move(pred));
        golds.push_back(std::move(gold));
    }

    EvalReport report = micro_f1(predictions, golds, space);
    report.aggregator = aggregator_kind_to_string(model.config().aggregator.kind);
    report.config_digest = config_digest(model.config());
    return report;
}

}  // namespace chunkpool
