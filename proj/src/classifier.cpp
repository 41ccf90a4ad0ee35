#include "chunkpool/classifier.hpp"

#include <unordered_set>

#include "chunkpool/errors.hpp"

namespace chunkpool {

TaskType task_type_from_string(const std::string& name) {
    if (name == "multilabel") return TaskType::multilabel;
    if (name == "multiclass") return TaskType::multiclass;
    throw ConfigError("unknown task type \"" + name + "\"");
}

std::string task_type_to_string(TaskType type) {
    return type == TaskType::multilabel ? "multilabel" : "multiclass";
}

int LabelSpace::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return static_cast<int>(i);
    return -1;
}

void LabelSpace::validate() const {
    if (names.empty()) throw ConfigError("label space must name at least one label");
    std::unordered_set<std::string> seen;
    for (const std::string& n : names) {
        if (n.empty()) throw ConfigError("label names must be non-empty");
        if (!seen.insert(n).second) throw ConfigError("duplicate label name \"" + n + "\"");
    }
}

void ClassifierConfig::validate() const {
    if (threshold <= 0.0 || threshold >= 1.0)
        throw ConfigError("classifier: threshold must lie strictly inside (0, 1)");
    if (dropout_p < 0.0 || dropout_p >= 1.0)
        throw ConfigError("classifier: dropout_p outside [0, 1)");
    if (in_width == 0) throw ConfigError("classifier: in_width must be positive");
}

void init_classifier_params(ParameterStore& store, std::size_t in_width,
                            std::size_t n_labels, Prng& rng) {
    std::vector<double> w(in_width * n_labels);
    for (double& x : w) x = rng.normal(0.0, 0.02);
    store.add("head.weight", Tensor::from_values({in_width, n_labels}, std::move(w)));
    store.add("head.bias", Tensor::zeros({n_labels}));
}

Tensor project(const Tensor& doc_vec, const ParameterStore& params, double dropout_p,
               Mode mode, Prng& dropout_rng) {
    const Tensor& w = params.at("head.weight").tensor;
    if (doc_vec.rank() != 1 || doc_vec.numel() != w.rows())
        throw ShapeError("project: document vector " + shape_str(doc_vec.shape()) +
                         " does not match head input width " + std::to_string(w.rows()));
    const Tensor dropped = dropout(doc_vec, dropout_p, mode, dropout_rng);
    const Tensor logits =
        add(matmul(reshape(dropped, {1, doc_vec.numel()}), w), params.at("head.bias").tensor);
    return reshape(sigmoid(logits), {w.cols()});
}

std::vector<std::size_t> decide(const Tensor& probs, const LabelSpace& space,
                                double threshold) {
    if (probs.rank() != 1 || probs.numel() != space.size())
        throw ShapeError("decide: " + std::to_string(probs.numel()) +
                         " probabilities for " + std::to_string(space.size()) + " labels");
    std::vector<std::size_t> out;
    if (space.task_type == TaskType::multiclass) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < probs.numel(); ++j)
            if (probs.at(j) > probs.at(best)) best = j;
        out.push_back(best);
    } else {
        for (std::size_t j = 0; j < probs.numel(); ++j)
            if (probs.at(j) > threshold) out.push_back(j);
    }
    return out;
}

}  // namespace chunkpool
