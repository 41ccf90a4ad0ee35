#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "chunkpool/rng.hpp"
#include "chunkpool/tensor.hpp"

namespace chunkpool {

enum class TaskType { multilabel, multiclass };

TaskType task_type_from_string(const std::string& name);
std::string task_type_to_string(TaskType type);

struct LabelSpace {
    std::vector<std::string> names;
    TaskType task_type = TaskType::multilabel;

    std::size_t size() const { return names.size(); }
    int index_of(const std::string& name) const;  // -1 when absent
    void validate() const;
};

struct ClassifierConfig {
    double threshold = 0.5;
    double dropout_p = 0.1;
    std::size_t in_width = 0;  // d or M*d, per aggregator

    void validate() const;
};

// Registers "head.weight" (in_width x n_labels) and "head.bias" (n_labels).
void init_classifier_params(ParameterStore& store, std::size_t in_width,
                            std::size_t n_labels, Prng& rng);

// sigmoid(Dropout(doc_vec) W + b); dropout active in train mode only.
Tensor project(const Tensor& doc_vec, const ParameterStore& params, double dropout_p,
               Mode mode, Prng& dropout_rng);

// Multilabel: indices with probability strictly above the threshold, ascending.
// Multiclass: the argmax index (ties to the lowest), threshold ignored.
std::vector<std::size_t> decide(const Tensor& probs, const LabelSpace& space,
                                double threshold);

}  // namespace chunkpool
