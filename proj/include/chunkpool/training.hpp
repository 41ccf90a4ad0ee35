#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "chunkpool/data.hpp"
#include "chunkpool/model.hpp"

namespace chunkpool {

struct TrainConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t epochs = 30;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
    bool freeze_below_last = true;

    void validate() const;
};

// When freezing is on, embeddings and every encoder layer except the top one
// stay fixed; the top layer, aggregator, and head remain trainable.
void set_trainability(Model& model, bool freeze_below_last);

// Adam with bias correction over the trainable parameters of a store.
// Missing gradients count as zero; gradients are cleared after each step.
class AdamState {
  public:
    explicit AdamState(const TrainConfig& cfg) : cfg_(cfg) {}

    void step(ParameterStore& params);
    std::size_t steps_taken() const { return t_; }

  private:
    struct Moments {
        std::vector<double> m;
        std::vector<double> v;
    };

    TrainConfig cfg_;
    std::size_t t_ = 0;
    std::unordered_map<std::string, Moments> moments_;
};

struct TrainLog {
    std::vector<double> epoch_mean_loss;
    std::size_t steps = 0;
};

TrainLog fit(Model& model, const std::vector<Document>& corpus, const TrainConfig& cfg);

}  // namespace chunkpool
