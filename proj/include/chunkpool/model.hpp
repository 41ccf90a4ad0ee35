#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "chunkpool/aggregation.hpp"
#include "chunkpool/chunker.hpp"
#include "chunkpool/classifier.hpp"
#include "chunkpool/encoder.hpp"
#include "chunkpool/tokenizer.hpp"

namespace chunkpool {

// Everything needed to rebuild a model's architecture (not its weights).
struct ModelConfig {
    ChunkingConfig chunking;
    EncoderConfig encoder;      // vocab_size 0 -> filled from the vocabulary
    AggregatorConfig aggregator;
    LabelSpace labels;
    ClassifierConfig classifier;  // in_width 0 -> filled from the aggregator

    void validate() const;
    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

class Model {
  public:
    // Fills derived config fields, validates, and initializes all parameters
    // from Prng(init_seed) in a fixed registration order.
    Model(ModelConfig cfg, Vocabulary vocab, std::uint64_t init_seed);

    const ModelConfig& config() const { return cfg_; }
    const Vocabulary& vocabulary() const { return vocab_; }
    ParameterStore& params() { return params_; }
    const ParameterStore& params() const { return params_; }
    std::uint64_t init_seed() const { return init_seed_; }
    std::size_t n_encoder_layers() const { return cfg_.encoder.n_layers; }

    ChunkedDocument chunk_text(const std::string& text) const;

    // Per-label probabilities for one chunked document.
    Tensor forward(const ChunkedDocument& doc, Mode mode, Prng& dropout_rng) const;
    Tensor forward_text(const std::string& text, Mode mode, Prng& dropout_rng) const;

    // Eval-mode decision (no dropout draws consumed).
    std::vector<std::size_t> predict(const std::string& text) const;

  private:
    ModelConfig cfg_;
    Vocabulary vocab_;
    ParameterStore params_;
    std::uint64_t init_seed_;
};

}  // namespace chunkpool
