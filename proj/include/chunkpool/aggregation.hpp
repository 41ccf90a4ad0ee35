#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "chunkpool/rng.hpp"
#include "chunkpool/tensor.hpp"

namespace chunkpool {

enum class AggregatorKind { mean, identity, transformer, lstm };

AggregatorKind aggregator_kind_from_string(const std::string& name);
std::string aggregator_kind_to_string(AggregatorKind kind);

struct AggregatorConfig {
    AggregatorKind kind = AggregatorKind::mean;
    std::size_t max_chunks = 0;     // identity only: fixed width M
    std::size_t n_heads = 2;        // transformer pooler
    std::size_t ffn_dim = 0;        // transformer pooler, 0 -> 4d
    std::size_t max_positions = 64; // transformer pooler chunk-index embeddings
    double dropout_p = 0.1;

    void validate() const;
    // Width of the document embedding this aggregator feeds the head.
    std::size_t out_width(std::size_t hidden) const;
};

// Registers "agg.*" parameters for the chosen aggregator (none for mean and
// identity).
void init_aggregator_params(ParameterStore& store, const AggregatorConfig& cfg,
                            std::size_t hidden, Prng& rng);

// Dimension-wise mean over the CLS sequence, accumulated in chunk order.
Tensor f_mean(const std::vector<Tensor>& cls_seq);

// Concatenation of the first min(P, M) vectors, zero-padded to M*d; when
// P > M the tail is dropped and *truncated is set.
Tensor f_identity(const std::vector<Tensor>& cls_seq, std::size_t max_chunks,
                  bool* truncated = nullptr);

// One transformer encoder layer over the sequence (chunk-index position
// embeddings, no masking) followed by a dimension-wise max.
Tensor f_transformer(const std::vector<Tensor>& cls_seq, const ParameterStore& params,
                     const AggregatorConfig& cfg, Mode mode, Prng& dropout_rng);

// Standard LSTM gate equations; x, h, c are width-d vectors.
std::pair<Tensor, Tensor> lstm_cell(const Tensor& x, const Tensor& h, const Tensor& c,
                                    const ParameterStore& params);

// Left-to-right fold from h0 = c0 = 0; returns the last hidden state.
Tensor f_lstm(const std::vector<Tensor>& cls_seq, const ParameterStore& params);

// Dispatch on cfg.kind.
Tensor aggregate(const std::vector<Tensor>& cls_seq, const AggregatorConfig& cfg,
                 const ParameterStore& params, Mode mode, Prng& dropout_rng);

}  // namespace chunkpool
