#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "chunkpool/chunker.hpp"
#include "chunkpool/rng.hpp"
#include "chunkpool/tensor.hpp"

namespace chunkpool {

struct EncoderConfig {
    std::size_t vocab_size = 0;
    std::size_t hidden = 64;
    std::size_t n_layers = 2;
    std::size_t n_heads = 2;
    std::size_t ffn_dim = 0;  // 0 -> 4 * hidden
    std::size_t max_positions = 512;
    double dropout_p = 0.1;

    std::size_t ffn_width() const { return ffn_dim == 0 ? 4 * hidden : ffn_dim; }
    void validate() const;
};

struct ChunkEncoding {
    Tensor token_reps;  // total_len x hidden
    Tensor cls;         // hidden (row 0 of token_reps)
};

// Registers token/position embedding tables and per-layer weights under
// "embeddings.*" and "encoder.layerN.*" (N 1-based; layer L is the top).
// Weights are drawn normal(0, 0.02), biases zero, layer-norm gamma 1, beta 0.
void init_encoder_params(ParameterStore& store, const EncoderConfig& cfg, Prng& rng);

// Registers one encoder layer's weights under an arbitrary prefix (used for
// both encoder layers and the pooling transformer layer).
void init_layer_params(ParameterStore& store, const std::string& prefix,
                       std::size_t hidden, std::size_t ffn, Prng& rng);

// Per head: softmax(Q K^T / sqrt(d/H)) V with masked key positions excluded;
// heads concatenated and projected. `prefix` selects "...attn." parameters.
Tensor multi_head_self_attention(const Tensor& x, const Tensor& mask,
                                 const ParameterStore& params, const std::string& prefix,
                                 std::size_t n_heads);

// Post-norm: y = LN(x + Drop(MHSA(x))); out = LN(y + Drop(FFN(y))).
Tensor encoder_layer(const Tensor& x, const Tensor& mask, const ParameterStore& params,
                     const std::string& prefix, std::size_t n_heads, double dropout_p,
                     Mode mode, Prng& dropout_rng);

// Token + position embeddings (positions restart at 0 per chunk), PAD rows
// zeroed, then the full layer stack.
ChunkEncoding encode_chunk(const std::vector<int>& ids, const std::vector<double>& mask,
                           const ParameterStore& params, const EncoderConfig& cfg,
                           Mode mode, Prng& dropout_rng);

// Ordered per-chunk CLS embeddings.
std::vector<Tensor> encode_document(const ChunkedDocument& doc,
                                    const ParameterStore& params, const EncoderConfig& cfg,
                                    Mode mode, Prng& dropout_rng);

}  // namespace chunkpool
