#include "chunkpool/encoder.hpp"

#include <cmath>
#include <numeric>

#include "chunkpool/errors.hpp"

namespace chunkpool {

void EncoderConfig::validate() const {
    if (vocab_size == 0) throw ConfigError("encoder: vocab_size must be positive");
    if (hidden == 0) throw ConfigError("encoder: hidden must be positive");
    if (n_layers == 0) throw ConfigError("encoder: n_layers must be positive");
    if (n_heads == 0 || hidden % n_heads != 0)
        throw ConfigError("encoder: hidden " + std::to_string(hidden) +
                          " not divisible by n_heads " + std::to_string(n_heads));
    if (max_positions == 0) throw ConfigError("encoder: max_positions must be positive");
    if (dropout_p < 0.0 || dropout_p >= 1.0)
        throw ConfigError("encoder: dropout_p outside [0, 1)");
}

namespace {

Tensor gaussian(Shape shape, Prng& rng, double stddev = 0.02) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal(0.0, stddev);
    return Tensor::from_values(std::move(shape), std::move(v));
}

}  // namespace

void init_layer_params(ParameterStore& store, const std::string& prefix,
                       std::size_t hidden, std::size_t ffn, Prng& rng) {
    const char* mats[] = {"attn.wq", "attn.wk", "attn.wv", "attn.wo"};
    const char* vecs[] = {"attn.bq", "attn.bk", "attn.bv", "attn.bo"};
    for (int i = 0; i < 4; ++i) {
        store.add(prefix + mats[i], gaussian({hidden, hidden}, rng));
        store.add(prefix + vecs[i], Tensor::zeros({hidden}));
    }
    store.add(prefix + "ln1.gamma", Tensor::full({hidden}, 1.0));
    store.add(prefix + "ln1.beta", Tensor::zeros({hidden}));
    store.add(prefix + "ffn.w1", gaussian({hidden, ffn}, rng));
    store.add(prefix + "ffn.b1", Tensor::zeros({ffn}));
    store.add(prefix + "ffn.w2", gaussian({ffn, hidden}, rng));
    store.add(prefix + "ffn.b2", Tensor::zeros({hidden}));
    store.add(prefix + "ln2.gamma", Tensor::full({hidden}, 1.0));
    store.add(prefix + "ln2.beta", Tensor::zeros({hidden}));
}

void init_encoder_params(ParameterStore& store, const EncoderConfig& cfg, Prng& rng) {
    cfg.validate();
    store.add("embeddings.token", gaussian({cfg.vocab_size, cfg.hidden}, rng));
    store.add("embeddings.position", gaussian({cfg.max_positions, cfg.hidden}, rng));
    for (std::size_t layer = 1; layer <= cfg.n_layers; ++layer)
        init_layer_params(store, "encoder.layer" + std::to_string(layer) + ".",
                          cfg.hidden, cfg.ffn_width(), rng);
}

Tensor multi_head_self_attention(const Tensor& x, const Tensor& mask,
                                 const ParameterStore& params, const std::string& prefix,
                                 std::size_t n_heads) {
    const std::size_t d = x.cols();
    if (n_heads == 0 || d % n_heads != 0)
        throw ConfigError("attention: width " + std::to_string(d) +
                          " not divisible by " + std::to_string(n_heads) + " heads");
    const std::size_t dh = d / n_heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    const Tensor q = add(matmul(x, params.at(prefix + "attn.wq").tensor),
                         params.at(prefix + "attn.bq").tensor);
    const Tensor k = add(matmul(x, params.at(prefix + "attn.wk").tensor),
                         params.at(prefix + "attn.bk").tensor);
    const Tensor v = add(matmul(x, params.at(prefix + "attn.wv").tensor),
                         params.at(prefix + "attn.bv").tensor);

    std::vector<Tensor> heads;
    heads.reserve(n_heads);
    for (std::size_t h = 0; h < n_heads; ++h) {
        const Tensor qh = slice_cols(q, h * dh, dh);
        const Tensor kh = slice_cols(k, h * dh, dh);
        const Tensor vh = slice_cols(v, h * dh, dh);
        const Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
        const Tensor attn = softmax_masked(scores, mask);
        heads.push_back(matmul(attn, vh));
    }
    return add(matmul(concat_cols(heads), params.at(prefix + "attn.wo").tensor),
               params.at(prefix + "attn.bo").tensor);
}

Tensor encoder_layer(const Tensor& x, const Tensor& mask, const ParameterStore& params,
                     const std::string& prefix, std::size_t n_heads, double dropout_p,
                     Mode mode, Prng& dropout_rng) {
    const Tensor attn = multi_head_self_attention(x, mask, params, prefix, n_heads);
    const Tensor y = layer_norm(add(x, dropout(attn, dropout_p, mode, dropout_rng)),
                                params.at(prefix + "ln1.gamma").tensor,
                                params.at(prefix + "ln1.beta").tensor);
    const Tensor ffn = add(
        matmul(gelu(add(matmul(y, params.at(prefix + "ffn.w1").tensor),
                        params.at(prefix + "ffn.b1").tensor)),
               params.at(prefix + "ffn.w2").tensor),
        params.at(prefix + "ffn.b2").tensor);
    return layer_norm(add(y, dropout(ffn, dropout_p, mode, dropout_rng)),
                      params.at(prefix + "ln2.gamma").tensor,
                      params.at(prefix + "ln2.beta").tensor);
}

ChunkEncoding encode_chunk(const std::vector<int>& ids, const std::vector<double>& mask,
                           const ParameterStore& params, const EncoderConfig& cfg,
                           Mode mode, Prng& dropout_rng) {
    if (ids.size() != mask.size())
        throw ShapeError("encode_chunk: ids and mask lengths differ");
    if (ids.size() > cfg.max_positions)
        throw ConfigError("encode_chunk: chunk length " + std::to_string(ids.size()) +
                          " exceeds max_positions " + std::to_string(cfg.max_positions));

    std::vector<int> positions(ids.size());
    std::iota(positions.begin(), positions.end(), 0);
    const Tensor token_emb = embedding_lookup(params.at("embeddings.token").tensor, ids);
    const Tensor pos_emb =
        embedding_lookup(params.at("embeddings.position").tensor, positions);
    const Tensor mask_t = Tensor::from_values({mask.size()}, mask);
    Tensor x = zero_masked_rows(add(token_emb, pos_emb), mask_t);

    for (std::size_t layer = 1; layer <= cfg.n_layers; ++layer)
        x = encoder_layer(x, mask_t, params, "encoder.layer" + std::to_string(layer) + ".",
                          cfg.n_heads, cfg.dropout_p, mode, dropout_rng);

    return ChunkEncoding{x, row(x, 0)};
}

std::vector<Tensor> encode_document(const ChunkedDocument& doc,
                                    const ParameterStore& params, const EncoderConfig& cfg,
                                    Mode mode, Prng& dropout_rng) {
    if (doc.n_chunks() == 0) throw ShapeError("encode_document: document has no chunks");
    std::vector<Tensor> cls;
    cls.reserve(doc.n_chunks());
    for (const Chunk& chunk : doc.chunks)
        cls.push_back(encode_chunk(chunk.ids, chunk.mask, params, cfg, mode, dropout_rng).cls);
    return cls;
}

}  // namespace chunkpool
