#include "chunkpool/aggregation.hpp"

#include <numeric>

#include "chunkpool/encoder.hpp"
#include "chunkpool/errors.hpp"

namespace chunkpool {

AggregatorKind aggregator_kind_from_string(const std::string& name) {
    if (name == "mean") return AggregatorKind::mean;
    if (name == "identity") return AggregatorKind::identity;
    if (name == "transformer") return AggregatorKind::transformer;
    if (name == "lstm") return AggregatorKind::lstm;
    throw ConfigError("unknown aggregator \"" + name + "\"");
}

std::string aggregator_kind_to_string(AggregatorKind kind) {
    switch (kind) {
        case AggregatorKind::mean: return "mean";
        case AggregatorKind::identity: return "identity";
        case AggregatorKind::transformer: return "transformer";
        case AggregatorKind::lstm: return "lstm";
    }
    throw ConfigError("invalid aggregator kind");
}

void AggregatorConfig::validate() const {
    if (kind == AggregatorKind::identity && max_chunks == 0)
        throw ConfigError("identity aggregator requires max_chunks >= 1");
    if (kind == AggregatorKind::transformer) {
        if (n_heads == 0) throw ConfigError("transformer aggregator: n_heads must be positive");
        if (max_positions == 0)
            throw ConfigError("transformer aggregator: max_positions must be positive");
    }
    if (dropout_p < 0.0 || dropout_p >= 1.0)
        throw ConfigError("aggregator: dropout_p outside [0, 1)");
}

std::size_t AggregatorConfig::out_width(std::size_t hidden) const {
    return kind == AggregatorKind::identity ? max_chunks * hidden : hidden;
}

void init_aggregator_params(ParameterStore& store, const AggregatorConfig& cfg,
                            std::size_t hidden, Prng& rng) {
    cfg.validate();
    switch (cfg.kind) {
        case AggregatorKind::mean:
        case AggregatorKind::identity:
            return;
        case AggregatorKind::transformer: {
            std::vector<double> pos(cfg.max_positions * hidden);
            for (double& x : pos) x = rng.normal(0.0, 0.02);
            store.add("agg.position",
                      Tensor::from_values({cfg.max_positions, hidden}, std::move(pos)));
            const std::size_t ffn = cfg.ffn_dim == 0 ? 4 * hidden : cfg.ffn_dim;
            init_layer_params(store, "agg.layer1.", hidden, ffn, rng);
            return;
        }
        case AggregatorKind::lstm: {
            for (const char* gate : {"i", "f", "o", "g"}) {
                std::vector<double> w(hidden * hidden), u(hidden * hidden);
                for (double& x : w) x = rng.normal(0.0, 0.02);
                for (double& x : u) x = rng.normal(0.0, 0.02);
                store.add(std::string("agg.lstm.w") + gate,
                          Tensor::from_values({hidden, hidden}, std::move(w)));
                store.add(std::string("agg.lstm.u") + gate,
                          Tensor::from_values({hidden, hidden}, std::move(u)));
                store.add(std::string("agg.lstm.b") + gate, Tensor::zeros({hidden}));
            }
            return;
        }
    }
}

Tensor f_mean(const std::vector<Tensor>& cls_seq) {
    if (cls_seq.empty()) throw ShapeError("f_mean: empty CLS sequence");
    return reduce_mean(stack_rows(cls_seq));
}

Tensor f_identity(const std::vector<Tensor>& cls_seq, std::size_t max_chunks,
                  bool* truncated) {
    if (max_chunks == 0) throw ConfigError("f_identity: max_chunks must be >= 1");
    if (cls_seq.empty()) throw ShapeError("f_identity: empty CLS sequence");
    const std::size_t d = cls_seq.front().numel();
    const std::size_t keep = std::min(cls_seq.size(), max_chunks);
    if (truncated) *truncated = cls_seq.size() > max_chunks;

    std::vector<Tensor> parts(cls_seq.begin(), cls_seq.begin() + keep);
    for (std::size_t slot = keep; slot < max_chunks; ++slot)
        parts.push_back(Tensor::zeros({d}));
    return concat(parts);
}

Tensor f_transformer(const std::vector<Tensor>& cls_seq, const ParameterStore& params,
                     const AggregatorConfig& cfg, Mode mode, Prng& dropout_rng) {
    if (cls_seq.empty()) throw ShapeError("f_transformer: empty CLS sequence");
    const std::size_t p = cls_seq.size();
    if (p > cfg.max_positions)
        throw ConfigError("f_transformer: " + std::to_string(p) +
                          " chunks exceed max_positions " +
                          std::to_string(cfg.max_positions));

    std::vector<int> positions(p);
    std::iota(positions.begin(), positions.end(), 0);
    const Tensor x = add(stack_rows(cls_seq),
                         embedding_lookup(params.at("agg.position").tensor, positions));
    const Tensor mask = Tensor::full({p}, 1.0);
    const Tensor out = encoder_layer(x, mask, params, "agg.layer1.", cfg.n_heads,
                                     cfg.dropout_p, mode, dropout_rng);
    return reduce_max(out);
}

std::pair<Tensor, Tensor> lstm_cell(const Tensor& x, const Tensor& h, const Tensor& c,
                                    const ParameterStore& params) {
    const std::size_t d = x.numel();
    if (h.numel() != d || c.numel() != d)
        throw ShapeError("lstm_cell: widths differ, x " + shape_str(x.shape()) + ", h " +
                         shape_str(h.shape()) + ", c " + shape_str(c.shape()));

    const Tensor xr = reshape(x, {1, d});
    const Tensor hr = reshape(h, {1, d});
    auto gate = [&](const char* g) {
        return add(add(matmul(xr, params.at(std::string("agg.lstm.w") + g).tensor),
                       matmul(hr, params.at(std::string("agg.lstm.u") + g).tensor)),
                   params.at(std::string("agg.lstm.b") + g).tensor);
    };
    const Tensor i = sigmoid(gate("i"));
    const Tensor f = sigmoid(gate("f"));
    const Tensor o = sigmoid(gate("o"));
    const Tensor g = chunkpool::tanh(gate("g"));
    const Tensor cn = add(mul(f, reshape(c, {1, d})), mul(i, g));
    const Tensor hn = mul(o, chunkpool::tanh(cn));
    return {reshape(hn, {d}), reshape(cn, {d})};
}

Tensor f_lstm(const std::vector<Tensor>& cls_seq, const ParameterStore& params) {
    if (cls_seq.empty()) throw ShapeError("f_lstm: empty CLS sequence");
    const std::size_t d = cls_seq.front().numel();
    Tensor h = Tensor::zeros({d});
    Tensor c = Tensor::zeros({d});
    for (const Tensor& x : cls_seq) {
        auto [hn, cn] = lstm_cell(x, h, c, params);
        h = hn;
        c = cn;
    }
    return h;
}

Tensor aggregate(const std::vector<Tensor>& cls_seq, const AggregatorConfig& cfg,
                 const ParameterStore& params, Mode mode, Prng& dropout_rng) {
    switch (cfg.kind) {
        case AggregatorKind::mean: return f_mean(cls_seq);
        case AggregatorKind::identity: return f_identity(cls_seq, cfg.max_chunks);
        case AggregatorKind::transformer:
            return f_transformer(cls_seq, params, cfg, mode, dropout_rng);
        case AggregatorKind::lstm: return f_lstm(cls_seq, params);
    }
    throw ConfigError("invalid aggregator kind");
}

}  // namespace chunkpool
