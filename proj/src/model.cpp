#include "chunkpool/model.hpp"

#include "chunkpool/errors.hpp"

namespace chunkpool {

using nlohmann::json;

void ModelConfig::validate() const {
    chunking.validate();
    encoder.validate();
    aggregator.validate();
    labels.validate();
    classifier.validate();
    if (encoder.max_positions < chunking.total_len())
        throw ConfigError("encoder max_positions " + std::to_string(encoder.max_positions) +
                          " below chunk length " + std::to_string(chunking.total_len()));
    if (classifier.in_width != aggregator.out_width(encoder.hidden))
        throw ConfigError("classifier in_width " + std::to_string(classifier.in_width) +
                          " does not match aggregator output width " +
                          std::to_string(aggregator.out_width(encoder.hidden)));
}

json ModelConfig::to_json() const {
    json j;
    j["chunking"]["content_len"] = chunking.content_len;
    if (chunking.max_chunks)
        j["chunking"]["max_chunks"] = *chunking.max_chunks;
    else
        j["chunking"]["max_chunks"] = nullptr;

    j["encoder"]["vocab_size"] = encoder.vocab_size;
    j["encoder"]["hidden"] = encoder.hidden;
    j["encoder"]["n_layers"] = encoder.n_layers;
    j["encoder"]["n_heads"] = encoder.n_heads;
    j["encoder"]["ffn_dim"] = encoder.ffn_dim;
    j["encoder"]["max_positions"] = encoder.max_positions;
    j["encoder"]["dropout_p"] = encoder.dropout_p;

    j["aggregator"]["kind"] = aggregator_kind_to_string(aggregator.kind);
    j["aggregator"]["max_chunks"] = aggregator.max_chunks;
    j["aggregator"]["n_heads"] = aggregator.n_heads;
    j["aggregator"]["ffn_dim"] = aggregator.ffn_dim;
    j["aggregator"]["max_positions"] = aggregator.max_positions;
    j["aggregator"]["dropout_p"] = aggregator.dropout_p;

    j["labels"]["names"] = labels.names;
    j["labels"]["task_type"] = task_type_to_string(labels.task_type);

    j["classifier"]["threshold"] = classifier.threshold;
    j["classifier"]["dropout_p"] = classifier.dropout_p;
    j["classifier"]["in_width"] = classifier.in_width;
    return j;
}

namespace {

// Field accessors that name the offending key on type or presence errors.
const json& need(const json& j, const char* key) {
    if (!j.contains(key)) throw ConfigError(std::string("config is missing \"") + key + "\"");
    return j.at(key);
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key) || j.at(key).is_null()) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config field \"") + key + "\" has the wrong type");
    }
}

}  // namespace

ModelConfig ModelConfig::from_json(const json& j) {
    ModelConfig cfg;
    if (j.contains("chunking")) {
        const json& c = j.at("chunking");
        cfg.chunking.content_len = get_or<std::size_t>(c, "content_len", 510);
        if (c.contains("max_chunks") && !c.at("max_chunks").is_null())
            cfg.chunking.max_chunks = c.at("max_chunks").get<std::size_t>();
    }
    if (j.contains("encoder")) {
        const json& e = j.at("encoder");
        cfg.encoder.vocab_size = get_or<std::size_t>(e, "vocab_size", 0);
        cfg.encoder.hidden = get_or<std::size_t>(e, "hidden", 768);
        cfg.encoder.n_layers = get_or<std::size_t>(e, "n_layers", 2);
        cfg.encoder.n_heads = get_or<std::size_t>(e, "n_heads", 2);
        cfg.encoder.ffn_dim = get_or<std::size_t>(e, "ffn_dim", 0);
        cfg.encoder.max_positions = get_or<std::size_t>(e, "max_positions", 512);
        cfg.encoder.dropout_p = get_or<double>(e, "dropout_p", 0.1);
    } else {
        cfg.encoder.hidden = 768;
    }
    if (j.contains("aggregator")) {
        const json& a = j.at("aggregator");
        cfg.aggregator.kind =
            aggregator_kind_from_string(get_or<std::string>(a, "kind", "mean"));
        cfg.aggregator.max_chunks = get_or<std::size_t>(a, "max_chunks", 0);
        cfg.aggregator.n_heads = get_or<std::size_t>(a, "n_heads", 2);
        cfg.aggregator.ffn_dim = get_or<std::size_t>(a, "ffn_dim", 0);
        cfg.aggregator.max_positions = get_or<std::size_t>(a, "max_positions", 64);
        cfg.aggregator.dropout_p = get_or<double>(a, "dropout_p", 0.1);
    }
    const json& l = need(j, "labels");
    cfg.labels.names = need(l, "names").get<std::vector<std::string>>();
    cfg.labels.task_type =
        task_type_from_string(get_or<std::string>(l, "task_type", "multilabel"));
    if (j.contains("classifier")) {
        const json& c = j.at("classifier");
        cfg.classifier.threshold = get_or<double>(c, "threshold", 0.5);
        cfg.classifier.dropout_p = get_or<double>(c, "dropout_p", 0.1);
        cfg.classifier.in_width = get_or<std::size_t>(c, "in_width", 0);
    }
    return cfg;
}

Model::Model(ModelConfig cfg, Vocabulary vocab, std::uint64_t init_seed)
    : cfg_(std::move(cfg)), vocab_(std::move(vocab)), init_seed_(init_seed) {
    if (cfg_.encoder.vocab_size == 0) cfg_.encoder.vocab_size = vocab_.size();
    if (cfg_.encoder.vocab_size != vocab_.size())
        throw ConfigError("encoder vocab_size " + std::to_string(cfg_.encoder.vocab_size) +
                          " does not match vocabulary of " + std::to_string(vocab_.size()));
    if (cfg_.classifier.in_width == 0)
        cfg_.classifier.in_width = cfg_.aggregator.out_width(cfg_.encoder.hidden);
    cfg_.validate();

    Prng rng(init_seed_);
    init_encoder_params(params_, cfg_.encoder, rng);
    init_aggregator_params(params_, cfg_.aggregator, cfg_.encoder.hidden, rng);
    init_classifier_params(params_, cfg_.classifier.in_width, cfg_.labels.size(), rng);
}

ChunkedDocument Model::chunk_text(const std::string& text) const {
    return chunk_document(encode(text, vocab_), cfg_.chunking, vocab_);
}

Tensor Model::forward(const ChunkedDocument& doc, Mode mode, Prng& dropout_rng) const {
    const std::vector<Tensor> cls =
        encode_document(doc, params_, cfg_.encoder, mode, dropout_rng);
    const Tensor doc_vec = aggregate(cls, cfg_.aggregator, params_, mode, dropout_rng);
    return project(doc_vec, params_, cfg_.classifier.dropout_p, mode, dropout_rng);
}

Tensor Model::forward_text(const std::string& text, Mode mode, Prng& dropout_rng) const {
    return forward(chunk_text(text), mode, dropout_rng);
}

std::vector<std::size_t> Model::predict(const std::string& text) const {
    NoGradGuard no_grad;
    Prng unused(0);
    const Tensor probs = forward_text(text, Mode::eval, unused);
    return decide(probs, cfg_.labels, cfg_.classifier.threshold);
}

}  // namespace chunkpool
