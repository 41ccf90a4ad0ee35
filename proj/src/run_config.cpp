#include "chunkpool/run_config.hpp"

#include <fstream>

#include "chunkpool/errors.hpp"

namespace chunkpool {

using nlohmann::json;

namespace {

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

json synthetic_spec_to_json(const SyntheticSpec& spec) {
    json j;
    j["n_docs"] = spec.n_docs;
    j["n_labels"] = spec.n_labels;
    j["chunks_per_doc"] = spec.chunks_per_doc;
    j["tokens_per_chunk"] = spec.tokens_per_chunk;
    j["trigger_position"] = trigger_position_to_string(spec.trigger_position);
    j["fixed_chunk"] = spec.fixed_chunk;
    j["background_vocab_size"] = spec.background_vocab_size;
    j["label_prevalence"] = spec.label_prevalence;
    j["seed"] = spec.seed;
    return j;
}

SyntheticSpec synthetic_spec_from_json(const json& j) {
    SyntheticSpec spec;
    spec.n_docs = get_or<std::size_t>(j, "n_docs", spec.n_docs);
    spec.n_labels = get_or<std::size_t>(j, "n_labels", spec.n_labels);
    spec.chunks_per_doc = get_or<std::size_t>(j, "chunks_per_doc", spec.chunks_per_doc);
    spec.tokens_per_chunk = get_or<std::size_t>(j, "tokens_per_chunk", spec.tokens_per_chunk);
    spec.trigger_position =
        trigger_position_from_string(get_or<std::string>(j, "trigger_position", "uniform"));
    spec.fixed_chunk = get_or<std::size_t>(j, "fixed_chunk", spec.fixed_chunk);
    spec.background_vocab_size =
        get_or<std::size_t>(j, "background_vocab_size", spec.background_vocab_size);
    if (j.contains("label_prevalence")) {
        const json& p = j.at("label_prevalence");
        if (p.is_number()) {
            spec.label_prevalence = {p.get<double>()};
        } else if (p.is_array()) {
            spec.label_prevalence = p.get<std::vector<double>>();
        } else {
            throw ConfigError("label_prevalence must be a number or an array");
        }
    }
    spec.seed = get_or<std::uint64_t>(j, "seed", spec.seed);
    return spec;
}

json train_config_to_json(const TrainConfig& cfg) {
    json j;
    j["lr"] = cfg.lr;
    j["beta1"] = cfg.beta1;
    j["beta2"] = cfg.beta2;
    j["adam_eps"] = cfg.adam_eps;
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    j["seed"] = cfg.seed;
    j["freeze_below_last"] = cfg.freeze_below_last;
    return j;
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig cfg;
    cfg.lr = get_or<double>(j, "lr", cfg.lr);
    cfg.beta1 = get_or<double>(j, "beta1", cfg.beta1);
    cfg.beta2 = get_or<double>(j, "beta2", cfg.beta2);
    cfg.adam_eps = get_or<double>(j, "adam_eps", cfg.adam_eps);
    cfg.epochs = get_or<std::size_t>(j, "epochs", cfg.epochs);
    cfg.batch_size = get_or<std::size_t>(j, "batch_size", cfg.batch_size);
    cfg.seed = get_or<std::uint64_t>(j, "seed", cfg.seed);
    cfg.freeze_below_last = get_or<bool>(j, "freeze_below_last", cfg.freeze_below_last);
    return cfg;
}

void RunConfig::validate() const {
    // The full model config is validated when the model is built, after the
    // vocabulary fills the derived fields; check everything else up front.
    model.chunking.validate();
    model.labels.validate();
    train.validate();
    if (synthetic) synthetic->validate(model.chunking.content_len);
    if (corpus) {
        if (corpus->train.empty() || corpus->test.empty())
            throw ConfigError("corpus paths must name both train and test files");
    }
    if (!synthetic && !corpus)
        throw ConfigError("config needs either corpus paths or a synthetic spec");
    if (!synthetic && vocab_path.empty())
        throw ConfigError("config needs a vocab path when no synthetic spec is present");
    if (synthetic && model.labels.size() != synthetic->n_labels)
        throw ConfigError("label space size does not match synthetic n_labels");
    if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

json RunConfig::to_json() const {
    json j;
    j["vocab"] = vocab_path;
    j["model"] = model.to_json();
    j["train"] = train_config_to_json(train);
    if (synthetic) j["synthetic"] = synthetic_spec_to_json(*synthetic);
    if (corpus) j["corpus"] = {{"train", corpus->train}, {"test", corpus->test}};
    j["output_dir"] = output_dir;
    return j;
}

RunConfig RunConfig::from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("run config must be a JSON object");
    RunConfig cfg;
    cfg.vocab_path = get_or<std::string>(j, "vocab", "");
    cfg.output_dir = get_or<std::string>(j, "output_dir", "out");
    if (j.contains("synthetic") && !j.at("synthetic").is_null())
        cfg.synthetic = synthetic_spec_from_json(j.at("synthetic"));
    if (j.contains("corpus") && !j.at("corpus").is_null()) {
        const json& c = j.at("corpus");
        CorpusPaths paths;
        paths.train = get_or<std::string>(c, "train", "");
        paths.test = get_or<std::string>(c, "test", "");
        cfg.corpus = paths;
    }
    if (j.contains("train") && !j.at("train").is_null())
        cfg.train = train_config_from_json(j.at("train"));

    json model_json = j.contains("model") ? j.at("model") : json::object();
    if (!model_json.contains("labels") && cfg.synthetic) {
        // Synthetic runs may leave the label space implicit.
        LabelSpace space = synthetic_label_space(*cfg.synthetic);
        model_json["labels"] = {{"names", space.names},
                                {"task_type", task_type_to_string(space.task_type)}};
    }
    cfg.model = ModelConfig::from_json(model_json);
    return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
    }
    return RunConfig::from_json(j);
}

}  // namespace chunkpool
