#include "chunkpool/training.hpp"

#include <cmath>
#include <numeric>

#include "chunkpool/errors.hpp"
#include "chunkpool/rng.hpp"

namespace chunkpool {

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (!(beta1 >= 0.0) || !(beta1 < 1.0)) throw ConfigError("beta1 must lie in [0, 1)");
    if (!(beta2 >= 0.0) || !(beta2 < 1.0)) throw ConfigError("beta2 must lie in [0, 1)");
    if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
}

namespace {

// encoder.layer<k>. prefix with k below the top layer.
bool below_top_layer(const std::string& name, std::size_t n_layers) {
    const std::string prefix = "encoder.layer";
    if (name.compare(0, prefix.size(), prefix) != 0) return false;
    std::size_t pos = prefix.size();
    std::size_t end = pos;
    while (end < name.size() && name[end] >= '0' && name[end] <= '9') ++end;
    if (end == pos || end >= name.size() || name[end] != '.') return false;
    std::size_t layer = std::stoul(name.substr(pos, end - pos));
    return layer < n_layers;
}

}  // namespace

void set_trainability(Model& model, bool freeze_below_last) {
    std::size_t n_layers = model.config().encoder.n_layers;
    for (auto& param : model.params().all()) {
        bool frozen = freeze_below_last &&
                      (param.name.rfind("embeddings.", 0) == 0 ||
                       below_top_layer(param.name, n_layers));
        model.params().set_trainable(param.name, !frozen);
        if (frozen) param.tensor.zero_grad();
    }
}

void AdamState::step(ParameterStore& params) {
    ++t_;
    double bias1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bias2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& param : params.all()) {
        if (!param.trainable) continue;
        std::size_t n = param.tensor.numel();
        auto& mom = moments_[param.name];
        if (mom.m.empty()) {
            mom.m.assign(n, 0.0);
            mom.v.assign(n, 0.0);
        }
        const std::vector<double>* grad = param.tensor.has_grad() ? &param.tensor.grad() : nullptr;
        auto& w = param.tensor.values();
        for (std::size_t i = 0; i < n; ++i) {
            double g = grad ? (*grad)[i] : 0.0;
            mom.m[i] = cfg_.beta1 * mom.m[i] + (1.0 - cfg_.beta1) * g;
            mom.v[i] = cfg_.beta2 * mom.v[i] + (1.0 - cfg_.beta2) * g * g;
            double m_hat = mom.m[i] / bias1;
            double v_hat = mom.v[i] / bias2;
            w[i] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.adam_eps);
        }
        param.tensor.zero_grad();
    }
}

TrainLog fit(Model& model, const std::vector<Document>& corpus, const TrainConfig& cfg) {
    cfg.validate();
    if (corpus.empty()) throw DataError("training corpus is empty");
    const LabelSpace& space = model.config().labels;
    validate_corpus(corpus, space);

    set_trainability(model, cfg.freeze_below_last);
    AdamState adam(cfg);

    std::vector<ChunkedDocument> chunked;
    std::vector<std::vector<double>> targets;
    chunked.reserve(corpus.size());
    targets.reserve(corpus.size());
    for (const auto& doc : corpus) {
        chunked.push_back(model.chunk_text(doc.text));
        targets.push_back(target_vector(doc, space));
    }

    Prng dropout_rng(derive_seed(cfg.seed, 0x64726f70));  // stream independent of shuffling

    TrainLog log;
    std::vector<std::size_t> order(corpus.size());
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Prng shuffle_rng(cfg.seed ^ static_cast<std::uint64_t>(epoch));
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            double inv_batch = 1.0 / static_cast<double>(stop - start);
            for (std::size_t i = start; i < stop; ++i) {
                std::size_t doc = order[i];
                try {
                    Tensor probs = model.forward(chunked[doc], Mode::train, dropout_rng);
                    Tensor target = Tensor::from_values({space.size()}, targets[doc]);
                    Tensor loss = bce_loss(probs, target);
                    double value = loss.item();
                    if (!std::isfinite(value))
                        throw DomainError("non-finite training loss");
                    epoch_loss += value;
                    backward(scale(loss, inv_batch));
                } catch (const DomainError& e) {
                    // NaN or infinity anywhere in the pass surfaces as a domain
                    // violation; attach the epoch for diagnostics.
                    throw NumericError(e.what(), epoch);
                }
            }
            adam.step(model.params());
            ++log.steps;
        }
        log.epoch_mean_loss.push_back(epoch_loss / static_cast<double>(corpus.size()));
    }
    return log;
}

}  // namespace chunkpool
