#include "chunkpool/verification.hpp"

#include <algorithm>
#include <cmath>

#include "chunkpool/aggregation.hpp"
#include "chunkpool/classifier.hpp"
#include "chunkpool/encoder.hpp"
#include "chunkpool/rng.hpp"
#include "chunkpool/tensor.hpp"

namespace chunkpool {

namespace {

Tensor rand_tensor(Shape shape, Prng& rng, double lo = -1.5, double hi = 1.5) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    std::vector<double> v(n);
    for (double& x : v) x = lo + (hi - lo) * rng.uniform();
    return Tensor::from_values(std::move(shape), std::move(v));
}

// Scalarize through fixed random weights so every output entry feeds the
// loss with a distinct coefficient; a plain sum would hide transposition
// and permutation mistakes in backward rules.
Tensor weighted_sum(const Tensor& y, const Tensor& w) { return sum(mul(y, w)); }

Tensor coeffs_like(const Tensor& y, Prng& rng) {
    return rand_tensor(y.shape(), rng, -1.0, 1.0);
}

// tanh forward with a wrong derivative (1 - y instead of 1 - y^2); only the
// harness-sanity fixture uses this.
Tensor corrupted_tanh(const Tensor& x) {
    auto node = std::make_shared<detail::TensorNode>();
    node->shape = x.shape();
    node->data.resize(x.numel());
    for (std::size_t i = 0; i < x.numel(); ++i) node->data[i] = std::tanh(x.values()[i]);
    node->parents = {x.node()};
    node->requires_grad = detail::grad_enabled() && x.requires_grad();
    if (node->requires_grad) {
        auto parent = x.node();
        node->backward_fn = [parent](detail::TensorNode& self) {
            parent->ensure_grad();
            for (std::size_t i = 0; i < self.data.size(); ++i)
                parent->grad[i] += self.grad[i] * (1.0 - self.data[i]);
        };
    }
    return Tensor::wrap(std::move(node));
}

struct Suite {
    std::vector<CheckRow> rows;
    Prng rng{20240917};

    void add(const std::string& name, double err) { rows.push_back({name, err}); }

    // Check d(loss)/d(input) for one op applied to fresh random inputs.
    void check(const std::string& name, const std::function<Tensor(const Tensor&)>& f,
               Tensor probe) {
        add(name, grad_check(f, probe));
    }
};

void check_elementwise_ops(Suite& s) {
    Tensor a = rand_tensor({3, 4}, s.rng);
    Tensor b = rand_tensor({3, 4}, s.rng);
    Tensor v = rand_tensor({4}, s.rng);
    Tensor w34 = coeffs_like(a, s.rng);
    Tensor w4 = coeffs_like(v, s.rng);

    s.check("add", [&](const Tensor& x) { return weighted_sum(add(x, b), w34); }, a);
    s.add("add (row broadcast)",
          std::max(grad_check([&](const Tensor& x) { return weighted_sum(add(x, v), w34); },
                              rand_tensor({3, 4}, s.rng)),
                   grad_check([&](const Tensor& x) { return weighted_sum(add(a, x), w34); },
                              rand_tensor({4}, s.rng))));
    s.check("sub", [&](const Tensor& x) { return weighted_sum(sub(b, x), w34); }, a);
    s.add("mul", std::max(grad_check(
                              [&](const Tensor& x) { return weighted_sum(mul(x, b), w34); }, a),
                          grad_check(
                              [&](const Tensor& x) { return weighted_sum(mul(a, x), w34); }, b)));
    s.check("scale", [&](const Tensor& x) { return weighted_sum(scale(x, -1.7), w34); }, a);
    s.check("gelu", [&](const Tensor& x) { return weighted_sum(gelu(x), w34); }, a);
    s.check("tanh", [&](const Tensor& x) { return weighted_sum(tanh(x), w34); }, a);
    s.check("sigmoid", [&](const Tensor& x) { return weighted_sum(sigmoid(x), w34); }, a);
    s.check("exp", [&](const Tensor& x) { return weighted_sum(exp(x), w34); }, a);
    s.check("log", [&](const Tensor& x) { return weighted_sum(log(x), w34); },
            rand_tensor({3, 4}, s.rng, 0.2, 2.0));
    // Keep probes away from the clamp bounds so finite differences stay on
    // one side of each kink.
    s.check("clamp", [&](const Tensor& x) { return weighted_sum(clamp(x, -2.0, 2.0), w34); },
            rand_tensor({3, 4}, s.rng, -1.0, 1.0));
    s.check("sum", [&](const Tensor& x) { return sum(x); }, a);
    s.check("weighted sum", [&](const Tensor& x) { return weighted_sum(x, w4); }, v);
}

void check_structure_ops(Suite& s) {
    // Every coefficient tensor is drawn up front: the closures handed to
    // grad_check must evaluate identically on every probe call.
    Tensor a = rand_tensor({3, 4}, s.rng);
    Tensor w34 = coeffs_like(a, s.rng);
    Tensor w43 = rand_tensor({4, 3}, s.rng, -1.0, 1.0);
    Tensor w4 = rand_tensor({4}, s.rng, -1.0, 1.0);
    Tensor w2 = rand_tensor({2}, s.rng, -1.0, 1.0);
    Tensor w24 = rand_tensor({2, 4}, s.rng, -1.0, 1.0);
    Tensor w32 = rand_tensor({3, 2}, s.rng, -1.0, 1.0);
    Tensor w35 = rand_tensor({3, 5}, s.rng, -1.0, 1.0);
    Tensor w44 = rand_tensor({4, 4}, s.rng, -1.0, 1.0);

    Tensor mm_rhs = rand_tensor({4, 2}, s.rng);
    Tensor mm_lhs = rand_tensor({2, 3}, s.rng);
    s.add("matmul",
          std::max(grad_check(
                       [&](const Tensor& x) { return weighted_sum(matmul(x, mm_rhs), w32); }, a),
                   grad_check(
                       [&](const Tensor& x) { return weighted_sum(matmul(mm_lhs, x), w24); },
                       rand_tensor({3, 4}, s.rng))));
    s.check("transpose",
            [&](const Tensor& x) { return weighted_sum(transpose(x), w43); }, a);
    s.check("reshape",
            [&](const Tensor& x) { return weighted_sum(reshape(x, {4, 3}), w43); }, a);
    s.check("row", [&](const Tensor& x) { return weighted_sum(row(x, 1), w4); }, a);
    s.check("slice_cols",
            [&](const Tensor& x) { return weighted_sum(slice_cols(x, 1, 2), w32); }, a);
    s.check("reduce_mean",
            [&](const Tensor& x) { return weighted_sum(reduce_mean(x), w4); }, a);
    s.check("reduce_max",
            [&](const Tensor& x) { return weighted_sum(reduce_max(x), w4); }, a);

    Tensor p1 = rand_tensor({4}, s.rng);
    Tensor p2 = rand_tensor({4}, s.rng);
    Tensor cat_w = rand_tensor({8}, s.rng, -1.0, 1.0);
    s.check("concat", [&](const Tensor& x) { return weighted_sum(concat({p1, x}), cat_w); },
            p2);
    s.check("stack_rows",
            [&](const Tensor& x) { return weighted_sum(stack_rows({x, p1}), w24); }, p2);
    Tensor left = rand_tensor({3, 2}, s.rng);
    s.check("concat_cols",
            [&](const Tensor& x) { return weighted_sum(concat_cols({left, x}), w35); },
            rand_tensor({3, 3}, s.rng));

    Tensor row_mask = Tensor::from_values({3}, {1.0, 1.0, 0.0});
    s.check("zero_masked_rows",
            [&](const Tensor& x) { return weighted_sum(zero_masked_rows(x, row_mask), w34); },
            a);
    Tensor key_mask = Tensor::from_values({4}, {1.0, 1.0, 1.0, 0.0});
    s.check("softmax_masked",
            [&](const Tensor& x) { return weighted_sum(softmax_masked(x, key_mask), w34); },
            a);

    Tensor gamma = rand_tensor({4}, s.rng, 0.5, 1.5);
    Tensor beta = rand_tensor({4}, s.rng);
    double ln_err = grad_check(
        [&](const Tensor& x) { return weighted_sum(layer_norm(x, gamma, beta), w34); }, a);
    ln_err = std::max(ln_err, grad_check([&](const Tensor& x) {
        return weighted_sum(layer_norm(a, x, beta), w34);
    }, gamma));
    ln_err = std::max(ln_err, grad_check([&](const Tensor& x) {
        return weighted_sum(layer_norm(a, gamma, x), w34);
    }, beta));
    s.add("layer_norm", ln_err);

    std::vector<int> ids = {2, 0, 1, 2};
    Tensor table = rand_tensor({3, 4}, s.rng);
    s.check("embedding_lookup",
            [&](const Tensor& x) { return weighted_sum(embedding_lookup(x, ids), w44); },
            table);

    Tensor probs = rand_tensor({4}, s.rng, 0.05, 0.95);
    Tensor targets = Tensor::from_values({4}, {1.0, 0.0, 1.0, 0.0});
    s.check("bce_loss", [&](const Tensor& x) { return bce_loss(x, targets); }, probs);

    // Dropout draws its mask from the stream; reseeding per call keeps f
    // deterministic for the finite-difference probes.
    s.check("dropout", [&](const Tensor& x) {
        Prng fresh(99);
        return weighted_sum(dropout(x, 0.4, Mode::train, fresh), w34);
    }, a);
}

double encoder_check() {
    EncoderConfig cfg;
    cfg.vocab_size = 12;
    cfg.hidden = 16;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.ffn_dim = 24;
    cfg.max_positions = 8;
    cfg.dropout_p = 0.0;

    ParameterStore store;
    Prng init(5);
    init_encoder_params(store, cfg, init);

    std::vector<int> ids = {2, 6, 7, 8, 3, 0};
    std::vector<double> mask = {1, 1, 1, 1, 1, 0};
    Prng none(0);
    Tensor target = Tensor::from_values({16}, std::vector<double>(16, 0.3));
    auto loss = [&]() {
        ChunkEncoding enc = encode_chunk(ids, mask, store, cfg, Mode::eval, none);
        return bce_loss(sigmoid(enc.cls), target);
    };

    double err = 0.0;
    for (const char* name :
         {"embeddings.token", "embeddings.position", "encoder.layer1.attn.wq",
          "encoder.layer1.ln1.gamma", "encoder.layer1.ffn.w1", "encoder.layer2.attn.wo",
          "encoder.layer2.ffn.b2", "encoder.layer2.ln2.beta"})
        err = std::max(err, grad_check_param(loss, store.at(name).tensor));
    return err;
}

double aggregator_check(Suite& s, AggregatorKind kind) {
    const std::size_t d = 6, P = 3;
    AggregatorConfig cfg;
    cfg.kind = kind;
    cfg.max_chunks = 2;  // identity truncates P=3 to exercise that path
    cfg.n_heads = 2;
    cfg.ffn_dim = 12;
    cfg.max_positions = 4;
    cfg.dropout_p = 0.0;

    ParameterStore store;
    Prng init(11);
    init_aggregator_params(store, cfg, d, init);
    std::size_t in_width = cfg.out_width(d);
    init_classifier_params(store, in_width, 2, init);
    // Nudge head weights away from their tiny init so the loss surface has
    // usable curvature for the finite differences.
    for (double& w : store.at("head.weight").tensor.values()) w *= 25.0;

    Tensor target = Tensor::from_values({2}, {1.0, 0.0});
    Prng none(0);
    auto forward = [&](const Tensor& flat) {
        std::vector<Tensor> cls;
        Tensor as_rows = reshape(flat, {P, d});
        for (std::size_t p = 0; p < P; ++p) cls.push_back(row(as_rows, p));
        Tensor doc_vec = aggregate(cls, cfg, store, Mode::eval, none);
        Tensor probs = project(doc_vec, store, 0.0, Mode::eval, none);
        return bce_loss(probs, target);
    };

    Tensor flat = rand_tensor({P * d}, s.rng, -0.8, 0.8);
    double err = grad_check(forward, flat);

    auto reforward = [&]() { return forward(flat); };
    std::vector<std::string> param_names = {"head.weight", "head.bias"};
    if (kind == AggregatorKind::transformer) {
        param_names.push_back("agg.position");
        param_names.push_back("agg.layer1.attn.wv");
        param_names.push_back("agg.layer1.ffn.w2");
        param_names.push_back("agg.layer1.ln2.gamma");
    } else if (kind == AggregatorKind::lstm) {
        param_names.push_back("agg.lstm.wi");
        param_names.push_back("agg.lstm.uf");
        param_names.push_back("agg.lstm.bo");
        param_names.push_back("agg.lstm.wg");
    }
    for (const auto& name : param_names)
        err = std::max(err, grad_check_param(reforward, store.at(name).tensor));
    return err;
}

}  // namespace

std::vector<CheckRow> run_grad_check_suite(bool corrupt_fixture) {
    Suite s;
    check_elementwise_ops(s);
    check_structure_ops(s);

    {
        Tensor x = rand_tensor({4}, s.rng);
        Tensor h = rand_tensor({4}, s.rng, -0.5, 0.5);
        Tensor c = rand_tensor({4}, s.rng, -0.5, 0.5);
        AggregatorConfig cfg;
        cfg.kind = AggregatorKind::lstm;
        ParameterStore store;
        Prng init(3);
        init_aggregator_params(store, cfg, 4, init);
        for (const char* gate : {"wi", "wf", "wo", "wg", "ui", "uf", "uo", "ug"})
            for (double& w : store.at(std::string("agg.lstm.") + gate).tensor.values())
                w *= 30.0;
        Tensor wh = rand_tensor({4}, s.rng, -1.0, 1.0);
        Tensor wc = rand_tensor({4}, s.rng, -1.0, 1.0);
        s.check("lstm_cell", [&](const Tensor& probe) {
            auto [h_next, c_next] = lstm_cell(probe, h, c, store);
            return sum(add(mul(h_next, wh), mul(c_next, wc)));
        }, x);
    }

    s.add("encoder (2 layers, d=16)", encoder_check());
    s.add("agg.mean + head", aggregator_check(s, AggregatorKind::mean));
    s.add("agg.identity + head", aggregator_check(s, AggregatorKind::identity));
    s.add("agg.transformer + head", aggregator_check(s, AggregatorKind::transformer));
    s.add("agg.lstm + head", aggregator_check(s, AggregatorKind::lstm));

    if (corrupt_fixture) {
        Tensor probe = rand_tensor({3, 4}, s.rng);
        Tensor w = coeffs_like(probe, s.rng);
        s.check("corrupted tanh (fixture)",
                [&](const Tensor& x) { return weighted_sum(corrupted_tanh(x), w); }, probe);
    }
    return s.rows;
}

bool suite_passes(const std::vector<CheckRow>& rows, double tol) {
    return std::all_of(rows.begin(), rows.end(), [tol](const CheckRow& r) {
        return std::isfinite(r.max_rel_err) && r.max_rel_err < tol;
    });
}

}  // namespace chunkpool
