#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "chunkpool/encoder.hpp"
#include "chunkpool/errors.hpp"

using namespace chunkpool;

namespace {

// Dense reference attention written with raw loops over the parameter
// buffers; no tensor ops involved.
std::vector<double> reference_attention(const std::vector<double>& x, std::size_t n,
                                        std::size_t d, const std::vector<double>& mask,
                                        const ParameterStore& params,
                                        const std::string& prefix, std::size_t heads) {
    auto buf = [&](const std::string& name) -> const std::vector<double>& {
        return params.at(prefix + name).tensor.values();
    };
    auto affine = [&](const std::vector<double>& w, const std::vector<double>& b) {
        std::vector<double> out(n * d, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                double acc = b[j];
                for (std::size_t l = 0; l < d; ++l) acc += x[i * d + l] * w[l * d + j];
                out[i * d + j] = acc;
            }
        return out;
    };
    const std::vector<double> q = affine(buf("attn.wq"), buf("attn.bq"));
    const std::vector<double> k = affine(buf("attn.wk"), buf("attn.bk"));
    const std::vector<double> v = affine(buf("attn.wv"), buf("attn.bv"));

    const std::size_t dh = d / heads;
    std::vector<double> mixed(n * d, 0.0);
    for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> score(n, 0.0);
            double hi = -1e300;
            for (std::size_t j = 0; j < n; ++j) {
                if (mask[j] == 0.0) continue;
                for (std::size_t l = 0; l < dh; ++l)
                    score[j] += q[i * d + h * dh + l] * k[j * d + h * dh + l];
                score[j] /= std::sqrt(static_cast<double>(dh));
                hi = std::max(hi, score[j]);
            }
            double total = 0.0;
            std::vector<double> w(n, 0.0);
            for (std::size_t j = 0; j < n; ++j) {
                if (mask[j] == 0.0) continue;
                w[j] = std::exp(score[j] - hi);
                total += w[j];
            }
            for (std::size_t j = 0; j < n; ++j) {
                if (mask[j] == 0.0) continue;
                for (std::size_t l = 0; l < dh; ++l)
                    mixed[i * d + h * dh + l] += w[j] / total * v[j * d + h * dh + l];
            }
        }
    }
    const std::vector<double>& wo = buf("attn.wo");
    const std::vector<double>& bo = buf("attn.bo");
    std::vector<double> out(n * d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            double acc = bo[j];
            for (std::size_t l = 0; l < d; ++l) acc += mixed[i * d + l] * wo[l * d + j];
            out[i * d + j] = acc;
        }
    return out;
}

Tensor random_matrix(std::size_t r, std::size_t c, Prng& rng) {
    std::vector<double> v(r * c);
    for (double& x : v) x = rng.uniform() * 2.0 - 1.0;
    return Tensor::from_values({r, c}, std::move(v));
}

ParameterStore layer_store(std::size_t d, std::size_t ffn, std::uint64_t seed) {
    ParameterStore store;
    Prng rng(seed);
    init_layer_params(store, "L.", d, ffn, rng);
    return store;
}

void zero_param(ParameterStore& store, const std::string& name) {
    auto& v = store.at(name).tensor.values();
    std::fill(v.begin(), v.end(), 0.0);
}

std::vector<double> layer_norm_row(std::vector<double> row) {
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(row.size());
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(row.size());
    for (double& v : row) v = (v - mean) / std::sqrt(var + 1e-12);
    return row;
}

}  // namespace

TEST_CASE("attention with a single position is the value projection") {
    ParameterStore store = layer_store(4, 8, 71);
    Prng rng(72);
    Tensor x = random_matrix(1, 4, rng);
    Tensor mask = Tensor::from_values({1}, {1.0});
    Tensor out = multi_head_self_attention(x, mask, store, "L.", 2);
    CHECK(out.shape() == Shape{1, 4});

    // attention over one position is the identity mix: out = (xWv+bv)Wo+bo
    Tensor v = add(matmul(x, store.at("L.attn.wv").tensor), store.at("L.attn.bv").tensor);
    Tensor expect = add(matmul(v, store.at("L.attn.wo").tensor), store.at("L.attn.bo").tensor);
    for (std::size_t j = 0; j < 4; ++j)
        CHECK(out.at(0, j) == doctest::Approx(expect.at(0, j)).epsilon(1e-12));
}

TEST_CASE("zero query weights give uniform attention over unmasked rows") {
    ParameterStore store = layer_store(4, 8, 73);
    zero_param(store, "L.attn.wq");
    zero_param(store, "L.attn.bq");
    zero_param(store, "L.attn.bo");
    // identity output projection to read the mixed values directly
    auto& wo = store.at("L.attn.wo").tensor.values();
    std::fill(wo.begin(), wo.end(), 0.0);
    for (std::size_t j = 0; j < 4; ++j) wo[j * 4 + j] = 1.0;

    Prng rng(74);
    Tensor x = random_matrix(3, 4, rng);
    Tensor mask = Tensor::from_values({3}, {1.0, 1.0, 0.0});
    Tensor out = multi_head_self_attention(x, mask, store, "L.", 2);

    Tensor v = add(matmul(x, store.at("L.attn.wv").tensor), store.at("L.attn.bv").tensor);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            CHECK(out.at(i, j) ==
                  doctest::Approx((v.at(0, j) + v.at(1, j)) / 2.0).epsilon(1e-12));
}

TEST_CASE("attention matches the dense reference evaluation") {
    ParameterStore store = layer_store(8, 16, 75);
    Prng rng(76);
    Tensor x = random_matrix(4, 8, rng);
    std::vector<double> mask = {1.0, 1.0, 1.0, 0.0};
    Tensor out = multi_head_self_attention(
        x, Tensor::from_values({4}, mask), store, "L.", 2);
    std::vector<double> ref =
        reference_attention(x.values(), 4, 8, mask, store, "L.", 2);
    for (std::size_t i = 0; i < ref.size(); ++i)
        CHECK(std::abs(out.values()[i] - ref[i]) < 1e-10);
}

TEST_CASE("attention rejects indivisible head count") {
    ParameterStore store = layer_store(4, 8, 77);
    Prng rng(78);
    Tensor x = random_matrix(2, 4, rng);
    Tensor mask = Tensor::from_values({2}, {1.0, 1.0});
    CHECK_THROWS_AS(multi_head_self_attention(x, mask, store, "L.", 3), ConfigError);
}

TEST_CASE("encoder layer with zero sublayers is double layer norm") {
    ParameterStore store = layer_store(4, 8, 79);
    for (const char* name : {"L.attn.wq", "L.attn.bq", "L.attn.wk", "L.attn.bk",
                             "L.attn.wv", "L.attn.bv", "L.attn.wo", "L.attn.bo",
                             "L.ffn.w1", "L.ffn.b1", "L.ffn.w2", "L.ffn.b2"})
        zero_param(store, name);

    Prng rng(80);
    Tensor x = random_matrix(2, 4, rng);
    Tensor mask = Tensor::from_values({2}, {1.0, 1.0});
    Prng drop(81);
    Tensor out = encoder_layer(x, mask, store, "L.", 2, 0.1, Mode::eval, drop);
    CHECK(out.shape() == Shape{2, 4});

    for (std::size_t i = 0; i < 2; ++i) {
        std::vector<double> row(x.values().begin() + i * 4, x.values().begin() + (i + 1) * 4);
        std::vector<double> expect = layer_norm_row(layer_norm_row(row));
        for (std::size_t j = 0; j < 4; ++j)
            CHECK(out.at(i, j) == doctest::Approx(expect[j]).epsilon(1e-9));
    }
}

TEST_CASE("gradient through one encoder layer matches finite differences") {
    ParameterStore store = layer_store(6, 12, 83);
    Prng rng(84);
    Tensor x0 = random_matrix(4, 6, rng);
    Tensor mask = Tensor::from_values({4}, {1.0, 1.0, 1.0, 1.0});
    Tensor w = random_matrix(4, 6, rng);
    Prng drop(85);
    double err = grad_check(
        [&](const Tensor& x) {
            return sum(mul(encoder_layer(x, mask, store, "L.", 2, 0.0, Mode::eval, drop), w));
        },
        x0);
    CHECK(err < 1e-4);
}

TEST_CASE("encode_chunk shapes and determinism") {
    EncoderConfig cfg;
    cfg.vocab_size = 11;
    cfg.hidden = 8;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.max_positions = 6;
    ParameterStore store;
    Prng init(87);
    init_encoder_params(store, cfg, init);

    std::vector<int> ids = {2, 5, 6, 3, 0, 0};
    std::vector<double> mask = {1, 1, 1, 1, 0, 0};
    Prng d1(1), d2(1);
    ChunkEncoding a = encode_chunk(ids, mask, store, cfg, Mode::eval, d1);
    ChunkEncoding b = encode_chunk(ids, mask, store, cfg, Mode::eval, d2);
    CHECK(a.token_reps.shape() == Shape{6, 8});
    CHECK(a.cls.shape() == Shape{8});
    CHECK(a.cls.values() == b.cls.values());

    for (std::size_t j = 0; j < 8; ++j)
        CHECK(a.cls.at(j) == a.token_reps.at(0, j));

    CHECK_THROWS_AS(encode_chunk({11, 0}, {1, 1}, store, cfg, Mode::eval, d1), IndexError);
    CHECK_THROWS_AS(
        encode_chunk(std::vector<int>(7, 1), std::vector<double>(7, 1.0), store, cfg,
                     Mode::eval, d1),
        ConfigError);
}

TEST_CASE("PAD token ids never reach the CLS embedding") {
    EncoderConfig cfg;
    cfg.vocab_size = 9;
    cfg.hidden = 8;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.max_positions = 8;
    ParameterStore store;
    Prng init(89);
    init_encoder_params(store, cfg, init);

    std::vector<int> ids = {2, 4, 5, 3, 0, 0, 0, 0};
    std::vector<double> mask = {1, 1, 1, 1, 0, 0, 0, 0};
    Prng d1(1);
    ChunkEncoding base = encode_chunk(ids, mask, store, cfg, Mode::eval, d1);

    for (std::size_t pos = 4; pos < 8; ++pos) {
        for (int replacement : {1, 4, 8}) {
            std::vector<int> mutated = ids;
            mutated[pos] = replacement;
            Prng d2(1);
            ChunkEncoding alt = encode_chunk(mutated, mask, store, cfg, Mode::eval, d2);
            CHECK(alt.cls.values() == base.cls.values());  // bitwise
        }
    }
}

TEST_CASE("encode_document preserves chunk order and purity") {
    EncoderConfig cfg;
    cfg.vocab_size = 9;
    cfg.hidden = 8;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.max_positions = 6;
    ParameterStore store;
    Prng init(91);
    init_encoder_params(store, cfg, init);

    Vocabulary v = Vocabulary::build({"a", "b", "c", "d", "e"});
    ChunkingConfig ccfg;
    ccfg.content_len = 4;
    TokenSequence seq;
    seq.ids = {4, 5, 6, 7, 4, 5, 6, 7, 8, 8};
    ChunkedDocument doc = chunk_document(seq, ccfg, v);
    REQUIRE(doc.n_chunks() == 3);

    Prng d1(1);
    std::vector<Tensor> cls = encode_document(doc, store, cfg, Mode::eval, d1);
    CHECK(cls.size() == 3);

    Prng d2(1);
    ChunkEncoding first =
        encode_chunk(doc.chunks[0].ids, doc.chunks[0].mask, store, cfg, Mode::eval, d2);
    CHECK(cls[0].values() == first.cls.values());

    // chunks 0 and 1 hold identical ids here, so their CLS vectors agree
    CHECK(doc.chunks[0].ids == doc.chunks[1].ids);
    CHECK(cls[0].values() == cls[1].values());
    CHECK(cls[2].values() != cls[0].values());
}

TEST_CASE("two layer encoder gradients match finite differences end to end") {
    EncoderConfig cfg;
    cfg.vocab_size = 10;
    cfg.hidden = 16;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.max_positions = 8;
    cfg.dropout_p = 0.0;
    ParameterStore store;
    Prng init(93);
    init_encoder_params(store, cfg, init);

    std::vector<int> ids = {2, 4, 5, 6, 7, 8, 9, 3};
    std::vector<double> mask(8, 1.0);
    Prng rng(94);
    std::vector<double> wv(16);
    for (double& x : wv) x = rng.uniform() * 2.0 - 1.0;
    Tensor w = Tensor::from_values({16}, wv);

    auto loss = [&]() {
        Prng drop(1);
        return sum(mul(encode_chunk(ids, mask, store, cfg, Mode::eval, drop).cls, w));
    };
    for (const char* name :
         {"encoder.layer2.attn.wq", "encoder.layer1.ffn.w2", "embeddings.token",
          "encoder.layer1.ln1.gamma", "encoder.layer2.attn.bo"}) {
        Tensor param = store.at(name).tensor;
        param.zero_grad();
        CAPTURE(name);
        CHECK(grad_check_param(loss, param) < 1e-4);
    }
}
