#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "chunkpool/errors.hpp"
#include "chunkpool/rng.hpp"
#include "chunkpool/tensor.hpp"

using namespace chunkpool;

namespace {

Tensor random_tensor(Shape shape, Prng& rng, bool requires_grad = false) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform() * 4.0 - 2.0;
    return Tensor::from_values(std::move(shape), std::move(v), requires_grad);
}

}  // namespace

TEST_CASE("matmul products") {
    Tensor a = Tensor::from_values({2, 2}, {1, 2, 3, 4});
    Tensor eye = Tensor::from_values({2, 2}, {1, 0, 0, 1});
    Tensor c = matmul(a, eye);
    CHECK(c.values() == std::vector<double>{1, 2, 3, 4});

    Tensor r = Tensor::from_values({1, 2}, {1, 2});
    Tensor col = Tensor::from_values({2, 1}, {3, 4});
    CHECK(matmul(r, col).item() == doctest::Approx(11.0));

    CHECK_THROWS_AS(matmul(col, a), ShapeError);
    CHECK_THROWS_AS(matmul(a, Tensor::from_values({2}, {1, 2})), ShapeError);
}

TEST_CASE("matmul gradient matches finite differences") {
    Prng rng(11);
    Tensor a0 = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 2}, rng);
    double err = grad_check([&](const Tensor& a) { return sum(matmul(a, b)); }, a0);
    CHECK(err < 1e-6);

    Tensor a = random_tensor({3, 4}, rng);
    Tensor b0 = random_tensor({4, 2}, rng);
    err = grad_check([&](const Tensor& bb) { return sum(matmul(a, bb)); }, b0);
    CHECK(err < 1e-6);

    // d(sum(A.B))/dA is the row-broadcast of B's column sums
    Tensor probe = Tensor::from_values({2, 2}, {1, 1, 1, 1}, true);
    Tensor bb = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
    backward(sum(matmul(probe, bb)));
    CHECK(probe.grad() == std::vector<double>{6, 15, 6, 15});
}

TEST_CASE("elementwise binary ops and broadcast") {
    Tensor a = Tensor::from_values({2}, {1, 2});
    CHECK(add(a, Tensor::from_values({2}, {0, 0})).values() == std::vector<double>{1, 2});
    CHECK(mul(Tensor::from_values({2}, {2, 3}), Tensor::from_values({2}, {3, 2})).values() ==
          std::vector<double>{6, 6});
    CHECK(sub(a, Tensor::from_values({2}, {3, 1})).values() == std::vector<double>{-2, 1});

    Tensor m = Tensor::from_values({3, 2}, {1, 2, 3, 4, 5, 6});
    Tensor bias = Tensor::from_values({2}, {10, 20});
    CHECK(add(m, bias).values() == std::vector<double>{11, 22, 13, 24, 15, 26});

    CHECK_THROWS_AS(add(a, Tensor::from_values({3}, {1, 2, 3})), ShapeError);
    CHECK_THROWS_AS(add(m, Tensor::from_values({3}, {1, 2, 3})), ShapeError);
}

TEST_CASE("broadcast bias gradient is column sums") {
    Tensor m = Tensor::from_values({3, 2}, {1, 2, 3, 4, 5, 6});
    Tensor bias = Tensor::from_values({2}, {0.5, -0.5}, true);
    backward(sum(mul(add(m, bias), m)));
    CHECK(bias.grad() == std::vector<double>{9, 12});

    Prng rng(7);
    Tensor b0 = random_tensor({2}, rng);
    double err = grad_check([&](const Tensor& b) { return sum(mul(add(m, b), m)); }, b0);
    CHECK(err < 1e-6);
}

TEST_CASE("unary ops") {
    CHECK(sigmoid(Tensor::from_values({1}, {0})).item() == doctest::Approx(0.5));
    CHECK(gelu(Tensor::from_values({1}, {0})).item() == doctest::Approx(0.0));
    CHECK(gelu(Tensor::from_values({1}, {1})).item() == doctest::Approx(0.841345).epsilon(1e-6));
    CHECK(chunkpool::tanh(Tensor::from_values({1}, {0})).item() == doctest::Approx(0.0));
    CHECK(chunkpool::exp(Tensor::from_values({1}, {1})).item() ==
          doctest::Approx(2.718281828459045));
    CHECK(chunkpool::log(Tensor::from_values({1}, {1})).item() == doctest::Approx(0.0));
    CHECK_THROWS_AS(chunkpool::log(Tensor::from_values({2}, {1, 0})), DomainError);
    CHECK_THROWS_AS(chunkpool::log(Tensor::from_values({1}, {-3})), DomainError);
}

TEST_CASE("unary gradients match finite differences") {
    Prng rng(13);
    Tensor x = random_tensor({2, 3}, rng);
    CHECK(grad_check([](const Tensor& t) { return sum(gelu(t)); }, x) < 1e-6);
    CHECK(grad_check([](const Tensor& t) { return sum(chunkpool::tanh(t)); }, x) < 1e-6);
    CHECK(grad_check([](const Tensor& t) { return sum(sigmoid(t)); }, x) < 1e-6);
    CHECK(grad_check([](const Tensor& t) { return sum(chunkpool::exp(t)); }, x) < 1e-6);

    std::vector<double> pos(x.numel());
    for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = 0.5 + 0.1 * static_cast<double>(i);
    Tensor xp = Tensor::from_values({2, 3}, std::move(pos));
    CHECK(grad_check([](const Tensor& t) { return sum(chunkpool::log(t)); }, xp) < 1e-6);
}

TEST_CASE("softmax_masked values") {
    Tensor p = softmax_masked(Tensor::from_values({1, 2}, {0, 0}),
                              Tensor::from_values({1, 2}, {1, 1}));
    CHECK(p.values() == std::vector<double>{0.5, 0.5});

    p = softmax_masked(Tensor::from_values({1, 2}, {5, 99}),
                       Tensor::from_values({1, 2}, {1, 0}));
    CHECK(p.at(0, 0) == doctest::Approx(1.0));
    CHECK(p.at(0, 1) == 0.0);

    p = softmax_masked(Tensor::from_values({1, 3}, {1, 2, 3}),
                       Tensor::from_values({1, 3}, {1, 1, 1}));
    CHECK(p.at(0, 0) == doctest::Approx(0.090031).epsilon(1e-6));
    CHECK(p.at(0, 1) == doctest::Approx(0.244728).epsilon(1e-6));
    CHECK(p.at(0, 2) == doctest::Approx(0.665241).epsilon(1e-6));

    CHECK_THROWS_AS(softmax_masked(Tensor::from_values({1, 2}, {1, 2}),
                                   Tensor::from_values({1, 2}, {0, 0})),
                    DomainError);
}

TEST_CASE("softmax_masked rows sum to one and masked entries are exactly zero") {
    Prng rng(17);
    Tensor scores = random_tensor({4, 6}, rng);
    std::vector<double> mv(24);
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t j = 0; j < 6; ++j) mv[r * 6 + j] = (j <= r + 1) ? 1.0 : 0.0;
    Tensor mask = Tensor::from_values({4, 6}, mv);
    Tensor p = softmax_masked(scores, mask);
    for (std::size_t r = 0; r < 4; ++r) {
        double total = 0.0;
        for (std::size_t j = 0; j < 6; ++j) {
            if (mv[r * 6 + j] == 0.0) CHECK(p.at(r, j) == 0.0);
            total += p.at(r, j);
        }
        CHECK(std::abs(total - 1.0) < 1e-12);
    }

    // rank-1 mask broadcast across rows
    Tensor bm = Tensor::from_values({6}, {1, 1, 1, 0, 0, 0});
    Tensor pb = softmax_masked(scores, bm);
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t j = 3; j < 6; ++j) CHECK(pb.at(r, j) == 0.0);
}

TEST_CASE("softmax_masked gradient matches finite differences") {
    Prng rng(19);
    Tensor s0 = random_tensor({3, 4}, rng);
    Tensor mask = Tensor::from_values({4}, {1, 1, 0, 1});
    Tensor w = random_tensor({3, 4}, rng);
    double err = grad_check(
        [&](const Tensor& s) { return sum(mul(softmax_masked(s, mask), w)); }, s0);
    CHECK(err < 1e-6);
}

TEST_CASE("layer_norm values") {
    Tensor g1 = Tensor::from_values({2}, {1, 1});
    Tensor b0 = Tensor::from_values({2}, {0, 0});
    Tensor y = layer_norm(Tensor::from_values({1, 2}, {5, 5}), g1, b0);
    CHECK(std::abs(y.at(0, 0)) < 1e-5);
    CHECK(std::abs(y.at(0, 1)) < 1e-5);

    y = layer_norm(Tensor::from_values({1, 2}, {1, 3}), g1, b0);
    CHECK(y.at(0, 0) == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK(y.at(0, 1) == doctest::Approx(1.0).epsilon(1e-6));

    y = layer_norm(Tensor::from_values({1, 2}, {-1, 1}), Tensor::from_values({2}, {2, 2}),
                   Tensor::from_values({2}, {1, 1}));
    CHECK(y.at(0, 0) == doctest::Approx(-1.0));
    CHECK(y.at(0, 1) == doctest::Approx(3.0));

    CHECK_THROWS_AS(layer_norm(Tensor::from_values({1, 2}, {1, 2}),
                               Tensor::from_values({3}, {1, 1, 1}), b0),
                    ShapeError);
}

TEST_CASE("layer_norm gradients match finite differences") {
    Prng rng(23);
    Tensor x0 = random_tensor({3, 5}, rng);
    Tensor gamma = random_tensor({5}, rng);
    Tensor beta = random_tensor({5}, rng);
    Tensor w = random_tensor({3, 5}, rng);

    auto weighted = [&](const Tensor& x, const Tensor& g, const Tensor& b) {
        return sum(mul(layer_norm(x, g, b), w));
    };
    CHECK(grad_check([&](const Tensor& x) { return weighted(x, gamma, beta); }, x0) < 1e-4);
    CHECK(grad_check([&](const Tensor& g) { return weighted(x0, g, beta); }, gamma) < 1e-6);
    CHECK(grad_check([&](const Tensor& b) { return weighted(x0, gamma, b); }, beta) < 1e-6);
}

TEST_CASE("embedding_lookup gathers and scatters") {
    Tensor table = Tensor::from_values({3, 2}, {1, 2, 3, 4, 5, 6}, true);
    Tensor out = embedding_lookup(table, {0, 0});
    CHECK(out.shape() == Shape{2, 2});
    CHECK(out.values() == std::vector<double>{1, 2, 1, 2});

    Tensor empty = embedding_lookup(table, {});
    CHECK(empty.shape() == Shape{0, 2});
    CHECK(empty.numel() == 0);

    CHECK_THROWS_AS(embedding_lookup(table, {3}), IndexError);
    CHECK_THROWS_AS(embedding_lookup(table, {-1}), IndexError);

    backward(sum(out));
    CHECK(table.grad() == std::vector<double>{2, 2, 0, 0, 0, 0});

    Prng rng(29);
    Tensor t0 = random_tensor({4, 3}, rng);
    double err = grad_check(
        [](const Tensor& t) { return sum(embedding_lookup(t, {1, 1, 3})); }, t0);
    CHECK(err < 1e-6);
}

TEST_CASE("reductions over rows") {
    Tensor x = Tensor::from_values({2, 2}, {1, 3, 3, 5});
    CHECK(reduce_mean(x).values() == std::vector<double>{2, 4});
    CHECK(reduce_max(x).values() == std::vector<double>{3, 5});

    Tensor one = Tensor::from_values({1, 3}, {7, 8, 9});
    CHECK(reduce_mean(one).values() == std::vector<double>{7, 8, 9});
    CHECK(reduce_max(one).values() == std::vector<double>{7, 8, 9});

    CHECK_THROWS_AS(reduce_mean(Tensor::zeros({0, 3})), ShapeError);
    CHECK_THROWS_AS(reduce_max(Tensor::zeros({0, 3})), ShapeError);
}

TEST_CASE("reduce_max ties route to the lowest row") {
    Tensor x = Tensor::from_values({3, 2}, {5, 1, 5, 2, 4, 2}, true);
    backward(sum(reduce_max(x)));
    // column 0 ties between rows 0 and 1 -> row 0; column 1 ties rows 1, 2 -> row 1
    CHECK(x.grad() == std::vector<double>{1, 0, 0, 1, 0, 0});
}

TEST_CASE("reduction gradients match finite differences") {
    Prng rng(31);
    Tensor x0 = random_tensor({4, 3}, rng);
    Tensor w = random_tensor({3}, rng);
    CHECK(grad_check([&](const Tensor& x) { return sum(mul(reduce_mean(x), w)); }, x0) < 1e-6);
    CHECK(grad_check([&](const Tensor& x) { return sum(mul(reduce_max(x), w)); }, x0) < 1e-6);
}

TEST_CASE("concat and stack_rows") {
    Tensor a = Tensor::from_values({2}, {1, 2});
    Tensor b = Tensor::from_values({2}, {3, 4});
    CHECK(concat({a}).values() == std::vector<double>{1, 2});
    CHECK(concat({a, b}).values() == std::vector<double>{1, 2, 3, 4});
    CHECK(concat({a, b}).shape() == Shape{4});

    std::vector<Tensor> wide(3, Tensor::zeros({768}));
    CHECK(concat(wide).numel() == 2304);

    Tensor s = stack_rows({a, b});
    CHECK(s.shape() == Shape{2, 2});
    CHECK(s.values() == std::vector<double>{1, 2, 3, 4});

    CHECK_THROWS_AS(concat({a, Tensor::from_values({3}, {1, 2, 3})}), ShapeError);
    CHECK_THROWS_AS(concat(std::vector<Tensor>{}), ShapeError);

    Tensor ag = Tensor::from_values({2}, {1, 2}, true);
    Tensor bg = Tensor::from_values({2}, {3, 4}, true);
    backward(sum(mul(concat({ag, bg}), Tensor::from_values({4}, {1, 2, 3, 4}))));
    CHECK(ag.grad() == std::vector<double>{1, 2});
    CHECK(bg.grad() == std::vector<double>{3, 4});
}

TEST_CASE("row, slice_cols, concat_cols, transpose, reshape") {
    Tensor x = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(row(x, 1).values() == std::vector<double>{4, 5, 6});
    CHECK_THROWS_AS(row(x, 2), IndexError);

    CHECK(slice_cols(x, 1, 2).values() == std::vector<double>{2, 3, 5, 6});
    CHECK_THROWS_AS(slice_cols(x, 2, 2), IndexError);

    Tensor y = concat_cols({x, x});
    CHECK(y.shape() == Shape{2, 6});
    CHECK(y.values() == std::vector<double>{1, 2, 3, 1, 2, 3, 4, 5, 6, 4, 5, 6});

    CHECK(transpose(x).shape() == Shape{3, 2});
    CHECK(transpose(x).values() == std::vector<double>{1, 4, 2, 5, 3, 6});

    CHECK(reshape(x, {6}).shape() == Shape{6});
    CHECK_THROWS_AS(reshape(x, {4}), ShapeError);

    Prng rng(37);
    Tensor x0 = random_tensor({3, 4}, rng);
    Tensor w = random_tensor({4}, rng);
    CHECK(grad_check([&](const Tensor& t) { return sum(mul(row(t, 2), w)); }, x0) < 1e-6);
    CHECK(grad_check([&](const Tensor& t) { return sum(slice_cols(t, 1, 2)); }, x0) < 1e-6);
    CHECK(grad_check([&](const Tensor& t) { return sum(mul(transpose(t), transpose(t))); },
                     x0) < 1e-6);
    CHECK(grad_check(
              [&](const Tensor& t) { return sum(concat_cols({t, scale(t, 2.0)})); }, x0) <
          1e-6);
    CHECK(grad_check([&](const Tensor& t) { return sum(reshape(t, {12})); }, x0) < 1e-6);
    CHECK(grad_check(
              [&](const Tensor& t) { return sum(stack_rows({row(t, 0), row(t, 1)})); },
              x0) < 1e-6);
}

TEST_CASE("scale, clamp, zero_masked_rows") {
    Tensor x = Tensor::from_values({3}, {1, -2, 3});
    CHECK(scale(x, 2.0).values() == std::vector<double>{2, -4, 6});
    CHECK(clamp(x, -1, 2).values() == std::vector<double>{1, -1, 2});

    Tensor m = Tensor::from_values({3, 2}, {1, 2, 3, 4, 5, 6});
    Tensor keep = Tensor::from_values({3}, {1, 0, 1});
    CHECK(zero_masked_rows(m, keep).values() == std::vector<double>{1, 2, 0, 0, 5, 6});
    CHECK_THROWS_AS(zero_masked_rows(m, Tensor::from_values({2}, {1, 0})), ShapeError);

    Tensor xg = Tensor::from_values({3}, {0.5, -2, 3}, true);
    backward(sum(clamp(xg, -1, 2)));
    CHECK(xg.grad() == std::vector<double>{1, 0, 0});

    Prng rng(41);
    Tensor m0 = random_tensor({3, 2}, rng);
    CHECK(grad_check([&](const Tensor& t) { return sum(zero_masked_rows(t, keep)); }, m0) <
          1e-6);
}

TEST_CASE("dropout") {
    Tensor x = Tensor::from_values({2, 4}, {1, 2, 3, 4, 5, 6, 7, 8});

    Prng rng(43);
    CHECK(dropout(x, 0.0, Mode::train, rng).values() == x.values());
    CHECK(dropout(x, 0.1, Mode::eval, rng).values() == x.values());
    CHECK_THROWS_AS(dropout(x, 1.0, Mode::train, rng), ConfigError);
    CHECK_THROWS_AS(dropout(x, -0.1, Mode::train, rng), ConfigError);

    // train mode: entries are zero or scaled by 1/(1-p)
    Prng r1(7);
    Prng r2(7);
    Tensor d1 = dropout(x, 0.5, Mode::train, r1);
    Tensor d2 = dropout(x, 0.5, Mode::train, r2);
    CHECK(d1.values() == d2.values());  // same seed, same mask
    for (std::size_t i = 0; i < 8; ++i) {
        const double v = d1.values()[i];
        CHECK((v == 0.0 || v == doctest::Approx(x.values()[i] * 2.0)));
    }

    // backward reuses the forward mask
    Tensor xg = Tensor::from_values({8}, {1, 1, 1, 1, 1, 1, 1, 1}, true);
    Prng r3(7);
    Tensor y = dropout(xg, 0.5, Mode::train, r3);
    backward(sum(y));
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(xg.grad()[i] == (y.values()[i] == 0.0 ? 0.0 : 2.0));
    }
}

TEST_CASE("bce_loss values and gradient") {
    CHECK(bce_loss(Tensor::from_values({1}, {0.5}), Tensor::from_values({1}, {1})).item() ==
          doctest::Approx(0.6931471805599453).epsilon(1e-6));
    CHECK(bce_loss(Tensor::from_values({2}, {1, 0}), Tensor::from_values({2}, {1, 0})).item() <=
          1e-6);
    CHECK(bce_loss(Tensor::from_values({1}, {0.9}), Tensor::from_values({1}, {0})).item() ==
          doctest::Approx(2.302585092994046).epsilon(1e-6));
    CHECK_THROWS_AS(
        bce_loss(Tensor::from_values({2}, {0.5, 0.5}), Tensor::from_values({1}, {1})),
        ShapeError);

    Tensor targets = Tensor::from_values({4}, {1, 0, 1, 0});
    Tensor p0 = Tensor::from_values({4}, {0.3, 0.6, 0.8, 0.2});
    CHECK(grad_check([&](const Tensor& p) { return bce_loss(p, targets); }, p0) < 1e-6);
}

TEST_CASE("backward semantics") {
    Tensor w = Tensor::from_values({3}, {1, 2, 3}, true);
    backward(sum(w));
    CHECK(w.grad() == std::vector<double>{1, 1, 1});

    Tensor w2 = Tensor::from_values({1}, {3}, true);
    backward(sum(mul(w2, w2)));
    CHECK(w2.grad() == std::vector<double>{6});

    // two references to the same tensor sum their gradients
    Tensor w3 = Tensor::from_values({2}, {1, 4}, true);
    backward(sum(add(w3, w3)));
    CHECK(w3.grad() == std::vector<double>{2, 2});

    Prng rng(47);
    Tensor x0 = random_tensor({3}, rng);
    CHECK(grad_check([](const Tensor& x) { return sum(mul(add(x, x), x)); }, x0) < 1e-6);

    CHECK_THROWS_AS(backward(Tensor::from_values({2}, {1, 2}, true)), ShapeError);
}

TEST_CASE("backward twice doubles every leaf gradient") {
    Tensor w = Tensor::from_values({2}, {1.5, -0.5}, true);
    Tensor loss = sum(mul(w, w));
    backward(loss);
    std::vector<double> once = w.grad();
    backward(loss);
    for (std::size_t i = 0; i < once.size(); ++i)
        CHECK(w.grad()[i] == doctest::Approx(2.0 * once[i]));
}

TEST_CASE("zero_grad resets accumulation") {
    Tensor w = Tensor::from_values({2}, {2, 3}, true);
    backward(sum(w));
    w.zero_grad();
    backward(sum(w));
    CHECK(w.grad() == std::vector<double>{1, 1});
}

TEST_CASE("NoGradGuard suppresses graph construction") {
    Tensor w = Tensor::from_values({2}, {1, 2}, true);
    {
        NoGradGuard guard;
        Tensor y = sum(mul(w, w));
        CHECK_FALSE(y.requires_grad());
        backward(y);  // constant loss: no-op
        CHECK_FALSE(w.has_grad());
    }
    Tensor y = sum(mul(w, w));
    CHECK(y.requires_grad());
}

TEST_CASE("grad_check harness itself") {
    Prng rng(53);
    Tensor x = random_tensor({4}, rng);
    CHECK(grad_check([](const Tensor& t) { return sum(mul(t, t)); }, x) < 1e-9);
    CHECK(grad_check([](const Tensor& t) {
              (void)t;
              return Tensor::from_values({1}, {5.0});
          },
                     x) == 0.0);
}

TEST_CASE("grad_check_param perturbs shared state in place") {
    Tensor w = Tensor::from_values({3}, {0.4, -1.2, 2.0}, true);
    Tensor c = Tensor::from_values({3}, {1.0, 0.5, -0.25});
    auto f = [&]() { return sum(mul(mul(w, w), c)); };
    CHECK(grad_check_param(f, w) < 1e-8);
    CHECK(w.values() == std::vector<double>{0.4, -1.2, 2.0});  // restored
}

TEST_CASE("forward passes are bitwise deterministic") {
    auto run = [](std::uint64_t seed) {
        Prng rng(seed);
        Tensor x = random_tensor({4, 4}, rng);
        Prng drop(derive_seed(seed, 1));
        Tensor y = dropout(gelu(matmul(x, x)), 0.2, Mode::train, drop);
        return y.values();
    };
    CHECK(run(99) == run(99));
}

TEST_CASE("parameter store") {
    ParameterStore store;
    Tensor t = store.add("head.weight", Tensor::zeros({2, 2}));
    CHECK(t.requires_grad());
    CHECK(store.contains("head.weight"));
    CHECK_FALSE(store.contains("head.bias"));
    CHECK_THROWS_AS(store.add("head.weight", Tensor::zeros({2, 2})), ConfigError);
    CHECK_THROWS_AS(store.at("missing"), ConfigError);

    store.set_trainable("head.weight", false);
    CHECK_FALSE(store.at("head.weight").tensor.requires_grad());
    CHECK_FALSE(store.at("head.weight").trainable);
    store.set_trainable("head.weight", true);
    CHECK(store.at("head.weight").tensor.requires_grad());
}
