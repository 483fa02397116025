#include "del/adam.hpp"
#include "del/errors.hpp"
#include "del/gradcheck.hpp"
#include "del/mlp.hpp"
#include "del/ops.hpp"
#include "del/param_store.hpp"
#include "del/tape.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace del;
using ad::Matrix;

namespace {

Matrix scalar(double x) { return Matrix::Constant(1, 1, x); }

Matrix random_matrix(std::mt19937_64& rng, int r, int c) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return m;
}

} // namespace

TEST_CASE("sigmoid slope at zero") {
    ad::Tape t;
    auto x = t.leaf(scalar(0.0));
    t.backward(ad::sigmoid(x));
    CHECK(x.grad()(0, 0) == doctest::Approx(0.25));
}

TEST_CASE("relu slope on the negative side") {
    ad::Tape t;
    auto x = t.leaf(scalar(-1.0));
    auto y = ad::relu(x);
    t.backward(y);
    CHECK(y.item() == 0.0);
    CHECK(x.grad()(0, 0) == 0.0);
}

TEST_CASE("fan-out accumulates") {
    ad::Tape t;
    auto x = t.leaf(scalar(3.0));
    auto y = ad::add(ad::mul(x, x), x);
    t.backward(y);
    CHECK(x.grad()(0, 0) == doctest::Approx(7.0));
}

TEST_CASE("norm of a zero row is epsilon-safe") {
    ad::Tape t;
    auto x = t.leaf(Matrix::Zero(1, 3));
    auto n = ad::norm2(x);
    t.backward(n);
    CHECK(n.item() == doctest::Approx(1e-12));
    CHECK(x.grad().allFinite());
}

TEST_CASE("shape mismatches are rejected at construction") {
    ad::Tape t;
    auto a = t.leaf(Matrix::Zero(2, 3));
    auto b = t.leaf(Matrix::Zero(3, 2));
    CHECK_THROWS_AS(ad::add(a, b), ConfigError);
    CHECK_THROWS_AS(ad::matmul(a, a), ConfigError);
    CHECK_THROWS_AS(ad::slice(a, 2, 2), ConfigError);
    CHECK_THROWS_AS(ad::segment_sum(a, {0}, 1), ConfigError);
}

TEST_CASE("segment sum adjoint is a gather") {
    std::mt19937_64 rng(1);
    ad::Tape t;
    auto x = t.leaf(random_matrix(rng, 6, 2));
    std::vector<int> index{2, 0, 2, 1, 0, 2};
    auto y = ad::segment_sum(x, index, 3);
    Matrix seed = random_matrix(rng, 3, 2);
    t.backward(y, seed);
    for (int r = 0; r < 6; ++r) CHECK(x.grad().row(r) == seed.row(index[r]));
}

TEST_CASE("tape evaluation is deterministic") {
    auto run = [] {
        std::mt19937_64 rng(7);
        ad::Tape t;
        auto a = t.leaf(random_matrix(rng, 5, 4));
        auto w = t.leaf(random_matrix(rng, 4, 3));
        auto y = ad::sum(ad::tanh(ad::matmul(a, w)));
        t.backward(y);
        return std::make_pair(y.item(), Matrix(w.grad()));
    };
    auto [y1, g1] = run();
    auto [y2, g2] = run();
    CHECK(y1 == y2);
    CHECK(g1 == g2);
}

TEST_CASE("zero MLP gives zero output") {
    LayerSpec spec{{3, 8, 8, 2}, Activation::relu, false};
    ad::Tape t;
    auto p = t.constant(Matrix::Zero(1, static_cast<Eigen::Index>(spec.param_count())));
    std::mt19937_64 rng(2);
    auto y = mlp_forward(p, t.constant(random_matrix(rng, 4, 3)), spec);
    CHECK(y.value().isZero(0.0));
}

TEST_CASE("identity linear layer passes input through") {
    LayerSpec spec{{3, 3}, Activation::identity, false};
    Matrix p = Matrix::Zero(1, 12);
    for (int i = 0; i < 3; ++i) p(0, i * 3 + i) = 1.0;
    ad::Tape t;
    std::mt19937_64 rng(3);
    Matrix x = random_matrix(rng, 5, 3);
    auto y = mlp_forward(t.constant(p), t.constant(x), spec);
    CHECK(y.value() == x);
}

TEST_CASE("residual MLP with zero weights is the identity") {
    LayerSpec spec{{4, 6, 4}, Activation::tanh, true};
    ad::Tape t;
    std::mt19937_64 rng(4);
    Matrix x = random_matrix(rng, 3, 4);
    auto y = mlp_forward(t.constant(Matrix::Zero(1, static_cast<Eigen::Index>(spec.param_count()))),
                         t.constant(x), spec);
    CHECK(y.value() == x);
}

TEST_CASE("MLP parameter length mismatch is rejected") {
    LayerSpec spec{{2, 2}, Activation::relu, false};
    ad::Tape t;
    CHECK_THROWS_AS(mlp_forward(t.constant(Matrix::Zero(1, 5)), t.constant(Matrix::Zero(1, 2)), spec),
                    ConfigError);
    CHECK_THROWS_AS((LayerSpec{{2, 4}, Activation::relu, true}.validate()), ConfigError);
}

TEST_CASE("parameter binding routes gradients into the store") {
    ParamStore store;
    store.add("w", Matrix::Constant(1, 2, 2.0));
    store.add("frozen", Matrix::Constant(1, 2, 3.0), false);
    ad::Tape t;
    ParamBinding b(t, store);
    auto y = ad::sum(ad::mul(b.get("w"), b.get("frozen")));
    t.backward(y);
    b.accumulate_grads();
    CHECK(store.grad_view("w")(0, 0) == 3.0);
    CHECK(store.grad_view("frozen")(0, 1) == 0.0);
    store.zero_grad();
    CHECK(store.grads.isZero(0.0));
}

TEST_CASE("adam leaves parameters alone without gradient or decay") {
    ParamStore store;
    store.add("w", Matrix::Constant(2, 2, 0.7));
    Eigen::VectorXd before = store.values;
    AdamConfig cfg;
    cfg.weight_decay = 0.0;
    adam_step(store, cfg);
    CHECK(store.values == before);
}

TEST_CASE("first adam step moves by lr against the gradient") {
    ParamStore store;
    store.add("w", Matrix::Zero(1, 3));
    store.grads << 0.5, -2.0, 1e-3;
    AdamConfig cfg;
    cfg.weight_decay = 0.0;
    adam_step(store, cfg);
    // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
    CHECK(store.values(0) == doctest::Approx(-cfg.lr * 0.5 / (0.5 + 1e-8)));
    CHECK(store.values(1) == doctest::Approx(cfg.lr * 2.0 / (2.0 + 1e-8)));
    CHECK(store.values(2) == doctest::Approx(-cfg.lr * 1e-3 / (1e-3 + 1e-8)));
    CHECK(store.adam_step == 1);
}

TEST_CASE("default learning rate") {
    CHECK(AdamConfig{}.lr == 5e-4);
    CHECK(StepLR{}.lr_at(0) == 5e-4);
    CHECK(StepLR{}.lr_at(10000) == doctest::Approx(4.5e-4));
    CHECK(StepLR{}.lr_at(9999) == 5e-4);
}

TEST_CASE("decoupled weight decay shrinks parameters") {
    ParamStore store;
    store.add("w", Matrix::Constant(1, 1, 2.0));
    store.add("no_decay", Matrix::Constant(1, 1, 2.0), true, false);
    AdamConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.5;
    adam_step(store, cfg);
    CHECK(store.values(0) == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0));
    CHECK(store.values(1) == 2.0);
}

TEST_CASE("non-finite gradient aborts the step") {
    ParamStore store;
    store.add("a", Matrix::Constant(1, 2, 1.0));
    store.add("bad", Matrix::Constant(1, 2, 1.0));
    store.grads << 1.0, 1.0, std::numeric_limits<double>::quiet_NaN(), 0.0;
    Eigen::VectorXd before = store.values;
    try {
        adam_step(store, AdamConfig{});
        FAIL("expected a numeric error");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("bad") != std::string::npos);
    }
    CHECK(store.values == before);
    CHECK(store.adam_step == 0);
}

TEST_CASE("gradient clipping") {
    ParamStore store;
    store.add("w", Matrix::Zero(1, 2));
    store.grads << 3.0, 4.0;
    CHECK(clip_grad_norm(store, 1.0) == doctest::Approx(5.0));
    CHECK(store.grads.norm() == doctest::Approx(1.0));
    CHECK(clip_grad_norm(store, 10.0) == doctest::Approx(1.0));
    CHECK(store.grads.norm() == doctest::Approx(1.0));
}

TEST_CASE("finite difference helpers") {
    CHECK(relative_error(Eigen::VectorXd::Ones(3), Eigen::VectorXd::Ones(3)) == 0.0);
    auto g = numeric_gradient([](const Eigen::VectorXd& x) { return x.squaredNorm(); },
                              Eigen::Vector2d(1.0, -2.0), kFiniteDifferenceStep);
    CHECK(g(0) == doctest::Approx(2.0).epsilon(1e-8));
    CHECK(g(1) == doctest::Approx(-4.0).epsilon(1e-8));
}

TEST_CASE("every primitive passes the randomized gradient check") {
    auto results = run_gradcheck("primitives", 0);
    CHECK(results.size() >= 20);
    for (const auto& r : results) {
        CAPTURE(r.check);
        CAPTURE(r.max_rel_error);
        CHECK(r.instances >= 200);
        CHECK(r.tolerance <= 1e-6);
        CHECK(r.pass());
    }
}
