#include "test_util.hpp"

#include "del/errors.hpp"
#include "del/gradcheck.hpp"
#include "del/integrator.hpp"
#include "del/spatial.hpp"

#include <doctest.h>

#include <limits>

using namespace del;

namespace {

ForceSet uniform_force(const ParticleSystem& s, const Vec3& f) {
    ForceSet out;
    out.total.assign(s.size(), f);
    return out;
}

ParticleSystem two_balls(double gap, double speed) {
    ParticleSystem s;
    const double spacing = 1.0 / 64.0;
    for (int obj = 0; obj < 2; ++obj) {
        const double side = obj == 0 ? -1.0 : 1.0;
        for (int x = 0; x < 3; ++x)
            for (int y = 0; y < 3; ++y)
                for (int z = 0; z < 3; ++z) {
                    Vec3 p(side * (gap / 2 + spacing * x), spacing * y, spacing * z);
                    s.add(p, 1.0 + 0.5 * obj, spacing / 2, 0, obj);
                    s.velocities.back() = Vec3(-side * speed, 0.1 * side, 0);
                }
    }
    return s;
}

Vec3 momentum(const ParticleSystem& s) {
    Vec3 p = Vec3::Zero();
    for (std::size_t i = 0; i < s.size(); ++i) p += s.masses[i] * s.velocities[i];
    return p;
}

} // namespace

TEST_CASE("free flight advances by v dt") {
    ParticleSystem s;
    s.add(Vec3(0, 0, 0), 1.0, 0.01, 0, 0);
    s.velocities[0] = Vec3(1, 0, 0);
    auto next = euler_step(s, uniform_force(s, Vec3::Zero()), 0.1);
    CHECK(next.positions[0].x() == doctest::Approx(0.1));
    CHECK(next.velocities[0] == s.velocities[0]);
}

TEST_CASE("constant gravity follows the discrete closed form") {
    ParticleSystem s;
    s.add(Vec3(0, 0, 0), 2.0, 0.01, 0, 0);
    const Vec3 g(0, 0, -9.81);
    const double dt = 0.01;
    const int n = 50;
    for (int k = 0; k < n; ++k) s = euler_step(s, uniform_force(s, s.masses[0] * g), dt);
    // x_n = sum_{k=1..n} k g dt^2
    const Vec3 expected = 0.5 * n * (n + 1) * g * dt * dt;
    CHECK((s.positions[0] - expected).norm() < 1e-12);
    CHECK((s.velocities[0] - n * g * dt).norm() < 1e-12);
    CHECK((s.accelerations_prev[0] - g).norm() < 1e-12);
}

TEST_CASE("explicit euler uses the old velocity") {
    ParticleSystem s;
    s.add(Vec3(0, 0, 0), 1.0, 0.01, 0, 0);
    auto next = euler_step(s, uniform_force(s, Vec3(1, 0, 0)), 0.5, true);
    CHECK(next.positions[0].x() == 0.0);
    CHECK(next.velocities[0].x() == doctest::Approx(0.5));
}

TEST_CASE("static particles stay pinned") {
    ParticleSystem s;
    s.add(Vec3(1, 2, 3), 1.0, 0.01, 0, 0, true);
    auto next = euler_step(s, uniform_force(s, Vec3(100, -50, 7)), 0.1);
    CHECK(next.positions[0] == s.positions[0]);
    CHECK(next.velocities[0] == Vec3::Zero());
}

TEST_CASE("non-finite force names the particle") {
    ParticleSystem s;
    s.add(Vec3(0, 0, 0), 1.0, 0.01, 0, 0);
    s.add(Vec3(1, 0, 0), 1.0, 0.01, 0, 0);
    auto f = uniform_force(s, Vec3::Zero());
    f.total[1].x() = std::numeric_limits<double>::infinity();
    try {
        euler_step(s, f, 0.1);
        FAIL("expected a numeric error");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("1") != std::string::npos);
    }
}

TEST_CASE("divergence guard") {
    ParticleSystem s;
    s.add(Vec3(0, 0, 0), 1.0, 0.01, 0, 0);
    s.velocities[0] = Vec3(0, 0, 20);
    CHECK_NOTHROW(check_divergence(s, 30.0));
    CHECK_THROWS_AS(check_divergence(s, 10.0), NumericError);
}

TEST_CASE("zero frames returns the initial state") {
    auto s = two_balls(0.05, 1.0);
    StepConfig cfg;
    auto r = rollout_classical(s, MaterialTable::uniform(1), 0, cfg);
    REQUIRE(r.size() == 1);
    CHECK(r[0].positions == s.positions);
}

TEST_CASE("two-ball collision conserves momentum") {
    auto s = two_balls(0.02, 1.5);
    MaterialParams p;
    p.stiffness = 2000.0;
    p.damping = 0.3;
    auto table = MaterialTable::from({p});
    StepConfig cfg;
    cfg.gravity = Vec3::Zero();
    cfg.substeps = 20;
    cfg.search_radius = 1.25 / 64.0;
    const Vec3 before = momentum(s);
    auto r = rollout_classical(s, table, 30, cfg);
    for (const auto& st : r) CHECK((momentum(st) - before).norm() <= 1e-9);
    // the balls did meet
    double max_speed_change = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
        max_speed_change = std::max(max_speed_change, (r.back().velocities[i] - s.velocities[i]).norm());
    CHECK(max_speed_change > 0.1);
}

TEST_CASE("reversing velocities without forces returns to the start") {
    std::mt19937_64 rng(1);
    auto s = test::random_cloud(rng, 40, 1.0, 0.01);
    auto x = s;
    for (int k = 0; k < 100; ++k) x = euler_step(x, uniform_force(x, Vec3::Zero()), 0.01);
    for (auto& v : x.velocities) v = -v;
    for (int k = 0; k < 100; ++k) x = euler_step(x, uniform_force(x, Vec3::Zero()), 0.01);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK((x.positions[i] - s.positions[i]).norm() < 1e-10);
}

TEST_CASE("rollouts are bitwise deterministic") {
    auto s = two_balls(0.02, 1.0);
    StepConfig cfg;
    cfg.search_radius = 1.25 / 64.0;
    auto a = rollout_classical(s, MaterialTable::uniform(1), 10, cfg);
    auto b = rollout_classical(s, MaterialTable::uniform(1), 10, cfg);
    for (std::size_t t = 0; t < a.size(); ++t) {
        CHECK(a[t].positions == b[t].positions);
        CHECK(a[t].velocities == b[t].velocities);
    }
    KernelConfig kc;
    kc.embedding_dim = kc.edge_dim = kc.hidden = 8;
    auto m1 = LearnedModel::create(kc, 1, s.size(), 0.025, 3);
    auto m2 = LearnedModel::create(kc, 1, s.size(), 0.025, 3);
    cfg.search_radius = 0.025;
    auto la = rollout_learned(s, m1, 5, cfg);
    auto lb = rollout_learned(s, m2, 5, cfg);
    CHECK(la.back().positions == lb.back().positions);
}

TEST_CASE("learned step on the tape matches the value rollout") {
    auto s = two_balls(0.02, 1.0);
    KernelConfig kc;
    kc.embedding_dim = kc.edge_dim = kc.hidden = 8;
    auto m = LearnedModel::create(kc, 1, s.size(), 0.025, 4);
    StepConfig cfg;
    auto r = rollout_learned(s, m, 2, cfg);
    ad::Tape tape;
    ParamBinding b(tape, m.params);
    auto st = tape_state(tape, s);
    st = learned_step(b, m, s, st, cfg, cfg.dt);
    st = learned_step(b, m, s, st, cfg, cfg.dt);
    auto out = s;
    store_state(st, out);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK((out.positions[i] - r[2].positions[i]).norm() < 1e-14);
}

TEST_CASE("rollout gradient wrt a kernel weight matches finite differences") {
    for (const auto& r : run_gradcheck("rollout", 0)) {
        CAPTURE(r.max_rel_error);
        CHECK(r.max_rel_error < 1e-3);
    }
}

TEST_CASE("invalid step config is rejected") {
    StepConfig cfg;
    cfg.dt = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = StepConfig{};
    cfg.substeps = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
