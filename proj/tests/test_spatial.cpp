#include "test_util.hpp"

#include "del/errors.hpp"
#include "del/spatial.hpp"

#include <doctest.h>

using namespace del;

namespace {

ParticleSystem pair_at(double d, double radius) {
    ParticleSystem s;
    s.add(Vec3(0, 0, 0), 1.0, radius, 0, 0);
    s.add(Vec3(d, 0, 0), 1.0, radius, 0, 0);
    return s;
}

void check_invariants(const ParticleSystem& s, const InteractionGraph& g, double r) {
    std::size_t expected = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j)
            if (i != j && (s.positions[i] - s.positions[j]).norm() <= r) ++expected;
    CHECK(g.size() == expected);
    for (std::size_t k = 0; k < g.size(); ++k) {
        int rk = g.reverse[k];
        CHECK(g.src[rk] == g.dst[k]);
        CHECK(g.dst[rk] == g.src[k]);
        CHECK(g.normal[rk] == -g.normal[k]);
        CHECK(g.intrusion[rk] == g.intrusion[k]);
        CHECK((g.v_normal[k] + g.v_tangent[k] - g.v_rel[k]).norm() <= 4e-16 * g.v_rel[k].norm());
        CHECK(std::abs(g.v_tangent[k].dot(g.normal[k])) < 1e-12);
        CHECK(std::abs(g.normal[k].norm() - 1.0) < 1e-12);
        CHECK(g.same_object[k] == (s.object_ids[g.src[k]] == s.object_ids[g.dst[k]]));
    }
}

bool same_graph(const InteractionGraph& a, const InteractionGraph& b) {
    return a.src == b.src && a.dst == b.dst && a.intrusion == b.intrusion && a.normal == b.normal;
}

} // namespace

TEST_CASE("pair inside the search radius") {
    auto g = build_graph_hash(pair_at(0.020, 0.025), 0.025);
    REQUIRE(g.size() == 2);
    CHECK(g.src[0] == 0);
    CHECK(g.dst[0] == 1);
    CHECK(g.src[1] == 1);
    CHECK(g.dst[1] == 0);
    CHECK(g.intrusion[0] == doctest::Approx(0.050 - 0.020));
    CHECK(g.normal[0].x() == doctest::Approx(1.0));
    CHECK(g.normal[1].x() == doctest::Approx(-1.0));
}

TEST_CASE("pair outside the search radius") {
    CHECK(build_graph_hash(pair_at(0.030, 0.025), 0.025).empty());
    CHECK(build_graph_bruteforce(pair_at(0.030, 0.025), 0.025).empty());
}

TEST_CASE("empty system gives an empty graph") {
    ParticleSystem s;
    CHECK(build_graph_bruteforce(s, 0.025).empty());
    CHECK(build_graph_hash(s, 0.025).empty());
}

TEST_CASE("boundary distance is included") {
    const double r = 0.25;
    ParticleSystem s;
    for (int i = 0; i < 3; ++i) s.add(Vec3(r * i, 0, 0), 1.0, 0.1, 0, 0);
    for (auto g : {build_graph_bruteforce(s, r), build_graph_hash(s, r)}) {
        CHECK(g.size() == 4);
        CHECK(g.degree == std::vector<int>{1, 2, 1});
    }
}

TEST_CASE("coincident particles are a geometry error naming the pair") {
    ParticleSystem s;
    s.add(Vec3(0, 0, 0), 1.0, 0.01, 0, 0);
    s.add(Vec3(0.5, 0, 0), 1.0, 0.01, 0, 0);
    s.add(Vec3(0, 0, 0), 1.0, 0.01, 0, 0);
    try {
        build_graph_hash(s, 0.1);
        FAIL("expected a geometry error");
    } catch (const GeometryError& e) {
        CHECK(e.first == 0);
        CHECK(e.second == 2);
    }
    CHECK_THROWS_AS(build_graph_bruteforce(s, 0.1), GeometryError);
}

TEST_CASE("non-positive search radius is rejected") {
    CHECK_THROWS_AS(build_graph_hash(pair_at(0.1, 0.1), 0.0), ConfigError);
}

TEST_CASE("hash matches brute force on 500 uniform particles") {
    std::mt19937_64 rng(1);
    auto s = test::random_cloud(rng, 500, 1.0, 0.05);
    auto a = build_graph_hash(s, 0.1);
    auto b = build_graph_bruteforce(s, 0.1);
    CHECK(a.size() > 0);
    CHECK(same_graph(a, b));
    check_invariants(s, a, 0.1);
}

TEST_CASE("hash matches brute force on random systems") {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<int> n(0, 400);
    std::uniform_real_distribution<double> r(0.01, 0.3);
    std::uniform_real_distribution<double> off(-50.0, 50.0);
    for (int trial = 0; trial < 30; ++trial) {
        double radius = r(rng);
        auto s = test::random_cloud(rng, n(rng), 1.0, radius / 2, 2, 3);
        Vec3 shift(off(rng), off(rng), off(rng));
        for (auto& p : s.positions) p += shift;
        auto a = build_graph_hash(s, radius);
        auto b = build_graph_bruteforce(s, radius);
        CHECK(same_graph(a, b));
        if (trial < 5) check_invariants(s, a, radius);
    }
}

TEST_CASE("graph scalars are translation invariant") {
    std::mt19937_64 rng(4);
    auto s = test::random_cloud(rng, 200, 0.5, 0.03);
    auto moved = s;
    for (auto& p : moved.positions) p += Vec3(0.3, -0.7, 0.11);
    auto a = build_graph_hash(s, 0.06);
    auto b = build_graph_hash(moved, 0.06);
    REQUIRE(a.size() == b.size());
    CHECK(a.src == b.src);
    for (std::size_t k = 0; k < a.size(); ++k) {
        CHECK(std::abs(a.intrusion[k] - b.intrusion[k]) < 1e-12);
        CHECK((a.v_tangent[k] - b.v_tangent[k]).norm() < 1e-12);
    }
}

TEST_CASE("tangent vanishes for purely normal motion") {
    auto s = pair_at(0.02, 0.02);
    s.velocities[1] = Vec3(-1, 0, 0);
    auto g = build_graph_hash(s, 0.025);
    CHECK(g.tangent[0] == Vec3::Zero());
    CHECK(g.v_normal[0].x() == doctest::Approx(-1.0));
    s.velocities[1] = Vec3(0, 2, 0);
    g = build_graph_hash(s, 0.025);
    CHECK(g.tangent[0].y() == doctest::Approx(1.0));
    CHECK(g.tangent[1].y() == doctest::Approx(-1.0));
}
