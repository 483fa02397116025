#include "test_util.hpp"

#include "del/errors.hpp"
#include "del/generate.hpp"
#include "del/metrics.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>

using namespace del;

namespace {

std::vector<Vec3> random_points(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Vec3> p;
    for (int i = 0; i < n; ++i) p.emplace_back(u(rng), u(rng), u(rng));
    return p;
}

double brute_force_assignment(const Eigen::MatrixXd& cost) {
    std::vector<int> perm(static_cast<std::size_t>(cost.rows()));
    std::iota(perm.begin(), perm.end(), 0);
    double best = 1e300;
    do {
        double c = 0.0;
        for (std::size_t i = 0; i < perm.size(); ++i) c += cost(static_cast<Eigen::Index>(i), perm[i]);
        best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

Vec3 momentum(const Scene& s, int t) {
    Vec3 p = Vec3::Zero();
    for (std::size_t i = 0; i < s.system.size(); ++i) p += s.system.masses[i] * s.frames[t].velocities[i];
    return p;
}

} // namespace

TEST_CASE("chamfer examples") {
    std::mt19937_64 rng(1);
    auto a = random_points(rng, 20);
    auto b = random_points(rng, 15);
    CHECK(chamfer_distance(a, a) == 0.0);
    CHECK(chamfer_distance({Vec3(0, 0, 0)}, {Vec3(1, 0, 0)}) == doctest::Approx(2.0));
    CHECK(chamfer_distance({Vec3(0, 0, 0)}, {Vec3(1, 0, 0)}) * kChamferReportScale == doctest::Approx(200.0));
    CHECK(chamfer_distance(a, b) == doctest::Approx(chamfer_distance(b, a)));
    CHECK_THROWS_AS(chamfer_distance({}, b), ConfigError);
}

TEST_CASE("chamfer is zero only for coinciding sets") {
    std::mt19937_64 rng(2);
    auto a = random_points(rng, 10);
    auto shuffled = a;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(chamfer_distance(a, shuffled) == 0.0);
    auto moved = a;
    moved[3].x() += 1e-3;
    CHECK(chamfer_distance(a, moved) > 0.0);
}

TEST_CASE("emd examples") {
    std::mt19937_64 rng(3);
    auto a = random_points(rng, 30);
    CHECK(emd(a, a) == 0.0);
    CHECK(emd({Vec3(0, 0, 0), Vec3(1, 0, 0)}, {Vec3(1, 0, 0), Vec3(0, 0, 0)}) == 0.0);
    CHECK(emd({Vec3(0, 0, 0), Vec3(1, 0, 0)}, {Vec3(0, 2, 0), Vec3(1, 2, 0)}) == doctest::Approx(2.0));
    CHECK_THROWS_AS(emd(a, random_points(rng, 29)), ConfigError);
    auto moved = a;
    moved[0].z() += 0.1;
    CHECK(emd(a, moved) > 0.0);
}

TEST_CASE("hungarian matches brute force on small problems") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 1 + trial % 6;
        auto a = random_points(rng, 10);
        auto b = random_points(rng, 10);
        Eigen::MatrixXd cost(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) cost(i, j) = (a[i] - b[j]).norm();
        auto assign = hungarian(cost);
        std::vector<int> sorted = assign;
        std::sort(sorted.begin(), sorted.end());
        for (int i = 0; i < n; ++i) CHECK(sorted[i] == i);
        double c = 0.0;
        for (int i = 0; i < n; ++i) c += cost(i, assign[i]);
        CHECK(c == doctest::Approx(brute_force_assignment(cost)).epsilon(1e-12));
    }
}

TEST_CASE("emd subsamples large sets deterministically") {
    std::mt19937_64 rng(5);
    auto a = random_points(rng, 700);
    auto b = random_points(rng, 700);
    const double e = emd(a, b, 9);
    CHECK(e == emd(a, b, 9));
    CHECK(e > 0.0);
    CHECK(emd(a, a, 9) == 0.0);
}

TEST_CASE("psnr examples") {
    ImageBuffer a(8, 8), b(8, 8);
    CHECK(psnr(a, a) == kPsnrCap);
    b.rgb.setConstant(0.1);  // MSE 0.01
    CHECK(psnr(a, b) == doctest::Approx(20.0));
    std::mt19937_64 rng(6);
    std::normal_distribution<double> g;
    ImageBuffer noise(8, 8);
    for (Eigen::Index i = 0; i < noise.rgb.size(); ++i) noise.rgb.data()[i] = g(rng);
    ImageBuffer small = a, large = a;
    small.rgb = 0.5 * ad::Matrix::Ones(64, 3) + 0.01 * noise.rgb;
    large.rgb = 0.5 * ad::Matrix::Ones(64, 3) + 0.05 * noise.rgb;
    ImageBuffer ref(8, 8);
    ref.rgb.setConstant(0.5);
    CHECK(psnr(small, ref) > psnr(large, ref));
    CHECK_THROWS_AS(psnr(a, ImageBuffer(4, 4)), ConfigError);
}

TEST_CASE("generator names and spec parsing") {
    auto names = generator_names();
    for (const char* n : {"drop_ball", "two_ball_collision", "bonded_block_impact", "granular_pour"})
        CHECK(std::find(names.begin(), names.end(), n) != names.end());
    auto o = parse_generator_spec("drop_ball:seed=3,frames=5,gravity=off");
    CHECK(o.name == "drop_ball");
    CHECK(o.seed == 3);
    CHECK(o.frames == 5);
    CHECK(o.gravity == false);
    CHECK(GeneratorOptions{}.cameras == 4);
    CHECK_THROWS_AS(parse_generator_spec("volcano"), ConfigError);
    CHECK_THROWS_AS(parse_generator_spec("drop_ball:color=red"), ConfigError);
}

TEST_CASE("drop ball without gravity stays put") {
    auto s = generate_scene(parse_generator_spec("drop_ball:gravity=off,frames=5,image_size=16"));
    REQUIRE(s.frame_count() == 6);
    REQUIRE(s.cameras.size() == 4);
    for (int t = 1; t < s.frame_count(); ++t) {
        CHECK(s.frames[t].positions == s.frames[0].positions);
        CHECK(s.frames[t].images[2].rgb == s.frames[0].images[2].rgb);
    }
}

TEST_CASE("two ball collision conserves momentum") {
    auto s = generate_scene(parse_generator_spec("two_ball_collision:render=off"));
    CHECK(s.system.size() == 200);
    CHECK(s.frame_count() == 9);
    for (int t = 0; t < s.frame_count(); ++t) CHECK((momentum(s, t) - momentum(s, 0)).norm() <= 1e-9);
    // the balls actually collide
    CHECK((s.frames.back().velocities[0] - s.frames[0].velocities[0]).norm() > 0.1);
}

TEST_CASE("two ball gap sets the starting separation") {
    CHECK(parse_generator_spec("two_ball_collision").gap == 1);
    CHECK_THROWS_AS(generate_scene(parse_generator_spec("two_ball_collision:gap=0,render=off")), ConfigError);
    auto near = generate_scene(parse_generator_spec("two_ball_collision:render=off,frames=0"));
    auto far = generate_scene(parse_generator_spec("two_ball_collision:render=off,frames=0,gap=3"));
    const Vec3 d_near = near.system.positions.back() - near.system.positions.front();
    const Vec3 d_far = far.system.positions.back() - far.system.positions.front();
    CHECK(d_far.x() - d_near.x() == doctest::Approx(4.0 * kLatticeSpacing));
    // rebound is complete by the last default frame
    auto s = generate_scene(parse_generator_spec("two_ball_collision:render=off"));
    CHECK(s.frames.back().velocities.front().x() < 0.0);
}

TEST_CASE("generators are seed deterministic") {
    for (const auto& name : generator_names()) {
        CAPTURE(name);
        auto spec = name + ":frames=2,image_size=16,seed=4";
        auto a = generate_scene(parse_generator_spec(spec));
        auto b = generate_scene(parse_generator_spec(spec));
        CHECK(a.frames.back().positions == b.frames.back().positions);
        CHECK(a.frames.back().images[0].rgb == b.frames.back().images[0].rgb);
        CHECK_NOTHROW(a.validate());
    }
}
