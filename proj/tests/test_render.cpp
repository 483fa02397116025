#include "test_util.hpp"

#include "del/errors.hpp"
#include "del/gradcheck.hpp"
#include "del/losses.hpp"
#include "del/render.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>

using namespace del;

namespace {

CameraView axis_camera(int w = 33, int h = 33) {
    CameraView cam;
    cam.fx = cam.fy = 40.0;
    cam.cx = (w - 1) / 2.0;
    cam.cy = (h - 1) / 2.0;
    cam.width = w;
    cam.height = h;
    return cam;
}

double image_sum(const std::vector<Vec3>& x, const std::vector<Vec3>& colors, const CameraView& cam) {
    return splat(x, colors, cam).rgb.sum();
}

} // namespace

TEST_CASE("point on the optical axis projects to the principal point") {
    auto cam = axis_camera();
    auto p = project(Vec3(0, 0, 2.5), cam);
    CHECK(p.visible);
    CHECK(p.u == cam.cx);
    CHECK(p.v == cam.cy);
    CHECK(p.depth == 2.5);
}

TEST_CASE("doubling the focal length doubles the offset") {
    auto cam = axis_camera();
    Vec3 x(0.3, -0.2, 2.0);
    auto a = project(x, cam);
    cam.fx *= 2.0;
    auto b = project(x, cam);
    CHECK(b.u - cam.cx == doctest::Approx(2.0 * (a.u - cam.cx)));
    CHECK(b.v == a.v);
}

TEST_CASE("projection matches the pinhole formula") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        auto cam = CameraView::look_at(Vec3(u(rng), u(rng), 3.0 + u(rng)), Vec3::Zero(), Vec3(0, 0, 1), 50.0,
                                       64, 48);
        Vec3 x(u(rng), u(rng), u(rng));
        Vec3 c = cam.rotation * x + cam.translation;
        auto p = project(x, cam);
        CHECK(std::abs(p.u - (cam.fx * c.x() / c.z() + cam.cx)) < 1e-12);
        CHECK(std::abs(p.v - (cam.fy * c.y() / c.z() + cam.cy)) < 1e-12);
        CHECK(std::abs(p.depth - c.z()) < 1e-12);
        CHECK_NOTHROW(cam.validate());
    }
}

TEST_CASE("points behind the camera are invisible and contribute nothing") {
    auto cam = axis_camera();
    CHECK_FALSE(project(Vec3(0, 0, -1), cam).visible);
    CHECK_FALSE(project(Vec3(0, 0, 0), cam).visible);
    std::vector<Vec3> x{Vec3(0, 0, -1)};
    std::vector<Vec3> c{Vec3::Ones()};
    CHECK(splat(x, c, cam).rgb.isZero(0.0));
    ad::Matrix seed = ad::Matrix::Ones(cam.width * cam.height, 3);
    CHECK(splat_position_grad(x, c, cam, {}, seed).isZero(0.0));
}

TEST_CASE("camera validation") {
    auto cam = axis_camera();
    cam.fx = 0.0;
    CHECK_THROWS_AS(cam.validate(), ConfigError);
    cam = axis_camera();
    cam.rotation(0, 1) = 1e-6;
    CHECK_THROWS_AS(cam.validate(), ConfigError);
    SplatConfig sc;
    sc.sigma_px = 0.0;
    CHECK_THROWS_AS(sc.validate(), ConfigError);
}

TEST_CASE("empty scene renders black") {
    auto img = splat(std::vector<Vec3>{}, std::vector<Vec3>{}, axis_camera());
    CHECK(img.width == 33);
    CHECK(img.rgb.isZero(0.0));
}

TEST_CASE("single centered particle peaks at the principal point symmetrically") {
    auto cam = axis_camera();
    SplatConfig sc;
    auto img = splat({Vec3(0, 0, 2)}, {Vec3::Ones()}, cam, sc);
    const int c = 16;
    CHECK(img.at(c, c, 0) == doctest::Approx(sc.alpha));
    CHECK(img.rgb.maxCoeff() == img.at(c, c, 1));
    for (int d = 1; d < 5; ++d) {
        CHECK(img.at(c + d, c, 0) == doctest::Approx(img.at(c - d, c, 0)).epsilon(1e-12));
        CHECK(img.at(c, c + d, 0) == doctest::Approx(img.at(c + d, c, 0)).epsilon(1e-12));
        CHECK(img.at(c + d, c, 0) < img.at(c + d - 1, c, 0));
    }
    // cut off beyond 3 sigma
    CHECK(img.at(c + 5, c, 0) == 0.0);
}

TEST_CASE("splatting is order independent") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    std::vector<Vec3> x, c;
    for (int i = 0; i < 60; ++i) {
        x.emplace_back(u(rng), u(rng), 2.0 + u(rng));
        c.emplace_back(0.5 + u(rng), 0.5, 0.5 - u(rng));
    }
    std::vector<int> perm(x.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Vec3> xp, cp;
    for (int k : perm) {
        xp.push_back(x[static_cast<std::size_t>(k)]);
        cp.push_back(c[static_cast<std::size_t>(k)]);
    }
    auto cam = axis_camera();
    CHECK(splat(x, c, cam).rgb == splat(xp, cp, cam).rgb);
}

TEST_CASE("intensity gradient matches finite differences") {
    auto cam = axis_camera();
    std::vector<Vec3> x{Vec3(0.013, -0.02, 2.0), Vec3(-0.03, 0.01, 2.1)};
    std::vector<Vec3> c{Vec3::Ones(), Vec3(0.2, 0.7, 0.4)};
    ad::Matrix seed = ad::Matrix::Ones(cam.width * cam.height, 3);
    auto g = splat_position_grad(x, c, cam, {}, seed);
    const double h = 1e-6;
    auto xp = x, xm = x;
    xp[0].x() += h;
    xm[0].x() -= h;
    const double numeric = (image_sum(xp, c, cam) - image_sum(xm, c, cam)) / (2 * h);
    CHECK(std::abs(g(0, 0) - numeric) <= 1e-4 * std::abs(numeric));
    for (const auto& r : run_gradcheck("render", 0)) CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("moving toward a bright target lowers the image loss") {
    auto cam = axis_camera();
    std::vector<Vec3> c{Vec3::Ones()};
    auto target = splat({Vec3(0.05, 0, 2)}, c, cam);
    std::vector<Vec3> x{Vec3(0.0, 0, 2)};
    auto current = splat(x, c, cam);
    ad::Matrix diff = 2.0 * (current.rgb - target.rgb);
    auto g = splat_position_grad(x, c, cam, {}, diff);
    // descent direction points toward the target
    CHECK(g(0, 0) < 0.0);
    const double before = (current.rgb - target.rgb).squaredNorm();
    std::vector<Vec3> moved{x[0] - 1e-4 * g.row(0).transpose()};
    const double after = (splat(moved, c, cam).rgb - target.rgb).squaredNorm();
    CHECK(after < before);
}
