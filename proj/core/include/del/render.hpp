#pragma once

#include "del/particles.hpp"
#include "del/tape.hpp"

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <vector>

namespace del {

inline constexpr double kNearPlane = 1e-4;

/// Pinhole camera, OpenCV convention: X_c = R x + t, +Z forward, +Y down.
/// Pixel (u, v) = (fx X/Z + cx, fy Y/Z + cy); pixel centers sit at integers.
struct CameraView {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Vec3 translation = Vec3::Zero();
    int width = 1;
    int height = 1;

    /// Throws ConfigError unless fx, fy > 0, the size is positive and the
    /// rotation is orthonormal to 1e-10.
    void validate() const;
    Vec3 eye() const { return -rotation.transpose() * translation; }

    /// Camera at `eye` looking at `target`; `up` fixes the roll.
    static CameraView look_at(const Vec3& eye, const Vec3& target, const Vec3& up,
                              double fov_y_deg, int width, int height);
};

/// Linear RGB in [0, 1]. Row y * width + x holds pixel (x, y).
struct ImageBuffer {
    int width = 0;
    int height = 0;
    ad::Matrix rgb;

    ImageBuffer() = default;
    ImageBuffer(int w, int h) : width(w), height(h), rgb(ad::Matrix::Zero(static_cast<Eigen::Index>(w) * h, 3)) {}
    double& at(int x, int y, int c) { return rgb(static_cast<Eigen::Index>(y) * width + x, c); }
    double at(int x, int y, int c) const { return rgb(static_cast<Eigen::Index>(y) * width + x, c); }
    /// Throws NumericError on non-finite values.
    void validate() const;
};

struct Projection {
    double u = 0.0;
    double v = 0.0;
    double depth = 0.0;
    /// False when depth <= kNearPlane.
    bool visible = false;
};

Projection project(const Vec3& x, const CameraView& cam);

struct SplatConfig {
    /// Global opacity.
    double alpha = 0.6;
    /// Screen-space standard deviation in pixels.
    double sigma_px = 1.5;
    void validate() const;
};

/// Per-particle colors looked up from the material table.
std::vector<Vec3> particle_colors(const ParticleSystem& system, const MaterialTable& table);

/// I_c(p) = 1 - prod_i (1 - alpha G_i(p) C_ic). G is an isotropic Gaussian cut
/// off at 3 sigma, tapered smoothly to zero between 2 and 3 sigma.
ImageBuffer splat(const std::vector<Vec3>& positions, const std::vector<Vec3>& colors,
                  const CameraView& cam, const SplatConfig& config = {});
ImageBuffer splat(const ParticleSystem& system, const MaterialTable& table, const CameraView& cam,
                  const SplatConfig& config = {});

/// Vector-Jacobian product: d<image_grad, I>/dx for every particle (N x 3).
ad::Matrix splat_position_grad(const std::vector<Vec3>& positions, const std::vector<Vec3>& colors,
                               const CameraView& cam, const SplatConfig& config,
                               const ad::Matrix& image_grad);

/// Differentiable splat of N x 3 positions; returns (H*W) x 3.
ad::Var splat_var(const ad::Var& positions, const std::vector<Vec3>& colors, const CameraView& cam,
                  const SplatConfig& config = {});

/// `count` cameras evenly spaced in azimuth (the first at 45 degrees), at
/// horizontal `distance` and vertical offset `height` from `center`, looking
/// at it. With count = 4 they sit on the upper corners of a box.
std::vector<CameraView> corner_cameras(const Vec3& center, double distance, double height,
                                       double fov_y_deg, int width, int height_px, int count = 4);

} // namespace del
