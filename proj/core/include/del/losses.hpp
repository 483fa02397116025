#pragma once

#include "del/integrator.hpp"
#include "del/render.hpp"

#include <vector>

namespace del {

enum class RenderNorm { l2, l1 };

RenderNorm render_norm_from_string(const std::string& s);
std::string to_string(RenderNorm n);

struct LossWeights {
    /// Weight of the gradient-direction loss.
    double beta = 0.1;
    RenderNorm norm = RenderNorm::l2;
    bool normal_loss = true;

    void validate() const;
};

/// One set of observed images, one per camera.
struct Observation {
    const std::vector<CameraView>* cameras = nullptr;
    const std::vector<ImageBuffer>* images = nullptr;
};

double image_loss(const ImageBuffer& predicted, const ImageBuffer& observed, RenderNorm norm);
ad::Var image_loss(const ad::Var& rendered, const ImageBuffer& observed, RenderNorm norm);

/// Sum over cameras of the image loss between splat(positions) and the observations.
ad::Var render_loss(const ad::Var& positions, const std::vector<Vec3>& colors, const Observation& obs,
                    const SplatConfig& splat, RenderNorm norm);
double render_loss(const std::vector<Vec3>& positions, const std::vector<Vec3>& colors,
                   const Observation& obs, const SplatConfig& splat, RenderNorm norm);

/// dL_r / dx as plain values (N x 3).
ad::Matrix render_loss_grad(const std::vector<Vec3>& positions, const std::vector<Vec3>& colors,
                            const Observation& obs, const SplatConfig& splat, RenderNorm norm);

/// Render loss of the state reached from `prev` by an Euler step that uses
/// only the normal forces (plus gravity).
ad::Var normal_only_loss(const TapeState& prev, const LearnedForces& forces,
                         const std::vector<std::uint8_t>& static_flags, double dt, bool explicit_euler,
                         const std::vector<Vec3>& colors, const Observation& obs,
                         const SplatConfig& splat, RenderNorm norm);

/// Sum over particles of 1 - cos(-g_i, v_i). `position_grad` is a constant;
/// particles with |g_i| <= eps or |v_i| <= eps contribute zero.
ad::Var gradient_loss(const ad::Matrix& position_grad, const ad::Var& velocities, double eps = 1e-12);

/// Symmetric mean-of-squared nearest-neighbor distance, differentiable in `points`.
ad::Var chamfer_var(const ad::Var& points, const std::vector<Vec3>& target);

} // namespace del
