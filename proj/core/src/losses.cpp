#include "del/losses.hpp"

#include "del/errors.hpp"
#include "del/ops.hpp"

#include <cmath>
#include <limits>

namespace del {

using ad::Matrix;
using ad::Var;

RenderNorm render_norm_from_string(const std::string& s) {
    if (s == "l2" || s == "L2") return RenderNorm::l2;
    if (s == "l1" || s == "L1") return RenderNorm::l1;
    throw ConfigError("unknown render norm '" + s + "' (expected l1 or l2)");
}

std::string to_string(RenderNorm n) { return n == RenderNorm::l2 ? "l2" : "l1"; }

void LossWeights::validate() const {
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be >= 0");
}

namespace {

void check_sizes(Eigen::Index rows, const ImageBuffer& observed) {
    if (rows != observed.rgb.rows()) throw ConfigError("rendered and observed image sizes differ");
}

void check_obs(const Observation& obs) {
    if (!obs.cameras || !obs.images || obs.cameras->size() != obs.images->size())
        throw ConfigError("observation needs one image per camera");
}

} // namespace

double image_loss(const ImageBuffer& predicted, const ImageBuffer& observed, RenderNorm norm) {
    if (predicted.width != observed.width || predicted.height != observed.height)
        throw ConfigError("image size mismatch");
    check_sizes(predicted.rgb.rows(), observed);
    const Matrix d = predicted.rgb - observed.rgb;
    return norm == RenderNorm::l2 ? d.squaredNorm() : d.cwiseAbs().sum();
}

Var image_loss(const Var& rendered, const ImageBuffer& observed, RenderNorm norm) {
    check_sizes(rendered.rows(), observed);
    Var d = ad::sub(rendered, rendered.tape().constant(observed.rgb));
    return ad::sum(norm == RenderNorm::l2 ? ad::square(d) : ad::abs(d));
}

Var render_loss(const Var& positions, const std::vector<Vec3>& colors, const Observation& obs,
                const SplatConfig& splat, RenderNorm norm) {
    check_obs(obs);
    Var total = positions.tape().constant(Matrix::Zero(1, 1));
    for (std::size_t c = 0; c < obs.cameras->size(); ++c) {
        Var img = splat_var(positions, colors, (*obs.cameras)[c], splat);
        total = ad::add(total, image_loss(img, (*obs.images)[c], norm));
    }
    return total;
}

double render_loss(const std::vector<Vec3>& positions, const std::vector<Vec3>& colors,
                   const Observation& obs, const SplatConfig& splat, RenderNorm norm) {
    check_obs(obs);
    double total = 0.0;
    for (std::size_t c = 0; c < obs.cameras->size(); ++c)
        total += image_loss(del::splat(positions, colors, (*obs.cameras)[c], splat), (*obs.images)[c], norm);
    return total;
}

Matrix render_loss_grad(const std::vector<Vec3>& positions, const std::vector<Vec3>& colors,
                        const Observation& obs, const SplatConfig& splat, RenderNorm norm) {
    check_obs(obs);
    Matrix g = Matrix::Zero(static_cast<Eigen::Index>(positions.size()), 3);
    for (std::size_t c = 0; c < obs.cameras->size(); ++c) {
        const CameraView& cam = (*obs.cameras)[c];
        const ImageBuffer img = del::splat(positions, colors, cam, splat);
        const Matrix d = img.rgb - (*obs.images)[c].rgb;
        const Matrix gi = norm == RenderNorm::l2 ? Matrix(2.0 * d) : Matrix(d.array().sign().matrix());
        g += splat_position_grad(positions, colors, cam, splat, gi);
    }
    return g;
}

Var normal_only_loss(const TapeState& prev, const LearnedForces& forces,
                     const std::vector<std::uint8_t>& static_flags, double dt, bool explicit_euler,
                     const std::vector<Vec3>& colors, const Observation& obs, const SplatConfig& splat,
                     RenderNorm norm) {
    const TapeState next = euler_step_var(prev, forces.normal_total, forces.mass, static_flags, dt, explicit_euler);
    return render_loss(next.positions, colors, obs, splat, norm);
}

Var gradient_loss(const Matrix& position_grad, const Var& velocities, double eps) {
    const Matrix& v = velocities.value();
    if (position_grad.rows() != v.rows() || position_grad.cols() != 3 || v.cols() != 3)
        throw ConfigError("gradient loss needs matching N x 3 gradients and velocities");
    const Eigen::Index n = v.rows();
    Matrix dir = Matrix::Zero(n, 3);
    Matrix active = Matrix::Zero(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double gn = position_grad.row(i).norm();
        if (gn > eps && v.row(i).norm() > eps) {
            dir.row(i) = -position_grad.row(i) / gn;
            active(i, 0) = 1.0;
        }
    }
    ad::Tape& t = velocities.tape();
    Var cos = ad::div(ad::sum_rows(ad::mul(t.constant(dir), velocities)), ad::norm2(velocities));
    Var act = t.constant(active);
    return ad::sum(ad::mul(act, ad::sub(act, cos)));
}

Var chamfer_var(const Var& points, const std::vector<Vec3>& target) {
    const Matrix& p = points.value();
    const auto n = p.rows();
    const auto m = static_cast<Eigen::Index>(target.size());
    if (n == 0 || m == 0) throw ConfigError("chamfer distance of an empty set");
    std::vector<Eigen::Index> nn_p(static_cast<std::size_t>(n));
    std::vector<Eigen::Index> nn_q(static_cast<std::size_t>(m));
    std::vector<double> best_q(static_cast<std::size_t>(m), std::numeric_limits<double>::infinity());
    double sum_p = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vec3 pi = p.row(i).transpose();
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < m; ++j) {
            const double d = (pi - target[static_cast<std::size_t>(j)]).squaredNorm();
            if (d < best) {
                best = d;
                nn_p[static_cast<std::size_t>(i)] = j;
            }
            if (d < best_q[static_cast<std::size_t>(j)]) {
                best_q[static_cast<std::size_t>(j)] = d;
                nn_q[static_cast<std::size_t>(j)] = i;
            }
        }
        sum_p += best;
    }
    double sum_q = 0.0;
    for (double d : best_q) sum_q += d;
    Matrix value(1, 1);
    value(0, 0) = sum_p / static_cast<double>(n) + sum_q / static_cast<double>(m);
    return points.tape().record(std::move(value), {points},
                                [points, target, nn_p, nn_q](ad::Tape& t, int, const Matrix& g) {
                                    const Matrix& p = points.value();
                                    const auto n = p.rows();
                                    const auto m = static_cast<Eigen::Index>(target.size());
                                    Matrix out = Matrix::Zero(n, 3);
                                    for (Eigen::Index i = 0; i < n; ++i)
                                        out.row(i) += 2.0 / n *
                                                      (p.row(i) - target[static_cast<std::size_t>(nn_p[static_cast<std::size_t>(i)])].transpose());
                                    for (Eigen::Index j = 0; j < m; ++j) {
                                        const Eigen::Index i = nn_q[static_cast<std::size_t>(j)];
                                        out.row(i) += 2.0 / m * (p.row(i) - target[static_cast<std::size_t>(j)].transpose());
                                    }
                                    t.accumulate(points, g(0, 0) * out);
                                });
}

} // namespace del
