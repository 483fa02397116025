#include "del/render.hpp"

#include "del/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace del {

void CameraView::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw ConfigError("camera focal lengths must be positive");
    if (width < 1 || height < 1) throw ConfigError("camera image size must be positive");
    if (!rotation.allFinite() || !translation.allFinite() || !std::isfinite(cx) || !std::isfinite(cy))
        throw ConfigError("camera parameters must be finite");
    const double err = (rotation * rotation.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (err > 1e-10) throw ConfigError("camera rotation is not orthonormal");
}

CameraView CameraView::look_at(const Vec3& eye, const Vec3& target, const Vec3& up,
                               double fov_y_deg, int width, int height) {
    const Vec3 z = (target - eye).normalized();
    const Vec3 x = z.cross(up).normalized();
    if (!x.allFinite() || x.norm() < 0.5) throw ConfigError("look_at: up is parallel to the view axis");
    const Vec3 y = z.cross(x);
    CameraView c;
    c.rotation.row(0) = x.transpose();
    c.rotation.row(1) = y.transpose();
    c.rotation.row(2) = z.transpose();
    c.translation = -c.rotation * eye;
    c.width = width;
    c.height = height;
    c.fy = 0.5 * height / std::tan(0.5 * fov_y_deg * std::numbers::pi / 180.0);
    c.fx = c.fy;
    c.cx = 0.5 * (width - 1);
    c.cy = 0.5 * (height - 1);
    c.validate();
    return c;
}

void ImageBuffer::validate() const {
    if (rgb.rows() != static_cast<Eigen::Index>(width) * height || rgb.cols() != 3)
        throw ConfigError("image buffer shape does not match its size");
    if (!rgb.allFinite()) throw NumericError("image contains non-finite values");
}

Projection project(const Vec3& x, const CameraView& cam) {
    const Vec3 p = cam.rotation * x + cam.translation;
    Projection out;
    out.depth = p.z();
    out.visible = p.z() > kNearPlane;
    if (out.visible) {
        out.u = cam.fx * p.x() / p.z() + cam.cx;
        out.v = cam.fy * p.y() / p.z() + cam.cy;
    }
    return out;
}

void SplatConfig::validate() const {
    if (!(sigma_px > 0.0)) throw ConfigError("splat sigma must be positive");
    if (!(alpha > 0.0) || alpha > 1.0) throw ConfigError("splat alpha must lie in (0, 1]");
}

std::vector<Vec3> particle_colors(const ParticleSystem& system, const MaterialTable& table) {
    std::vector<Vec3> out(system.size());
    for (std::size_t i = 0; i < system.size(); ++i) {
        const int m = system.material_ids[i];
        if (m < 0 || m >= table.size()) throw ConfigError("unknown material id " + std::to_string(m));
        const auto& c = table.materials[static_cast<std::size_t>(m)].color;
        out[i] = Vec3(c[0], c[1], c[2]);
    }
    return out;
}

namespace {

/// One particle's footprint on one pixel.
struct Hit {
    int pixel;
    int particle;
    double g;
    double du;  // dG/du
    double dv;  // dG/dv
};

struct Footprint {
    std::vector<Hit> hits;  // sorted by pixel, then by factor value
    std::vector<Projection> proj;
};

double taper(double r, double sigma, double* dtaper) {
    const double s = (r - 2.0 * sigma) / sigma;
    if (s <= 0.0) {
        *dtaper = 0.0;
        return 1.0;
    }
    if (s >= 1.0) {
        *dtaper = 0.0;
        return 0.0;
    }
    *dtaper = -6.0 * s * (1.0 - s) / sigma;
    return 1.0 - s * s * (3.0 - 2.0 * s);
}

Footprint footprint(const std::vector<Vec3>& positions, const std::vector<Vec3>& colors,
                    const CameraView& cam, const SplatConfig& cfg) {
    cam.validate();
    cfg.validate();
    if (colors.size() != positions.size())
        throw ConfigError("splat needs one color per particle");
    const double sigma = cfg.sigma_px;
    const double reach = 3.0 * sigma;
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    Footprint fp;
    fp.proj.resize(positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i) {
        if (!positions[i].allFinite()) throw NumericError("non-finite position of particle " + std::to_string(i));
        const Projection p = project(positions[i], cam);
        fp.proj[i] = p;
        if (!p.visible) continue;
        const int x0 = std::max(0, static_cast<int>(std::ceil(p.u - reach)));
        const int x1 = std::min(cam.width - 1, static_cast<int>(std::floor(p.u + reach)));
        const int y0 = std::max(0, static_cast<int>(std::ceil(p.v - reach)));
        const int y1 = std::min(cam.height - 1, static_cast<int>(std::floor(p.v + reach)));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const double dx = x - p.u;
                const double dy = y - p.v;
                const double r2 = dx * dx + dy * dy;
                if (r2 >= reach * reach) continue;
                const double r = std::sqrt(r2);
                double dt = 0.0;
                const double t = taper(r, sigma, &dt);
                const double e = std::exp(-r2 * inv2s2);
                const double g = e * t;
                if (g <= 0.0) continue;
                // dG/du = dG/d(dx) * (-1)
                const double de_dr = -r * 2.0 * inv2s2 * e;
                const double dg_dr = de_dr * t + e * dt;
                double du = 0.0;
                double dv = 0.0;
                if (r > 0.0) {
                    du = -dg_dr * dx / r;
                    dv = -dg_dr * dy / r;
                }
                fp.hits.push_back({y * cam.width + x, static_cast<int>(i), g, du, dv});
            }
        }
    }
    std::sort(fp.hits.begin(), fp.hits.end(), [&](const Hit& a, const Hit& b) {
        if (a.pixel != b.pixel) return a.pixel < b.pixel;
        if (a.g != b.g) return a.g < b.g;
        const Vec3& ca = colors[static_cast<std::size_t>(a.particle)];
        const Vec3& cb = colors[static_cast<std::size_t>(b.particle)];
        return std::lexicographical_compare(ca.data(), ca.data() + 3, cb.data(), cb.data() + 3);
    });
    return fp;
}

} // namespace

ImageBuffer splat(const std::vector<Vec3>& positions, const std::vector<Vec3>& colors,
                  const CameraView& cam, const SplatConfig& cfg) {
    const Footprint fp = footprint(positions, colors, cam, cfg);
    ImageBuffer img(cam.width, cam.height);
    std::size_t k = 0;
    while (k < fp.hits.size()) {
        const int pixel = fp.hits[k].pixel;
        double trans[3] = {1.0, 1.0, 1.0};
        for (; k < fp.hits.size() && fp.hits[k].pixel == pixel; ++k) {
            const Vec3& c = colors[static_cast<std::size_t>(fp.hits[k].particle)];
            for (int ch = 0; ch < 3; ++ch) trans[ch] *= 1.0 - cfg.alpha * fp.hits[k].g * c[ch];
        }
        for (int ch = 0; ch < 3; ++ch) img.rgb(pixel, ch) = 1.0 - trans[ch];
    }
    return img;
}

ImageBuffer splat(const ParticleSystem& system, const MaterialTable& table, const CameraView& cam,
                  const SplatConfig& cfg) {
    return splat(system.positions, particle_colors(system, table), cam, cfg);
}

ad::Matrix splat_position_grad(const std::vector<Vec3>& positions, const std::vector<Vec3>& colors,
                               const CameraView& cam, const SplatConfig& cfg,
                               const ad::Matrix& image_grad) {
    if (image_grad.rows() != static_cast<Eigen::Index>(cam.width) * cam.height || image_grad.cols() != 3)
        throw ConfigError("image gradient shape does not match the camera");
    const Footprint fp = footprint(positions, colors, cam, cfg);
    const auto n = static_cast<Eigen::Index>(positions.size());
    Eigen::MatrixXd duv = Eigen::MatrixXd::Zero(n, 2);
    std::vector<double> prefix;
    std::size_t k = 0;
    while (k < fp.hits.size()) {
        const std::size_t begin = k;
        const int pixel = fp.hits[k].pixel;
        while (k < fp.hits.size() && fp.hits[k].pixel == pixel) ++k;
        const std::size_t m = k - begin;
        for (int ch = 0; ch < 3; ++ch) {
            const double gI = image_grad(pixel, ch);
            if (gI == 0.0) continue;
            // Product of all other factors via prefix and suffix products.
            prefix.assign(m + 1, 1.0);
            for (std::size_t a = 0; a < m; ++a) {
                const Hit& h = fp.hits[begin + a];
                prefix[a + 1] = prefix[a] * (1.0 - cfg.alpha * h.g * colors[static_cast<std::size_t>(h.particle)][ch]);
            }
            double suffix = 1.0;
            for (std::size_t a = m; a-- > 0;) {
                const Hit& h = fp.hits[begin + a];
                const double c = colors[static_cast<std::size_t>(h.particle)][ch];
                const double dI_dg = cfg.alpha * c * prefix[a] * suffix;
                duv(h.particle, 0) += gI * dI_dg * h.du;
                duv(h.particle, 1) += gI * dI_dg * h.dv;
                suffix *= 1.0 - cfg.alpha * h.g * c;
            }
        }
    }
    ad::Matrix out = ad::Matrix::Zero(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Projection& p = fp.proj[static_cast<std::size_t>(i)];
        if (!p.visible || (duv(i, 0) == 0.0 && duv(i, 1) == 0.0)) continue;
        const Vec3 pc = cam.rotation * positions[static_cast<std::size_t>(i)] + cam.translation;
        const double iz = 1.0 / pc.z();
        Vec3 g_cam;
        g_cam.x() = duv(i, 0) * cam.fx * iz;
        g_cam.y() = duv(i, 1) * cam.fy * iz;
        g_cam.z() = -(duv(i, 0) * cam.fx * pc.x() + duv(i, 1) * cam.fy * pc.y()) * iz * iz;
        out.row(i) = (cam.rotation.transpose() * g_cam).transpose();
    }
    return out;
}

ad::Var splat_var(const ad::Var& positions, const std::vector<Vec3>& colors, const CameraView& cam,
                  const SplatConfig& cfg) {
    const ad::Matrix& x = positions.value();
    if (x.cols() != 3) throw ConfigError("splat_var expects N x 3 positions");
    std::vector<Vec3> pts(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) pts[static_cast<std::size_t>(i)] = x.row(i).transpose();
    ImageBuffer img = splat(pts, colors, cam, cfg);
    return positions.tape().record(std::move(img.rgb), {positions},
                                   [pts = std::move(pts), colors, cam, cfg, positions](
                                       ad::Tape& t, int, const ad::Matrix& g) {
                                       t.accumulate(positions, splat_position_grad(pts, colors, cam, cfg, g));
                                   });
}

std::vector<CameraView> corner_cameras(const Vec3& center, double distance, double height,
                                       double fov_y_deg, int width, int height_px, int count) {
    if (count < 1) throw ConfigError("camera count must be >= 1");
    std::vector<CameraView> cams;
    for (int k = 0; k < count; ++k) {
        const double az = std::numbers::pi / 4.0 + 2.0 * std::numbers::pi * k / count;
        const Vec3 eye = center + Vec3(distance * std::cos(az), distance * std::sin(az), height);
        cams.push_back(CameraView::look_at(eye, center, Vec3::UnitZ(), fov_y_deg, width, height_px));
    }
    return cams;
}

} // namespace del
