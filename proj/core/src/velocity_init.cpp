#include "del/velocity_init.hpp"

#include "del/errors.hpp"

#include <map>
#include <set>

namespace del {

std::vector<Vec3> init_velocities_from_tracks(const std::vector<std::vector<Vec3>>& frames, double dt) {
    if (frames.size() < 3) throw ConfigError("velocity initialization needs at least 3 frames");
    if (!(dt > 0.0)) throw ConfigError("time step must be positive");
    const auto& x0 = frames[0];
    const auto& x2 = frames[2];
    if (x0.size() != x2.size()) throw ConfigError("frames differ in particle count");
    std::vector<Vec3> v(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) v[i] = (x2[i] - x0[i]) / (2.0 * dt);
    return v;
}

std::vector<Vec3> init_velocities_from_images(const ParticleSystem& frame0, const std::vector<Vec3>& colors,
                                              const Observation& frame1, const Observation& frame2,
                                              const SplatConfig& splat, RenderNorm norm, double dt,
                                              const OffsetSearch& search) {
    if (!(dt > 0.0)) throw ConfigError("time step must be positive");
    if (search.grid < 1 || search.refinements < 0 || search.sweeps < 1 || !(search.max_offset > 0.0))
        throw ConfigError("invalid offset search settings");
    std::set<int> objects;
    for (std::size_t i = 0; i < frame0.size(); ++i)
        if (!frame0.is_static(i)) objects.insert(frame0.object_ids[i]);
    std::map<int, Vec3> offset;
    for (int o : objects) offset[o] = Vec3::Zero();

    std::vector<Vec3> p1(frame0.positions), p2(frame0.positions);
    auto cost = [&](int obj, const Vec3& d) {
        for (std::size_t i = 0; i < frame0.size(); ++i) {
            if (frame0.is_static(i)) continue;
            const int o = frame0.object_ids[i];
            const Vec3& s = o == obj ? d : offset[o];
            p1[i] = frame0.positions[i] + s;
            p2[i] = frame0.positions[i] + 2.0 * s;
        }
        return render_loss(p1, colors, frame1, splat, norm) + render_loss(p2, colors, frame2, splat, norm);
    };

    for (int sweep = 0; sweep < search.sweeps; ++sweep) {
        for (int o : objects) {
            Vec3 best = offset[o];
            double best_cost = cost(o, best);
            const double step = search.grid > 1 ? 2.0 * search.max_offset / (search.grid - 1) : search.max_offset;
            const int half = (search.grid - 1) / 2;
            for (int a = -half; a <= half; ++a)
                for (int b = -half; b <= half; ++b)
                    for (int c = -half; c <= half; ++c) {
                        const Vec3 d = Vec3(a, b, c) * step;
                        const double v = cost(o, d);
                        if (v < best_cost) {
                            best_cost = v;
                            best = d;
                        }
                    }
            double h = step * 0.5;
            for (int r = 0; r < search.refinements; ++r, h *= 0.5) {
                const Vec3 center = best;
                for (int a = -1; a <= 1; ++a)
                    for (int b = -1; b <= 1; ++b)
                        for (int c = -1; c <= 1; ++c) {
                            if (a == 0 && b == 0 && c == 0) continue;
                            const Vec3 d = center + Vec3(a, b, c) * h;
                            const double v = cost(o, d);
                            if (v < best_cost) {
                                best_cost = v;
                                best = d;
                            }
                        }
            }
            offset[o] = best;
        }
    }
    std::vector<Vec3> v(frame0.size(), Vec3::Zero());
    for (std::size_t i = 0; i < frame0.size(); ++i)
        if (!frame0.is_static(i)) v[i] = offset[frame0.object_ids[i]] / dt;
    return v;
}

} // namespace del
