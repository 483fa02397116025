#include "del/spatial.hpp"

#include "del/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <unordered_map>
#include <utility>

namespace del {

namespace {

struct CellKey {
    std::int64_t x, y, z;
    bool operator==(const CellKey&) const = default;
};

struct CellKeyHash {
    std::size_t operator()(const CellKey& k) const noexcept {
        auto h = static_cast<std::uint64_t>(k.x) * 73856093ULL;
        h ^= static_cast<std::uint64_t>(k.y) * 19349663ULL;
        h ^= static_cast<std::uint64_t>(k.z) * 83492791ULL;
        return static_cast<std::size_t>(h);
    }
};

CellKey cell_of(const Vec3& p, double cell) {
    return {static_cast<std::int64_t>(std::floor(p.x() / cell)),
            static_cast<std::int64_t>(std::floor(p.y() / cell)),
            static_cast<std::int64_t>(std::floor(p.z() / cell))};
}

void check_radius(double search_radius) {
    if (!(search_radius > 0.0) || !std::isfinite(search_radius)) {
        throw ConfigError("search radius must be positive and finite");
    }
}

[[noreturn]] void throw_coincident(int i, int j) {
    throw GeometryError("particles " + std::to_string(i) + " and " + std::to_string(j) +
                            " are coincident",
                        std::min(i, j), std::max(i, j));
}

// Fills every per-edge field from sorted (src, dst) pairs.
InteractionGraph finish(const ParticleSystem& s, std::vector<std::pair<int, int>> pairs) {
    std::sort(pairs.begin(), pairs.end());
    InteractionGraph g;
    const std::size_t m = pairs.size();
    g.src.resize(m);
    g.dst.resize(m);
    g.reverse.resize(m);
    g.distance.resize(m);
    g.intrusion.resize(m);
    g.normal.resize(m);
    g.same_object.resize(m);
    g.v_rel.resize(m);
    g.v_normal.resize(m);
    g.v_tangent.resize(m);
    g.tangent.resize(m);
    g.degree.assign(s.size(), 0);

    for (std::size_t k = 0; k < m; ++k) {
        const auto [i, j] = pairs[k];
        const auto ui = static_cast<std::size_t>(i);
        const auto uj = static_cast<std::size_t>(j);
        g.src[k] = i;
        g.dst[k] = j;
        ++g.degree[ui];
        const double d = pair_distance(s.positions[ui], s.positions[uj]);
        g.distance[k] = d;
        g.intrusion[k] = (s.radii[ui] + s.radii[uj]) - d;
        const Vec3 n = (s.positions[uj] - s.positions[ui]) / d;
        g.normal[k] = n;
        g.same_object[k] = s.object_ids[ui] == s.object_ids[uj] ? 1 : 0;
        const Vec3 vr = s.velocities[uj] - s.velocities[ui];
        const Vec3 vn = vr.dot(n) * n;
        const Vec3 vt = vr - vn;
        g.v_rel[k] = vr;
        g.v_normal[k] = vn;
        g.v_tangent[k] = vt;
        const double vt_norm = vt.norm();
        g.tangent[k] = vt_norm > kTangentEpsilon ? Vec3(vt / vt_norm) : Vec3::Zero();
    }
    for (std::size_t k = 0; k < m; ++k) {
        const std::pair<int, int> rev{g.dst[k], g.src[k]};
        const auto it = std::lower_bound(pairs.begin(), pairs.end(), rev);
        g.reverse[k] = static_cast<int>(it - pairs.begin());
    }
    return g;
}

} // namespace

double pair_distance(const Vec3& a, const Vec3& b) {
    const double dx = b.x() - a.x();
    const double dy = b.y() - a.y();
    const double dz = b.z() - a.z();
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

InteractionGraph build_graph_bruteforce(const ParticleSystem& s, double search_radius) {
    check_radius(search_radius);
    const int n = static_cast<int>(s.size());
    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            const double d = pair_distance(s.positions[static_cast<std::size_t>(i)],
                                           s.positions[static_cast<std::size_t>(j)]);
            if (d > search_radius) continue;
            if (d < kCoincidenceEpsilon) throw_coincident(i, j);
            pairs.emplace_back(i, j);
        }
    }
    return finish(s, std::move(pairs));
}

InteractionGraph build_graph_hash(const ParticleSystem& s, double search_radius) {
    check_radius(search_radius);
    const int n = static_cast<int>(s.size());

    std::vector<CellKey> keys(s.size());
    std::unordered_map<CellKey, std::vector<int>, CellKeyHash> cells;
    cells.reserve(s.size());
    for (int i = 0; i < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        if (!s.positions[ui].allFinite()) {
            throw NumericError("particle " + std::to_string(i) + " has a non-finite position");
        }
        keys[ui] = cell_of(s.positions[ui], search_radius);
        cells[keys[ui]].push_back(i);
    }

    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        const CellKey c = keys[ui];
        for (std::int64_t dx = -1; dx <= 1; ++dx) {
            for (std::int64_t dy = -1; dy <= 1; ++dy) {
                for (std::int64_t dz = -1; dz <= 1; ++dz) {
                    const auto it = cells.find({c.x + dx, c.y + dy, c.z + dz});
                    if (it == cells.end()) continue;
                    for (int j : it->second) {
                        if (j == i) continue;
                        const double d = pair_distance(s.positions[ui], s.positions[static_cast<std::size_t>(j)]);
                        if (d > search_radius) continue;
                        if (d < kCoincidenceEpsilon) throw_coincident(i, j);
                        pairs.emplace_back(i, j);
                    }
                }
            }
        }
    }
    return finish(s, std::move(pairs));
}

} // namespace del
