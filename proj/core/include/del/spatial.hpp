#pragma once

#include "del/particles.hpp"

#include <cstdint>
#include <vector>

namespace del {

/// Pairs closer than this are treated as coincident.
inline constexpr double kCoincidenceEpsilon = 1e-12;
/// Below this tangential speed the tangential unit vector is zero.
inline constexpr double kTangentEpsilon = 1e-9;

/// Directed neighbor edges with their mechanical frame. Edge k connects
/// src[k] -> dst[k]; edges are sorted by (src, dst) and every edge has its
/// reverse at index reverse[k].
struct InteractionGraph {
    std::vector<int> src;
    std::vector<int> dst;
    std::vector<int> reverse;
    std::vector<double> distance;
    /// (r_i + r_j) - |x_i - x_j|; positive means overlap.
    std::vector<double> intrusion;
    /// (x_j - x_i) / |x_j - x_i|
    std::vector<Vec3> normal;
    std::vector<std::uint8_t> same_object;
    /// v_j - v_i and its split into normal and tangential parts.
    std::vector<Vec3> v_rel;
    std::vector<Vec3> v_normal;
    std::vector<Vec3> v_tangent;
    /// v_tangent / |v_tangent|, or zero when |v_tangent| <= kTangentEpsilon.
    std::vector<Vec3> tangent;
    /// Number of outgoing edges per particle.
    std::vector<int> degree;

    std::size_t size() const { return src.size(); }
    bool empty() const { return src.empty(); }
};

/// Uniform spatial hash, cell size = search_radius, 27-cell scan.
InteractionGraph build_graph_hash(const ParticleSystem& system, double search_radius);

/// O(N^2) reference with the same contract as build_graph_hash.
InteractionGraph build_graph_bruteforce(const ParticleSystem& system, double search_radius);

/// Distance used for the inclusion test; symmetric bit-for-bit in (a, b).
double pair_distance(const Vec3& a, const Vec3& b);

} // namespace del
