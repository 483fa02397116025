#pragma once

#include "del/losses.hpp"

#include <vector>

namespace del {

/// v0 = (x2 - x0) / (2 dt) per particle. Needs at least three frames.
std::vector<Vec3> init_velocities_from_tracks(const std::vector<std::vector<Vec3>>& frames, double dt);

struct OffsetSearch {
    /// Half-width of the coarse grid per axis, world units.
    double max_offset = 0.05;
    /// Coarse grid points per axis (odd keeps zero on the grid).
    int grid = 9;
    /// Local 3x3x3 refinement rounds, each halving the step.
    int refinements = 8;
    /// Coordinate-descent sweeps over objects.
    int sweeps = 2;
};

/// Per-object rigid offset per frame that best explains observations of
/// frames 1 and 2 (shifted by 1x and 2x the offset); returns offset / dt for
/// every particle. Static particles get zero.
std::vector<Vec3> init_velocities_from_images(const ParticleSystem& frame0, const std::vector<Vec3>& colors,
                                              const Observation& frame1, const Observation& frame2,
                                              const SplatConfig& splat, RenderNorm norm, double dt,
                                              const OffsetSearch& search = {});

} // namespace del
