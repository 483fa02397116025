#pragma once

#include "del/scene_io.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace del {

/// Lattice spacing of generated objects; a power of two so that resting
/// neighbor distances are exact.
inline constexpr double kLatticeSpacing = 1.0 / 64.0;

struct GeneratorOptions {
    std::string name = "two_ball_collision";
    std::uint64_t seed = 0;
    /// Integration frames after frame 0.
    int frames = 8;
    /// Dynamic particle count; 0 picks the generator default.
    int particles = 0;
    int cameras = 4;
    int image_size = 64;
    /// Overrides the generator's gravity setting.
    std::optional<bool> gravity;
    int substeps = 20;
    /// two_ball_collision: lattice spacings between each ball and the midplane.
    int gap = 1;
    double dt = 1.0 / 60.0;
    bool render = true;
};

const std::vector<std::string>& generator_names();

/// "name[:key=value,...]" with keys seed, frames, particles, cameras,
/// image_size, gravity (on|off), substeps, dt, gap, render (on|off).
GeneratorOptions parse_generator_spec(const std::string& spec);

/// Classical ground-truth rollout plus splat renders from corner cameras.
Scene generate_scene(const GeneratorOptions& options);

/// Renders every camera for every frame of `scene` in place.
void render_scene(Scene& scene);

/// The `count` lattice points closest to `center` (ties broken by lattice order).
std::vector<Vec3> lattice_ball(const Vec3& center, int count, double spacing = kLatticeSpacing);

/// nx x ny x nz block with its minimum corner at `origin`.
std::vector<Vec3> lattice_block(const Vec3& origin, int nx, int ny, int nz, double spacing = kLatticeSpacing);

} // namespace del
