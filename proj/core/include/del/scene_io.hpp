#pragma once

#include "del/classical.hpp"
#include "del/particles.hpp"
#include "del/render.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace del {

struct SceneFrame {
    std::vector<Vec3> positions;
    std::vector<Vec3> velocities;
    /// One image per scene camera, or empty when the frame is unobserved.
    std::vector<ImageBuffer> images;
};

/// A recorded sequence. `system` carries the per-particle metadata and the
/// state of frame 0; every frame shares N, materials and objects.
struct Scene {
    std::string generator = "custom";
    std::uint64_t seed = 0;
    MaterialTable materials = MaterialTable::uniform(1);
    ParticleSystem system;
    std::vector<CameraView> cameras;
    SplatConfig splat;
    /// Time between frames.
    double dt = 1.0 / 60.0;
    /// Integration steps per frame.
    int substeps = 1;
    Vec3 gravity{0.0, 0.0, -9.81};
    double search_radius = kDefaultSearchRadius;
    ClassicalConfig classical;
    std::vector<SceneFrame> frames;

    int frame_count() const { return static_cast<int>(frames.size()); }
    /// Metadata of `system` with the state of frame t.
    ParticleSystem state(int t) const;
    void validate() const;
};

/// Writes scene.json, frame_%04d.bin and (optionally) frame_%04d_cam%d.png
/// into a staging directory and renames it into place.
void save_scene(const Scene& scene, const std::filesystem::path& dir, bool write_images = true);
Scene load_scene(const std::filesystem::path& dir, bool load_images = true);

/// ASCII PLY point cloud; colors in [0, 1] are optional.
void write_ply(const std::filesystem::path& path, const std::vector<Vec3>& points,
               const std::vector<Vec3>& colors = {});
std::vector<Vec3> read_ply(const std::filesystem::path& path);

std::string frame_file(int t);
std::string image_file(int t, int cam);

} // namespace del
