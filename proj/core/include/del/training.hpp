#pragma once

#include "del/adam.hpp"
#include "del/kernels.hpp"
#include "del/losses.hpp"
#include "del/scene_io.hpp"
#include "del/velocity_init.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace del {

enum class Supervision { images, points };
enum class VelocityInit { automatic, tracks, images, given };

struct TrainConfig {
    std::uint64_t seed = 0;
    long steps = 2000;
    Supervision supervision = Supervision::images;
    /// Frames rolled out per optimizer step; 0 means the whole sequence.
    int window = 0;
    /// Backprop-through-time truncation in frames; 0 means the full window.
    int bptt = 0;
    long log_every = 10;
    /// 0 disables periodic checkpoints (the final one is always written).
    long checkpoint_every = 0;

    AdamConfig adam;
    double lr_gamma = 0.9;
    long lr_step = 10000;
    /// Global gradient-norm clip; 0 disables clipping.
    double clip_norm = 0.0;

    LossWeights loss;
    KernelConfig model;

    double search_radius = kDefaultSearchRadius;
    int substeps = 1;
    bool explicit_euler = false;
    double max_speed = 1e3;

    VelocityInit velocity_init = VelocityInit::automatic;
    OffsetSearch offset_search;

    void validate() const;
};

/// Parses a train.toml document; unknown keys are ConfigErrors.
TrainConfig parse_train_config(const std::string& toml_text);
TrainConfig load_train_config(const std::filesystem::path& path);

struct TrainLogEntry {
    long step = 0;
    double lr = 0.0;
    double loss = 0.0;
    double render = 0.0;         // L_r
    double render_normal = 0.0;  // L_r^n
    double gradient = 0.0;       // L_g
    double chamfer = 0.0;        // 3d supervision
    double grad_norm = 0.0;
    double wall_time = 0.0;
    bool skipped = false;

    std::string to_json() const;
};

class Trainer {
public:
    /// Fresh model sized for the first scene unless `initial` is given.
    Trainer(TrainConfig config, std::vector<Scene> dataset, std::optional<LearnedModel> initial = {});

    /// One optimizer step (or a skipped step on a non-finite loss).
    TrainLogEntry step();
    /// Runs the remaining steps; `on_log` sees every log_every-th entry and the last.
    void run(const std::function<void(const TrainLogEntry&)>& on_log = {},
             const std::optional<std::filesystem::path>& checkpoint = {});

    /// Frame-0 state with initialized velocities, as used for every rollout.
    const ParticleSystem& initial_state(std::size_t scene) const { return initial_[scene]; }
    /// Learned rollout of scene `scene` from its initial state over `frames` frames.
    std::vector<ParticleSystem> rollout(std::size_t scene, int frames) const;
    /// Chamfer distance (raw) between the learned and ground-truth positions at frame t.
    double chamfer_at(std::size_t scene, int t) const;

    StepConfig step_config(const Scene& scene) const;
    LearnedModel& model() { return model_; }
    const LearnedModel& model() const { return model_; }
    const TrainConfig& config() const { return config_; }
    long steps_done() const { return step_; }

private:
    TrainConfig config_;
    std::vector<Scene> data_;
    std::vector<ParticleSystem> initial_;
    std::vector<std::vector<Vec3>> colors_;
    LearnedModel model_;
    std::mt19937_64 rng_;
    long step_ = 0;
    int nan_streak_ = 0;
    double lr_scale_ = 1.0;
    std::chrono::steady_clock::time_point start_;
};

/// Velocities of frame 0 per the configured initialization mode.
std::vector<Vec3> initial_velocities(const Scene& scene, const TrainConfig& config);

/// Loads a scene directory, or every scene directory directly inside `path`.
std::vector<Scene> load_dataset(const std::filesystem::path& path);

} // namespace del
