#pragma once

#include "del/classical.hpp"
#include "del/kernels.hpp"
#include "del/particles.hpp"
#include "del/tape.hpp"

#include <vector>

namespace del {

inline constexpr double kDefaultTimeStep = 1.0 / 60.0;

struct StepConfig {
    double dt = kDefaultTimeStep;
    /// Integration steps per reported frame; each uses dt / substeps.
    int substeps = 1;
    /// Position update from the old velocity instead of the new one.
    bool explicit_euler = false;
    /// Abort when any particle exceeds this speed.
    double max_speed = 1e3;
    Vec3 gravity{0.0, 0.0, -9.81};
    double search_radius = kDefaultSearchRadius;
    ClassicalConfig classical;

    void validate() const;
};

/// v += f/m dt; x += v dt (semi-implicit) with static particles pinned.
/// accelerations_prev becomes f/m. Throws NumericError naming the first
/// particle with a non-finite force.
ParticleSystem euler_step(const ParticleSystem& system, const ForceSet& forces, double dt,
                          bool explicit_euler = false);

/// Throws NumericError if any speed exceeds the bound.
void check_divergence(const ParticleSystem& system, double max_speed);

/// Differentiable particle state.
struct TapeState {
    ad::Var positions;
    ad::Var velocities;
    ad::Var accel_prev;
};

TapeState tape_state(ad::Tape& tape, const ParticleSystem& system, bool requires_grad = false);
/// Writes the values of a tape state back into `system`.
void store_state(const TapeState& state, ParticleSystem& system);

TapeState euler_step_var(const TapeState& state, const ad::Var& force, const ad::Var& mass,
                         const std::vector<std::uint8_t>& static_flags, double dt,
                         bool explicit_euler = false);

/// One learned step on the tape. The graph is rebuilt from current values.
/// If `forces` is non-null it receives the step's force outputs.
TapeState learned_step(ParamBinding& binding, const LearnedModel& model, const ParticleSystem& meta,
                       const TapeState& state, const StepConfig& cfg, double dt,
                       LearnedForces* forces = nullptr);

/// One frame (all substeps) of the classical backend.
ParticleSystem classical_frame(const ParticleSystem& system, const MaterialTable& table,
                               const StepConfig& cfg);

/// frames + 1 states, the first being `initial`.
std::vector<ParticleSystem> rollout_classical(const ParticleSystem& initial, const MaterialTable& table,
                                              int frames, const StepConfig& cfg);
std::vector<ParticleSystem> rollout_learned(const ParticleSystem& initial, LearnedModel& model,
                                            int frames, const StepConfig& cfg);

} // namespace del
