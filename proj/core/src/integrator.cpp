#include "del/integrator.hpp"

#include "del/errors.hpp"
#include "del/ops.hpp"
#include "del/spatial.hpp"

#include <cmath>

namespace del {

using ad::Matrix;
using ad::Var;

void StepConfig::validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("time step must be positive");
    if (substeps < 1) throw ConfigError("substeps must be >= 1");
    if (!(max_speed > 0.0)) throw ConfigError("max_speed must be positive");
    if (!(search_radius > 0.0)) throw ConfigError("search radius must be positive");
    if (!gravity.allFinite()) throw ConfigError("gravity must be finite");
}

ParticleSystem euler_step(const ParticleSystem& system, const ForceSet& forces, double dt,
                          bool explicit_euler) {
    if (!(dt > 0.0)) throw ConfigError("time step must be positive");
    if (forces.total.size() != system.size()) throw ConfigError("force count differs from particle count");
    ParticleSystem out = system;
    for (std::size_t i = 0; i < system.size(); ++i) {
        const Vec3& f = forces.total[i];
        if (!f.allFinite()) throw NumericError("non-finite force on particle " + std::to_string(i));
        const Vec3 a = f / system.masses[i];
        out.accelerations_prev[i] = a;
        if (system.is_static(i)) {
            out.velocities[i].setZero();
            continue;
        }
        const Vec3 v_old = system.velocities[i];
        out.velocities[i] = v_old + a * dt;
        out.positions[i] = system.positions[i] + (explicit_euler ? v_old : out.velocities[i]) * dt;
    }
    return out;
}

void check_divergence(const ParticleSystem& system, double max_speed) {
    for (std::size_t i = 0; i < system.size(); ++i) {
        const double s = system.velocities[i].norm();
        if (!std::isfinite(s) || !system.positions[i].allFinite())
            throw NumericError("non-finite state at particle " + std::to_string(i));
        if (s > max_speed)
            throw NumericError("divergence: particle " + std::to_string(i) + " speed " + std::to_string(s) +
                               " exceeds " + std::to_string(max_speed));
    }
}

namespace {

Matrix rows_of(const std::vector<Vec3>& v) {
    Matrix m(static_cast<Eigen::Index>(v.size()), 3);
    for (std::size_t i = 0; i < v.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = v[i].transpose();
    return m;
}

void copy_rows(const Matrix& m, std::vector<Vec3>& out) {
    out.resize(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) out[static_cast<std::size_t>(i)] = m.row(i).transpose();
}

} // namespace

TapeState tape_state(ad::Tape& tape, const ParticleSystem& system, bool requires_grad) {
    auto make = [&](const std::vector<Vec3>& v) {
        return requires_grad ? tape.leaf(rows_of(v)) : tape.constant(rows_of(v));
    };
    return {make(system.positions), make(system.velocities), make(system.accelerations_prev)};
}

void store_state(const TapeState& state, ParticleSystem& system) {
    copy_rows(state.positions.value(), system.positions);
    copy_rows(state.velocities.value(), system.velocities);
    copy_rows(state.accel_prev.value(), system.accelerations_prev);
}

TapeState euler_step_var(const TapeState& s, const Var& force, const Var& mass,
                         const std::vector<std::uint8_t>& static_flags, double dt, bool explicit_euler) {
    if (!(dt > 0.0)) throw ConfigError("time step must be positive");
    const Matrix& f = force.value();
    for (Eigen::Index i = 0; i < f.rows(); ++i)
        if (!f.row(i).allFinite()) throw NumericError("non-finite force on particle " + std::to_string(i));
    Matrix free(f.rows(), 1);
    for (Eigen::Index i = 0; i < f.rows(); ++i) free(i, 0) = static_flags[static_cast<std::size_t>(i)] ? 0.0 : 1.0;
    ad::Tape& tape = force.tape();
    const Var mask = tape.constant(std::move(free));
    TapeState out;
    out.accel_prev = ad::div(force, mass);
    out.velocities = ad::mul(ad::add(s.velocities, ad::scale(out.accel_prev, dt)), mask);
    const Var& v_pos = explicit_euler ? s.velocities : out.velocities;
    out.positions = ad::add(s.positions, ad::mul(ad::scale(v_pos, dt), mask));
    return out;
}

TapeState learned_step(ParamBinding& binding, const LearnedModel& model, const ParticleSystem& meta,
                       const TapeState& state, const StepConfig& cfg, double dt, LearnedForces* forces) {
    ParticleSystem current = meta;
    store_state(state, current);
    const InteractionGraph g = build_graph_hash(current, cfg.search_radius);
    LearnedForces f = learned_forces(binding, model, current, g,
                                     {state.positions, state.velocities, state.accel_prev}, cfg.gravity);
    TapeState next = euler_step_var(state, f.total, f.mass, meta.static_flags, dt, cfg.explicit_euler);
    if (forces) *forces = std::move(f);
    return next;
}

ParticleSystem classical_frame(const ParticleSystem& system, const MaterialTable& table,
                               const StepConfig& cfg) {
    const double h = cfg.dt / cfg.substeps;
    ParticleSystem s = system;
    for (int k = 0; k < cfg.substeps; ++k) {
        const InteractionGraph g = build_graph_hash(s, cfg.search_radius);
        const ForceSet f = classical_forces(s, g, table, cfg.gravity, h, cfg.classical);
        s = euler_step(s, f, h, cfg.explicit_euler);
        check_divergence(s, cfg.max_speed);
    }
    return s;
}

std::vector<ParticleSystem> rollout_classical(const ParticleSystem& initial, const MaterialTable& table,
                                              int frames, const StepConfig& cfg) {
    cfg.validate();
    if (frames < 0) throw ConfigError("frame count must be >= 0");
    initial.validate(table.size());
    std::vector<ParticleSystem> out{initial};
    for (int t = 0; t < frames; ++t) out.push_back(classical_frame(out.back(), table, cfg));
    return out;
}

std::vector<ParticleSystem> rollout_learned(const ParticleSystem& initial, LearnedModel& model,
                                            int frames, const StepConfig& cfg) {
    cfg.validate();
    if (frames < 0) throw ConfigError("frame count must be >= 0");
    initial.validate(model.n_materials);
    const double h = cfg.dt / cfg.substeps;
    std::vector<ParticleSystem> out{initial};
    for (int t = 0; t < frames; ++t) {
        ParticleSystem s = out.back();
        for (int k = 0; k < cfg.substeps; ++k) {
            ad::Tape tape;
            ParamBinding binding(tape, model.params, false);
            TapeState next = learned_step(binding, model, s, tape_state(tape, s), cfg, h);
            store_state(next, s);
            check_divergence(s, cfg.max_speed);
        }
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace del
