#include "del/classical.hpp"

#include <algorithm>
#include <cmath>

namespace del {

double contact_normal_linear(double intrusion, double stiffness) {
    return intrusion > 0.0 ? stiffness * intrusion : 0.0;
}

double contact_normal_hertz(double intrusion, double modulus, double radius, double exponent) {
    if (intrusion <= 0.0) return 0.0;
    const double scale = 4.0 / 3.0 * modulus * std::sqrt(radius);
    return exponent == 1.0 ? scale * intrusion : scale * std::pow(intrusion, exponent);
}

double bond_normal(double intrusion, double bond_stiffness, bool same_object) {
    return same_object ? bond_stiffness * intrusion : 0.0;
}

double viscous_force(double eta, double c_crit, double relative_velocity) {
    return -eta * c_crit * relative_velocity;
}

double tangential_classical(double tangential_displacement, double normal_magnitude,
                            double stiffness) {
    return std::min(stiffness * tangential_displacement, normal_magnitude);
}

MaterialParams pair_params(const MaterialTable& table, int a, int b) {
    const auto& pa = table.materials[static_cast<std::size_t>(a)];
    if (a == b) return pa;
    const auto& pb = table.materials[static_cast<std::size_t>(b)];
    auto mean = [](double x, double y) { return 0.5 * (x + y); };
    MaterialParams p = pa;
    p.stiffness = mean(pa.stiffness, pb.stiffness);
    p.hertz_modulus = mean(pa.hertz_modulus, pb.hertz_modulus);
    p.hertz_radius = mean(pa.hertz_radius, pb.hertz_radius);
    p.bond_stiffness = mean(pa.bond_stiffness, pb.bond_stiffness);
    p.tangential_stiffness = mean(pa.tangential_stiffness, pb.tangential_stiffness);
    p.damping = mean(pa.damping, pb.damping);
    p.critical_damping = mean(pa.critical_damping, pb.critical_damping);
    return p;
}

namespace {

double contact_magnitude(double dd, const MaterialParams& p, const ClassicalConfig& cfg) {
    return cfg.contact == ContactLaw::linear
               ? contact_normal_linear(dd, p.stiffness)
               : contact_normal_hertz(dd, p.hertz_modulus, p.hertz_radius, cfg.hertz_exponent);
}

double clamp_to(double value, double limit) {
    const double l = std::abs(limit);
    return std::clamp(value, -l, l);
}

} // namespace

ForceSet classical_forces(const ParticleSystem& s, const InteractionGraph& g,
                          const MaterialTable& table, const Vec3& gravity, double dt,
                          const ClassicalConfig& cfg) {
    ForceSet out;
    out.gravity = gravity;
    out.edge_normal.resize(g.size());
    out.edge_tangential.resize(g.size());
    out.total.assign(s.size(), Vec3::Zero());

    for (std::size_t k = 0; k < g.size(); ++k) {
        const auto i = static_cast<std::size_t>(g.src[k]);
        const auto j = static_cast<std::size_t>(g.dst[k]);
        const MaterialParams p = pair_params(table, s.material_ids[i], s.material_ids[j]);
        const double dd = g.intrusion[k];
        const bool bonded = cfg.bonds && g.same_object[k] != 0;

        // Repulsive-positive magnitude; the force on i points along -n.
        const double potential = contact_magnitude(dd, p, cfg) + bond_normal(dd, p.bond_stiffness, bonded);
        const bool active = dd > 0.0 || bonded;

        // Velocity of i relative to j, projected on n: -(v_j - v_i).n
        const double u_n = -g.v_rel[k].dot(g.normal[k]);
        double visc_n = active ? viscous_force(p.damping, p.critical_damping, u_n) : 0.0;
        if (cfg.clamp_viscous) visc_n = clamp_to(visc_n, potential);
        out.edge_normal[k] = (visc_n - potential) * g.normal[k];

        const double vt = g.v_tangent[k].norm();
        if (active && vt > kTangentEpsilon) {
            const double f_t = tangential_classical(vt * dt, std::abs(potential), p.tangential_stiffness);
            double visc_t = viscous_force(p.damping, p.critical_damping, -vt);
            if (cfg.clamp_viscous) visc_t = clamp_to(visc_t, f_t);
            out.edge_tangential[k] = (f_t + visc_t) * g.tangent[k];
        } else {
            out.edge_tangential[k] = Vec3::Zero();
        }
    }

    for (std::size_t k = 0; k < g.size(); ++k) {
        out.total[static_cast<std::size_t>(g.src[k])] += out.edge_normal[k] + out.edge_tangential[k];
    }
    for (std::size_t i = 0; i < s.size(); ++i) out.total[i] += s.masses[i] * gravity;
    return out;
}

double classical_potential_energy(const ParticleSystem& s, const InteractionGraph& g,
                                  const MaterialTable& table, const ClassicalConfig& cfg) {
    double energy = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
        if (g.src[k] > g.dst[k]) continue;
        const auto i = static_cast<std::size_t>(g.src[k]);
        const auto j = static_cast<std::size_t>(g.dst[k]);
        const MaterialParams p = pair_params(table, s.material_ids[i], s.material_ids[j]);
        const double dd = g.intrusion[k];
        if (dd > 0.0) {
            if (cfg.contact == ContactLaw::linear) {
                energy += 0.5 * p.stiffness * dd * dd;
            } else {
                const double scale = 4.0 / 3.0 * p.hertz_modulus * std::sqrt(p.hertz_radius);
                energy += scale * std::pow(dd, cfg.hertz_exponent + 1.0) / (cfg.hertz_exponent + 1.0);
            }
        }
        if (cfg.bonds && g.same_object[k] != 0) energy += 0.5 * p.bond_stiffness * dd * dd;
    }
    return energy;
}

double kinetic_energy(const ParticleSystem& s) {
    double e = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) e += 0.5 * s.masses[i] * s.velocities[i].squaredNorm();
    return e;
}

} // namespace del
