#pragma once

#include "del/particles.hpp"
#include "del/spatial.hpp"

#include <vector>

namespace del {

/// Per-edge and per-particle forces. Edge vectors are the force exerted on
/// src[k] by dst[k]; `total[i]` includes gravity m_i * g.
struct ForceSet {
    std::vector<Vec3> edge_normal;
    std::vector<Vec3> edge_tangential;
    std::vector<Vec3> total;
    Vec3 gravity = Vec3::Zero();
};

enum class ContactLaw { linear, hertz };

struct ClassicalConfig {
    ContactLaw contact = ContactLaw::linear;
    /// Power applied to the intrusion in the Hertz law; 1.0 is the linear-in-overlap form.
    double hertz_exponent = 1.0;
    /// Limit each viscous component to the potential magnitude of the same component.
    bool clamp_viscous = true;
    bool bonds = true;
};

/// k * dd for dd > 0, else 0.
double contact_normal_linear(double intrusion, double stiffness);

/// (4/3) E sqrt(R) dd^exponent for dd > 0, else 0.
double contact_normal_hertz(double intrusion, double modulus, double radius, double exponent = 1.0);

/// k_b * dd within one object (signed: negative pulls the pair together), 0 across objects.
double bond_normal(double intrusion, double bond_stiffness, bool same_object);

/// -eta * c_crit * v
double viscous_force(double eta, double c_crit, double relative_velocity);

/// min(k_t * dd_t, normal_magnitude): tangential spring capped by the normal load.
double tangential_classical(double tangential_displacement, double normal_magnitude,
                            double stiffness);

/// Effective parameters of the pair (a, b): arithmetic mean, symmetric in a and b.
MaterialParams pair_params(const MaterialTable& table, int a, int b);

ForceSet classical_forces(const ParticleSystem& system, const InteractionGraph& graph,
                          const MaterialTable& table, const Vec3& gravity, double dt,
                          const ClassicalConfig& config = {});

/// Elastic energy stored in contacts and bonds, each undirected pair counted once.
double classical_potential_energy(const ParticleSystem& system, const InteractionGraph& graph,
                                  const MaterialTable& table, const ClassicalConfig& config = {});

double kinetic_energy(const ParticleSystem& system);

} // namespace del
