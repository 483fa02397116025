#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace del {

using Vec3 = Eigen::Vector3d;

/// Default neighbor search radius; particle radii start at this value.
inline constexpr double kDefaultSearchRadius = 0.025;

/// State of N particles at one timestamp. Plain value type.
struct ParticleSystem {
    std::vector<Vec3> positions;
    std::vector<Vec3> velocities;
    std::vector<Vec3> accelerations_prev;
    std::vector<double> masses;
    std::vector<double> radii;
    std::vector<int> material_ids;
    std::vector<int> object_ids;
    /// Support particles: pinned in place with zero velocity.
    std::vector<std::uint8_t> static_flags;

    std::size_t size() const { return positions.size(); }
    bool empty() const { return positions.empty(); }
    bool is_static(std::size_t i) const { return static_flags[i] != 0; }

    /// Appends one particle with zero velocity and acceleration history.
    void add(const Vec3& position, double mass, double radius, int material, int object,
             bool is_static = false);

    /// Largest object id + 1 (0 for an empty system).
    int object_count() const;

    /// Throws ConfigError if array lengths disagree, a mass or radius is not
    /// positive, or an id is out of range.
    void validate(int n_materials) const;
};

/// Classical constitutive parameters and render color of one material.
struct MaterialParams {
    std::string name = "default";
    double stiffness = 1000.0;            // linear contact spring k
    double hertz_modulus = 1000.0;        // E
    double hertz_radius = 0.01;           // R
    double bond_stiffness = 500.0;        // k_b
    double tangential_stiffness = 500.0;  // k_t
    double damping = 0.1;                 // eta
    double critical_damping = 1.0;        // c_crit
    double radius = kDefaultSearchRadius;
    std::array<double, 3> color{1.0, 1.0, 1.0};
};

struct MaterialTable {
    std::vector<MaterialParams> materials;
    /// Row m is the material one-hot used as the `mat` part of the attribute
    /// vector of particles with material m.
    Eigen::MatrixXd templates;

    /// Table of n default materials with identity templates.
    static MaterialTable uniform(int n);
    static MaterialTable from(std::vector<MaterialParams> materials);

    int size() const { return static_cast<int>(materials.size()); }
    int attribute_dim() const { return size() + 2; }
    int find(const std::string& name) const;  // -1 if absent

    void validate() const;
};

/// Per-particle attributes [mat one-hot, distance to object mass center,
/// norm of previous acceleration].
struct AttributeVector {
    Eigen::VectorXd mat;
    double d_o = 0.0;
    double a_prev_norm = 0.0;

    Eigen::VectorXd packed() const;
};

std::map<int, Vec3> object_mass_centers(const ParticleSystem& system);

std::vector<AttributeVector> build_attributes(const ParticleSystem& system,
                                              const MaterialTable& table);

/// Attributes stacked into an N x (n_materials + 2) matrix.
Eigen::MatrixXd attribute_matrix(const ParticleSystem& system, const MaterialTable& table);

/// Particle system with indices reordered so that new index k holds old particle perm[k].
ParticleSystem permuted(const ParticleSystem& system, const std::vector<int>& perm);

} // namespace del
