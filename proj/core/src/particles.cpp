#include "del/particles.hpp"

#include "del/errors.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace del {

void ParticleSystem::add(const Vec3& position, double mass, double radius, int material,
                         int object, bool is_static_particle) {
    positions.push_back(position);
    velocities.push_back(Vec3::Zero());
    accelerations_prev.push_back(Vec3::Zero());
    masses.push_back(mass);
    radii.push_back(radius);
    material_ids.push_back(material);
    object_ids.push_back(object);
    static_flags.push_back(is_static_particle ? 1 : 0);
}

int ParticleSystem::object_count() const {
    int n = 0;
    for (int id : object_ids) n = std::max(n, id + 1);
    return n;
}

void ParticleSystem::validate(int n_materials) const {
    const std::size_t n = positions.size();
    if (velocities.size() != n || accelerations_prev.size() != n || masses.size() != n ||
        radii.size() != n || material_ids.size() != n || object_ids.size() != n ||
        static_flags.size() != n) {
        throw ConfigError("particle system arrays have inconsistent lengths");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!(masses[i] > 0.0)) throw ConfigError("particle " + std::to_string(i) + " has non-positive mass");
        if (!(radii[i] > 0.0)) throw ConfigError("particle " + std::to_string(i) + " has non-positive radius");
        if (material_ids[i] < 0 || material_ids[i] >= n_materials) {
            throw ConfigError("particle " + std::to_string(i) + " has unknown material id " +
                              std::to_string(material_ids[i]));
        }
        if (object_ids[i] < 0) throw ConfigError("particle " + std::to_string(i) + " has negative object id");
    }
}

MaterialTable MaterialTable::uniform(int n) {
    std::vector<MaterialParams> mats(static_cast<std::size_t>(n));
    for (int m = 0; m < n; ++m) mats[static_cast<std::size_t>(m)].name = "material" + std::to_string(m);
    return from(std::move(mats));
}

MaterialTable MaterialTable::from(std::vector<MaterialParams> materials) {
    MaterialTable t;
    t.materials = std::move(materials);
    const int n = t.size();
    t.templates = Eigen::MatrixXd::Identity(n, n);
    return t;
}

int MaterialTable::find(const std::string& name) const {
    for (int m = 0; m < size(); ++m) {
        if (materials[static_cast<std::size_t>(m)].name == name) return m;
    }
    return -1;
}

void MaterialTable::validate() const {
    const int n = size();
    if (templates.rows() != n || templates.cols() != n) {
        throw ConfigError("material templates must be n_materials x n_materials");
    }
    for (const auto& m : materials) {
        for (double p : {m.stiffness, m.hertz_modulus, m.hertz_radius, m.bond_stiffness,
                         m.tangential_stiffness, m.critical_damping, m.radius}) {
            if (!(p > 0.0)) throw ConfigError("material '" + m.name + "' has a non-positive parameter");
        }
        if (!(m.damping >= 0.0)) throw ConfigError("material '" + m.name + "' has negative damping");
    }
    for (int a = 0; a < n; ++a) {
        for (int b = a + 1; b < n; ++b) {
            if (templates.row(a) == templates.row(b)) {
                throw ConfigError("materials " + std::to_string(a) + " and " + std::to_string(b) +
                                  " share an attribute template");
            }
        }
    }
}

Eigen::VectorXd AttributeVector::packed() const {
    Eigen::VectorXd out(mat.size() + 2);
    out << mat, d_o, a_prev_norm;
    return out;
}

std::map<int, Vec3> object_mass_centers(const ParticleSystem& system) {
    std::map<int, Vec3> weighted;
    std::map<int, double> mass;
    for (std::size_t i = 0; i < system.size(); ++i) {
        const int k = system.object_ids[i];
        auto [it, inserted] = weighted.try_emplace(k, Vec3::Zero());
        it->second += system.masses[i] * system.positions[i];
        mass[k] += system.masses[i];
    }
    for (auto& [k, c] : weighted) c /= mass[k];
    return weighted;
}

std::vector<AttributeVector> build_attributes(const ParticleSystem& system,
                                              const MaterialTable& table) {
    const auto centers = object_mass_centers(system);
    std::vector<AttributeVector> out(system.size());
    for (std::size_t i = 0; i < system.size(); ++i) {
        const int m = system.material_ids[i];
        if (m < 0 || m >= table.size()) {
            throw ConfigError("particle " + std::to_string(i) + " has unknown material id " +
                              std::to_string(m));
        }
        out[i].mat = table.templates.row(m).transpose();
        out[i].d_o = (system.positions[i] - centers.at(system.object_ids[i])).norm();
        out[i].a_prev_norm = system.accelerations_prev[i].norm();
    }
    return out;
}

Eigen::MatrixXd attribute_matrix(const ParticleSystem& system, const MaterialTable& table) {
    const auto attrs = build_attributes(system, table);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(attrs.size()), table.attribute_dim());
    for (std::size_t i = 0; i < attrs.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = attrs[i].packed().transpose();
    }
    return out;
}

ParticleSystem permuted(const ParticleSystem& s, const std::vector<int>& perm) {
    if (perm.size() != s.size()) throw ConfigError("permutation length mismatch");
    ParticleSystem out;
    for (int p : perm) {
        const auto i = static_cast<std::size_t>(p);
        out.positions.push_back(s.positions[i]);
        out.velocities.push_back(s.velocities[i]);
        out.accelerations_prev.push_back(s.accelerations_prev[i]);
        out.masses.push_back(s.masses[i]);
        out.radii.push_back(s.radii[i]);
        out.material_ids.push_back(s.material_ids[i]);
        out.object_ids.push_back(s.object_ids[i]);
        out.static_flags.push_back(s.static_flags[i]);
    }
    return out;
}

} // namespace del
