#pragma once

#include "del/classical.hpp"
#include "del/mlp.hpp"
#include "del/param_store.hpp"
#include "del/particles.hpp"
#include "del/spatial.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace del {

struct KernelConfig {
    int embedding_dim = 200;
    int edge_dim = 200;
    int hidden = 200;
    /// Message-passing layers in each graph kernel.
    int layers = 2;
    /// Average every edge head over both orientations so pair forces cancel.
    bool symmetrize_edges = true;
    /// Ablation switch: without it the bond magnitude is identically zero.
    bool use_bond_head = true;
    /// Constant multiplier on the contact, bond and tangential head outputs.
    double force_scale = 1.0;
    Activation activation = Activation::relu;

    void validate() const;
    bool operator==(const KernelConfig&) const = default;
};

/// Learnable force model: parameters plus the maps from materials to kernel
/// sets. Kernel set k owns every slice prefixed "kernel<k>/".
struct LearnedModel {
    KernelConfig config;
    int n_materials = 0;
    int kernel_count = 0;
    /// material -> kernel set used for its embedding and node update.
    std::vector<int> embed_map;
    /// (material_src, material_dst) -> kernel set used for the edge networks.
    std::vector<std::vector<int>> pair_map;
    ParamStore params;

    /// One shared kernel set, identity material templates, radius = search
    /// radius, and (if n_particles > 0) a per-particle mass slice set to 1.
    static LearnedModel create(const KernelConfig& config, int n_materials, std::size_t n_particles,
                               double search_radius, std::uint64_t seed);

    /// Appends a freshly initialized kernel set and returns its id.
    int add_kernel_set(std::uint64_t seed);

    static std::string kernel_prefix(int k) { return "kernel" + std::to_string(k) + "/"; }
    /// Names (without prefix) and specs of every MLP in a kernel set.
    std::vector<std::pair<std::string, LayerSpec>> kernel_layout() const;
    LayerSpec spec(const std::string& mlp_name) const;
    /// Slice names (without prefix) of one kernel set, in storage order.
    std::vector<std::string> kernel_slice_names() const;

    void validate() const;
};

/// Tape-side particle state.
struct ForceInputs {
    ad::Var positions;      // N x 3
    ad::Var velocities;     // N x 3
    ad::Var accel_prev;     // N x 3
};

/// Differentiable forces of one step. Edge rows follow the graph's edge order;
/// edge vectors are the force on src from dst.
struct LearnedForces {
    ad::Var total;           // N x 3, includes gravity
    ad::Var normal_total;    // N x 3, tangential part dropped, includes gravity
    ad::Var edge_normal;     // E x 3
    ad::Var edge_tangential; // E x 3
    ad::Var contact;         // E x 1, f^cn >= 0
    ad::Var bond;            // E x 1, f^bn
    ad::Var normal_magnitude;    // E x 1, f^n' = f^cn + f^bn
    ad::Var normal_gate;     // E x 1 in (0, 1)
    ad::Var tangential_magnitude; // E x 1, f^t'
    ad::Var tangential_gate; // E x 1 in (0, 1)
    ad::Var embedding;       // N x D
    ad::Var node_features;   // N x D
    ad::Var edge_features;   // E x edge_dim after the tangential kernel
    ad::Var mass;            // N x 1
};

/// Masses used by the learned model: the per-particle slice when its length
/// matches, otherwise the system masses as constants.
ad::Var model_masses(ParamBinding& binding, const LearnedModel& model, const ParticleSystem& system);

LearnedForces learned_forces(ParamBinding& binding, const LearnedModel& model,
                             const ParticleSystem& system, const InteractionGraph& topology,
                             const ForceInputs& state, const Vec3& gravity);

/// Value-only evaluation on the current system state.
ForceSet del_forces(const ParticleSystem& system, const InteractionGraph& graph,
                    LearnedModel& model, const Vec3& gravity);

/// N x (n_materials + 2) attribute matrix on the tape, differentiable in
/// positions, masses and previous accelerations.
ad::Var attribute_var(ParamBinding& binding, const LearnedModel& model, const ParticleSystem& system,
                      const ad::Var& positions, const ad::Var& accel_prev, const ad::Var& mass);

/// Checkpoint directory: manifest.json + params.bin (+ adam_m.bin, adam_v.bin).
void save_checkpoint(const LearnedModel& model, const std::filesystem::path& dir,
                     bool include_optimizer = true);
LearnedModel load_checkpoint(const std::filesystem::path& dir);

} // namespace del
