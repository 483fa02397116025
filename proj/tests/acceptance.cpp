// Acceptance gate: one PASS/FAIL line per criterion on stdout, progress on stderr.
// Usage: del_acceptance [--known-red N]... [criterion ...]   (default: all)
// Exit status is nonzero when a criterion fails unless it is listed as known red;
// a criterion that throws always counts as a failure.

#include "del/classical.hpp"
#include "del/errors.hpp"
#include "del/generate.hpp"
#include "del/gradcheck.hpp"
#include "del/integrator.hpp"
#include "del/kernels.hpp"
#include "del/metrics.hpp"
#include "del/spatial.hpp"
#include "del/swap.hpp"
#include "del/training.hpp"

#include <Eigen/Geometry>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>

using namespace del;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::uint64_t base_seed() {
    const char* s = std::getenv("DEL_SEED");
    return s ? std::strtoull(s, nullptr, 10) : 0;
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

void progress(const std::string& s) { std::fprintf(stderr, "  %s\n", s.c_str()); }

ParticleSystem random_cloud(std::mt19937_64& rng, int n, double box, double radius, int materials, int objects) {
    std::uniform_real_distribution<double> pos(0.0, box);
    std::uniform_real_distribution<double> vel(-1.0, 1.0);
    ParticleSystem s;
    for (int i = 0; i < n; ++i) {
        s.add(Vec3(pos(rng), pos(rng), pos(rng)), 1.0, radius, i % materials, i % objects);
        s.velocities.back() = Vec3(vel(rng), vel(rng), vel(rng));
    }
    return s;
}

KernelConfig small_kernels() {
    KernelConfig k;
    k.embedding_dim = 8;
    k.edge_dim = 8;
    k.hidden = 16;
    k.activation = Activation::tanh;
    return k;
}

/// Random-weight model: every kernel slice perturbed so gates and heads are non-trivial.
LearnedModel random_model(std::uint64_t seed, int materials) {
    auto m = LearnedModel::create(small_kernels(), materials, 0, kDefaultSearchRadius, seed);
    std::mt19937_64 rng(seed ^ 0x5bd1e995);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (const auto& s : m.params.slices()) {
        if (!s.name.starts_with("kernel")) continue;
        auto v = m.params.view(s.name);
        for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] += u(rng);
    }
    return m;
}

double net_ratio(const std::vector<Vec3>& f) {
    Vec3 net = Vec3::Zero();
    double mag = 0.0;
    for (const auto& fi : f) {
        net += fi;
        mag += fi.norm();
    }
    return mag > 0.0 ? net.norm() / mag : 0.0;
}

Vec3 momentum(const ParticleSystem& meta, const std::vector<Vec3>& v) {
    Vec3 p = Vec3::Zero();
    for (std::size_t i = 0; i < v.size(); ++i) p += meta.masses[i] * v[i];
    return p;
}

// ------------------------------------------------------------------ 1

Outcome gradient_correctness() {
    const auto t0 = Clock::now();
    const auto results = run_gradcheck("all", base_seed());
    const double elapsed = seconds_since(t0);
    bool ok = elapsed < 120.0;
    std::ostringstream d;
    for (const auto& r : results) {
        ok = ok && r.pass();
        if (!r.pass()) d << r.module << "/" << r.check << "=" << r.max_rel_error << " ";
    }
    double worst_primitive = 0.0, worst_other = 0.0;
    for (const auto& r : results)
        (r.module == "primitives" ? worst_primitive : worst_other) =
            std::max(r.module == "primitives" ? worst_primitive : worst_other, r.max_rel_error);
    d << fmt("%zu checks, max rel err primitives %.2e (< 1e-6), stack %.2e (< 1e-4), %.1fs", results.size(),
             worst_primitive, worst_other, elapsed);
    return {ok, d.str()};
}

// ------------------------------------------------------------------ 2

Outcome neighbor_equivalence() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(base_seed() + 2);
    std::uniform_int_distribution<int> count(1, 1000);
    std::uniform_real_distribution<double> radius(0.01, 0.2);
    int mismatches = 0;
    std::size_t edges = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const double r = radius(rng);
        const auto s = random_cloud(rng, count(rng), 1.0, r / 2, 1, 1);
        const auto a = build_graph_hash(s, r);
        const auto b = build_graph_bruteforce(s, r);
        edges += a.size();
        if (a.src != b.src || a.dst != b.dst || a.intrusion != b.intrusion) ++mismatches;
    }
    const double elapsed = seconds_since(t0);
    return {mismatches == 0 && elapsed < 30.0,
            fmt("100 systems, %zu edges, %d mismatching, %.1fs", edges, mismatches, elapsed)};
}

// ------------------------------------------------------------------ 3

Outcome conservation() {
    std::mt19937_64 rng(base_seed() + 3);
    StepConfig cfg;
    cfg.gravity = Vec3::Zero();
    cfg.dt = 1e-3;

    double worst_classical = 0.0;
    {
        auto s = random_cloud(rng, 150, 0.1, 0.012, 2, 5);
        MaterialParams a, b;
        b.stiffness = 3000.0;
        b.damping = 0.3;
        auto table = MaterialTable::from({a, b});
        for (int step = 0; step < 100; ++step) {
            auto g = build_graph_hash(s, cfg.search_radius);
            auto f = classical_forces(s, g, table, cfg.gravity, cfg.dt, cfg.classical);
            worst_classical = std::max(worst_classical, net_ratio(f.total));
            s = euler_step(s, f, cfg.dt);
        }
    }
    double worst_learned = 0.0;
    {
        auto s = random_cloud(rng, 100, 0.08, 0.012, 2, 4);
        auto m = random_model(base_seed() + 30, 2);
        for (int step = 0; step < 100; ++step) {
            auto g = build_graph_hash(s, cfg.search_radius);
            auto f = del_forces(s, g, m, cfg.gravity);
            worst_learned = std::max(worst_learned, net_ratio(f.total));
            s = euler_step(s, f, cfg.dt);
        }
    }
    auto opts = parse_generator_spec("two_ball_collision:render=off");
    opts.seed = base_seed();
    const Scene scene = generate_scene(opts);
    const Vec3 p0 = momentum(scene.system, scene.frames.front().velocities);
    double drift = 0.0;
    for (const auto& f : scene.frames) drift = std::max(drift, (momentum(scene.system, f.velocities) - p0).norm());
    const bool ok = worst_classical <= 1e-9 && worst_learned <= 1e-9 && drift <= 1e-9;
    return {ok, fmt("max |sum f|/sum|f| classical %.1e, learned %.1e; two-ball momentum drift %.1e", worst_classical,
                    worst_learned, drift)};
}

// ------------------------------------------------------------------ 4

double drop_restitution(double k, double eta, double mass, double dt) {
    MaterialParams p;
    p.stiffness = k;
    p.damping = eta;
    p.critical_damping = 1.0;
    p.radius = 0.01;
    auto table = MaterialTable::from({p});
    ParticleSystem s;
    s.add(Vec3(0, 0, 0), mass, 0.01, 0, 0, true);
    s.add(Vec3(0, 0, 0.0205), mass, 0.01, 0, 1);
    const double v0 = 0.5;
    s.velocities[1] = Vec3(0, 0, -v0);
    ClassicalConfig cfg;
    cfg.clamp_viscous = false;
    bool touched = false;
    for (int step = 0; step < 10000000; ++step) {
        auto g = build_graph_hash(s, 0.03);
        s = euler_step(s, classical_forces(s, g, table, Vec3::Zero(), dt, cfg), dt);
        const double gap = s.positions[1].z() - 0.02;
        if (gap < 0.0) touched = true;
        if (touched && gap > 0.0) return s.velocities[1].z() / v0;
    }
    return -1.0;
}

Outcome classical_sanity() {
    struct Setting {
        double k, eta;
    };
    bool ok = true;
    std::ostringstream d;
    for (auto [k, eta] : {Setting{1000.0, 2.0}, Setting{1000.0, 10.0}, Setting{5000.0, 30.0}}) {
        const double zeta = eta / (2.0 * std::sqrt(k));
        const double predicted = std::exp(-std::numbers::pi * zeta / std::sqrt(1.0 - zeta * zeta));
        const double simulated = drop_restitution(k, eta, 1.0, 1e-6);
        const double rel = std::abs(simulated - predicted) / predicted;
        ok = ok && rel <= 0.02;
        d << fmt("k=%g eta=%g e=%.4f vs %.4f (%.2f%%); ", k, eta, simulated, predicted, 100.0 * rel);
    }
    return {ok, d.str()};
}

// ------------------------------------------------------------------ 5

Outcome equivariance() {
    std::mt19937_64 rng(base_seed() + 5);
    double worst_rot = 0.0, worst_perm = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        auto m = random_model(base_seed() + 50 + static_cast<std::uint64_t>(trial), 2);
        auto s = random_cloud(rng, 80, 0.08, 0.012, 2, 3);
        for (auto& a : s.accelerations_prev) a = Vec3::Random();
        std::normal_distribution<double> g;
        const Eigen::Matrix3d q = Eigen::Quaterniond(g(rng), g(rng), g(rng), g(rng)).normalized().toRotationMatrix();
        auto r = s;
        for (std::size_t i = 0; i < s.size(); ++i) {
            r.positions[i] = q * s.positions[i];
            r.velocities[i] = q * s.velocities[i];
            r.accelerations_prev[i] = q * s.accelerations_prev[i];
        }
        const auto gs = build_graph_hash(s, kDefaultSearchRadius);
        const auto gr = build_graph_hash(r, kDefaultSearchRadius);
        const auto f = del_forces(s, gs, m, Vec3::Zero());
        const auto fr = del_forces(r, gr, m, Vec3::Zero());
        if (gs.src != gr.src || gs.dst != gr.dst) return {false, "rotation changed the neighbor graph"};
        for (std::size_t k = 0; k < gs.size(); ++k) {
            worst_rot = std::max(worst_rot, (fr.edge_normal[k] - q * f.edge_normal[k]).norm());
            worst_rot = std::max(worst_rot, (fr.edge_tangential[k] - q * f.edge_tangential[k]).norm());
        }
        for (std::size_t i = 0; i < s.size(); ++i) worst_rot = std::max(worst_rot, (fr.total[i] - q * f.total[i]).norm());

        std::vector<int> perm(s.size());
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        const auto p = permuted(s, perm);
        const auto fp = del_forces(p, build_graph_hash(p, kDefaultSearchRadius), m, Vec3::Zero());
        for (std::size_t k = 0; k < perm.size(); ++k)
            worst_perm = std::max(worst_perm, (fp.total[k] - f.total[static_cast<std::size_t>(perm[k])]).norm());
    }
    return {worst_rot <= 1e-9 && worst_perm <= 1e-9,
            fmt("max |f(Qx) - Q f(x)| %.1e, max permutation error %.1e", worst_rot, worst_perm)};
}

// ------------------------------------------------------------------ 6

TrainConfig end_to_end_config() {
    TrainConfig c;
    c.seed = base_seed();
    c.steps = 2000;
    c.supervision = Supervision::images;
    c.velocity_init = VelocityInit::images;
    c.adam.lr = 1e-3;
    c.clip_norm = 10.0;
    c.model.embedding_dim = 16;
    c.model.edge_dim = 16;
    c.model.hidden = 32;
    c.loss.beta = 0.1;
    c.loss.normal_loss = true;
    return c;
}

Outcome end_to_end() {
    auto opts = parse_generator_spec("two_ball_collision");
    opts.seed = base_seed();
    const Scene scene = generate_scene(opts);
    const int last = scene.frame_count() - 1;
    const auto t0 = Clock::now();

    Trainer full(end_to_end_config(), {scene});
    const double untrained = full.chamfer_at(0, last);
    const double target = 0.2 * untrained;
    progress(fmt("untrained final-frame CD %.4e, target %.4e", untrained, target));
    double cd = untrained;
    long steps = 0;
    while (steps < 2000 && cd > target && seconds_since(t0) < 15.0 * 60.0) {
        full.step();
        ++steps;
        if (steps % 25 == 0) {
            cd = full.chamfer_at(0, last);
            progress(fmt("full loss step %ld CD %.4e (%.1fs)", steps, cd, seconds_since(t0)));
        }
    }
    if (steps % 25 != 0) cd = full.chamfer_at(0, last);
    const double full_time = seconds_since(t0);

    auto control_cfg = end_to_end_config();
    control_cfg.loss.beta = 0.0;
    control_cfg.loss.normal_loss = false;
    Trainer control(control_cfg, {scene});
    for (long k = 0; k < steps; ++k) control.step();
    const double control_cd = control.chamfer_at(0, last);
    progress(fmt("control after %ld steps CD %.4e", steps, control_cd));

    const bool learned = cd <= target && full_time <= 15.0 * 60.0;
    // Within 5% counts as a tie.
    const bool ablation = control_cd >= 0.95 * cd;
    return {learned && ablation,
            fmt("CD %.4e -> %.4e (%.1f%% of untrained) in %ld steps, %.0fs; control (beta=0, no L_r^n) %.4e", untrained,
                cd, 100.0 * cd / untrained, steps, full_time, control_cd)};
}

// ------------------------------------------------------------------ 7

struct BondProbe {
    std::vector<std::pair<int, int>> pairs;
    double initial = 0.0;

    double mean(const ParticleSystem& s) const {
        double sum = 0.0;
        for (auto [i, j] : pairs) sum += (s.positions[static_cast<std::size_t>(i)] - s.positions[static_cast<std::size_t>(j)]).norm();
        return sum / static_cast<double>(pairs.size());
    }
};

BondProbe block_bonds(const ParticleSystem& s) {
    BondProbe p;
    const auto g = build_graph_hash(s, 1.25 * kLatticeSpacing);
    for (std::size_t k = 0; k < g.size(); ++k)
        if (g.src[k] < g.dst[k] && s.object_ids[static_cast<std::size_t>(g.src[k])] == 0 &&
            s.object_ids[static_cast<std::size_t>(g.dst[k])] == 0)
            p.pairs.emplace_back(g.src[k], g.dst[k]);
    p.initial = p.mean(s);
    return p;
}

/// First frame in which the striker touches the block.
int impact_frame(const Scene& scene) {
    for (int t = 0; t < scene.frame_count(); ++t) {
        const auto s = scene.state(t);
        const auto g = build_graph_hash(s, 1.25 * kLatticeSpacing);
        for (std::size_t k = 0; k < g.size(); ++k)
            if (!g.same_object[k] && g.intrusion[k] >= 0.0) return t;
    }
    return scene.frame_count();
}

TrainConfig bond_config(bool bond_head) {
    TrainConfig c;
    c.seed = base_seed();
    c.steps = 300;
    c.supervision = Supervision::points;
    c.velocity_init = VelocityInit::tracks;
    c.adam.lr = 1e-3;
    c.clip_norm = 10.0;
    c.model.embedding_dim = 16;
    c.model.edge_dim = 16;
    c.model.hidden = 32;
    c.model.use_bond_head = bond_head;
    return c;
}

Outcome bond_ablation() {
    auto opts = parse_generator_spec("bonded_block_impact:frames=16,render=off");
    opts.seed = base_seed();
    const Scene scene = generate_scene(opts);
    const int impact = impact_frame(scene);
    const BondProbe probe = block_bonds(scene.system);
    progress(fmt("impact at frame %d, %zu block bonds", impact, probe.pairs.size()));

    auto drift_of = [&](bool bond_head) {
        const auto t0 = Clock::now();
        Trainer t(bond_config(bond_head), {scene});
        t.run([&](const TrainLogEntry& e) {
            if (e.step % 50 == 0) progress(fmt("%s step %ld chamfer %.3e", bond_head ? "H_b" : "no H_b", e.step, e.chamfer));
        });
        double drift = 0.0;
        try {
            const auto r = t.rollout(0, impact + 50);
            for (int k = impact; k < static_cast<int>(r.size()); ++k)
                drift = std::max(drift, std::abs(probe.mean(r[static_cast<std::size_t>(k)]) / probe.initial - 1.0));
        } catch (const NumericError&) {
            drift = std::numeric_limits<double>::infinity();
        }
        progress(fmt("%s drift %.2f%% (%.0fs)", bond_head ? "H_b" : "no H_b", 100.0 * drift, seconds_since(t0)));
        return drift;
    };
    const double with = drift_of(true);
    const double without = drift_of(false);
    return {with <= 0.10 && without > 0.10,
            fmt("max mean-bond-length drift over 50 post-impact steps: with H_b %.2f%%, without %.2f%%", 100.0 * with,
                100.0 * without)};
}

// ------------------------------------------------------------------ 8

LearnedModel three_material_model() {
    auto m = LearnedModel::create(small_kernels(), 3, 0, kDefaultSearchRadius, base_seed() + 80);
    for (int k = 1; k < 6; ++k) m.add_kernel_set(base_seed() + 80 + static_cast<std::uint64_t>(k));
    m.embed_map = {0, 1, 2};
    m.pair_map = {{0, 3, 4}, {3, 1, 5}, {4, 5, 2}};
    m.params.view("material/radius") << 0.009, 0.011, 0.012;
    m.validate();
    return m;
}

Outcome material_swap() {
    const auto m = three_material_model();
    const auto self = swap_material(m, m, {{1, 1}});
    const bool identity = self.params.values == m.params.values && self.pair_map == m.pair_map;

    auto donor = three_material_model();
    for (Eigen::Index i = 0; i < donor.params.values.size(); ++i) donor.params.values(i) += 0.01 * std::sin(double(i));
    donor.params.view("material/templates") = ad::Matrix::Identity(3, 3);
    const auto there = swap_material(m, donor, {{1, 1}});
    const auto back = swap_material(there, m, {{1, 1}});
    const bool involution = there.params.values != m.params.values && back.params.values == m.params.values &&
                            back.embed_map == m.embed_map && back.pair_map == m.pair_map;

    ParticleSystem s;
    for (const auto& p : lattice_ball(Vec3(-0.03, 0, 0), 14)) s.add(p, 1.0, 0.008, 0, 0);
    for (const auto& p : lattice_ball(Vec3(0.03, 0, 0), 14)) s.add(p, 1.0, 0.008, 1, 1);
    for (std::size_t i = 0; i < s.size(); ++i) s.velocities[i] = Vec3(s.object_ids[i] == 0 ? 0.8 : -0.8, 0.05, 0);
    auto relabeled = s;
    for (auto& id : relabeled.material_ids)
        if (id == 1) id = 2;
    StepConfig cfg;
    cfg.gravity = Vec3::Zero();
    auto swapped = swap_material(m, m, {{1, 2}});
    auto original = m;
    const auto a = rollout_learned(s, swapped, 6, cfg);
    const auto b = rollout_learned(relabeled, original, 6, cfg);
    double diff = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) diff = std::max(diff, (a.back().positions[i] - b.back().positions[i]).norm());
    const auto c = rollout_learned(s, original, 6, cfg);
    double effect = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) effect = std::max(effect, (a.back().positions[i] - c.back().positions[i]).norm());
    const bool equivalent = diff <= 1e-9 && effect > 1e-6;
    return {identity && involution && equivalent,
            fmt("self-swap identical: %s; swap-back identical: %s; relabel equivalence max diff %.1e (swap moves "
                "particles by up to %.1e)",
                identity ? "yes" : "no", involution ? "yes" : "no", diff, effect)};
}

// ------------------------------------------------------------------ 9

struct RunRecord {
    std::vector<Vec3> classical_final;
    std::vector<Vec3> learned_final;
    std::vector<double> losses;
    std::vector<double> metrics;
};

RunRecord determinism_run() {
    RunRecord r;
    auto opts = parse_generator_spec("two_ball_collision:particles=80,image_size=32");
    opts.seed = base_seed();
    const Scene scene = generate_scene(opts);
    StepConfig sc;
    sc.dt = scene.dt;
    sc.substeps = scene.substeps;
    sc.gravity = scene.gravity;
    sc.search_radius = scene.search_radius;
    sc.classical = scene.classical;
    r.classical_final = rollout_classical(scene.state(0), scene.materials, scene.frame_count() - 1, sc).back().positions;

    TrainConfig c;
    c.seed = base_seed();
    c.steps = 100;
    c.log_every = 1;
    c.model = small_kernels();
    c.velocity_init = VelocityInit::tracks;
    Trainer t(c, {scene});
    t.run([&](const TrainLogEntry& e) { r.losses.push_back(e.loss); });
    const auto roll = t.rollout(0, scene.frame_count() - 1);
    r.learned_final = roll.back().positions;

    const auto& gt = scene.frames.back().positions;
    r.metrics.push_back(chamfer_distance(r.learned_final, gt));
    r.metrics.push_back(emd(r.learned_final, gt, base_seed()));
    auto state = scene.state(0);
    state.positions = r.learned_final;
    r.metrics.push_back(psnr(splat(state, scene.materials, scene.cameras[0], scene.splat), scene.frames.back().images[0]));
    return r;
}

Outcome determinism() {
    const auto a = determinism_run();
    const auto b = determinism_run();
    const bool rollouts = a.classical_final == b.classical_final && a.learned_final == b.learned_final;
    const bool losses = a.losses.size() == 100 && a.losses == b.losses;
    const bool metrics = a.metrics == b.metrics;
    return {rollouts && losses && metrics,
            fmt("seed %llu: rollouts %s, 100-step loss curve %s, metrics %s", static_cast<unsigned long long>(base_seed()),
                rollouts ? "identical" : "DIFFER", losses ? "identical" : "DIFFER", metrics ? "identical" : "DIFFER")};
}

} // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"gradient correctness", gradient_correctness},
        {"neighbor-search oracle equivalence", neighbor_equivalence},
        {"conservation", conservation},
        {"classical restitution", classical_sanity},
        {"equivariance", equivariance},
        {"end-to-end 2D-supervised learning", end_to_end},
        {"bond ablation", bond_ablation},
        {"material swap", material_swap},
        {"determinism", determinism},
    };
    std::set<int> selected, known_red;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--known-red" && i + 1 < argc) known_red.insert(std::atoi(argv[++i]));
        else selected.insert(std::atoi(argv[i]));
    }

    int failures = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        const int id = static_cast<int>(k) + 1;
        if (!selected.empty() && !selected.contains(id)) continue;
        std::fprintf(stderr, "[%d] %s\n", id, criteria[k].first.c_str());
        Outcome o;
        bool threw = false;
        try {
            o = criteria[k].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
            threw = true;
        }
        if (!o.pass && (threw || !known_red.contains(id))) ++failures;
        std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[k].first.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    if (!known_red.empty()) {
        std::string ids;
        for (int id : known_red) ids += " " + std::to_string(id);
        std::fprintf(stderr, "known red:%s\n", ids.c_str());
    }
    return failures == 0 ? 0 : 1;
}
