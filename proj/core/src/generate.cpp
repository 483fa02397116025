#include "del/generate.hpp"

#include "del/errors.hpp"
#include "del/integrator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace del {

const std::vector<std::string>& generator_names() {
    static const std::vector<std::string> names{"drop_ball", "two_ball_collision", "bonded_block_impact",
                                                "granular_pour"};
    return names;
}

namespace {

bool parse_switch(const std::string& key, const std::string& v) {
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    throw ConfigError("generator option '" + key + "' expects on or off");
}

int parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const int x = std::stoi(v, &used);
        if (used == v.size()) return x;
    } catch (const std::logic_error&) {
    }
    throw ConfigError("generator option '" + key + "' expects an integer");
}

MaterialParams material(const std::string& name, double k, double kb, double eta,
                        std::array<double, 3> color) {
    MaterialParams m;
    m.name = name;
    m.stiffness = k;
    m.hertz_modulus = k;
    m.bond_stiffness = kb;
    m.tangential_stiffness = 0.5 * k;
    m.damping = eta;
    m.critical_damping = 2.0 * std::sqrt(k);  // unit particle mass
    m.radius = 0.5 * kLatticeSpacing;
    m.color = color;
    return m;
}

void add_points(ParticleSystem& s, const std::vector<Vec3>& pts, int material, int object, bool is_static,
                const Vec3& velocity = Vec3::Zero()) {
    for (const Vec3& p : pts) {
        s.add(p, 1.0, 0.5 * kLatticeSpacing, material, object, is_static);
        s.velocities.back() = is_static ? Vec3::Zero() : velocity;
    }
}

/// Static square sheet at height z, centered on (cx, cy).
std::vector<Vec3> table_sheet(double cx, double cy, double z, int n) {
    std::vector<Vec3> out;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            out.emplace_back(cx + (i - n / 2) * kLatticeSpacing, cy + (j - n / 2) * kLatticeSpacing, z);
    return out;
}

double extent_radius(const std::vector<Vec3>& pts, const Vec3& center) {
    double r = 0.0;
    for (const Vec3& p : pts) r = std::max(r, (p - center).norm());
    return r;
}

} // namespace

GeneratorOptions parse_generator_spec(const std::string& spec) {
    GeneratorOptions o;
    const auto colon = spec.find(':');
    o.name = spec.substr(0, colon);
    if (std::find(generator_names().begin(), generator_names().end(), o.name) == generator_names().end())
        throw ConfigError("unknown generator '" + o.name + "'");
    if (colon == std::string::npos) return o;
    std::istringstream in(spec.substr(colon + 1));
    std::string item;
    while (std::getline(in, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw ConfigError("generator option '" + item + "' is not key=value");
        const std::string k = item.substr(0, eq), v = item.substr(eq + 1);
        if (k == "seed") o.seed = static_cast<std::uint64_t>(parse_int(k, v));
        else if (k == "frames") o.frames = parse_int(k, v);
        else if (k == "particles") o.particles = parse_int(k, v);
        else if (k == "cameras") o.cameras = parse_int(k, v);
        else if (k == "image_size") o.image_size = parse_int(k, v);
        else if (k == "substeps") o.substeps = parse_int(k, v);
        else if (k == "gap") o.gap = parse_int(k, v);
        else if (k == "gravity") o.gravity = parse_switch(k, v);
        else if (k == "render") o.render = parse_switch(k, v);
        else if (k == "dt") {
            try {
                o.dt = std::stod(v);
            } catch (const std::logic_error&) {
                throw ConfigError("generator option 'dt' expects a number");
            }
        } else throw ConfigError("unknown generator option '" + k + "'");
    }
    return o;
}

std::vector<Vec3> lattice_ball(const Vec3& center, int count, double spacing) {
    if (count < 1) throw ConfigError("ball needs at least one particle");
    int r = 1;
    while ((2 * r + 1) * (2 * r + 1) * (2 * r + 1) < 2 * count) ++r;
    struct Cell {
        int i, j, k, d2;
    };
    std::vector<Cell> cells;
    for (int i = -r; i <= r; ++i)
        for (int j = -r; j <= r; ++j)
            for (int k = -r; k <= r; ++k) cells.push_back({i, j, k, i * i + j * j + k * k});
    std::stable_sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) { return a.d2 < b.d2; });
    std::vector<Vec3> out;
    for (int n = 0; n < count; ++n) {
        const Cell& c = cells[static_cast<std::size_t>(n)];
        out.push_back(center + spacing * Vec3(c.i, c.j, c.k));
    }
    return out;
}

std::vector<Vec3> lattice_block(const Vec3& origin, int nx, int ny, int nz, double spacing) {
    std::vector<Vec3> out;
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < ny; ++j)
            for (int k = 0; k < nz; ++k) out.push_back(origin + spacing * Vec3(i, j, k));
    return out;
}

void render_scene(Scene& scene) {
    const std::vector<Vec3> colors = particle_colors(scene.system, scene.materials);
    for (SceneFrame& f : scene.frames) {
        f.images.clear();
        for (const CameraView& cam : scene.cameras) f.images.push_back(splat(f.positions, colors, cam, scene.splat));
    }
}

Scene generate_scene(const GeneratorOptions& o) {
    if (o.frames < 0) throw ConfigError("frames must be >= 0");
    if (o.cameras < 0 || o.image_size < 8) throw ConfigError("invalid camera settings");
    if (o.substeps < 1 || !(o.dt > 0.0)) throw ConfigError("invalid time stepping");
    if (o.particles < 0) throw ConfigError("particle count must be >= 0");
    if (o.gap < 1) throw ConfigError("gap must be >= 1");
    std::mt19937_64 rng(o.seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const int shift = static_cast<int>(o.seed % 3) - 1;  // lattice-exact placement jitter
    const double s = kLatticeSpacing;

    Scene scene;
    scene.generator = o.name;
    scene.seed = o.seed;
    scene.dt = o.dt;
    scene.substeps = o.substeps;
    // Face neighbors (s) connect; lattice diagonals (s * sqrt 2) do not.
    scene.search_radius = 1.25 * s;
    scene.classical = ClassicalConfig{};
    ParticleSystem& sys = scene.system;
    bool gravity = true;
    Vec3 look = Vec3::Zero();
    double extent = 0.1;

    if (o.name == "drop_ball") {
        const int n = o.particles > 0 ? o.particles : 100;
        scene.materials = MaterialTable::from({material("ball", 1e4, 1e4, 0.1, {0.9, 0.45, 0.2}),
                                               material("table", 1e4, 1e4, 0.1, {0.35, 0.35, 0.4})});
        const Vec3 c(shift * s, 0.0, 8.0 * s);
        const std::vector<Vec3> ball = lattice_ball(c, n);
        add_points(sys, ball, 0, 0, false);
        add_points(sys, table_sheet(0.0, 0.0, 0.0, 16), 1, 1, true);
        look = Vec3(0.0, 0.0, 4.0 * s);
        extent = 0.15;
    } else if (o.name == "two_ball_collision") {
        const int n = o.particles > 0 ? o.particles : 200;
        if (n < 2) throw ConfigError("two_ball_collision needs at least 2 particles");
        gravity = false;
        scene.materials = MaterialTable::from({material("ball", 1e4, 1e4, 0.05, {0.9, 0.45, 0.2})});
        const std::vector<Vec3> probe = lattice_ball(Vec3::Zero(), n / 2);
        const double r = extent_radius(probe, Vec3::Zero());
        const double cx = std::ceil(r / s + o.gap) * s;
        const double speed = 0.5 * (1.0 + 0.1 * unit(rng));
        add_points(sys, lattice_ball(Vec3(-cx, shift * s, 0.0), n / 2), 0, 0, false, Vec3(speed, 0.0, 0.0));
        add_points(sys, lattice_ball(Vec3(cx, 0.0, 0.0), n - n / 2), 0, 1, false, Vec3(-speed, 0.0, 0.0));
        extent = cx + r + 0.03;
    } else if (o.name == "bonded_block_impact") {
        const int n = o.particles > 0 ? o.particles : 125;
        gravity = false;
        scene.materials = MaterialTable::from({material("block", 1e4, 1e4, 0.1, {0.3, 0.7, 0.9}),
                                               material("striker", 4e4, 4e4, 0.1, {0.9, 0.9, 0.3})});
        const int side = std::max(2, static_cast<int>(std::lround(std::cbrt(static_cast<double>(n)))));
        const double half = 0.5 * (side - 1) * s;
        add_points(sys, lattice_block(Vec3(0.0, -std::floor(side / 2.0) * s, -std::floor(side / 2.0) * s), side,
                                      side, side),
                   0, 0, false);
        const std::vector<Vec3> striker = lattice_ball(Vec3::Zero(), 33);
        const double r = extent_radius(striker, Vec3::Zero());
        const double sx = -std::ceil((r + 2.0 * s) / s) * s;
        const double speed = 1.0 * (1.0 + 0.1 * unit(rng));
        add_points(sys, lattice_ball(Vec3(sx, shift * s, 0.0), 33), 1, 1, false, Vec3(speed, 0.0, 0.0));
        look = Vec3(half - 0.5 * r, 0.0, 0.0);
        extent = 2.0 * half + 2.0 * r;
    } else if (o.name == "granular_pour") {
        const int n = o.particles > 0 ? o.particles : 200;
        scene.materials = MaterialTable::from({material("grain", 1e4, 1e4, 0.3, {0.85, 0.75, 0.5}),
                                               material("table", 1e4, 1e4, 0.3, {0.35, 0.35, 0.4})});
        const int side = std::max(1, static_cast<int>(std::floor(std::sqrt(n / 4.0))));
        const double gap = 1.25 * s;
        for (int k = 0; k < n; ++k) {
            const int layer = k / (side * side), rem = k % (side * side);
            const Vec3 p((rem % side - side / 2) * gap, (rem / side - side / 2) * gap, 3.0 * s + layer * gap);
            const Vec3 v(0.02 * unit(rng), 0.02 * unit(rng), 0.0);
            add_points(sys, {p}, 0, k, false, v);
        }
        add_points(sys, table_sheet(0.0, 0.0, 0.0, 24), 1, n, true);
        look = Vec3(0.0, 0.0, 0.05);
        extent = 0.25;
    } else {
        throw ConfigError("unknown generator '" + o.name + "'");
    }
    if (o.gravity) gravity = *o.gravity;
    scene.gravity = gravity ? Vec3(0.0, 0.0, -9.81) : Vec3::Zero();

    const double fov = 40.0;
    const double dist = 1.1 * extent / std::tan(0.5 * fov * std::numbers::pi / 180.0);
    if (o.cameras > 0)
        scene.cameras = corner_cameras(look, dist * 0.8, dist * 0.6, fov, o.image_size, o.image_size, o.cameras);

    StepConfig cfg;
    cfg.dt = scene.dt;
    cfg.substeps = scene.substeps;
    cfg.gravity = scene.gravity;
    cfg.search_radius = scene.search_radius;
    cfg.classical = scene.classical;
    const std::vector<ParticleSystem> states = rollout_classical(sys, scene.materials, o.frames, cfg);
    for (const ParticleSystem& st : states) scene.frames.push_back({st.positions, st.velocities, {}});
    if (o.render && !scene.cameras.empty()) render_scene(scene);
    scene.validate();
    return scene;
}

} // namespace del
