#include "del/scene_io.hpp"

#include "del/errors.hpp"
#include "del/image_io.hpp"
#include "io_util.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace del {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string frame_file(int t) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%04d.bin", t);
    return buf;
}

std::string image_file(int t, int cam) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "frame_%04d_cam%d.png", t, cam);
    return buf;
}

ParticleSystem Scene::state(int t) const {
    if (t < 0 || t >= frame_count()) throw ConfigError("frame " + std::to_string(t) + " out of range");
    ParticleSystem s = system;
    const SceneFrame& f = frames[static_cast<std::size_t>(t)];
    s.positions = f.positions;
    s.velocities = f.velocities;
    std::fill(s.accelerations_prev.begin(), s.accelerations_prev.end(), Vec3::Zero());
    return s;
}

void Scene::validate() const {
    materials.validate();
    system.validate(materials.size());
    for (const CameraView& c : cameras) c.validate();
    splat.validate();
    if (!(dt > 0.0) || substeps < 1) throw ConfigError("scene time step must be positive");
    if (!(search_radius > 0.0)) throw ConfigError("search radius must be positive");
    for (const SceneFrame& f : frames) {
        if (f.positions.size() != system.size() || f.velocities.size() != system.size())
            throw ConfigError("frame particle count differs from the scene");
        if (!f.images.empty() && f.images.size() != cameras.size())
            throw ConfigError("frame image count differs from the camera count");
    }
}

namespace {

json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

Vec3 vec_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

json camera_json(const CameraView& c) {
    json r = json::array();
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) r.push_back(c.rotation(i, k));
    return {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}, {"rotation", r},
            {"translation", vec_json(c.translation)}, {"width", c.width}, {"height", c.height}};
}

CameraView camera_from(const json& j) {
    CameraView c;
    c.fx = j.at("fx");
    c.fy = j.at("fy");
    c.cx = j.at("cx");
    c.cy = j.at("cy");
    const json& r = j.at("rotation");
    if (r.size() != 9) throw IoError("camera rotation needs 9 entries");
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) c.rotation(i, k) = r.at(static_cast<std::size_t>(3 * i + k));
    c.translation = vec_from(j.at("translation"));
    c.width = j.at("width");
    c.height = j.at("height");
    return c;
}

json material_json(const MaterialParams& m) {
    return {{"name", m.name},
            {"stiffness", m.stiffness},
            {"hertz_modulus", m.hertz_modulus},
            {"hertz_radius", m.hertz_radius},
            {"bond_stiffness", m.bond_stiffness},
            {"tangential_stiffness", m.tangential_stiffness},
            {"damping", m.damping},
            {"critical_damping", m.critical_damping},
            {"radius", m.radius},
            {"color", m.color}};
}

MaterialParams material_from(const json& j) {
    MaterialParams m;
    m.name = j.at("name");
    m.stiffness = j.at("stiffness");
    m.hertz_modulus = j.at("hertz_modulus");
    m.hertz_radius = j.at("hertz_radius");
    m.bond_stiffness = j.at("bond_stiffness");
    m.tangential_stiffness = j.value("tangential_stiffness", m.tangential_stiffness);
    m.damping = j.at("damping");
    m.critical_damping = j.at("critical_damping");
    m.radius = j.at("radius");
    m.color = j.at("color").get<std::array<double, 3>>();
    return m;
}

std::vector<double> pack(const SceneFrame& f) {
    std::vector<double> out;
    out.reserve(f.positions.size() * 6);
    for (const Vec3& p : f.positions) out.insert(out.end(), {p.x(), p.y(), p.z()});
    for (const Vec3& v : f.velocities) out.insert(out.end(), {v.x(), v.y(), v.z()});
    return out;
}

} // namespace

void save_scene(const Scene& scene, const fs::path& dir, bool write_images) {
    scene.validate();
    const ParticleSystem& s = scene.system;
    json j;
    j["format"] = "del-scene";
    j["version"] = 1;
    j["generator"] = scene.generator;
    j["seed"] = scene.seed;
    j["n"] = s.size();
    j["dt"] = scene.dt;
    j["substeps"] = scene.substeps;
    j["gravity"] = vec_json(scene.gravity);
    j["search_radius"] = scene.search_radius;
    j["classical"] = {{"contact", scene.classical.contact == ContactLaw::hertz ? "hertz" : "linear"},
                      {"hertz_exponent", scene.classical.hertz_exponent},
                      {"clamp_viscous", scene.classical.clamp_viscous},
                      {"bonds", scene.classical.bonds}};
    j["splat"] = {{"alpha", scene.splat.alpha}, {"sigma_px", scene.splat.sigma_px}};
    json mats = json::array();
    for (const MaterialParams& m : scene.materials.materials) mats.push_back(material_json(m));
    j["materials"] = mats;
    std::vector<int> statics(s.static_flags.begin(), s.static_flags.end());
    j["particles"] = {{"masses", s.masses},
                      {"radii", s.radii},
                      {"material_ids", s.material_ids},
                      {"object_ids", s.object_ids},
                      {"static", statics}};
    json cams = json::array();
    for (const CameraView& c : scene.cameras) cams.push_back(camera_json(c));
    j["cameras"] = cams;
    j["frame_count"] = scene.frame_count();
    bool images = false;
    for (const SceneFrame& f : scene.frames) images = images || (write_images && !f.images.empty());
    j["images"] = images;

    const fs::path tmp = detail::staging_dir(dir);
    detail::write_text(tmp / "scene.json", j.dump(2) + "\n");
    for (int t = 0; t < scene.frame_count(); ++t) {
        const SceneFrame& f = scene.frames[static_cast<std::size_t>(t)];
        const std::vector<double> data = pack(f);
        detail::write_f64(tmp / frame_file(t), data.data(), data.size());
        if (!write_images) continue;
        for (std::size_t c = 0; c < f.images.size(); ++c)
            write_png(tmp / image_file(t, static_cast<int>(c)), f.images[c]);
    }
    detail::commit_dir(tmp, dir);
}

Scene load_scene(const fs::path& dir, bool load_images) {
    Scene scene;
    bool images = false;
    try {
        const json j = json::parse(detail::read_text(dir / "scene.json"));
        if (j.at("format") != "del-scene") throw IoError(dir.string() + " is not a scene directory");
        scene.generator = j.at("generator");
        scene.seed = j.at("seed");
        scene.dt = j.at("dt");
        scene.substeps = j.at("substeps");
        scene.gravity = vec_from(j.at("gravity"));
        scene.search_radius = j.at("search_radius");
        const json& c = j.at("classical");
        scene.classical.contact = c.at("contact") == "hertz" ? ContactLaw::hertz : ContactLaw::linear;
        scene.classical.hertz_exponent = c.at("hertz_exponent");
        scene.classical.clamp_viscous = c.at("clamp_viscous");
        scene.classical.bonds = c.at("bonds");
        scene.splat.alpha = j.at("splat").at("alpha");
        scene.splat.sigma_px = j.at("splat").at("sigma_px");
        std::vector<MaterialParams> mats;
        for (const json& m : j.at("materials")) mats.push_back(material_from(m));
        scene.materials = MaterialTable::from(std::move(mats));
        const json& p = j.at("particles");
        const std::size_t n = j.at("n");
        ParticleSystem& s = scene.system;
        s.masses = p.at("masses").get<std::vector<double>>();
        s.radii = p.at("radii").get<std::vector<double>>();
        s.material_ids = p.at("material_ids").get<std::vector<int>>();
        s.object_ids = p.at("object_ids").get<std::vector<int>>();
        for (int f : p.at("static").get<std::vector<int>>()) s.static_flags.push_back(f != 0 ? 1 : 0);
        s.positions.assign(n, Vec3::Zero());
        s.velocities.assign(n, Vec3::Zero());
        s.accelerations_prev.assign(n, Vec3::Zero());
        for (const json& cam : j.at("cameras")) scene.cameras.push_back(camera_from(cam));
        const int frames = j.at("frame_count");
        images = j.at("images");
        for (int t = 0; t < frames; ++t) {
            const Eigen::VectorXd d = detail::read_f64(dir / frame_file(t), n * 6);
            SceneFrame f;
            f.positions.resize(n);
            f.velocities.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                const auto k = static_cast<Eigen::Index>(3 * i);
                f.positions[i] = d.segment<3>(k);
                f.velocities[i] = d.segment<3>(static_cast<Eigen::Index>(3 * n) + k);
            }
            scene.frames.push_back(std::move(f));
        }
    } catch (const json::exception& e) {
        throw IoError("malformed scene.json in " + dir.string() + ": " + e.what());
    }
    if (images && load_images) {
        for (int t = 0; t < scene.frame_count(); ++t) {
            for (std::size_t c = 0; c < scene.cameras.size(); ++c) {
                const fs::path png = dir / image_file(t, static_cast<int>(c));
                if (!fs::exists(png)) continue;
                scene.frames[static_cast<std::size_t>(t)].images.push_back(read_png(png));
            }
        }
    }
    if (!scene.frames.empty()) {
        scene.system.positions = scene.frames.front().positions;
        scene.system.velocities = scene.frames.front().velocities;
    }
    scene.validate();
    return scene;
}

void write_ply(const fs::path& path, const std::vector<Vec3>& points, const std::vector<Vec3>& colors) {
    if (!colors.empty() && colors.size() != points.size())
        throw ConfigError("PLY colors must match the point count");
    std::ostringstream s;
    s.precision(17);
    s << "ply\nformat ascii 1.0\nelement vertex " << points.size()
      << "\nproperty double x\nproperty double y\nproperty double z\n";
    if (!colors.empty()) s << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    s << "end_header\n";
    for (std::size_t i = 0; i < points.size(); ++i) {
        s << points[i].x() << ' ' << points[i].y() << ' ' << points[i].z();
        if (!colors.empty())
            for (int c = 0; c < 3; ++c)
                s << ' ' << static_cast<int>(std::lround(std::clamp(colors[i][c], 0.0, 1.0) * 255.0));
        s << '\n';
    }
    const fs::path tmp = path.string() + ".tmp";
    detail::write_text(tmp, s.str());
    fs::rename(tmp, path);
}

std::vector<Vec3> read_ply(const fs::path& path) {
    std::istringstream in(detail::read_text(path));
    std::string line;
    std::size_t count = 0;
    if (!std::getline(in, line) || line != "ply") throw IoError(path.string() + " is not a PLY file");
    while (std::getline(in, line) && line != "end_header") {
        std::istringstream ls(line);
        std::string a, b;
        ls >> a >> b;
        if (a == "format" && b != "ascii") throw IoError("only ASCII PLY is supported");
        if (a == "element" && b == "vertex") ls >> count;
    }
    std::vector<Vec3> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        if (!std::getline(in, line)) throw IoError(path.string() + " is truncated");
        std::istringstream ls(line);
        if (!(ls >> out[i].x() >> out[i].y() >> out[i].z())) throw IoError("bad vertex in " + path.string());
    }
    return out;
}

} // namespace del
