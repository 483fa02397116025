// del: generate scenes, train learned kernels, simulate, render and evaluate.

#include "del/errors.hpp"
#include "del/generate.hpp"
#include "del/gradcheck.hpp"
#include "del/image_io.hpp"
#include "del/integrator.hpp"
#include "del/kernels.hpp"
#include "del/metrics.hpp"
#include "del/scene_io.hpp"
#include "del/swap.hpp"
#include "del/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::optional<std::uint64_t> env_seed() {
    const char* s = std::getenv("DEL_SEED");
    if (!s || !*s) return std::nullopt;
    try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(s, &used);
        if (used == std::string(s).size()) return v;
    } catch (const std::logic_error&) {
    }
    throw del::ConfigError("DEL_SEED must be a non-negative integer");
}

void write_atomic(const fs::path& path, const std::string& text) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        out << text;
        if (!out) throw del::IoError("cannot write " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw del::IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

void emit(const json& j, const std::string& out) {
    if (out.empty() || out == "-") std::cout << j.dump(2) << '\n';
    else write_atomic(out, j.dump(2) + "\n");
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
    std::string spec;
    std::string out;
    bool no_images = false;
};

int run_generate(const GenerateArgs& a) {
    del::GeneratorOptions o = del::parse_generator_spec(a.spec);
    if (auto s = env_seed()) o.seed = *s;
    const del::Scene scene = del::generate_scene(o);
    del::save_scene(scene, a.out, !a.no_images);
    std::cerr << "generated " << o.name << " (" << scene.system.size() << " particles, " << scene.frame_count()
              << " frames) into " << a.out << '\n';
    emit({{"scene", a.out},
          {"generator", o.name},
          {"seed", o.seed},
          {"particles", scene.system.size()},
          {"frames", scene.frame_count()},
          {"cameras", scene.cameras.size()}},
         "");
    return 0;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
    std::string config;
    std::string data;
    std::string out;
    std::string init;
    std::string log;
};

int run_train(const TrainArgs& a) {
    del::TrainConfig cfg = del::load_train_config(a.config);
    if (auto s = env_seed()) cfg.seed = *s;
    std::optional<del::LearnedModel> init;
    if (!a.init.empty()) init = del::load_checkpoint(a.init);
    del::Trainer trainer(cfg, del::load_dataset(a.data), std::move(init));
    std::ofstream log_file;
    if (!a.log.empty()) {
        log_file.open(a.log);
        if (!log_file) throw del::IoError("cannot open " + a.log);
    }
    std::ostream& log = a.log.empty() ? std::cout : log_file;
    trainer.run(
        [&](const del::TrainLogEntry& e) {
            log << e.to_json() << '\n' << std::flush;
            std::cerr << "step " << e.step << " loss " << e.loss << (e.skipped ? " (skipped)" : "") << '\n';
        },
        fs::path(a.out));
    std::cerr << "checkpoint written to " << a.out << '\n';
    return 0;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
    std::string checkpoint;
    bool classical = false;
    std::string scene;
    int steps = -1;
    std::string out;
    std::string config;
    bool images = false;
};

int run_simulate(const SimulateArgs& a) {
    if (a.classical == !a.checkpoint.empty()) throw del::ConfigError("simulate needs exactly one of -k or --classical");
    del::Scene scene = del::load_scene(a.scene, false);
    const int frames = a.steps >= 0 ? a.steps : scene.frame_count() - 1;
    if (frames < 0) throw del::ConfigError("scene has no frames");
    del::StepConfig cfg;
    cfg.dt = scene.dt;
    cfg.gravity = scene.gravity;
    std::vector<del::ParticleSystem> states;
    if (a.classical) {
        if (!a.config.empty()) throw del::ConfigError("-c applies to learned simulation only");
        cfg.substeps = scene.substeps;
        cfg.search_radius = scene.search_radius;
        cfg.classical = scene.classical;
        states = del::rollout_classical(scene.state(0), scene.materials, frames, cfg);
    } else {
        del::LearnedModel model = del::load_checkpoint(a.checkpoint);
        del::ParticleSystem init = scene.state(0);
        if (!a.config.empty()) {
            const del::TrainConfig tc = del::load_train_config(a.config);
            cfg.substeps = tc.substeps;
            cfg.explicit_euler = tc.explicit_euler;
            cfg.max_speed = tc.max_speed;
            cfg.search_radius = tc.search_radius;
            del::Scene probe = del::load_scene(a.scene, true);
            init.velocities = del::initial_velocities(probe, tc);
        }
        states = del::rollout_learned(init, model, frames, cfg);
    }
    scene.frames.clear();
    for (const del::ParticleSystem& s : states) scene.frames.push_back({s.positions, s.velocities, {}});
    if (a.images) del::render_scene(scene);
    del::save_scene(scene, a.out, a.images);
    std::cerr << "simulated " << frames << " frames into " << a.out << '\n';
    emit({{"scene", a.out}, {"backend", a.classical ? "classical" : "learned"}, {"frames", frames + 1}}, "");
    return 0;
}

// ------------------------------------------------------------------ render

struct RenderArgs {
    std::string scene;
    int cam = 0;
    std::string out;
};

int run_render(const RenderArgs& a) {
    const del::Scene scene = del::load_scene(a.scene, false);
    if (a.cam < 0 || a.cam >= static_cast<int>(scene.cameras.size()))
        throw del::ConfigError("camera " + std::to_string(a.cam) + " does not exist");
    const std::vector<del::Vec3> colors = del::particle_colors(scene.system, scene.materials);
    const del::CameraView& cam = scene.cameras[static_cast<std::size_t>(a.cam)];
    const fs::path out(a.out);
    const fs::path tmp = out.string() + ".tmp";
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    json files = json::array();
    for (int t = 0; t < scene.frame_count(); ++t) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%04d.png", t);
        del::write_png(tmp / name, del::splat(scene.frames[static_cast<std::size_t>(t)].positions, colors, cam,
                                              scene.splat));
        files.push_back(name);
    }
    const fs::path old = out.string() + ".old";
    fs::remove_all(old);
    if (fs::exists(out)) fs::rename(out, old);
    fs::rename(tmp, out);
    fs::remove_all(old);
    emit({{"dir", a.out}, {"camera", a.cam}, {"images", files}}, "");
    return 0;
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
    std::string pred;
    std::string gt;
    std::string metrics = "cd,emd,psnr";
    std::string out;
};

int run_eval(const EvalArgs& a) {
    bool cd = false, emd = false, psnr = false;
    std::istringstream in(a.metrics);
    for (std::string m; std::getline(in, m, ',');) {
        if (m == "cd") cd = true;
        else if (m == "emd") emd = true;
        else if (m == "psnr") psnr = true;
        else throw del::ConfigError("unknown metric '" + m + "'");
    }
    const std::uint64_t seed = env_seed().value_or(0);
    const del::Scene pred = del::load_scene(a.pred, psnr);
    const del::Scene gt = del::load_scene(a.gt, psnr);
    if (pred.system.size() != gt.system.size()) throw del::ConfigError("scenes differ in particle count");
    const int frames = std::min(pred.frame_count(), gt.frame_count());
    if (frames == 0) throw del::ConfigError("no frames to compare");
    const std::vector<del::Vec3> colors = del::particle_colors(gt.system, gt.materials);
    json per = json::array();
    double sum_cd = 0.0, sum_emd = 0.0, sum_psnr = 0.0;
    int psnr_frames = 0;
    for (int t = 0; t < frames; ++t) {
        const auto& pf = pred.frames[static_cast<std::size_t>(t)];
        const auto& gf = gt.frames[static_cast<std::size_t>(t)];
        json row{{"frame", t}};
        if (cd) {
            const double v = del::kChamferReportScale * del::chamfer_distance(pf.positions, gf.positions);
            row["cd"] = v;
            sum_cd += v;
        }
        if (emd) {
            const double v = del::emd(pf.positions, gf.positions, seed);
            row["emd"] = v;
            sum_emd += v;
        }
        if (psnr && !gf.images.empty()) {
            double p = 0.0;
            for (std::size_t c = 0; c < gt.cameras.size() && c < gf.images.size(); ++c) {
                const del::ImageBuffer img = c < pf.images.size()
                                                 ? pf.images[c]
                                                 : del::quantize_8bit(del::splat(pf.positions, colors, gt.cameras[c], gt.splat));
                p += del::psnr(img, gf.images[c]);
            }
            row["psnr"] = p / static_cast<double>(gf.images.size());
            sum_psnr += row["psnr"].get<double>();
            ++psnr_frames;
        }
        per.push_back(row);
    }
    json report{{"pred", a.pred}, {"gt", a.gt}, {"frames", per}, {"final", per.back()}};
    json mean;
    if (cd) mean["cd"] = sum_cd / frames;
    if (emd) mean["emd"] = sum_emd / frames;
    if (psnr_frames > 0) mean["psnr"] = sum_psnr / psnr_frames;
    report["mean"] = mean;
    report["cd_scale"] = del::kChamferReportScale;
    emit(report, a.out);
    return 0;
}

// ----------------------------------------------------------- swap-material

struct SwapArgs {
    std::string checkpoint;
    std::string donor;
    std::string map;
    std::string out;
};

int run_swap(const SwapArgs& a) {
    const del::LearnedModel model = del::load_checkpoint(a.checkpoint);
    const del::LearnedModel donor = a.donor.empty() ? model : del::load_checkpoint(a.donor);
    const std::vector<del::SwapEntry> mapping = del::parse_swap_map(a.map);
    const del::LearnedModel swapped = del::swap_material(model, donor, mapping);
    del::save_checkpoint(swapped, a.out, false);
    emit({{"checkpoint", a.out}, {"swapped", mapping.size()}, {"kernel_sets", swapped.kernel_count}}, "");
    return 0;
}

// --------------------------------------------------------------- gradcheck

int run_gradcheck(const std::string& module, std::uint64_t seed) {
    if (auto s = env_seed()) seed = *s;
    const std::vector<del::GradcheckResult> results = del::run_gradcheck(module, seed);
    json rows = json::array();
    bool ok = true;
    for (const del::GradcheckResult& r : results) {
        std::cerr << r.module << '/' << r.check << ": max relative error " << r.max_rel_error << " (tolerance "
                  << r.tolerance << ", " << r.instances << " instances) " << (r.pass() ? "ok" : "FAILED") << '\n';
        rows.push_back({{"module", r.module},
                        {"check", r.check},
                        {"instances", r.instances},
                        {"max_rel_error", r.max_rel_error},
                        {"tolerance", r.tolerance},
                        {"pass", r.pass()}});
        ok = ok && r.pass();
    }
    emit({{"seed", seed}, {"results", rows}, {"pass", ok}}, "");
    return ok ? 0 : 3;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Differentiable discrete element learning"};
    app.require_subcommand(1);

    GenerateArgs gen;
    auto* g = app.add_subcommand("generate", "Generate a ground-truth scene with the classical backend");
    g->add_option("spec", gen.spec, "name[:key=value,...], e.g. two_ball_collision:seed=3,frames=8")->required();
    g->add_option("-o,--out", gen.out, "Scene directory")->required();
    g->add_flag("--no-images", gen.no_images, "Skip PNG output");

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train the learned kernels");
    t->add_option("-c,--config", tr.config, "train.toml")->required()->check(CLI::ExistingFile);
    t->add_option("-d,--data", tr.data, "Scene directory or directory of scenes")->required();
    t->add_option("-o,--out", tr.out, "Checkpoint directory")->required();
    t->add_option("--init", tr.init, "Start from this checkpoint");
    t->add_option("--log", tr.log, "JSONL log file (default stdout)");

    SimulateArgs sim;
    auto* s = app.add_subcommand("simulate", "Roll out a scene from its first frame");
    s->add_option("-k,--checkpoint", sim.checkpoint, "Learned checkpoint");
    s->add_flag("--classical", sim.classical, "Use the classical backend");
    s->add_option("-s,--scene", sim.scene, "Scene directory")->required();
    s->add_option("-n,--steps", sim.steps, "Frames to simulate (default: as many as the scene has)");
    s->add_option("-o,--out", sim.out, "Output scene directory")->required();
    s->add_option("-c,--config", sim.config, "train.toml with the physics settings of the checkpoint");
    s->add_flag("--images", sim.images, "Render every frame from the scene cameras");

    RenderArgs ren;
    auto* r = app.add_subcommand("render", "Render one camera of a scene to PNGs");
    r->add_option("-s,--scene", ren.scene, "Scene directory")->required();
    r->add_option("--cam", ren.cam, "Camera index")->required();
    r->add_option("-o,--out", ren.out, "PNG directory")->required();

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Compare a predicted scene against ground truth");
    e->add_option("--pred", ev.pred, "Predicted scene directory")->required();
    e->add_option("--gt", ev.gt, "Ground-truth scene directory")->required();
    e->add_option("--metrics", ev.metrics, "Comma-separated subset of cd,emd,psnr");
    e->add_option("-o,--out", ev.out, "Report file (default stdout)");

    SwapArgs sw;
    auto* w = app.add_subcommand("swap-material", "Replace materials with donor kernels");
    w->add_option("-k,--checkpoint", sw.checkpoint, "Checkpoint to edit")->required();
    w->add_option("--donor", sw.donor, "Donor checkpoint (default: the same one)");
    w->add_option("--map", sw.map, "old=donor[,old=donor...] material indices")->required();
    w->add_option("-o,--out", sw.out, "Output checkpoint")->required();

    std::string module = "all";
    std::uint64_t gc_seed = 0;
    auto* c = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
    c->add_option("--module", module, "all, primitives, kernels, render or rollout");
    c->add_option("--seed", gc_seed, "Random instance seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*g) return run_generate(gen);
        if (*t) return run_train(tr);
        if (*s) return run_simulate(sim);
        if (*r) return run_render(ren);
        if (*e) return run_eval(ev);
        if (*w) return run_swap(sw);
        if (*c) return run_gradcheck(module, gc_seed);
    } catch (const del::Error& err) {
        std::cerr << json{{"error", err.what()}, {"exit_code", err.exit_code()}}.dump() << '\n';
        return err.exit_code();
    } catch (const fs::filesystem_error& err) {
        std::cerr << json{{"error", err.what()}, {"exit_code", 4}}.dump() << '\n';
        return 4;
    }
    return 0;
}
