#include "del/training.hpp"

#include "del/errors.hpp"
#include "del/metrics.hpp"
#include "del/ops.hpp"
#include "io_util.hpp"

#include <cmath>
#include <set>

#include "json.hpp"
#include "toml.hpp"

namespace del {

using ad::Matrix;
using ad::Var;

void TrainConfig::validate() const {
    if (steps < 0) throw ConfigError("steps must be >= 0");
    if (window < 0 || bptt < 0) throw ConfigError("window and bptt must be >= 0");
    if (log_every < 1) throw ConfigError("log_every must be >= 1");
    if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
    if (!(adam.lr > 0.0) || !(adam.eps > 0.0) || adam.weight_decay < 0.0 || adam.beta1 < 0.0 ||
        adam.beta1 >= 1.0 || adam.beta2 < 0.0 || adam.beta2 >= 1.0)
        throw ConfigError("invalid optimizer settings");
    if (!(lr_gamma > 0.0) || lr_step < 1) throw ConfigError("invalid learning-rate schedule");
    if (clip_norm < 0.0) throw ConfigError("clip_norm must be >= 0");
    loss.validate();
    model.validate();
    if (!(search_radius > 0.0)) throw ConfigError("search radius must be positive");
    if (substeps < 1) throw ConfigError("substeps must be >= 1");
    if (!(max_speed > 0.0)) throw ConfigError("max_speed must be positive");
}

namespace {

using Keys = std::set<std::string>;

void check_keys(const toml::table& t, const Keys& allowed, const std::string& where) {
    for (const auto& [k, v] : t) {
        if (!allowed.contains(std::string(k.str())))
            throw ConfigError("unknown key '" + std::string(k.str()) + "' in " + where);
    }
}

template <typename T>
void read(const toml::table& t, const char* key, T& out) {
    const toml::node* n = t.get(key);
    if (!n) return;
    if constexpr (std::is_same_v<T, bool>) {
        if (auto v = n->value<bool>()) {
            out = *v;
            return;
        }
    } else if constexpr (std::is_integral_v<T>) {
        if (auto v = n->value<std::int64_t>()) {
            out = static_cast<T>(*v);
            return;
        }
    } else if constexpr (std::is_floating_point_v<T>) {
        if (auto v = n->value<double>()) {
            out = *v;
            return;
        }
    } else {
        if (auto v = n->value<std::string>()) {
            out = *v;
            return;
        }
    }
    throw ConfigError(std::string("key '") + key + "' has the wrong type");
}

const toml::table* section(const toml::table& root, const char* name) {
    const toml::node* n = root.get(name);
    if (!n) return nullptr;
    if (!n->is_table()) throw ConfigError(std::string("'") + name + "' must be a table");
    return n->as_table();
}

} // namespace

TrainConfig parse_train_config(const std::string& text) {
    toml::table root;
    try {
        root = toml::parse(text);
    } catch (const toml::parse_error& e) {
        throw ConfigError(std::string("train config: ") + std::string(e.description()));
    }
    TrainConfig c;
    check_keys(root,
               {"seed", "steps", "supervision", "window", "bptt", "log_every", "checkpoint_every",
                "optimizer", "loss", "model", "physics", "velocity_init"},
               "train config");
    std::int64_t seed = 0;
    read(root, "seed", seed);
    c.seed = static_cast<std::uint64_t>(seed);
    read(root, "steps", c.steps);
    std::string sup = "2d";
    read(root, "supervision", sup);
    if (sup == "2d") c.supervision = Supervision::images;
    else if (sup == "3d") c.supervision = Supervision::points;
    else throw ConfigError("supervision must be \"2d\" or \"3d\"");
    read(root, "window", c.window);
    read(root, "bptt", c.bptt);
    read(root, "log_every", c.log_every);
    read(root, "checkpoint_every", c.checkpoint_every);

    if (const toml::table* t = section(root, "optimizer")) {
        check_keys(*t, {"lr", "beta1", "beta2", "eps", "weight_decay", "lr_gamma", "lr_step", "clip_norm"},
                   "[optimizer]");
        read(*t, "lr", c.adam.lr);
        read(*t, "beta1", c.adam.beta1);
        read(*t, "beta2", c.adam.beta2);
        read(*t, "eps", c.adam.eps);
        read(*t, "weight_decay", c.adam.weight_decay);
        read(*t, "lr_gamma", c.lr_gamma);
        read(*t, "lr_step", c.lr_step);
        read(*t, "clip_norm", c.clip_norm);
    }
    if (const toml::table* t = section(root, "loss")) {
        check_keys(*t, {"beta", "norm", "normal_loss"}, "[loss]");
        read(*t, "beta", c.loss.beta);
        std::string norm = to_string(c.loss.norm);
        read(*t, "norm", norm);
        c.loss.norm = render_norm_from_string(norm);
        read(*t, "normal_loss", c.loss.normal_loss);
    }
    if (const toml::table* t = section(root, "model")) {
        check_keys(*t,
                   {"embedding_dim", "edge_dim", "hidden", "layers", "symmetrize_edges", "use_bond_head",
                    "force_scale", "activation"},
                   "[model]");
        read(*t, "embedding_dim", c.model.embedding_dim);
        read(*t, "edge_dim", c.model.edge_dim);
        read(*t, "hidden", c.model.hidden);
        read(*t, "layers", c.model.layers);
        read(*t, "symmetrize_edges", c.model.symmetrize_edges);
        read(*t, "use_bond_head", c.model.use_bond_head);
        read(*t, "force_scale", c.model.force_scale);
        std::string act = to_string(c.model.activation);
        read(*t, "activation", act);
        c.model.activation = activation_from_string(act);
    }
    if (const toml::table* t = section(root, "physics")) {
        check_keys(*t, {"search_radius", "substeps", "explicit_euler", "max_speed"}, "[physics]");
        read(*t, "search_radius", c.search_radius);
        read(*t, "substeps", c.substeps);
        read(*t, "explicit_euler", c.explicit_euler);
        read(*t, "max_speed", c.max_speed);
    }
    if (const toml::table* t = section(root, "velocity_init")) {
        check_keys(*t, {"mode", "max_offset", "grid", "refinements", "sweeps"}, "[velocity_init]");
        std::string mode = "auto";
        read(*t, "mode", mode);
        if (mode == "auto") c.velocity_init = VelocityInit::automatic;
        else if (mode == "tracks") c.velocity_init = VelocityInit::tracks;
        else if (mode == "images") c.velocity_init = VelocityInit::images;
        else if (mode == "given") c.velocity_init = VelocityInit::given;
        else throw ConfigError("velocity_init.mode must be auto, tracks, images or given");
        read(*t, "max_offset", c.offset_search.max_offset);
        read(*t, "grid", c.offset_search.grid);
        read(*t, "refinements", c.offset_search.refinements);
        read(*t, "sweeps", c.offset_search.sweeps);
    }
    c.validate();
    return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = detail::read_text(path);
    } catch (const IoError&) {
        throw ConfigError("cannot read train config " + path.string());
    }
    return parse_train_config(text);
}

std::string TrainLogEntry::to_json() const {
    nlohmann::json j = {{"step", step},           {"lr", lr},
                        {"loss", loss},           {"L_r", render},
                        {"L_r_n", render_normal}, {"L_g", gradient},
                        {"chamfer", chamfer},     {"grad_norm", grad_norm},
                        {"wall_time", wall_time}, {"skipped", skipped}};
    if (!std::isfinite(loss)) j["loss"] = nullptr;
    return j.dump();
}

std::vector<Vec3> initial_velocities(const Scene& scene, const TrainConfig& config) {
    VelocityInit mode = config.velocity_init;
    const bool has_images = scene.frame_count() >= 3 && !scene.frames[1].images.empty() &&
                            !scene.frames[2].images.empty();
    if (mode == VelocityInit::automatic)
        mode = config.supervision == Supervision::images && has_images ? VelocityInit::images : VelocityInit::tracks;
    if (mode == VelocityInit::given) return scene.frames.at(0).velocities;
    if (scene.frame_count() < 3) throw ConfigError("velocity initialization needs at least 3 frames");
    std::vector<Vec3> v;
    if (mode == VelocityInit::tracks) {
        v = init_velocities_from_tracks({scene.frames[0].positions, scene.frames[1].positions,
                                         scene.frames[2].positions},
                                        scene.dt);
    } else {
        if (!has_images) throw ConfigError("image velocity initialization needs images of frames 1 and 2");
        const ParticleSystem s0 = scene.state(0);
        const std::vector<Vec3> colors = particle_colors(s0, scene.materials);
        v = init_velocities_from_images(s0, colors, {&scene.cameras, &scene.frames[1].images},
                                        {&scene.cameras, &scene.frames[2].images}, scene.splat,
                                        config.loss.norm, scene.dt, config.offset_search);
    }
    for (std::size_t i = 0; i < v.size(); ++i)
        if (scene.system.is_static(i)) v[i].setZero();
    return v;
}

std::vector<Scene> load_dataset(const std::filesystem::path& path) {
    namespace fs = std::filesystem;
    if (fs::exists(path / "scene.json")) return {load_scene(path)};
    if (!fs::is_directory(path)) throw IoError("dataset " + path.string() + " does not exist");
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(path))
        if (e.is_directory() && fs::exists(e.path() / "scene.json")) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty()) throw IoError("no scene directories in " + path.string());
    std::vector<Scene> out;
    for (const fs::path& d : dirs) out.push_back(load_scene(d));
    return out;
}

Trainer::Trainer(TrainConfig config, std::vector<Scene> dataset, std::optional<LearnedModel> initial)
    : config_(std::move(config)), data_(std::move(dataset)), rng_(config_.seed) {
    config_.validate();
    if (data_.empty()) throw ConfigError("training needs at least one scene");
    const int n_mat = data_.front().materials.size();
    for (const Scene& s : data_) {
        if (s.materials.size() != n_mat) throw ConfigError("dataset scenes must share the material set");
        if (s.frame_count() < 2) throw ConfigError("training scenes need at least 2 frames");
        if (config_.supervision == Supervision::images) {
            if (s.cameras.empty()) throw ConfigError("image supervision needs cameras");
            for (int t = 1; t < s.frame_count(); ++t)
                if (s.frames[static_cast<std::size_t>(t)].images.size() != s.cameras.size())
                    throw ConfigError("image supervision needs images for every frame");
        }
    }
    for (const Scene& s : data_) {
        ParticleSystem p = s.state(0);
        p.velocities = initial_velocities(s, config_);
        initial_.push_back(std::move(p));
        colors_.push_back(particle_colors(s.system, s.materials));
    }
    if (initial) {
        model_ = std::move(*initial);
        if (model_.n_materials != n_mat) throw ConfigError("model material count differs from the dataset");
    } else {
        model_ = LearnedModel::create(config_.model, n_mat, data_.front().system.size(), config_.search_radius,
                                      config_.seed);
    }
    model_.params.zero_grad();
    start_ = std::chrono::steady_clock::now();
}

StepConfig Trainer::step_config(const Scene& scene) const {
    StepConfig c;
    c.dt = scene.dt;
    c.substeps = config_.substeps;
    c.explicit_euler = config_.explicit_euler;
    c.max_speed = config_.max_speed;
    c.gravity = scene.gravity;
    c.search_radius = config_.search_radius;
    return c;
}

TrainLogEntry Trainer::step() {
    TrainLogEntry log;
    log.step = step_;
    const StepLR sched{config_.adam.lr, config_.lr_gamma, config_.lr_step};
    log.lr = sched.lr_at(step_) * lr_scale_;

    std::size_t si = 0;
    if (data_.size() > 1) si = std::uniform_int_distribution<std::size_t>(0, data_.size() - 1)(rng_);
    const Scene& scene = data_[si];
    const int last = scene.frame_count() - 1;
    const int window = config_.window == 0 ? last : std::min(config_.window, last);
    int t0 = 0;
    ParticleSystem start = initial_[si];
    if (config_.supervision == Supervision::points && window < last) {
        t0 = std::uniform_int_distribution<int>(0, last - window)(rng_);
        if (t0 > 0) {
            start = scene.state(t0);
            const auto& prev = scene.frames[static_cast<std::size_t>(t0 - 1)].positions;
            const auto& next = scene.frames[static_cast<std::size_t>(t0 + 1)].positions;
            for (std::size_t i = 0; i < start.size(); ++i)
                start.velocities[i] = start.is_static(i) ? Vec3::Zero() : Vec3((next[i] - prev[i]) / (2.0 * scene.dt));
        }
    }

    const StepConfig sc = step_config(scene);
    const double h = sc.dt / sc.substeps;
    const std::vector<Vec3>& colors = colors_[si];
    ad::Tape tape;
    ParamBinding binding(tape, model_.params);
    TapeState st = tape_state(tape, start);
    Var total = tape.constant(Matrix::Zero(1, 1));
    double lr_sum = 0.0, lrn_sum = 0.0, lg_sum = 0.0, cd_sum = 0.0;
    bool finite = true;
    try {
        for (int f = 1; f <= window; ++f) {
            const int frame = t0 + f;
            TapeState prev = st;
            LearnedForces forces;
            for (int k = 0; k < sc.substeps; ++k) {
                prev = st;
                st = learned_step(binding, model_, scene.system, st, sc, h, &forces);
            }
            if (config_.supervision == Supervision::images) {
                const Observation obs{&scene.cameras, &scene.frames[static_cast<std::size_t>(frame)].images};
                Var lr = render_loss(st.positions, colors, obs, scene.splat, config_.loss.norm);
                lr_sum += lr.item();
                total = ad::add(total, lr);
                if (config_.loss.normal_loss) {
                    Var lrn = normal_only_loss(prev, forces, scene.system.static_flags, h, sc.explicit_euler,
                                               colors, obs, scene.splat, config_.loss.norm);
                    lrn_sum += lrn.item();
                    total = ad::add(total, lrn);
                }
                if (config_.loss.beta > 0.0) {
                    std::vector<Vec3> x(start.size());
                    const Matrix& xv = st.positions.value();
                    for (std::size_t i = 0; i < x.size(); ++i) x[i] = xv.row(static_cast<Eigen::Index>(i)).transpose();
                    const Matrix g = render_loss_grad(x, colors, obs, scene.splat, config_.loss.norm);
                    Var lg = gradient_loss(g, st.velocities);
                    lg_sum += lg.item();
                    total = ad::add(total, ad::scale(lg, config_.loss.beta));
                }
            } else {
                Var cd = chamfer_var(st.positions, scene.frames[static_cast<std::size_t>(frame)].positions);
                cd_sum += cd.item();
                total = ad::add(total, cd);
            }
            if (config_.bptt > 0 && f % config_.bptt == 0)
                st = {ad::detach(st.positions), ad::detach(st.velocities), ad::detach(st.accel_prev)};
        }
    } catch (const NumericError&) {
        finite = false;
    }
    log.render = lr_sum;
    log.render_normal = lrn_sum;
    log.gradient = lg_sum;
    log.chamfer = cd_sum;
    log.loss = finite ? total.item() : std::numeric_limits<double>::quiet_NaN();
    finite = finite && std::isfinite(log.loss);

    if (finite) {
        tape.backward(total);
        model_.params.zero_grad();
        binding.accumulate_grads();
        if (config_.clip_norm > 0.0) {
            log.grad_norm = clip_grad_norm(model_.params, config_.clip_norm);
        } else {
            log.grad_norm = model_.params.grads.norm();
        }
        AdamConfig a = config_.adam;
        a.lr = log.lr;
        try {
            adam_step(model_.params, a);
        } catch (const NumericError&) {
            finite = false;
        }
    }
    if (finite) {
        nan_streak_ = 0;
    } else {
        log.skipped = true;
        if (++nan_streak_ >= 3) {
            lr_scale_ *= 0.5;
            nan_streak_ = 0;
        }
    }
    model_.params.zero_grad();
    ++step_;
    log.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    return log;
}

void Trainer::run(const std::function<void(const TrainLogEntry&)>& on_log,
                  const std::optional<std::filesystem::path>& checkpoint) {
    while (step_ < config_.steps) {
        const TrainLogEntry e = step();
        const bool last = step_ == config_.steps;
        if (on_log && (e.step % config_.log_every == 0 || last || e.skipped)) on_log(e);
        if (checkpoint && config_.checkpoint_every > 0 && step_ % config_.checkpoint_every == 0 && !last)
            save_checkpoint(model_, *checkpoint);
    }
    if (checkpoint) save_checkpoint(model_, *checkpoint);
}

std::vector<ParticleSystem> Trainer::rollout(std::size_t scene, int frames) const {
    LearnedModel m = model_;
    return rollout_learned(initial_.at(scene), m, frames, step_config(data_.at(scene)));
}

double Trainer::chamfer_at(std::size_t scene, int t) const {
    const std::vector<ParticleSystem> r = rollout(scene, t);
    return chamfer_distance(r.back().positions, data_.at(scene).frames.at(static_cast<std::size_t>(t)).positions);
}

} // namespace del
