#include "del/kernels.hpp"

#include "del/errors.hpp"
#include "del/ops.hpp"
#include "io_util.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <set>

#include "json.hpp"

namespace del {

using ad::Matrix;
using ad::Var;
using json = nlohmann::json;

void KernelConfig::validate() const {
    if (embedding_dim < 1 || edge_dim < 1 || hidden < 1 || layers < 1)
        throw ConfigError("kernel dimensions and layer count must be >= 1");
    if (!std::isfinite(force_scale) || force_scale <= 0.0)
        throw ConfigError("force_scale must be positive");
}

std::vector<std::pair<std::string, LayerSpec>> LearnedModel::kernel_layout() const {
    const int D = config.embedding_dim;
    const int E = config.edge_dim;
    const int H = config.hidden;
    const int M = n_materials;
    const Activation act = config.activation;
    std::vector<std::pair<std::string, LayerSpec>> out;
    out.push_back({"embed", {{M + 2, H, H, D}, act, false}});
    out.push_back({"phi_n/lift", {{1, E}, Activation::identity, false}});
    for (int l = 0; l < config.layers; ++l) {
        out.push_back({"phi_n/psi1." + std::to_string(l), {{E + 2 * D, H, E}, act, true}});
        out.push_back({"phi_n/psi2." + std::to_string(l), {{2 * E, H, E}, act, true}});
    }
    out.push_back({"phi_n/psi3", {{E + D, H, D}, act, false}});
    out.push_back({"head_contact", {{2 * D + E, H, 1}, act, false}});
    out.push_back({"head_bond", {{2 * D + E, H, 1}, act, false}});
    out.push_back({"gate_n", {{1 + E, H, H, 1}, act, false}});
    for (int l = 0; l < config.layers; ++l) {
        out.push_back({"phi_t/psi1." + std::to_string(l), {{E + 2 + 4 * D, H, E}, act, true}});
        out.push_back({"phi_t/psi2." + std::to_string(l), {{2 * E, H, E}, act, true}});
    }
    out.push_back({"phi_t/psi3", {{3 * E, H, 1}, act, false}});
    out.push_back({"gate_t", {{1 + E, H, H, 1}, act, false}});
    return out;
}

LayerSpec LearnedModel::spec(const std::string& mlp_name) const {
    for (auto& [name, s] : kernel_layout())
        if (name == mlp_name) return s;
    throw ConfigError("unknown kernel network '" + mlp_name + "'");
}

std::vector<std::string> LearnedModel::kernel_slice_names() const {
    std::vector<std::string> names;
    for (auto& [name, s] : kernel_layout()) {
        names.push_back(name);
        if (name == "phi_n/psi3") {
            names.push_back("phi_n/norm_gain");
            names.push_back("phi_n/norm_bias");
        }
    }
    return names;
}

int LearnedModel::add_kernel_set(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const int k = kernel_count;
    const std::string prefix = kernel_prefix(k);
    for (auto& [name, s] : kernel_layout()) {
        Matrix w(1, static_cast<Eigen::Index>(s.param_count()));
        const bool zero_last = name == "gate_n" || name == "gate_t";
        init_mlp(std::span<double>(w.data(), static_cast<std::size_t>(w.size())), s, rng, zero_last);
        params.add(prefix + name, w);
        if (name == "phi_n/psi3") {
            params.add(prefix + "phi_n/norm_gain", Matrix::Ones(1, config.embedding_dim), true, false);
            params.add(prefix + "phi_n/norm_bias", Matrix::Zero(1, config.embedding_dim), true, false);
        }
    }
    ++kernel_count;
    return k;
}

LearnedModel LearnedModel::create(const KernelConfig& config, int n_materials,
                                  std::size_t n_particles, double search_radius,
                                  std::uint64_t seed) {
    config.validate();
    if (n_materials < 1) throw ConfigError("model needs at least one material");
    if (!(search_radius > 0.0)) throw ConfigError("search radius must be positive");
    LearnedModel m;
    m.config = config;
    m.n_materials = n_materials;
    m.embed_map.assign(static_cast<std::size_t>(n_materials), 0);
    m.pair_map.assign(static_cast<std::size_t>(n_materials),
                      std::vector<int>(static_cast<std::size_t>(n_materials), 0));
    m.params.add("material/templates", Matrix::Identity(n_materials, n_materials), false, false);
    m.params.add("material/radius", Matrix::Constant(n_materials, 1, search_radius), true, false);
    if (n_particles > 0)
        m.params.add("particle/mass", Matrix::Ones(static_cast<Eigen::Index>(n_particles), 1), true,
                     false);
    m.add_kernel_set(seed);
    return m;
}

void LearnedModel::validate() const {
    config.validate();
    if (static_cast<int>(embed_map.size()) != n_materials ||
        static_cast<int>(pair_map.size()) != n_materials)
        throw ConfigError("kernel maps do not match the material count");
    for (int k : embed_map)
        if (k < 0 || k >= kernel_count) throw ConfigError("embed map names a missing kernel set");
    for (const auto& row : pair_map) {
        if (static_cast<int>(row.size()) != n_materials)
            throw ConfigError("pair map is not square");
        for (int k : row)
            if (k < 0 || k >= kernel_count) throw ConfigError("pair map names a missing kernel set");
    }
    const SliceInfo& t = params.slice("material/templates");
    if (t.rows != n_materials || t.cols != n_materials)
        throw ConfigError("material templates have the wrong shape");
    const SliceInfo& r = params.slice("material/radius");
    if (r.rows != n_materials || r.cols != 1) throw ConfigError("material radius has the wrong shape");
    for (int k = 0; k < kernel_count; ++k) {
        for (auto& [name, s] : kernel_layout()) {
            const SliceInfo& info = params.slice(kernel_prefix(k) + name);
            if (info.size() != s.param_count())
                throw ConfigError("slice '" + info.name + "' does not match its layer spec");
        }
    }
}

namespace {

Matrix column(const std::vector<double>& v) {
    Matrix m(static_cast<Eigen::Index>(v.size()), 1);
    for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = v[i];
    return m;
}

/// Applies fn(kernel, rows) per group of rows and scatters the results back.
Var grouped(const Var& rows, const std::vector<int>& group,
            const std::function<Var(int, const Var&)>& fn) {
    std::set<int> ids(group.begin(), group.end());
    if (ids.size() <= 1) return fn(ids.empty() ? 0 : *ids.begin(), rows);
    const int n = static_cast<int>(group.size());
    Var out;
    for (int k : ids) {
        std::vector<int> idx;
        for (int r = 0; r < n; ++r)
            if (group[static_cast<std::size_t>(r)] == k) idx.push_back(r);
        Var part = ad::segment_sum(fn(k, ad::gather(rows, idx)), idx, n);
        out = out.valid() ? ad::add(out, part) : part;
    }
    return out;
}

Var mean_aggregate(const Var& edge_rows, const InteractionGraph& g, int n) {
    std::vector<double> inv(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        const int d = g.degree[static_cast<std::size_t>(i)];
        if (d > 0) inv[static_cast<std::size_t>(i)] = 1.0 / d;
    }
    Var s = ad::segment_sum(edge_rows, g.src, n);
    return ad::mul(s, edge_rows.tape().constant(column(inv)));
}

Var symmetric(const Var& x, const InteractionGraph& g, bool on) {
    if (!on) return x;
    return ad::scale(ad::add(x, ad::gather(x, g.reverse)), 0.5);
}

} // namespace

Var model_masses(ParamBinding& binding, const LearnedModel& model, const ParticleSystem& system) {
    const ParamStore& p = model.params;
    if (p.has("particle/mass") &&
        p.slice("particle/mass").rows == static_cast<Eigen::Index>(system.size()))
        return binding.get("particle/mass");
    return binding.tape().constant(column(system.masses));
}

Var attribute_var(ParamBinding& binding, const LearnedModel& model, const ParticleSystem& system,
                  const Var& positions, const Var& accel_prev, const Var& mass) {
    ad::Tape& tape = binding.tape();
    for (int m : system.material_ids)
        if (m < 0 || m >= model.n_materials)
            throw ConfigError("particle material " + std::to_string(m) + " is unknown to the model");
    Var templ = ad::gather(binding.get("material/templates"), system.material_ids);

    const int k = system.object_count();
    std::vector<double> empty(static_cast<std::size_t>(k), 1.0);
    for (int o : system.object_ids) empty[static_cast<std::size_t>(o)] = 0.0;
    Var weighted = ad::segment_sum(ad::mul(positions, mass), system.object_ids, k);
    Var total = ad::add(ad::segment_sum(mass, system.object_ids, k), tape.constant(column(empty)));
    Var centers = ad::div(weighted, total);
    Var d_o = ad::norm2(ad::sub(positions, ad::gather(centers, system.object_ids)));
    Var a_norm = ad::norm2(accel_prev);
    return ad::concat({templ, d_o, a_norm});
}

LearnedForces learned_forces(ParamBinding& binding, const LearnedModel& model,
                             const ParticleSystem& system, const InteractionGraph& g,
                             const ForceInputs& state, const Vec3& gravity) {
    ad::Tape& tape = binding.tape();
    const KernelConfig& cfg = model.config;
    const int n = static_cast<int>(system.size());
    const int ne = static_cast<int>(g.src.size());
    auto net = [&](int k, const std::string& name) {
        return binding.get(LearnedModel::kernel_prefix(k) + name);
    };
    auto mlp = [&](const std::string& name) {
        const LayerSpec s = model.spec(name);
        return [&binding, &net, s, name](int k, const Var& x) {
            return mlp_forward(net(k, name), x, s);
        };
    };

    std::vector<int> node_group(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        node_group[static_cast<std::size_t>(i)] =
            model.embed_map.at(static_cast<std::size_t>(system.material_ids[static_cast<std::size_t>(i)]));
    std::vector<int> edge_group(static_cast<std::size_t>(ne));
    for (int e = 0; e < ne; ++e) {
        const auto a = static_cast<std::size_t>(system.material_ids[static_cast<std::size_t>(g.src[static_cast<std::size_t>(e)])]);
        const auto b = static_cast<std::size_t>(system.material_ids[static_cast<std::size_t>(g.dst[static_cast<std::size_t>(e)])]);
        edge_group[static_cast<std::size_t>(e)] = model.pair_map.at(a).at(b);
    }

    LearnedForces out;
    out.mass = model_masses(binding, model, system);
    Var attrs = attribute_var(binding, model, system, state.positions, state.accel_prev, out.mass);
    out.embedding = grouped(attrs, node_group, [&](int k, const Var& x) {
        return ad::tanh(mlp_forward(net(k, "embed"), x, model.spec("embed")));
    });
    const Var& h = out.embedding;

    // Mechanical frame.
    Var xs = ad::gather(state.positions, g.src);
    Var xd = ad::gather(state.positions, g.dst);
    Var dist = ad::norm2(ad::sub(xd, xs));
    Var normal = ad::div(ad::sub(xd, xs), dist);
    Var radius = ad::gather(binding.get("material/radius"), system.material_ids);
    Var intrusion = ad::sub(ad::add(ad::gather(radius, g.src), ad::gather(radius, g.dst)), dist);
    Var v_rel = ad::sub(ad::gather(state.velocities, g.dst), ad::gather(state.velocities, g.src));
    Var v_n = ad::mul(normal, ad::sum_rows(ad::mul(v_rel, normal)));
    Var v_t = ad::sub(v_rel, v_n);
    Var v_n_mag = ad::norm2(v_n);
    Var v_t_mag = ad::norm2(v_t);
    std::vector<double> moving(static_cast<std::size_t>(ne), 0.0);
    for (int e = 0; e < ne; ++e)
        if (v_t_mag.value()(e, 0) > kTangentEpsilon) moving[static_cast<std::size_t>(e)] = 1.0;
    Var tangent = ad::mul(ad::div(v_t, v_t_mag), tape.constant(column(moving)));

    // Normal kernel.
    Var hs = ad::gather(h, g.src);
    Var hd = ad::gather(h, g.dst);
    Var e = grouped(intrusion, edge_group, mlp("phi_n/lift"));
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string tag = "." + std::to_string(l);
        Var in1 = ad::concat({e, hs, hd});
        Var temp = grouped(in1, edge_group, mlp("phi_n/psi1" + tag));
        e = grouped(ad::concat({e, temp}), edge_group, mlp("phi_n/psi2" + tag));
    }
    Var agg = mean_aggregate(e, g, n);
    out.node_features = grouped(ad::concat({agg, h}), node_group, [&](int k, const Var& x) {
        Var y = mlp_forward(net(k, "phi_n/psi3"), x, model.spec("phi_n/psi3"));
        return ad::layer_norm(y, net(k, "phi_n/norm_gain"), net(k, "phi_n/norm_bias"));
    });
    const Var& nf = out.node_features;
    Var ns = ad::gather(nf, g.src);
    Var nd = ad::gather(nf, g.dst);
    Var head_in = ad::concat({ns, nd, e});
    Var contact = ad::relu(grouped(head_in, edge_group, mlp("head_contact")));
    contact = symmetric(ad::scale(contact, cfg.force_scale), g, cfg.symmetrize_edges);
    Var bond;
    if (cfg.use_bond_head) {
        std::vector<double> same(static_cast<std::size_t>(ne));
        for (int k = 0; k < ne; ++k) same[static_cast<std::size_t>(k)] = g.same_object[static_cast<std::size_t>(k)] ? 1.0 : 0.0;
        bond = ad::mul(grouped(head_in, edge_group, mlp("head_bond")), tape.constant(column(same)));
        bond = symmetric(ad::scale(bond, cfg.force_scale), g, cfg.symmetrize_edges);
    } else {
        bond = tape.constant(Matrix::Zero(ne, 1));
    }
    out.contact = contact;
    out.bond = bond;
    out.normal_magnitude = ad::add(contact, bond);
    Var gate_n = ad::sigmoid(grouped(ad::concat({v_n_mag, e}), edge_group, mlp("gate_n")));
    out.normal_gate = symmetric(gate_n, g, cfg.symmetrize_edges);

    // Tangential kernel.
    Var node_s = ad::concat({ns, hs});
    Var node_d = ad::concat({nd, hd});
    Var et = e;
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string tag = "." + std::to_string(l);
        Var in1 = ad::concat({et, v_t_mag, out.normal_magnitude, node_s, node_d});
        Var temp = grouped(in1, edge_group, mlp("phi_t/psi1" + tag));
        et = grouped(ad::concat({et, temp}), edge_group, mlp("phi_t/psi2" + tag));
    }
    Var agg_t = mean_aggregate(et, g, n);
    Var ft = grouped(ad::concat({et, ad::gather(agg_t, g.src), ad::gather(agg_t, g.dst)}),
                     edge_group, mlp("phi_t/psi3"));
    out.tangential_magnitude = symmetric(ad::scale(ft, cfg.force_scale), g, cfg.symmetrize_edges);
    Var gate_t = ad::sigmoid(grouped(ad::concat({v_t_mag, et}), edge_group, mlp("gate_t")));
    out.tangential_gate = symmetric(gate_t, g, cfg.symmetrize_edges);
    out.edge_features = et;

    // Assembly: a positive normal magnitude pushes src away from dst.
    out.edge_normal = ad::neg(ad::mul(normal, ad::mul(out.normal_gate, out.normal_magnitude)));
    out.edge_tangential =
        ad::mul(tangent, ad::mul(out.tangential_gate, out.tangential_magnitude));
    Matrix gvec(1, 3);
    gvec << gravity.x(), gravity.y(), gravity.z();
    Var weight = ad::mul(out.mass, tape.constant(gvec));
    Var fn_sum = ad::segment_sum(out.edge_normal, g.src, n);
    Var ft_sum = ad::segment_sum(out.edge_tangential, g.src, n);
    out.normal_total = ad::add(fn_sum, weight);
    out.total = ad::add(ad::add(fn_sum, ft_sum), weight);
    return out;
}

namespace {

Matrix rows_of(const std::vector<Vec3>& v) {
    Matrix m(static_cast<Eigen::Index>(v.size()), 3);
    for (std::size_t i = 0; i < v.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = v[i].transpose();
    return m;
}

std::vector<Vec3> vecs_of(const Matrix& m) {
    std::vector<Vec3> v(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) v[static_cast<std::size_t>(i)] = m.row(i).transpose();
    return v;
}

} // namespace

ForceSet del_forces(const ParticleSystem& system, const InteractionGraph& graph,
                    LearnedModel& model, const Vec3& gravity) {
    ad::Tape tape;
    ParamBinding binding(tape, model.params, false);
    ForceInputs in{tape.constant(rows_of(system.positions)), tape.constant(rows_of(system.velocities)),
                   tape.constant(rows_of(system.accelerations_prev))};
    LearnedForces f = learned_forces(binding, model, system, graph, in, gravity);
    ForceSet out;
    out.edge_normal = vecs_of(f.edge_normal.value());
    out.edge_tangential = vecs_of(f.edge_tangential.value());
    out.total = vecs_of(f.total.value());
    out.gravity = gravity;
    return out;
}

// ---------------------------------------------------------------- checkpoints

namespace {

json spec_json(const LayerSpec& s) {
    return {{"widths", s.widths}, {"activation", to_string(s.activation)}, {"residual", s.residual}};
}

} // namespace

void save_checkpoint(const LearnedModel& model, const std::filesystem::path& dir,
                     bool include_optimizer) {
    namespace fs = std::filesystem;
    json j;
    j["format"] = "del-checkpoint";
    j["version"] = 1;
    const KernelConfig& c = model.config;
    j["kernel_config"] = {{"embedding_dim", c.embedding_dim},
                          {"edge_dim", c.edge_dim},
                          {"hidden", c.hidden},
                          {"layers", c.layers},
                          {"symmetrize_edges", c.symmetrize_edges},
                          {"use_bond_head", c.use_bond_head},
                          {"force_scale", c.force_scale},
                          {"activation", to_string(c.activation)}};
    j["n_materials"] = model.n_materials;
    j["kernel_count"] = model.kernel_count;
    j["embed_map"] = model.embed_map;
    j["pair_map"] = model.pair_map;
    json slices = json::array();
    for (const SliceInfo& s : model.params.slices())
        slices.push_back({{"name", s.name},
                          {"offset", s.offset},
                          {"rows", s.rows},
                          {"cols", s.cols},
                          {"trainable", s.trainable},
                          {"decay", s.decay}});
    j["slices"] = slices;
    json specs = json::object();
    for (auto& [name, s] : model.kernel_layout()) specs[name] = spec_json(s);
    j["layer_specs"] = specs;
    j["optimizer_state"] = include_optimizer;
    j["adam_step"] = model.params.adam_step;

    const fs::path tmp = detail::staging_dir(dir);
    detail::write_text(tmp / "manifest.json", j.dump(2) + "\n");
    const ParamStore& p = model.params;
    detail::write_f64(tmp / "params.bin", p.values.data(), p.size());
    if (include_optimizer) {
        detail::write_f64(tmp / "adam_m.bin", p.adam_m.data(), p.size());
        detail::write_f64(tmp / "adam_v.bin", p.adam_v.data(), p.size());
    }
    detail::commit_dir(tmp, dir);
}

LearnedModel load_checkpoint(const std::filesystem::path& dir) {
    LearnedModel m;
    try {
        const json j = json::parse(detail::read_text(dir / "manifest.json"));
        if (j.at("format") != "del-checkpoint") throw IoError("not a checkpoint: " + dir.string());
        const json& c = j.at("kernel_config");
        m.config.embedding_dim = c.at("embedding_dim");
        m.config.edge_dim = c.at("edge_dim");
        m.config.hidden = c.at("hidden");
        m.config.layers = c.at("layers");
        m.config.symmetrize_edges = c.at("symmetrize_edges");
        m.config.use_bond_head = c.at("use_bond_head");
        m.config.force_scale = c.at("force_scale");
        m.config.activation = activation_from_string(c.at("activation"));
        m.n_materials = j.at("n_materials");
        m.kernel_count = j.at("kernel_count");
        m.embed_map = j.at("embed_map").get<std::vector<int>>();
        m.pair_map = j.at("pair_map").get<std::vector<std::vector<int>>>();
        for (const json& s : j.at("slices")) {
            const Eigen::Index rows = s.at("rows");
            const Eigen::Index cols = s.at("cols");
            m.params.add(s.at("name"), Matrix::Zero(rows, cols), s.at("trainable"), s.at("decay"));
            if (m.params.slices().back().offset != s.at("offset").get<std::size_t>())
                throw IoError("slice offsets in " + dir.string() + " are inconsistent");
        }
        m.params.adam_step = j.at("adam_step");
        m.params.values = detail::read_f64(dir / "params.bin", m.params.size());
        if (j.at("optimizer_state").get<bool>()) {
            m.params.adam_m = detail::read_f64(dir / "adam_m.bin", m.params.size());
            m.params.adam_v = detail::read_f64(dir / "adam_v.bin", m.params.size());
        } else {
            m.params.reset_optimizer();
        }
    } catch (const json::exception& e) {
        throw IoError("malformed manifest in " + dir.string() + ": " + e.what());
    }
    m.params.zero_grad();
    m.validate();
    return m;
}

} // namespace del
