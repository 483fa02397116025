#include "del/gradcheck.hpp"

#include "del/errors.hpp"
#include "del/integrator.hpp"
#include "del/kernels.hpp"
#include "del/mlp.hpp"
#include "del/ops.hpp"
#include "del/render.hpp"
#include "del/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace del {

using ad::Matrix;
using ad::Tape;
using ad::Var;

double relative_error(const Matrix& analytic, const Matrix& numeric) {
    if (analytic.rows() != numeric.rows() || analytic.cols() != numeric.cols())
        throw ConfigError("gradient shapes differ");
    if (numeric.size() == 0) return 0.0;
    const double scale = std::max({analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff(), 1e-10});
    return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

Matrix numeric_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x, double h) {
    Matrix g(x.rows(), x.cols());
    Matrix xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double old = xp.data()[i];
        xp.data()[i] = old + h;
        const double fp = f(xp);
        xp.data()[i] = old - h;
        const double fm = f(xp);
        xp.data()[i] = old;
        g.data()[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

namespace {

using Rng = std::mt19937_64;
using Builder = std::function<Var(const std::vector<Var>&)>;

Matrix uniform(Rng& rng, Eigen::Index r, Eigen::Index c, double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
    return m;
}

/// Values bounded away from zero: magnitude in [lo, hi], random sign.
Matrix away_from_zero(Rng& rng, Eigen::Index r, Eigen::Index c, double lo, double hi) {
    Matrix m = uniform(rng, r, c, lo, hi);
    std::bernoulli_distribution flip(0.5);
    for (Eigen::Index i = 0; i < m.size(); ++i)
        if (flip(rng)) m.data()[i] = -m.data()[i];
    return m;
}

int randint(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

/// Max relative error of d(sum(W * op(inputs)))/d(inputs) over every input.
double check(const Builder& op, const std::vector<Matrix>& inputs, Rng& rng) {
    Matrix weights;
    auto eval = [&](const std::vector<Matrix>& xs, std::vector<Matrix>* grads) {
        Tape t;
        std::vector<Var> vars;
        for (const Matrix& x : xs) vars.push_back(grads ? t.leaf(x) : t.constant(x));
        Var out = op(vars);
        if (weights.size() == 0) weights = uniform(rng, out.rows(), out.cols(), -1.0, 1.0);
        Var loss = ad::sum(ad::mul(out, t.constant(weights)));
        if (grads) {
            t.backward(loss);
            for (const Var& v : vars)
                grads->push_back(v.grad().size() ? v.grad() : Matrix(Matrix::Zero(v.rows(), v.cols())));
        }
        return loss.item();
    };
    std::vector<Matrix> analytic;
    eval(inputs, &analytic);
    double worst = 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        std::vector<Matrix> xs = inputs;
        const Matrix num = numeric_gradient(
            [&](const Matrix& x) {
                xs[k] = x;
                return eval(xs, nullptr);
            },
            inputs[k]);
        worst = std::max(worst, relative_error(analytic[k], num));
    }
    return worst;
}

struct Primitive {
    const char* name;
    std::function<std::pair<Builder, std::vector<Matrix>>(Rng&)> make;
};

/// Second operand shape for broadcasting tests.
std::pair<Eigen::Index, Eigen::Index> partner_shape(Rng& rng, Eigen::Index r, Eigen::Index c) {
    switch (randint(rng, 0, 3)) {
    case 0: return {r, 1};
    case 1: return {1, c};
    case 2: return {1, 1};
    default: return {r, c};
    }
}

std::vector<Primitive> primitives() {
    using P = std::pair<Builder, std::vector<Matrix>>;
    auto binary = [](const char* name, Var (*f)(const Var&, const Var&), double lo, double hi, bool away) {
        return Primitive{name, [=](Rng& rng) -> P {
                             const int r = randint(rng, 1, 4), c = randint(rng, 1, 4);
                             auto [r2, c2] = partner_shape(rng, r, c);
                             Matrix a = uniform(rng, r, c, -2.0, 2.0);
                             Matrix b = away ? away_from_zero(rng, r2, c2, lo, hi) : uniform(rng, r2, c2, lo, hi);
                             if (randint(rng, 0, 1)) std::swap(a, b);
                             if (away && b.rows() * b.cols() > a.rows() * a.cols()) std::swap(a, b);
                             if (away) b = away_from_zero(rng, b.rows(), b.cols(), lo, hi);
                             return {[f](const std::vector<Var>& v) { return f(v[0], v[1]); }, {a, b}};
                         }};
    };
    auto unary = [](const char* name, Var (*f)(const Var&), double lo, double hi, bool away) {
        return Primitive{name, [=](Rng& rng) -> P {
                             const int r = randint(rng, 1, 4), c = randint(rng, 1, 4);
                             Matrix a = away ? away_from_zero(rng, r, c, lo, hi) : uniform(rng, r, c, lo, hi);
                             return {[f](const std::vector<Var>& v) { return f(v[0]); }, {a}};
                         }};
    };
    auto minmax = [](const char* name, Var (*f)(const Var&, const Var&)) {
        return Primitive{name, [=](Rng& rng) -> P {
                             const int r = randint(rng, 1, 4), c = randint(rng, 1, 4);
                             Matrix a = uniform(rng, r, c, -2.0, 2.0);
                             Matrix gap = away_from_zero(rng, r, c, 0.01, 1.0);
                             Matrix b = a + gap;
                             return {[f](const std::vector<Var>& v) { return f(v[0], v[1]); }, {a, b}};
                         }};
    };
    std::vector<Primitive> out{
        binary("add", &ad::add, -2.0, 2.0, false),
        binary("sub", &ad::sub, -2.0, 2.0, false),
        binary("mul", &ad::mul, -2.0, 2.0, false),
        binary("div", &ad::div, 0.5, 2.0, true),
        minmax("minimum", &ad::minimum),
        minmax("maximum", &ad::maximum),
        unary("neg", &ad::neg, -2.0, 2.0, false),
        unary("relu", &ad::relu, 0.01, 2.0, true),
        unary("sigmoid", &ad::sigmoid, -3.0, 3.0, false),
        unary("tanh", &ad::tanh, -2.0, 2.0, false),
        unary("sqrt", &ad::sqrt, 0.1, 2.0, false),
        unary("square", &ad::square, -2.0, 2.0, false),
        unary("exp", &ad::exp, -2.0, 2.0, false),
        unary("abs", &ad::abs, 0.01, 2.0, true),
        unary("sum", &ad::sum, -2.0, 2.0, false),
        unary("sum_rows", &ad::sum_rows, -2.0, 2.0, false),
        unary("sum_cols", &ad::sum_cols, -2.0, 2.0, false),
        unary("norm2", &ad::norm2, -2.0, 2.0, false),
    };
    out.push_back({"scale", [](Rng& rng) -> P {
                       const double c = uniform(rng, 1, 1, -3.0, 3.0)(0, 0);
                       return {[c](const std::vector<Var>& v) { return ad::scale(v[0], c); },
                               {uniform(rng, randint(rng, 1, 4), randint(rng, 1, 4), -2.0, 2.0)}};
                   }});
    out.push_back({"add_scalar", [](Rng& rng) -> P {
                       const double c = uniform(rng, 1, 1, -3.0, 3.0)(0, 0);
                       return {[c](const std::vector<Var>& v) { return ad::add_scalar(v[0], c); },
                               {uniform(rng, randint(rng, 1, 4), randint(rng, 1, 4), -2.0, 2.0)}};
                   }});
    out.push_back({"matmul", [](Rng& rng) -> P {
                       const int r = randint(rng, 1, 4), k = randint(rng, 1, 4), c = randint(rng, 1, 4);
                       return {[](const std::vector<Var>& v) { return ad::matmul(v[0], v[1]); },
                               {uniform(rng, r, k, -2.0, 2.0), uniform(rng, k, c, -2.0, 2.0)}};
                   }});
    out.push_back({"segment_sum", [](Rng& rng) -> P {
                       const int r = randint(rng, 1, 6), c = randint(rng, 1, 3), s = randint(rng, 1, 4);
                       std::vector<int> idx(static_cast<std::size_t>(r));
                       for (int& i : idx) i = randint(rng, 0, s - 1);
                       return {[idx, s](const std::vector<Var>& v) { return ad::segment_sum(v[0], idx, s); },
                               {uniform(rng, r, c, -2.0, 2.0)}};
                   }});
    out.push_back({"gather", [](Rng& rng) -> P {
                       const int r = randint(rng, 1, 4), c = randint(rng, 1, 3), k = randint(rng, 1, 6);
                       std::vector<int> idx(static_cast<std::size_t>(k));
                       for (int& i : idx) i = randint(rng, 0, r - 1);
                       return {[idx](const std::vector<Var>& v) { return ad::gather(v[0], idx); },
                               {uniform(rng, r, c, -2.0, 2.0)}};
                   }});
    out.push_back({"concat", [](Rng& rng) -> P {
                       const int r = randint(rng, 1, 4);
                       return {[](const std::vector<Var>& v) { return ad::concat(v); },
                               {uniform(rng, r, randint(rng, 1, 3), -2.0, 2.0),
                                uniform(rng, r, randint(rng, 1, 3), -2.0, 2.0),
                                uniform(rng, r, randint(rng, 1, 3), -2.0, 2.0)}};
                   }});
    out.push_back({"slice", [](Rng& rng) -> P {
                       const int r = randint(rng, 1, 4), c = randint(rng, 1, 5);
                       const int at = randint(rng, 0, c - 1), n = randint(rng, 1, c - at);
                       return {[at, n](const std::vector<Var>& v) { return ad::slice(v[0], at, n); },
                               {uniform(rng, r, c, -2.0, 2.0)}};
                   }});
    out.push_back({"broadcast", [](Rng& rng) -> P {
                       const int r = randint(rng, 1, 4), c = randint(rng, 1, 4);
                       auto [r0, c0] = partner_shape(rng, r, c);
                       return {[r, c](const std::vector<Var>& v) { return ad::broadcast(v[0], r, c); },
                               {uniform(rng, r0, c0, -2.0, 2.0)}};
                   }});
    out.push_back({"layer_norm", [](Rng& rng) -> P {
                       const int r = randint(rng, 1, 4), c = randint(rng, 3, 5);
                       Matrix x = uniform(rng, r, c, -2.0, 2.0);
                       // rows with near-zero spread sit in the eps-dominated regime
                       for (Eigen::Index i = 0; i < r; ++i)
                           while ((x.row(i).array() - x.row(i).mean()).square().mean() < 0.1)
                               x.row(i) = uniform(rng, 1, c, -2.0, 2.0);
                       return {[](const std::vector<Var>& v) { return ad::layer_norm(v[0], v[1], v[2]); },
                               {x, uniform(rng, 1, c, 0.5, 1.5),
                                uniform(rng, 1, c, -0.5, 0.5)}};
                   }});
    out.push_back({"mlp_forward", [](Rng& rng) -> P {
                       LayerSpec spec;
                       const int in = randint(rng, 1, 5);
                       spec.widths = {in};
                       for (int k = randint(rng, 1, 3); k > 0; --k) spec.widths.push_back(randint(rng, 1, 5));
                       spec.activation = Activation::tanh;  // smooth, no kinks near random inputs
                       spec.residual = spec.out() <= in && randint(rng, 0, 1);
                       const auto p = static_cast<Eigen::Index>(spec.param_count());
                       return {[spec](const std::vector<Var>& v) { return mlp_forward(v[0], v[1], spec); },
                               {uniform(rng, 1, p, -1.0, 1.0), uniform(rng, randint(rng, 1, 4), in, -1.0, 1.0)}};
                   }});
    out.push_back({"composite", [](Rng& rng) -> P {
                       const int r = randint(rng, 1, 4), c = randint(rng, 2, 4);
                       return {[](const std::vector<Var>& v) {
                                   Var h = ad::tanh(ad::matmul(v[0], v[1]));
                                   h = ad::sigmoid(ad::add(h, v[2]));
                                   h = ad::mul(h, ad::exp(ad::scale(h, 0.5)));
                                   h = ad::div(h, ad::add_scalar(ad::square(h), 1.0));
                                   return ad::matmul(ad::concat({h, ad::norm2(h)}), v[3]);
                               },
                               {uniform(rng, r, c, -1.0, 1.0), uniform(rng, c, c, -1.0, 1.0),
                                uniform(rng, 1, c, -1.0, 1.0), uniform(rng, c + 1, 2, -1.0, 1.0)}};
                   }});
    return out;
}

// ------------------------------------------------------------------ systems

ParticleSystem random_system(Rng& rng, int n, double box, double search_radius) {
    for (;;) {
        ParticleSystem s;
        std::uniform_real_distribution<double> pos(0.0, box), vel(-1.0, 1.0);
        for (int i = 0; i < n; ++i) {
            s.add(Vec3(pos(rng), pos(rng), pos(rng)), 1.0, 0.01, i % 2, i < n / 2 ? 0 : 1);
            s.velocities.back() = Vec3(vel(rng), vel(rng), vel(rng));
            s.accelerations_prev.back() = Vec3(vel(rng), vel(rng), vel(rng));
        }
        bool ok = true;
        int edges = 0;
        for (int i = 0; i < n && ok; ++i)
            for (int j = i + 1; j < n && ok; ++j) {
                const auto a = static_cast<std::size_t>(i), b = static_cast<std::size_t>(j);
                const Vec3 dx = s.positions[b] - s.positions[a];
                const Vec3 dv = s.velocities[b] - s.velocities[a];
                const double d = dx.norm();
                const double vn = dv.dot(dx) / d;
                // |v_n| and |v_t| have kinks at zero
                ok = std::abs(d - search_radius) > 1e-3 && d > 2e-3 && std::abs(vn) > 0.05 &&
                     (dv - vn * dx / d).norm() > 0.05;
                edges += d <= search_radius;
            }
        if (ok && edges >= n / 2) return s;
    }
}

LearnedModel random_model(Rng& rng, int n_particles, double search_radius) {
    KernelConfig cfg;
    cfg.embedding_dim = 5;
    cfg.edge_dim = 4;
    cfg.hidden = 6;
    cfg.layers = 2;
    cfg.activation = Activation::tanh;
    LearnedModel m = LearnedModel::create(cfg, 2, static_cast<std::size_t>(n_particles), search_radius, rng());
    // Move every weight (including zero-initialized gate layers) off its init.
    for (const SliceInfo& s : m.params.slices()) {
        auto v = m.params.view(s.name);
        if (s.name == "material/templates") continue;
        if (s.name == "material/radius") v = uniform(rng, v.rows(), v.cols(), 0.012, 0.02);
        else if (s.name == "particle/mass") v = uniform(rng, v.rows(), v.cols(), 0.8, 1.2);
        else v += uniform(rng, v.rows(), v.cols(), -0.3, 0.3);
    }
    return m;
}

Matrix rows_of(const std::vector<Vec3>& v) {
    Matrix m(static_cast<Eigen::Index>(v.size()), 3);
    for (std::size_t i = 0; i < v.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = v[i].transpose();
    return m;
}

/// Gradient of a scalar of the model w.r.t. `count` random parameter entries.
double check_params(LearnedModel& model, int count, Rng& rng,
                    const std::function<Var(Tape&, ParamBinding&)>& loss) {
    Tape t;
    ParamBinding b(t, model.params);
    Var l = loss(t, b);
    t.backward(l);
    model.params.zero_grad();
    b.accumulate_grads();
    const Eigen::VectorXd analytic_all = model.params.grads;
    std::vector<Eigen::Index> trainable;
    for (const SliceInfo& s : model.params.slices())
        if (s.trainable)
            for (std::size_t k = 0; k < s.size(); ++k) trainable.push_back(static_cast<Eigen::Index>(s.offset + k));
    std::shuffle(trainable.begin(), trainable.end(), rng);
    trainable.resize(std::min<std::size_t>(trainable.size(), static_cast<std::size_t>(count)));
    Matrix analytic(1, static_cast<Eigen::Index>(trainable.size())), numeric = analytic;
    const double h = kFiniteDifferenceStep;
    for (std::size_t k = 0; k < trainable.size(); ++k) {
        const Eigen::Index i = trainable[k];
        analytic(0, static_cast<Eigen::Index>(k)) = analytic_all[i];
        auto eval = [&]() {
            Tape t2;
            ParamBinding b2(t2, model.params, false);
            return loss(t2, b2).item();
        };
        const double old = model.params.values[i];
        model.params.values[i] = old + h;
        const double fp = eval();
        model.params.values[i] = old - h;
        const double fm = eval();
        model.params.values[i] = old;
        numeric(0, static_cast<Eigen::Index>(k)) = (fp - fm) / (2.0 * h);
    }
    model.params.zero_grad();
    return relative_error(analytic, numeric);
}

std::vector<GradcheckResult> suite_primitives(Rng& rng) {
    std::vector<GradcheckResult> out;
    for (const Primitive& p : primitives()) {
        GradcheckResult r{"primitives", p.name, 0, 0.0, 1e-6};
        for (int k = 0; k < 200; ++k) {
            auto [op, inputs] = p.make(rng);
            r.max_rel_error = std::max(r.max_rel_error, check(op, inputs, rng));
            ++r.instances;
        }
        out.push_back(r);
    }
    return out;
}

std::vector<GradcheckResult> suite_kernels(Rng& rng) {
    const double radius = 0.025;
    GradcheckResult state{"kernels", "state", 0, 0.0, 1e-4};
    GradcheckResult params{"kernels", "params", 0, 0.0, 1e-4};
    for (int inst = 0; inst < 10; ++inst) {
        const ParticleSystem sys = random_system(rng, 10, 0.05, radius);
        LearnedModel model = random_model(rng, 10, radius);
        const InteractionGraph g = build_graph_hash(sys, radius);
        const Vec3 gravity(0.0, 0.0, -9.81);
        const Matrix w = uniform(rng, 10, 3, -1.0, 1.0);
        const Matrix we = uniform(rng, static_cast<Eigen::Index>(g.size()), 3, -1.0, 1.0);
        auto forward = [&](Tape& t, ParamBinding& b, const Var& x, const Var& v, const Var& a) {
            LearnedForces f = learned_forces(b, model, sys, g, {x, v, a}, gravity);
            return ad::add(ad::sum(ad::mul(f.total, t.constant(w))),
                           ad::sum(ad::mul(ad::add(f.edge_normal, f.edge_tangential), t.constant(we))));
        };
        // Positions, velocities and previous accelerations.
        const std::vector<Matrix> inputs{rows_of(sys.positions), rows_of(sys.velocities),
                                         rows_of(sys.accelerations_prev)};
        state.max_rel_error = std::max(
            state.max_rel_error,
            check([&](const std::vector<Var>& v) {
                Tape& t = v[0].tape();
                ParamBinding b(t, model.params, false);
                return forward(t, b, v[0], v[1], v[2]);
            }, inputs, rng));
        ++state.instances;
        params.max_rel_error = std::max(params.max_rel_error, check_params(model, 150, rng, [&](Tape& t, ParamBinding& b) {
            return forward(t, b, t.constant(inputs[0]), t.constant(inputs[1]), t.constant(inputs[2]));
        }));
        ++params.instances;
    }
    return {state, params};
}

GradcheckResult suite_render(Rng& rng) {
    GradcheckResult r{"render", "positions", 0, 0.0, 1e-4};
    for (int inst = 0; inst < 20; ++inst) {
        const CameraView cam = CameraView::look_at(Vec3(0.4, 0.3, 0.25), Vec3::Zero(), Vec3::UnitZ(), 40.0, 32, 32);
        const int n = randint(rng, 1, 6);
        std::vector<Vec3> colors;
        Matrix x(n, 3);
        for (int i = 0; i < n; ++i) {
            x.row(i) = uniform(rng, 1, 3, -0.04, 0.04);
            colors.push_back(uniform(rng, 3, 1, 0.2, 1.0));
        }
        SplatConfig cfg;
        cfg.sigma_px = uniform(rng, 1, 1, 1.0, 2.5)(0, 0);
        r.max_rel_error = std::max(
            r.max_rel_error,
            check([&](const std::vector<Var>& v) { return splat_var(v[0], colors, cam, cfg); }, {x}, rng));
        ++r.instances;
    }
    return r;
}

GradcheckResult suite_rollout(Rng& rng) {
    GradcheckResult r{"rollout", "kernel weights", 0, 0.0, 1e-4};
    const double radius = 0.025;
    for (int inst = 0; inst < 5; ++inst) {
        ParticleSystem sys = random_system(rng, 10, 0.05, radius);
        for (Vec3& v : sys.velocities) v *= 0.1;
        LearnedModel model = random_model(rng, 10, radius);
        StepConfig cfg;
        cfg.dt = kDefaultTimeStep;
        cfg.search_radius = radius;
        const Matrix w = uniform(rng, 10, 3, -1.0, 1.0);
        r.max_rel_error = std::max(r.max_rel_error, check_params(model, 40, rng, [&](Tape& t, ParamBinding& b) {
            TapeState s = tape_state(t, sys);
            for (int k = 0; k < 3; ++k) s = learned_step(b, model, sys, s, cfg, cfg.dt);
            return ad::sum(ad::mul(s.positions, t.constant(w)));
        }));
        ++r.instances;
    }
    return r;
}

} // namespace

std::vector<GradcheckResult> run_gradcheck(const std::string& module, std::uint64_t seed) {
    static const std::vector<std::string> known{"all", "primitives", "kernels", "render", "rollout"};
    if (std::find(known.begin(), known.end(), module) == known.end())
        throw ConfigError("unknown gradcheck module '" + module + "'");
    Rng rng(seed);
    std::vector<GradcheckResult> out;
    const bool all = module == "all";
    if (all || module == "primitives")
        for (const GradcheckResult& r : suite_primitives(rng)) out.push_back(r);
    if (all || module == "kernels")
        for (const GradcheckResult& r : suite_kernels(rng)) out.push_back(r);
    if (all || module == "render") out.push_back(suite_render(rng));
    if (all || module == "rollout") out.push_back(suite_rollout(rng));
    return out;
}

} // namespace del
