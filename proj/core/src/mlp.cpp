#include "del/mlp.hpp"

#include "del/errors.hpp"

#include <cmath>

namespace del {

using ad::Matrix;
using Eigen::Index;

std::size_t LayerSpec::param_count() const {
    std::size_t n = 0;
    for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
        n += static_cast<std::size_t>(widths[k]) * static_cast<std::size_t>(widths[k + 1]) +
             static_cast<std::size_t>(widths[k + 1]);
    }
    return n;
}

void LayerSpec::validate() const {
    if (widths.size() < 2) throw ConfigError("layer spec needs at least input and output widths");
    for (int w : widths) {
        if (w < 1) throw ConfigError("layer widths must be >= 1");
    }
    if (residual && in() < out()) throw ConfigError("residual MLP needs in >= out");
}

std::string to_string(Activation a) {
    switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
    }
    return "relu";
}

Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    if (s == "identity") return Activation::identity;
    throw ConfigError("unknown activation '" + s + "'");
}

void init_mlp(std::span<double> params, const LayerSpec& spec, std::mt19937_64& rng,
              bool zero_last_layer) {
    spec.validate();
    if (params.size() != spec.param_count()) throw ConfigError("MLP parameter slice has wrong length");
    std::size_t at = 0;
    for (int k = 0; k < spec.layers(); ++k) {
        const auto fan_in = static_cast<std::size_t>(spec.widths[static_cast<std::size_t>(k)]);
        const auto fan_out = static_cast<std::size_t>(spec.widths[static_cast<std::size_t>(k) + 1]);
        const std::size_t count = fan_in * fan_out + fan_out;
        const bool zero = zero_last_layer && k + 1 == spec.layers();
        const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (std::size_t i = 0; i < count; ++i) params[at + i] = zero ? 0.0 : dist(rng);
        at += count;
    }
}

namespace {

void activate(Matrix& a, Activation act) {
    switch (act) {
    case Activation::relu: a = a.cwiseMax(0.0); break;
    case Activation::tanh: a = a.array().tanh().matrix(); break;
    case Activation::identity: break;
    }
}

// g <- g * act'(.) expressed through the activation output y.
void activate_backward(Matrix& g, const Matrix& y, Activation act) {
    switch (act) {
    case Activation::relu: g.array() *= (y.array() > 0.0).cast<double>(); break;
    case Activation::tanh: g.array() *= 1.0 - y.array().square(); break;
    case Activation::identity: break;
    }
}

using ConstMap = Eigen::Map<const Matrix>;
using ConstRowMap = Eigen::Map<const Eigen::RowVectorXd>;

} // namespace

ad::Var mlp_forward(const ad::Var& params, const ad::Var& input, const LayerSpec& spec) {
    spec.validate();
    const Matrix& p = params.value();
    if (static_cast<std::size_t>(p.size()) != spec.param_count()) {
        throw ConfigError("MLP parameter slice length " + std::to_string(p.size()) +
                          " does not match layer spec (" + std::to_string(spec.param_count()) + ")");
    }
    if (input.cols() != spec.in()) {
        throw ConfigError("MLP input width " + std::to_string(input.cols()) + " != " +
                          std::to_string(spec.in()));
    }

    // hidden[k] is the output of layer k (k < layers - 1), post-activation.
    std::vector<Matrix> hidden;
    hidden.reserve(static_cast<std::size_t>(spec.layers()));
    Matrix out;
    std::size_t at = 0;
    for (int k = 0; k < spec.layers(); ++k) {
        const Index fi = spec.widths[static_cast<std::size_t>(k)];
        const Index fo = spec.widths[static_cast<std::size_t>(k) + 1];
        const ConstMap w(p.data() + at, fi, fo);
        const ConstRowMap b(p.data() + at + static_cast<std::size_t>(fi * fo), fo);
        at += static_cast<std::size_t>(fi * fo + fo);
        const Matrix& x = k == 0 ? input.value() : hidden.back();
        Matrix a = x * w;
        a.rowwise() += b;
        if (k + 1 < spec.layers()) {
            activate(a, spec.activation);
            hidden.push_back(std::move(a));
        } else {
            out = std::move(a);
        }
    }
    if (spec.residual) out += input.value().leftCols(spec.out());

    return params.tape().record(
        std::move(out), {params, input},
        [params, input, spec, hidden = std::move(hidden)](ad::Tape& t, int, const Matrix& g) {
            const Matrix& p = params.value();
            const bool want_p = params.requires_grad();
            const bool want_x = input.requires_grad();
            Matrix gp = want_p ? Matrix(Matrix::Zero(p.rows(), p.cols())) : Matrix();

            std::vector<std::size_t> offsets;
            std::size_t at = 0;
            for (int k = 0; k < spec.layers(); ++k) {
                offsets.push_back(at);
                const auto fi = static_cast<std::size_t>(spec.widths[static_cast<std::size_t>(k)]);
                const auto fo = static_cast<std::size_t>(spec.widths[static_cast<std::size_t>(k) + 1]);
                at += fi * fo + fo;
            }

            Matrix ga = g;
            for (int k = spec.layers() - 1; k >= 0; --k) {
                const auto uk = static_cast<std::size_t>(k);
                const Index fi = spec.widths[uk];
                const Index fo = spec.widths[uk + 1];
                const Matrix& x = k == 0 ? input.value() : hidden[uk - 1];
                const ConstMap w(p.data() + offsets[uk], fi, fo);
                if (want_p) {
                    Eigen::Map<Matrix> gw(gp.data() + offsets[uk], fi, fo);
                    Eigen::Map<Eigen::RowVectorXd> gb(gp.data() + offsets[uk] + static_cast<std::size_t>(fi * fo), fo);
                    gw.noalias() = x.transpose() * ga;
                    gb = ga.colwise().sum();
                }
                if (k == 0 && !want_x) break;
                Matrix gx = ga * w.transpose();
                if (k > 0) activate_backward(gx, hidden[uk - 1], spec.activation);
                ga = std::move(gx);
            }
            if (want_p) t.accumulate(params, gp);
            if (want_x) {
                if (spec.residual) ga.leftCols(spec.out()) += g;
                t.accumulate(input, ga);
            }
        });
}

} // namespace del
