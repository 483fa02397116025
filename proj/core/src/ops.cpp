#include "del/ops.hpp"

#include "del/errors.hpp"

#include <cmath>
#include <string>

namespace del::ad {

namespace {

using Eigen::Index;

std::string shape_str(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

Index broadcast_dim(Index a, Index b, const Matrix& ma, const Matrix& mb) {
    if (a == b) return a;
    if (a == 1) return b;
    if (b == 1) return a;
    throw ConfigError("shape mismatch: " + shape_str(ma) + " vs " + shape_str(mb));
}

Matrix expand(const Matrix& m, Index rows, Index cols) {
    if (m.rows() == rows && m.cols() == cols) return m;
    if (rows == 0 || cols == 0) return Matrix(rows, cols);
    return m.replicate(rows / m.rows(), cols / m.cols());
}

Matrix reduce_to(const Matrix& g, Index rows, Index cols) {
    if (g.rows() == rows && g.cols() == cols) return g;
    if (rows == 1 && cols == 1) return Matrix::Constant(1, 1, g.sum());
    if (rows == 1) return g.colwise().sum();
    return g.rowwise().sum();
}

template <typename Fwd, typename Bwd>
Var binary(const Var& a, const Var& b, Fwd fwd, Bwd bwd) {
    const Matrix& va = a.value();
    const Matrix& vb = b.value();
    const Index r = broadcast_dim(va.rows(), vb.rows(), va, vb);
    const Index c = broadcast_dim(va.cols(), vb.cols(), va, vb);
    const bool same = va.rows() == vb.rows() && va.cols() == vb.cols();
    Matrix out = same ? Matrix(fwd(va.array(), vb.array()))
                      : Matrix(fwd(expand(va, r, c).array(), expand(vb, r, c).array()));
    return a.tape().record(std::move(out), {a, b},
                           [a, b, r, c, bwd](Tape& t, int, const Matrix& g) {
                               const Matrix ea = expand(a.value(), r, c);
                               const Matrix eb = expand(b.value(), r, c);
                               Matrix ga, gb;
                               bwd(g.array(), ea.array(), eb.array(), a.requires_grad(),
                                   b.requires_grad(), ga, gb);
                               if (a.requires_grad()) t.accumulate(a, reduce_to(ga, a.rows(), a.cols()));
                               if (b.requires_grad()) t.accumulate(b, reduce_to(gb, b.rows(), b.cols()));
                           });
}

template <typename Fwd, typename Bwd>
Var unary(const Var& a, Fwd fwd, Bwd bwd) {
    Matrix out = fwd(a.value().array());
    return a.tape().record(std::move(out), {a}, [a, bwd](Tape& t, int self, const Matrix& g) {
        t.accumulate(a, Matrix(bwd(g.array(), a.value().array(), t.value(self).array())));
    });
}

} // namespace

Var add(const Var& a, const Var& b) {
    return binary(
        a, b, [](const auto& x, const auto& y) { return x + y; },
        [](const auto& g, const auto&, const auto&, bool na, bool nb, Matrix& ga, Matrix& gb) {
            if (na) ga = g;
            if (nb) gb = g;
        });
}

Var sub(const Var& a, const Var& b) {
    return binary(
        a, b, [](const auto& x, const auto& y) { return x - y; },
        [](const auto& g, const auto&, const auto&, bool na, bool nb, Matrix& ga, Matrix& gb) {
            if (na) ga = g;
            if (nb) gb = -g;
        });
}

Var mul(const Var& a, const Var& b) {
    return binary(
        a, b, [](const auto& x, const auto& y) { return x * y; },
        [](const auto& g, const auto& x, const auto& y, bool na, bool nb, Matrix& ga, Matrix& gb) {
            if (na) ga = g * y;
            if (nb) gb = g * x;
        });
}

Var div(const Var& a, const Var& b) {
    return binary(
        a, b, [](const auto& x, const auto& y) { return x / y; },
        [](const auto& g, const auto& x, const auto& y, bool na, bool nb, Matrix& ga, Matrix& gb) {
            if (na) ga = g / y;
            if (nb) gb = -g * x / y.square();
        });
}

Var minimum(const Var& a, const Var& b) {
    return binary(
        a, b, [](const auto& x, const auto& y) { return x.min(y); },
        [](const auto& g, const auto& x, const auto& y, bool na, bool nb, Matrix& ga, Matrix& gb) {
            const auto pick_a = (x <= y).template cast<double>();
            if (na) ga = g * pick_a;
            if (nb) gb = g * (1.0 - pick_a);
        });
}

Var maximum(const Var& a, const Var& b) {
    return binary(
        a, b, [](const auto& x, const auto& y) { return x.max(y); },
        [](const auto& g, const auto& x, const auto& y, bool na, bool nb, Matrix& ga, Matrix& gb) {
            const auto pick_a = (x >= y).template cast<double>();
            if (na) ga = g * pick_a;
            if (nb) gb = g * (1.0 - pick_a);
        });
}

Var neg(const Var& a) {
    return unary(
        a, [](const auto& x) { return Matrix(-x); },
        [](const auto& g, const auto&, const auto&) { return -g; });
}

Var scale(const Var& a, double c) {
    return unary(
        a, [c](const auto& x) { return Matrix(x * c); },
        [c](const auto& g, const auto&, const auto&) { return g * c; });
}

Var add_scalar(const Var& a, double c) {
    return unary(
        a, [c](const auto& x) { return Matrix(x + c); },
        [](const auto& g, const auto&, const auto&) { return g; });
}

Var relu(const Var& a) {
    return unary(
        a, [](const auto& x) { return Matrix(x.max(0.0)); },
        [](const auto& g, const auto& x, const auto&) { return g * (x > 0.0).template cast<double>(); });
}

Var sigmoid(const Var& a) {
    return unary(
        a, [](const auto& x) { return Matrix(1.0 / (1.0 + (-x).exp())); },
        [](const auto& g, const auto&, const auto& y) { return g * y * (1.0 - y); });
}

Var tanh(const Var& a) {
    return unary(
        a, [](const auto& x) { return Matrix(x.tanh()); },
        [](const auto& g, const auto&, const auto& y) { return g * (1.0 - y.square()); });
}

Var sqrt(const Var& a) {
    return unary(
        a, [](const auto& x) { return Matrix(x.sqrt()); },
        [](const auto& g, const auto&, const auto& y) { return g * 0.5 / y; });
}

Var square(const Var& a) {
    return unary(
        a, [](const auto& x) { return Matrix(x.square()); },
        [](const auto& g, const auto& x, const auto&) { return g * 2.0 * x; });
}

Var exp(const Var& a) {
    return unary(
        a, [](const auto& x) { return Matrix(x.exp()); },
        [](const auto& g, const auto&, const auto& y) { return g * y; });
}

Var abs(const Var& a) {
    return unary(
        a, [](const auto& x) { return Matrix(x.abs()); },
        [](const auto& g, const auto& x, const auto&) { return g * x.sign(); });
}

Var matmul(const Var& a, const Var& b) {
    if (a.cols() != b.rows()) {
        throw ConfigError("matmul shape mismatch: " + shape_str(a.value()) + " * " + shape_str(b.value()));
    }
    Matrix out = a.value() * b.value();
    return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, int, const Matrix& g) {
        if (a.requires_grad()) t.accumulate(a, g * b.value().transpose());
        if (b.requires_grad()) t.accumulate(b, a.value().transpose() * g);
    });
}

Var sum(const Var& a) {
    Matrix out = Matrix::Constant(1, 1, a.value().sum());
    return a.tape().record(std::move(out), {a}, [a](Tape& t, int, const Matrix& g) {
        t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
    });
}

Var sum_rows(const Var& a) {
    Matrix out = a.value().rowwise().sum();
    return a.tape().record(std::move(out), {a}, [a](Tape& t, int, const Matrix& g) {
        t.accumulate(a, g.replicate(1, a.cols()));
    });
}

Var sum_cols(const Var& a) {
    Matrix out = a.value().colwise().sum();
    return a.tape().record(std::move(out), {a}, [a](Tape& t, int, const Matrix& g) {
        t.accumulate(a, g.replicate(a.rows(), 1));
    });
}

Var segment_sum(const Var& a, const std::vector<int>& index, int segments) {
    const Matrix& v = a.value();
    if (static_cast<Index>(index.size()) != v.rows()) throw ConfigError("segment_sum index length mismatch");
    Matrix out = Matrix::Zero(segments, v.cols());
    for (std::size_t r = 0; r < index.size(); ++r) {
        if (index[r] < 0 || index[r] >= segments) throw ConfigError("segment_sum index out of range");
        out.row(index[r]) += v.row(static_cast<Index>(r));
    }
    return a.tape().record(std::move(out), {a}, [a, index](Tape& t, int, const Matrix& g) {
        Matrix ga(static_cast<Index>(index.size()), g.cols());
        for (std::size_t r = 0; r < index.size(); ++r) ga.row(static_cast<Index>(r)) = g.row(index[r]);
        t.accumulate(a, ga);
    });
}

Var gather(const Var& a, const std::vector<int>& index) {
    const Matrix& v = a.value();
    Matrix out(static_cast<Index>(index.size()), v.cols());
    for (std::size_t r = 0; r < index.size(); ++r) {
        if (index[r] < 0 || index[r] >= v.rows()) throw ConfigError("gather index out of range");
        out.row(static_cast<Index>(r)) = v.row(index[r]);
    }
    return a.tape().record(std::move(out), {a}, [a, index](Tape& t, int, const Matrix& g) {
        Matrix ga = Matrix::Zero(a.rows(), a.cols());
        for (std::size_t r = 0; r < index.size(); ++r) ga.row(index[r]) += g.row(static_cast<Index>(r));
        t.accumulate(a, ga);
    });
}

Var norm2(const Var& a) {
    Matrix out = (a.value().rowwise().squaredNorm().array() + kNormEpsilon * kNormEpsilon).sqrt().matrix();
    return a.tape().record(std::move(out), {a}, [a](Tape& t, int self, const Matrix& g) {
        const Matrix scaled = (g.array() / t.value(self).array()).matrix();
        Matrix ga = a.value();
        ga.array().colwise() *= scaled.col(0).array();
        t.accumulate(a, ga);
    });
}

Var concat(const std::vector<Var>& parts) {
    if (parts.empty()) throw ConfigError("concat of nothing");
    const Index rows = parts.front().rows();
    Index cols = 0;
    for (const Var& p : parts) {
        if (p.rows() != rows) throw ConfigError("concat row mismatch");
        cols += p.cols();
    }
    Matrix out(rows, cols);
    Index at = 0;
    for (const Var& p : parts) {
        out.middleCols(at, p.cols()) = p.value();
        at += p.cols();
    }
    return parts.front().tape().record(std::move(out), std::span<const Var>(parts),
                                       [parts](Tape& t, int, const Matrix& g) {
                                           Index off = 0;
                                           for (const Var& p : parts) {
                                               if (p.requires_grad()) t.accumulate(p, g.middleCols(off, p.cols()));
                                               off += p.cols();
                                           }
                                       });
}

Var slice(const Var& a, Index col, Index count) {
    if (col < 0 || count < 0 || col + count > a.cols()) throw ConfigError("slice out of range");
    Matrix out = a.value().middleCols(col, count);
    return a.tape().record(std::move(out), {a}, [a, col, count](Tape& t, int, const Matrix& g) {
        Matrix ga = Matrix::Zero(a.rows(), a.cols());
        ga.middleCols(col, count) = g;
        t.accumulate(a, ga);
    });
}

Var broadcast(const Var& a, Index rows, Index cols) {
    const Matrix& v = a.value();
    if ((v.rows() != rows && v.rows() != 1) || (v.cols() != cols && v.cols() != 1)) {
        throw ConfigError("cannot broadcast " + shape_str(v));
    }
    Matrix out = expand(v, rows, cols);
    return a.tape().record(std::move(out), {a}, [a](Tape& t, int, const Matrix& g) {
        t.accumulate(a, reduce_to(g, a.rows(), a.cols()));
    });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
    const Matrix& v = x.value();
    const Index c = v.cols();
    if (gain.rows() != 1 || gain.cols() != c || bias.rows() != 1 || bias.cols() != c) {
        throw ConfigError("layer_norm gain/bias must be 1 x " + std::to_string(c));
    }
    Matrix xhat(v.rows(), c);
    Eigen::VectorXd inv_std(v.rows());
    for (Index r = 0; r < v.rows(); ++r) {
        const double mu = v.row(r).mean();
        const double var = (v.row(r).array() - mu).square().mean();
        inv_std(r) = 1.0 / std::sqrt(var + eps);
        xhat.row(r) = (v.row(r).array() - mu) * inv_std(r);
    }
    Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() + bias.value().row(0).array();
    return x.tape().record(std::move(out), {x, gain, bias},
                           [x, gain, bias, xhat, inv_std](Tape& t, int, const Matrix& g) {
                               const Index cc = xhat.cols();
                               if (gain.requires_grad()) t.accumulate(gain, (g.array() * xhat.array()).colwise().sum().matrix());
                               if (bias.requires_grad()) t.accumulate(bias, g.colwise().sum());
                               if (!x.requires_grad()) return;
                               const Matrix gh = (g.array().rowwise() * gain.value().row(0).array()).matrix();
                               Matrix gx(gh.rows(), cc);
                               for (Index r = 0; r < gh.rows(); ++r) {
                                   const double m1 = gh.row(r).mean();
                                   const double m2 = (gh.row(r).array() * xhat.row(r).array()).mean();
                                   gx.row(r) = inv_std(r) * (gh.row(r).array() - m1 - xhat.row(r).array() * m2);
                               }
                               t.accumulate(x, gx);
                           });
}

Var detach(const Var& a) { return a.tape().constant(a.value()); }

} // namespace del::ad
