#include "del/tape.hpp"

#include "del/errors.hpp"

namespace del::ad {

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

double Var::item() const {
    const Matrix& v = value();
    if (v.rows() != 1 || v.cols() != 1) throw ConfigError("item() on a non-scalar node");
    return v(0, 0);
}

Var Tape::push(Matrix value, bool requires_grad, Backward backward) {
    nodes_.push_back(Node{std::move(value), Matrix(), std::move(backward), requires_grad});
    return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Var Tape::leaf(Matrix value) { return push(std::move(value), true, nullptr); }

Var Tape::record(Matrix value, std::span<const Var> inputs, Backward backward) {
    bool needs = false;
    for (const Var& v : inputs) {
        if (v.tape_ != this) throw ConfigError("op mixes nodes from different tapes");
        needs = needs || requires_grad(v.id());
    }
    return push(std::move(value), needs, needs ? std::move(backward) : Backward{});
}

void Tape::backward(const Var& root) {
    const Matrix& v = root.value();
    if (v.rows() != 1 || v.cols() != 1) throw ConfigError("backward() root must be 1 x 1");
    backward(root, Matrix::Ones(1, 1));
}

void Tape::backward(const Var& root, const Matrix& seed) {
    if (root.tape_ != this) throw ConfigError("backward() root belongs to another tape");
    const Matrix& v = root.value();
    if (seed.rows() != v.rows() || seed.cols() != v.cols()) {
        throw ConfigError("backward() seed shape mismatch");
    }
    accumulate(root, seed);
    for (int id = root.id(); id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.backward || n.grad.size() == 0) continue;
        n.backward(*this, id, n.grad);
    }
}

void Tape::zero_grad() {
    for (Node& n : nodes_) n.grad.resize(0, 0);
}

} // namespace del::ad
