#pragma once

#include <Eigen/Core>

#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

namespace del::ad {

/// Dense rank <= 2 tensor. Row-major so that one row is one node or edge.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
class Var {
public:
    Var() = default;

    bool valid() const { return tape_ != nullptr; }
    Tape& tape() const { return *tape_; }
    int id() const { return id_; }

    const Matrix& value() const;
    /// Accumulated adjoint; empty (0 x 0) if backward never reached this node.
    const Matrix& grad() const;
    bool requires_grad() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    /// Value of a 1 x 1 node.
    double item() const;

private:
    friend class Tape;
    Var(Tape* tape, int id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    int id_ = -1;
};

/// Reverse-mode tape. Nodes are appended in evaluation order; backward walks
/// them in reverse construction order, each node at most once.
class Tape {
public:
    /// Adjoint of one node: receives the node's own id and output gradient and
    /// pushes contributions into its inputs with accumulate().
    using Backward = std::function<void(Tape&, int self, const Matrix& out_grad)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Matrix value);
    Var leaf(Matrix value);
    /// Appends an op node. The node needs a gradient iff any input does; the
    /// backward closure is dropped otherwise.
    Var record(Matrix value, std::span<const Var> inputs, Backward backward);
    Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
        return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                      std::move(backward));
    }

    /// Seeds a 1 x 1 root with 1 and propagates.
    void backward(const Var& root);
    void backward(const Var& root, const Matrix& seed);

    /// Adds `g` into the gradient of `v` if it requires one.
    template <typename Derived>
    void accumulate(const Var& v, const Eigen::MatrixBase<Derived>& g) {
        Node& n = nodes_[static_cast<std::size_t>(v.id())];
        if (!n.requires_grad) return;
        if (n.grad.size() == 0) {
            n.grad = g;
        } else {
            n.grad += g;
        }
    }

    /// Clears every stored adjoint (values are kept).
    void zero_grad();

    const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    const Matrix& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
    bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        Backward backward;
        bool requires_grad = false;
    };

    Var push(Matrix value, bool requires_grad, Backward backward);

    std::deque<Node> nodes_;
};

} // namespace del::ad
