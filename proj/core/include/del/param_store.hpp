#pragma once

#include "del/tape.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

namespace del {

/// Named block of the flat parameter vector.
struct SliceInfo {
    std::string name;
    std::size_t offset = 0;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    /// Frozen slices are never updated by the optimizer.
    bool trainable = true;
    /// Whether decoupled weight decay applies.
    bool decay = true;

    std::size_t size() const { return static_cast<std::size_t>(rows * cols); }
};

using MatrixMap = Eigen::Map<ad::Matrix>;
using ConstMatrixMap = Eigen::Map<const ad::Matrix>;

/// Flat vector of every trainable scalar, its gradient, and Adam moments.
/// Slices are appended in a fixed order and never move.
class ParamStore {
public:
    /// Appends a slice initialized to `init` (rows x cols).
    std::size_t add(const std::string& name, const ad::Matrix& init, bool trainable = true,
                    bool decay = true);

    bool has(const std::string& name) const { return index_.contains(name); }
    std::size_t index_of(const std::string& name) const;
    const SliceInfo& slice(std::size_t i) const { return slices_[i]; }
    const SliceInfo& slice(const std::string& name) const { return slices_[index_of(name)]; }
    const std::vector<SliceInfo>& slices() const { return slices_; }

    MatrixMap view(const std::string& name);
    ConstMatrixMap view(const std::string& name) const;
    MatrixMap grad_view(const std::string& name);
    ConstMatrixMap grad_view(const std::string& name) const;

    std::size_t size() const { return static_cast<std::size_t>(values.size()); }
    void zero_grad();
    /// Drops optimizer moments and the step counter.
    void reset_optimizer();

    Eigen::VectorXd values;
    Eigen::VectorXd grads;
    Eigen::VectorXd adam_m;
    Eigen::VectorXd adam_v;
    long adam_step = 0;

private:
    std::vector<SliceInfo> slices_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Exposes store slices as leaves of one tape and routes their adjoints back.
class ParamBinding {
public:
    /// With track_grads off every slice is bound as a constant.
    ParamBinding(ad::Tape& tape, ParamStore& store, bool track_grads = true)
        : tape_(tape), store_(store), track_(track_grads) {}

    /// Leaf for a trainable slice, constant for a frozen one. Cached per tape.
    ad::Var get(const std::string& name);

    /// Adds every bound leaf's adjoint into store.grads.
    void accumulate_grads();

    ad::Tape& tape() { return tape_; }
    ParamStore& store() { return store_; }

private:
    ad::Tape& tape_;
    ParamStore& store_;
    bool track_ = true;
    std::unordered_map<std::string, ad::Var> bound_;
};

} // namespace del
