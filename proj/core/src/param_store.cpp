#include "del/param_store.hpp"

#include "del/errors.hpp"

namespace del {

std::size_t ParamStore::add(const std::string& name, const ad::Matrix& init, bool trainable,
                            bool decay) {
    if (has(name)) throw ConfigError("duplicate parameter slice '" + name + "'");
    SliceInfo info{name, size(), init.rows(), init.cols(), trainable, decay};
    const auto old = values.size();
    const auto n = static_cast<Eigen::Index>(info.size());
    values.conservativeResize(old + n);
    values.segment(old, n) = Eigen::Map<const Eigen::VectorXd>(init.data(), n);
    grads = Eigen::VectorXd::Zero(values.size());
    adam_m.conservativeResize(values.size());
    adam_m.tail(n).setZero();
    adam_v.conservativeResize(values.size());
    adam_v.tail(n).setZero();
    slices_.push_back(info);
    index_.emplace(name, slices_.size() - 1);
    return slices_.size() - 1;
}

std::size_t ParamStore::index_of(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter slice '" + name + "'");
    return it->second;
}

MatrixMap ParamStore::view(const std::string& name) {
    const SliceInfo& s = slice(name);
    return {values.data() + s.offset, s.rows, s.cols};
}

ConstMatrixMap ParamStore::view(const std::string& name) const {
    const SliceInfo& s = slice(name);
    return {values.data() + s.offset, s.rows, s.cols};
}

MatrixMap ParamStore::grad_view(const std::string& name) {
    const SliceInfo& s = slice(name);
    return {grads.data() + s.offset, s.rows, s.cols};
}

ConstMatrixMap ParamStore::grad_view(const std::string& name) const {
    const SliceInfo& s = slice(name);
    return {grads.data() + s.offset, s.rows, s.cols};
}

void ParamStore::zero_grad() { grads.setZero(values.size()); }

void ParamStore::reset_optimizer() {
    adam_m.setZero(values.size());
    adam_v.setZero(values.size());
    adam_step = 0;
}

ad::Var ParamBinding::get(const std::string& name) {
    if (const auto it = bound_.find(name); it != bound_.end()) return it->second;
    const SliceInfo& s = store_.slice(name);
    ad::Matrix value = store_.view(name);
    ad::Var v = s.trainable && track_ ? tape_.leaf(std::move(value)) : tape_.constant(std::move(value));
    bound_.emplace(name, v);
    return v;
}

void ParamBinding::accumulate_grads() {
    for (const auto& [name, v] : bound_) {
        if (!v.requires_grad() || v.grad().size() == 0) continue;
        store_.grad_view(name) += v.grad();
    }
}

} // namespace del
