#include "del/adam.hpp"

#include "del/errors.hpp"

#include <cmath>

namespace del {

void adam_step(ParamStore& store, const AdamConfig& cfg) {
    for (const SliceInfo& s : store.slices()) {
        if (!s.trainable) continue;
        const auto n = static_cast<Eigen::Index>(s.size());
        const auto off = static_cast<Eigen::Index>(s.offset);
        if (!store.grads.segment(off, n).allFinite()) {
            throw NumericError("non-finite gradient in parameter slice '" + s.name + "'");
        }
    }

    ++store.adam_step;
    const double t = static_cast<double>(store.adam_step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);

    for (const SliceInfo& s : store.slices()) {
        if (!s.trainable) continue;
        const auto n = static_cast<Eigen::Index>(s.size());
        const auto off = static_cast<Eigen::Index>(s.offset);
        auto p = store.values.segment(off, n);
        auto g = store.grads.segment(off, n);
        auto m = store.adam_m.segment(off, n);
        auto v = store.adam_v.segment(off, n);
        if (s.decay && cfg.weight_decay != 0.0) p *= 1.0 - cfg.lr * cfg.weight_decay;
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseAbs2();
        p.array() -= cfg.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.eps);
    }
}

double StepLR::lr_at(long step) const {
    if (step_size <= 0) return base_lr;
    return base_lr * std::pow(gamma, static_cast<double>(step / step_size));
}

double clip_grad_norm(ParamStore& store, double max_norm) {
    double sq = 0.0;
    for (const SliceInfo& s : store.slices()) {
        if (!s.trainable) continue;
        sq += store.grads.segment(static_cast<Eigen::Index>(s.offset), static_cast<Eigen::Index>(s.size())).squaredNorm();
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm && std::isfinite(norm)) store.grads *= max_norm / norm;
    return norm;
}

} // namespace del
