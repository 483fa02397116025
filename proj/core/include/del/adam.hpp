#pragma once

#include "del/param_store.hpp"

namespace del {

/// Default learning rate of the optimizer.
inline constexpr double kDefaultLearningRate = 5e-4;

struct AdamConfig {
    double lr = kDefaultLearningRate;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

/// One AdamW step (decoupled weight decay) over the trainable slices.
/// Throws NumericError naming the first slice with a non-finite gradient;
/// in that case nothing is modified.
void adam_step(ParamStore& store, const AdamConfig& config);

/// Multiplies the learning rate by `gamma` every `step_size` steps.
struct StepLR {
    double base_lr = kDefaultLearningRate;
    double gamma = 0.9;
    long step_size = 10000;

    double lr_at(long step) const;
};

/// Rescales trainable gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(ParamStore& store, double max_norm);

} // namespace del
