#pragma once

#include "del/tape.hpp"

#include <random>
#include <span>
#include <string>
#include <vector>

namespace del {

enum class Activation { relu, tanh, identity };

/// Affine -> activation chain. widths = {in, hidden..., out}; the last layer
/// has no activation. With `residual`, the first `out` input columns are
/// added to the output (requires in >= out).
struct LayerSpec {
    std::vector<int> widths;
    Activation activation = Activation::relu;
    bool residual = false;

    int in() const { return widths.front(); }
    int out() const { return widths.back(); }
    int layers() const { return static_cast<int>(widths.size()) - 1; }
    /// Weights then bias for each layer, row-major.
    std::size_t param_count() const;
    void validate() const;
};

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// Uniform +-sqrt(1 / fan_in) for weights and biases; optionally zeroes the
/// final layer so the MLP starts at a constant zero output.
void init_mlp(std::span<double> params, const LayerSpec& spec, std::mt19937_64& rng,
              bool zero_last_layer = false);

/// Fused forward over all rows of `input`; `params` is the flat 1 x P slice.
ad::Var mlp_forward(const ad::Var& params, const ad::Var& input, const LayerSpec& spec);

} // namespace del
