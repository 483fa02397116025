#pragma once

#include "del/tape.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace del {

inline constexpr double kFiniteDifferenceStep = 1e-6;

struct GradcheckResult {
    std::string module;
    std::string check;
    int instances = 0;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    bool pass() const { return max_rel_error < tolerance; }
};

/// max|a - n| / max(max|a|, max|n|): error of the whole gradient relative to its largest entry.
double relative_error(const ad::Matrix& analytic, const ad::Matrix& numeric);

/// Central differences of a scalar function of one matrix input.
ad::Matrix numeric_gradient(const std::function<double(const ad::Matrix&)>& f, const ad::Matrix& x,
                            double h = kFiniteDifferenceStep);

/// Suites: "primitives", "kernels", "render", "rollout", or "all".
std::vector<GradcheckResult> run_gradcheck(const std::string& module, std::uint64_t seed = 0);

} // namespace del
