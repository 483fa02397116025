#pragma once

#include "del/kernels.hpp"

#include <string>
#include <vector>

namespace del {

/// Material `target` of the edited model takes over what `donor` has in the donor model.
struct SwapEntry {
    int target = 0;
    int donor = 0;
};

/// Parses "old=donor[,old=donor...]" with material indices.
std::vector<SwapEntry> parse_swap_map(const std::string& text);

/// Copy of `model` where every mapped material uses the donor's attribute
/// template, radius, embedding kernel and pair kernels. Donor kernel sets are
/// imported as new sets unless a bitwise identical set already exists; sets
/// no material uses any more are dropped.
/// Throws ConfigError if the models differ in KernelConfig or material count.
LearnedModel swap_material(const LearnedModel& model, const LearnedModel& donor,
                           const std::vector<SwapEntry>& mapping);

} // namespace del
