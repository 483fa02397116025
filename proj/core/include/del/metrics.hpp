#pragma once

#include "del/particles.hpp"
#include "del/render.hpp"

#include <cstdint>
#include <vector>

namespace del {

/// Table convention: reported Chamfer values are raw values times this.
inline constexpr double kChamferReportScale = 100.0;
inline constexpr std::size_t kEmdMaxPoints = 512;
inline constexpr double kPsnrCap = 99.0;

/// mean_a min_b |a - b|^2 + mean_b min_a |a - b|^2 (raw, unscaled).
double chamfer_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

/// Exact min-cost perfect matching (Hungarian), O(n^3). Returns the column
/// assigned to each row.
std::vector<int> hungarian(const Eigen::MatrixXd& cost);

/// Minimum mean pairwise distance over perfect matchings. Sets larger than
/// 512 are subsampled to 512 with `seed`.
double emd(const std::vector<Vec3>& a, const std::vector<Vec3>& b, std::uint64_t seed = 0);

/// 10 log10(1 / MSE); identical images give kPsnrCap.
double psnr(const ImageBuffer& pred, const ImageBuffer& ref);

} // namespace del
