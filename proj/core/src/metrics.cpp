#include "del/metrics.hpp"

#include "del/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace del {

double chamfer_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    if (a.empty() || b.empty()) throw ConfigError("chamfer distance of an empty set");
    std::vector<double> best_b(b.size(), std::numeric_limits<double>::infinity());
    double sum_a = 0.0;
    for (const Vec3& p : a) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < b.size(); ++j) {
            const double d = (p - b[j]).squaredNorm();
            best = std::min(best, d);
            best_b[j] = std::min(best_b[j], d);
        }
        sum_a += best;
    }
    const double sum_b = std::accumulate(best_b.begin(), best_b.end(), 0.0);
    return sum_a / static_cast<double>(a.size()) + sum_b / static_cast<double>(b.size());
}

std::vector<int> hungarian(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    if (cost.cols() != n) throw ConfigError("assignment needs a square cost matrix");
    const double inf = std::numeric_limits<double>::infinity();
    // Potentials formulation, 1-based with a virtual column 0.
    std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0), v(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<int> p(static_cast<std::size_t>(n) + 1, 0), way(static_cast<std::size_t>(n) + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(n) + 1, inf);
        std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
        do {
            used[static_cast<std::size_t>(j0)] = 1;
            const int i0 = p[static_cast<std::size_t>(j0)];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
                if (cur < minv[static_cast<std::size_t>(j)]) {
                    minv[static_cast<std::size_t>(j)] = cur;
                    way[static_cast<std::size_t>(j)] = j0;
                }
                if (minv[static_cast<std::size_t>(j)] < delta) {
                    delta = minv[static_cast<std::size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) {
                    u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
                    v[static_cast<std::size_t>(j)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<std::size_t>(j0)] != 0);
        do {
            const int j1 = way[static_cast<std::size_t>(j0)];
            p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
    for (int j = 1; j <= n; ++j) row_to_col[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
    return row_to_col;
}

namespace {

std::vector<Vec3> subsample(const std::vector<Vec3>& pts, std::size_t k, std::uint64_t seed) {
    if (pts.size() <= k) return pts;
    std::vector<std::size_t> idx(pts.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    std::vector<Vec3> out;
    out.reserve(k);
    for (std::size_t i : idx) out.push_back(pts[i]);
    return out;
}

} // namespace

double emd(const std::vector<Vec3>& a, const std::vector<Vec3>& b, std::uint64_t seed) {
    if (a.empty() || b.empty()) throw ConfigError("EMD of an empty set");
    const std::vector<Vec3> sa = subsample(a, kEmdMaxPoints, seed);
    const std::vector<Vec3> sb = subsample(b, kEmdMaxPoints, seed);
    if (sa.size() != sb.size())
        throw ConfigError("EMD needs equal set sizes (" + std::to_string(sa.size()) + " vs " +
                          std::to_string(sb.size()) + ")");
    const auto n = static_cast<Eigen::Index>(sa.size());
    Eigen::MatrixXd cost(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            cost(i, j) = (sa[static_cast<std::size_t>(i)] - sb[static_cast<std::size_t>(j)]).norm();
    const std::vector<int> match = hungarian(cost);
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) total += cost(i, match[static_cast<std::size_t>(i)]);
    return total / static_cast<double>(n);
}

double psnr(const ImageBuffer& pred, const ImageBuffer& ref) {
    if (pred.width != ref.width || pred.height != ref.height)
        throw ConfigError("PSNR needs images of equal size");
    const double mse = (pred.rgb - ref.rgb).squaredNorm() / static_cast<double>(pred.rgb.size());
    if (!(mse > 0.0)) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

} // namespace del
