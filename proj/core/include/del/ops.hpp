#pragma once

#include "del/tape.hpp"

#include <vector>

namespace del::ad {

/// Safety term of norm2: sqrt(x.x + eps^2).
inline constexpr double kNormEpsilon = 1e-12;

// Elementwise binary ops broadcast each dimension of size 1 against the other
// operand (rows and columns independently).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
/// Elementwise min / max; ties route the gradient to `a`.
Var minimum(const Var& a, const Var& b);
Var maximum(const Var& a, const Var& b);

Var neg(const Var& a);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);

Var relu(const Var& a);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var sqrt(const Var& a);
Var square(const Var& a);
Var exp(const Var& a);
Var abs(const Var& a);

Var matmul(const Var& a, const Var& b);

/// Sum of all entries (1 x 1).
Var sum(const Var& a);
/// Per-row sum (R x 1).
Var sum_rows(const Var& a);
/// Per-column sum (1 x C).
Var sum_cols(const Var& a);

/// out[index[r]] += a[r]; output has `segments` rows.
Var segment_sum(const Var& a, const std::vector<int>& index, int segments);
/// out[k] = a[index[k]]. Adjoint of segment_sum.
Var gather(const Var& a, const std::vector<int>& index);

/// Per-row Euclidean norm sqrt(sum x^2 + eps^2), R x 1.
Var norm2(const Var& a);

/// Column-wise concatenation; all parts share the row count.
Var concat(const std::vector<Var>& parts);
/// Columns [col, col + count).
Var slice(const Var& a, Eigen::Index col, Eigen::Index count);
Var broadcast(const Var& a, Eigen::Index rows, Eigen::Index cols);

/// Row-wise layer normalization with learnable gain and bias (each 1 x C).
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);

/// Copy of the value with no path back to `a`.
Var detach(const Var& a);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator*(const Var& a, double c) { return scale(a, c); }
inline Var operator*(double c, const Var& a) { return scale(a, c); }

} // namespace del::ad
