#pragma once

#include <span>
#include <vector>

#include "embsteer/adaptive.hpp"
#include "embsteer/matrix.hpp"

namespace embsteer {

// out = user + adapt_direction(module, user, dir). Pure addition, no
// renormalization of the result.
Matrix inject(const AdaptiveModule& module, const Matrix& dir, const Matrix& user);

// Baseline without adaptation: out = user + gain * dir.
Matrix inject_fixed(const Matrix& dir, const Matrix& user, double gain = 1.0);

// Elementwise-independent application; output order matches input order. A
// shape mismatch anywhere aborts the whole batch naming the offending index.
std::vector<Matrix> inject_batch(const AdaptiveModule& module, const Matrix& dir,
                                 std::span<const Matrix> batch);

}  // namespace embsteer
