#pragma once

#include <string>

#include "catebounds/common.hpp"

namespace catebounds {

// Fixed-order composite Simpson rule. Deterministic and accurate far beyond
// 1e-10 for the smooth integrands used here.
inline constexpr int kQuadPoints = 201;

template <typename F>
double simpson(double a, double b, F&& f, int points = kQuadPoints) {
    if (points < 3 || points % 2 == 0)
        throw ValidationError("simpson requires an odd point count >= 3, got " +
                              std::to_string(points));
    const int n = points - 1;
    const double h = (b - a) / n;
    double acc = f(a) + f(b);
    for (int i = 1; i < n; ++i) {
        acc += f(a + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
    }
    return acc * h / 3.0;
}

}  // namespace catebounds
