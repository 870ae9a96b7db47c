#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "catebounds/common.hpp"

namespace catebounds {

// Closed outcome-support interval [lo, hi].
struct Interval {
    double lo = 0.0;
    double hi = 1.0;

    Interval() = default;
    Interval(double lo_, double hi_) : lo(lo_), hi(hi_) {
        if (!is_finite(lo) || !is_finite(hi))
            throw ValidationError("interval endpoints must be finite");
        if (!(lo < hi))
            throw ValidationError("interval requires lo < hi, got [" + std::to_string(lo) +
                                  ", " + std::to_string(hi) + "]");
    }

    double width() const { return hi - lo; }
    bool contains(double v, double tol = 0.0) const { return v >= lo - tol && v <= hi + tol; }
    double clamp(double v) const { return std::min(hi, std::max(lo, v)); }
};

}  // namespace catebounds
