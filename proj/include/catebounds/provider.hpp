#pragma once

// Uniform query surface for first-stage nuisance functions. Both fitted model
// sets and exact oracle nuisances implement this, so the second stage and the
// test harness are agnostic to where nuisance values come from.

#include <Eigen/Dense>

#include "catebounds/common.hpp"
#include "catebounds/interval.hpp"

namespace catebounds {

// Bound side. The lower-bound machinery is the upper-bound machinery with the
// support endpoints interchanged.
enum class Side { upper, lower };

inline Side other(Side s) { return s == Side::upper ? Side::lower : Side::upper; }

inline std::string to_string(Side s) { return s == Side::upper ? "upper" : "lower"; }

// Role of an environment inside an ordered pair (e, j): the first leg carries
// treatment a1 = 1, the second leg carries a2 = 0.
enum class Leg { first, second };

// Support endpoint used to fill in the unobserved branch of the transformed
// outcome, per side and leg.
inline double leg_fill(const Interval& support, Side side, Leg leg) {
    if (side == Side::upper) return leg == Leg::first ? support.hi : support.lo;
    return leg == Leg::first ? support.lo : support.hi;
}

struct NuisanceProvider {
    virtual ~NuisanceProvider() = default;

    virtual int num_envs() const = 0;

    // Response surface E[Y | X=x, A=a, E=e].
    virtual double mu(int env, int a, const Eigen::VectorXd& x, int fold = -1) const = 0;

    // Propensity P(A=a | X=x, E=e).
    virtual double pi(int env, int a, const Eigen::VectorXd& x, int fold = -1) const = 0;

    // Environment distribution P(E=. | X=x), clipped away from 0 and 1.
    virtual Eigen::VectorXd delta(const Eigen::VectorXd& x, int fold = -1) const = 0;

    // Transformed response for environment `env` playing `leg` of a pair, on
    // `side`. Independent of the partner environment.
    virtual double transformed_response(Side side, Leg leg, int env, const Eigen::VectorXd& x,
                                        int fold = -1) const = 0;

    double delta_env(int env, const Eigen::VectorXd& x, int fold = -1) const {
        Eigen::VectorXd d = delta(x, fold);
        if (env < 0 || env >= d.size()) throw DomainError("environment index out of range");
        return d(env);
    }
};

}  // namespace catebounds
