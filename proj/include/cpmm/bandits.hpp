#pragma once

// UCB over a finite set of pricing policies and LinUCB contextual pricing.

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

#include "cpmm/error.hpp"

namespace cpmm::bandit {

/// Declared reward range; observations outside it are rejected.
struct RewardRange {
    double lo = 0.0;
    double hi = 1.0;
    bool contains(double r) const { return r >= lo && r <= hi; }
};

struct UcbState {
    std::vector<double> arm_means;
    std::vector<long> arm_counts;
    long t = 0;
    RewardRange range;

    explicit UcbState(std::size_t arms, RewardRange range = {});
    std::size_t arms() const { return arm_means.size(); }
};

/// Lowest-index unpulled arm first; otherwise argmax of
/// mean_j + sqrt(2 ln(t+1) / n_j), ties to the lowest index.
std::size_t ucb_select(const UcbState& state);

/// Incremental mean update of one arm.
UcbState ucb_update(UcbState state, std::size_t arm, double reward);

/// Sum over pulls of (best_mean - reward).
double cumulative_regret(const std::vector<std::pair<std::size_t, double>>& history, double best_mean);

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// LinUCB design state. A starts at the identity and only receives rank-one
/// additions, so it stays symmetric positive definite.
template <typename Scalar = double>
struct LinUcbState {
    Matrix<Scalar> design;
    Vector<Scalar> response;
    Scalar exploration = Scalar(1);
    Scalar price_cap = std::numeric_limits<Scalar>::infinity();

    explicit LinUcbState(Eigen::Index d, Scalar alpha = Scalar(1),
                         Scalar cap = std::numeric_limits<Scalar>::infinity())
        : design(Matrix<Scalar>::Identity(d, d)), response(Vector<Scalar>::Zero(d)), exploration(alpha), price_cap(cap) {
        if (d < 1) throw ValidationError("LinUCB context dimension must be >= 1");
        if (!(alpha > Scalar(0))) throw ValidationError("LinUCB exploration must be positive");
    }

    Eigen::Index dimension() const { return design.rows(); }
};

namespace detail {

template <typename Derived>
void check_context(const Eigen::MatrixBase<Derived>& x, Eigen::Index d) {
    if (x.size() != d) throw DimensionError("LinUCB context dimension mismatch");
    if (!x.allFinite()) throw ValidationError("LinUCB context must be finite");
}

}  // namespace detail

/// Point estimate A^{-1} b via Cholesky.
template <typename Scalar>
Vector<Scalar> linucb_theta(const LinUcbState<Scalar>& state) {
    Eigen::LLT<Matrix<Scalar>> llt(state.design);
    if (llt.info() != Eigen::Success) throw Error("LinUCB design matrix lost positive definiteness");
    return llt.solve(state.response);
}

/// Unclamped optimistic index theta^T x + alpha sqrt(x^T A^{-1} x).
template <typename Scalar, typename Derived>
Scalar linucb_index(const LinUcbState<Scalar>& state, const Eigen::MatrixBase<Derived>& x) {
    detail::check_context(x, state.dimension());
    Eigen::LLT<Matrix<Scalar>> llt(state.design);
    if (llt.info() != Eigen::Success) throw Error("LinUCB design matrix lost positive definiteness");
    Vector<Scalar> theta = llt.solve(state.response);
    Vector<Scalar> ainv_x = llt.solve(x.template cast<Scalar>());
    Scalar width = x.template cast<Scalar>().dot(ainv_x);
    return theta.dot(x.template cast<Scalar>()) + state.exploration * std::sqrt(std::max(width, Scalar(0)));
}

/// Price quote: the optimistic index clamped to [0, price_cap].
template <typename Scalar, typename Derived>
Scalar linucb_price(const LinUcbState<Scalar>& state, const Eigen::MatrixBase<Derived>& x) {
    Scalar p = linucb_index(state, x);
    return std::clamp(p, Scalar(0), state.price_cap);
}

/// A += x x^T; b += r x.
template <typename Scalar, typename Derived>
LinUcbState<Scalar> linucb_update(LinUcbState<Scalar> state, const Eigen::MatrixBase<Derived>& x, Scalar reward) {
    detail::check_context(x, state.dimension());
    if (!std::isfinite(reward)) throw ValidationError("LinUCB reward must be finite");
    Vector<Scalar> xs = x.template cast<Scalar>();
    state.design.noalias() += xs * xs.transpose();
    state.response += reward * xs;
    return state;
}

/// Synthetic K-armed Bernoulli environment driven by UCB.
struct BernoulliRun {
    double regret = 0.0;         ///< sum_t (best_mean - reward_t)
    double pseudo_regret = 0.0;  ///< sum_t (best_mean - mean_of_pulled_arm)
    std::vector<long> pulls;
};
BernoulliRun simulate_ucb_bernoulli(const std::vector<double>& means, long horizon, std::uint64_t seed);

/// Linear-reward contextual environment: each round offers `candidates`
/// random unit contexts, reward = theta^T x + N(0, noise^2). LinUCB picks the
/// candidate with the largest index. Regret is the expected-reward gap to
/// the best candidate of the round.
struct LinearRun {
    double regret = 0.0;
    double theta_error = 0.0;  ///< ||theta_hat - theta|| at the end
};
LinearRun simulate_linucb_linear(const Vector<double>& theta, long horizon, std::size_t candidates, double noise,
                                 double alpha, std::uint64_t seed);

/// Mean regret over seeds at each horizon next to the reference bounds
/// 3 sqrt(K T ln T) (UCB, arms 0.9..0.5) and 5 d sqrt(T ln T) (LinUCB, d = 3).
struct RegretPoint {
    long horizon = 0;
    double ucb_mean = 0.0;
    double ucb_bound = 0.0;
    double linucb_mean = 0.0;
    double linucb_bound = 0.0;
};
std::vector<RegretPoint> regret_curve(const std::vector<long>& horizons, int seeds);

}  // namespace cpmm::bandit
