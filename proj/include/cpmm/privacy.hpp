#pragma once

// Disclosure economics: cost and value of revealing information, the optimal
// disclosure level, price elasticity with respect to disclosure, the
// privacy-utility frontier and the threshold disclosure policy.

#include <functional>
#include <string>
#include <vector>

namespace cpmm::privacy {

/// Cost of disclosure C(s) = gamma * s^alpha.
struct PrivacyParams {
    double gamma = 1.0;  ///< sensitivity, > 0
    double alpha = 2.0;  ///< convexity, > 1
    void validate() const;
};

/// Market value of disclosure V(s) = beta * s / (1 + delta * s).
struct ValueParams {
    double beta = 1.0;   ///< >= 0
    double delta = 0.0;  ///< >= 0
    void validate() const;
};

double privacy_cost(const PrivacyParams& p, double sigma);
double market_value(const ValueParams& v, double sigma);
double marginal_cost(const PrivacyParams& p, double sigma);
double marginal_value(const ValueParams& v, double sigma);

/// Net marginal benefit V'(s) - C'(s); strictly decreasing on [0, 1].
double net_marginal(const PrivacyParams& p, const ValueParams& v, double sigma);

/// Disclosure level where marginal value meets marginal cost. Returns 0 when
/// beta is 0 and 1 when disclosure still pays at full disclosure.
double optimal_disclosure(const PrivacyParams& p, const ValueParams& v);

using PriceFn = std::function<double(double)>;

inline constexpr double kElasticityStep = 1e-5;

/// (dp/ds) * s / p by finite differences; one-sided within a step of 0 or 1.
double privacy_elasticity(const PriceFn& price, double sigma);

struct FrontierPoint {
    double privacy;  ///< privacy floor
    double utility;  ///< best utility with at least that much privacy
    double sigma;    ///< disclosure level achieving it
};

/// Frontier over a uniform disclosure grid of `grid_size` points, ordered by
/// increasing privacy floor. `privacy_fn` must be non-increasing.
std::vector<FrontierPoint> frontier(const std::function<double(double, double)>& utility,
                                    const std::function<double(double)>& privacy_fn, double state, int grid_size);

enum class Direction { Increase, Decrease, Hold };
std::string to_string(Direction d);

/// Disclose more when the market state beats the threshold for the current
/// privacy level, less when below it.
Direction threshold_policy(double state, double current_privacy, const std::function<double(double)>& threshold);

}  // namespace cpmm::privacy
