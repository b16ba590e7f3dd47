#include "cpmm/privacy.hpp"

#include <algorithm>
#include <cmath>

#include "cpmm/error.hpp"

namespace cpmm::privacy {

namespace {

void check_sigma(double sigma) {
    if (!(sigma >= 0.0 && sigma <= 1.0)) throw ValidationError("disclosure level must be in [0, 1]");
}

}  // namespace

void PrivacyParams::validate() const {
    if (!(gamma > 0.0)) throw ValidationError("privacy sensitivity must be positive");
    if (!(alpha > 1.0)) throw ValidationError("cost convexity must exceed 1");
}

void ValueParams::validate() const {
    if (!(beta >= 0.0)) throw ValidationError("value scale must be non-negative");
    if (!(delta >= 0.0)) throw ValidationError("diminishing-returns rate must be non-negative");
}

double privacy_cost(const PrivacyParams& p, double sigma) {
    p.validate();
    check_sigma(sigma);
    return p.gamma * std::pow(sigma, p.alpha);
}

double market_value(const ValueParams& v, double sigma) {
    v.validate();
    check_sigma(sigma);
    return v.beta * sigma / (1.0 + v.delta * sigma);
}

double marginal_cost(const PrivacyParams& p, double sigma) {
    p.validate();
    check_sigma(sigma);
    return p.gamma * p.alpha * std::pow(sigma, p.alpha - 1.0);
}

double marginal_value(const ValueParams& v, double sigma) {
    v.validate();
    check_sigma(sigma);
    const double d = 1.0 + v.delta * sigma;
    return v.beta / (d * d);
}

double net_marginal(const PrivacyParams& p, const ValueParams& v, double sigma) {
    return marginal_value(v, sigma) - marginal_cost(p, sigma);
}

double optimal_disclosure(const PrivacyParams& p, const ValueParams& v) {
    p.validate();
    v.validate();
    if (v.beta == 0.0) return 0.0;
    if (net_marginal(p, v, 1.0) >= 0.0) return 1.0;
    double lo = 0.0, hi = 1.0;
    // Stops when the bracket can no longer be split, which matters for
    // roots many orders of magnitude below 1 when alpha is close to 1.
    for (;;) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double f = net_marginal(p, v, mid);
        if (std::abs(f) <= 1e-10) return mid;
        (f > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

double privacy_elasticity(const PriceFn& price, double sigma) {
    check_sigma(sigma);
    const double p = price(sigma);
    if (p == 0.0 || !std::isfinite(p)) throw ValidationError("elasticity needs a non-zero price");
    if (sigma == 0.0) return 0.0;
    const double h = kElasticityStep;
    double slope;
    if (sigma - h < 0.0) slope = (price(sigma + h) - p) / h;
    else if (sigma + h > 1.0) slope = (p - price(sigma - h)) / h;
    else slope = (price(sigma + h) - price(sigma - h)) / (2.0 * h);
    return slope * sigma / p;
}

std::vector<FrontierPoint> frontier(const std::function<double(double, double)>& utility,
                                    const std::function<double(double)>& privacy_fn, double state, int grid_size) {
    if (grid_size < 3) throw ValidationError("frontier grid needs at least 3 points");
    const auto n = static_cast<std::size_t>(grid_size);
    std::vector<double> sigma(n), priv(n), util(n);
    for (std::size_t i = 0; i < n; ++i) {
        sigma[i] = static_cast<double>(i) / static_cast<double>(n - 1);
        priv[i] = privacy_fn(sigma[i]);
        util[i] = utility(sigma[i], state);
        if (i > 0 && priv[i] > priv[i - 1]) throw ValidationError("privacy must not increase with disclosure");
    }
    // Grid points in reverse give increasing privacy floors; the admissible
    // set for floor priv[k] is every sigma index <= k.
    std::vector<FrontierPoint> best(n);
    double top = -INFINITY;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (util[i] > top) top = util[i], arg = i;
        best[i] = {priv[i], top, sigma[arg]};
    }
    // Ties in privacy share the largest admissible set.
    for (std::size_t i = n - 1; i-- > 0;)
        if (priv[i] == priv[i + 1]) best[i] = {priv[i], best[i + 1].utility, best[i + 1].sigma};
    std::reverse(best.begin(), best.end());
    return best;
}

std::string to_string(Direction d) {
    switch (d) {
        case Direction::Increase: return "increase";
        case Direction::Decrease: return "decrease";
        case Direction::Hold: return "hold";
    }
    return "?";
}

Direction threshold_policy(double state, double current_privacy, const std::function<double(double)>& threshold) {
    const double t = threshold(current_privacy);
    if (state > t) return Direction::Increase;
    if (state < t) return Direction::Decrease;
    return Direction::Hold;
}

}  // namespace cpmm::privacy
