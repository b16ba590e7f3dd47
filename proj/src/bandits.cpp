#include "cpmm/bandits.hpp"

#include "cpmm/rng.hpp"

namespace cpmm::bandit {

UcbState::UcbState(std::size_t arms, RewardRange r) : arm_means(arms, 0.0), arm_counts(arms, 0), range(r) {
    if (arms == 0) throw ValidationError("UCB needs at least one arm");
    if (!(r.hi >= r.lo)) throw ValidationError("empty reward range");
}

std::size_t ucb_select(const UcbState& state) {
    for (std::size_t j = 0; j < state.arms(); ++j)
        if (state.arm_counts[j] == 0) return j;
    const double log_term = 2.0 * std::log(static_cast<double>(state.t) + 1.0);
    std::size_t best = 0;
    double best_index = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < state.arms(); ++j) {
        double index = state.arm_means[j] + std::sqrt(log_term / static_cast<double>(state.arm_counts[j]));
        if (index > best_index) {
            best_index = index;
            best = j;
        }
    }
    return best;
}

UcbState ucb_update(UcbState state, std::size_t arm, double reward) {
    if (arm >= state.arms()) throw ValidationError("UCB arm index out of range");
    if (!state.range.contains(reward)) throw ValidationError("reward outside declared range");
    auto n = static_cast<double>(state.arm_counts[arm]);
    state.arm_means[arm] = (state.arm_means[arm] * n + reward) / (n + 1.0);
    state.arm_counts[arm] += 1;
    state.t += 1;
    return state;
}

double cumulative_regret(const std::vector<std::pair<std::size_t, double>>& history, double best_mean) {
    double total = 0.0;
    for (const auto& [arm, reward] : history) {
        (void)arm;
        total += best_mean - reward;
    }
    return total;
}

namespace {

double standard_normal(Rng& rng) {
    double u1 = uniform01(rng);
    double u2 = uniform01(rng);
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace

BernoulliRun simulate_ucb_bernoulli(const std::vector<double>& means, long horizon, std::uint64_t seed) {
    if (means.empty() || horizon < 1) throw ValidationError("bandit simulation needs arms and a positive horizon");
    double best = *std::max_element(means.begin(), means.end());
    auto rng = make_stream(seed, "ucb-bernoulli");
    UcbState state(means.size(), {0.0, 1.0});
    BernoulliRun run;
    for (long t = 0; t < horizon; ++t) {
        std::size_t arm = ucb_select(state);
        double reward = uniform01(rng) < means[arm] ? 1.0 : 0.0;
        state = ucb_update(std::move(state), arm, reward);
        run.regret += best - reward;
        run.pseudo_regret += best - means[arm];
    }
    run.pulls = state.arm_counts;
    return run;
}

LinearRun simulate_linucb_linear(const Vector<double>& theta, long horizon, std::size_t candidates, double noise,
                                 double alpha, std::uint64_t seed) {
    const Eigen::Index d = theta.size();
    if (candidates == 0 || horizon < 1) throw ValidationError("LinUCB simulation needs candidates and a horizon");
    auto rng = make_stream(seed, "linucb-linear");
    LinUcbState<double> state(d, alpha);
    LinearRun run;
    Matrix<double> contexts(d, static_cast<Eigen::Index>(candidates));
    for (long t = 0; t < horizon; ++t) {
        for (Eigen::Index c = 0; c < contexts.cols(); ++c) {
            for (Eigen::Index i = 0; i < d; ++i) contexts(i, c) = standard_normal(rng);
            contexts.col(c).normalize();
        }
        Eigen::LLT<Matrix<double>> llt(state.design);
        Vector<double> theta_hat = llt.solve(state.response);
        Eigen::Index chosen = 0;
        double best_index = -std::numeric_limits<double>::infinity();
        for (Eigen::Index c = 0; c < contexts.cols(); ++c) {
            Vector<double> x = contexts.col(c);
            double index = theta_hat.dot(x) + alpha * std::sqrt(std::max(0.0, x.dot(llt.solve(x))));
            if (index > best_index) {
                best_index = index;
                chosen = c;
            }
        }
        Vector<double> expected = contexts.transpose() * theta;
        run.regret += expected.maxCoeff() - expected(chosen);
        double reward = expected(chosen) + noise * standard_normal(rng);
        state = linucb_update(std::move(state), contexts.col(chosen), reward);
    }
    run.theta_error = (linucb_theta(state) - theta).norm();
    return run;
}

std::vector<RegretPoint> regret_curve(const std::vector<long>& horizons, int seeds) {
    if (seeds < 1) throw ValidationError("regret curve needs at least one seed");
    const std::vector<double> means{0.9, 0.8, 0.7, 0.6, 0.5};
    Vector<double> theta(3);
    theta << 0.6, -0.48, 0.64;
    std::vector<RegretPoint> out;
    for (long horizon : horizons) {
        RegretPoint p;
        p.horizon = horizon;
        const double log_t = std::log(static_cast<double>(horizon));
        p.ucb_bound = 3.0 * std::sqrt(static_cast<double>(means.size()) * static_cast<double>(horizon) * log_t);
        p.linucb_bound = 5.0 * static_cast<double>(theta.size()) * std::sqrt(static_cast<double>(horizon) * log_t);
        for (int s = 1; s <= seeds; ++s) {
            p.ucb_mean += simulate_ucb_bernoulli(means, horizon, static_cast<std::uint64_t>(s)).regret;
            p.linucb_mean += simulate_linucb_linear(theta, horizon, 10, 0.1, 1.0, static_cast<std::uint64_t>(s)).regret;
        }
        p.ucb_mean /= seeds;
        p.linucb_mean /= seeds;
        out.push_back(p);
    }
    return out;
}

}  // namespace cpmm::bandit
