#include <algorithm>
#include <cmath>
#include <numeric>

#include "cpmm/error.hpp"
#include "cpmm/privacy.hpp"
#include "cpmm/sim.hpp"

namespace cpmm::sim {

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double median_of(std::vector<double> x) {
    if (x.empty()) return 0.0;
    const auto mid = x.begin() + static_cast<long>(x.size() / 2);
    std::nth_element(x.begin(), mid, x.end());
    if (x.size() % 2) return *mid;
    const double upper = *mid;
    const double lower = *std::max_element(x.begin(), mid);
    return 0.5 * (lower + upper);
}

Json optional_json(const std::optional<long>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace

TrendTest mann_kendall(const std::vector<double>& x) {
    TrendTest r;
    const std::size_t n = x.size();
    if (n < 3) return r;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) r.s += (x[j] > x[i]) - (x[j] < x[i]);
    std::vector<double> sorted = x;
    std::sort(sorted.begin(), sorted.end());
    const auto nn = static_cast<double>(n);
    double var = nn * (nn - 1) * (2 * nn + 5) / 18.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && sorted[j] == sorted[i]) ++j;
        const auto t = static_cast<double>(j - i);
        var -= t * (t - 1) * (2 * t + 5) / 18.0;
        i = j;
    }
    if (var <= 0) return r;
    if (r.s > 0) r.z = (r.s - 1) / std::sqrt(var);
    else if (r.s < 0) r.z = (r.s + 1) / std::sqrt(var);
    r.p_increasing = 1.0 - normal_cdf(r.z);
    r.p_decreasing = normal_cdf(r.z);
    return r;
}

std::vector<double> rolling_median(const std::vector<double>& x, std::size_t window) {
    if (window == 0) throw ValidationError("rolling window must be positive");
    std::vector<double> out;
    out.reserve(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const std::size_t from = i + 1 >= window ? i + 1 - window : 0;
        out.push_back(median_of({x.begin() + static_cast<long>(from), x.begin() + static_cast<long>(i) + 1}));
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

ScenarioConfig with_clones(const ScenarioConfig& base, int k) {
    ScenarioConfig c = base;
    auto it = std::find_if(c.sellers.begin(), c.sellers.end(),
                           [&](const SellerConfig& s) { return s.id == base.sybil->attacker; });
    it->operator_id = it->id;
    const SellerConfig attacker = *it;
    for (int i = 2; i <= k; ++i) {
        SellerConfig clone = attacker;
        clone.id = attacker.id + "~" + std::to_string(i);
        c.sellers.push_back(std::move(clone));
    }
    return c;
}

double operator_profit(const MarketMetrics& m, const ScenarioConfig& c, const std::string& owner) {
    double total = 0.0;
    for (const auto& s : c.sellers) {
        if (s.owner() != owner) continue;
        auto it = m.profit.find(s.id);
        if (it != m.profit.end()) total += it->second;
    }
    return total;
}

}  // namespace

SybilReport sybil_experiment(const ScenarioConfig& base, int k_max, int seeds) {
    if (!base.sybil) throw ValidationError("sybil experiment needs a designated attacker");
    if (k_max < 2 || seeds < 1) throw ValidationError("sybil experiment needs k_max >= 2 and seeds >= 1");
    base.validate();
    const std::string& attacker = base.sybil->attacker;
    SybilReport r;
    const auto it = std::find_if(base.sellers.begin(), base.sellers.end(),
                                 [&](const SellerConfig& s) { return s.id == attacker; });
    const double cost = seller_cost(*it, reference_quality(base));
    double lowest_disclosure = 1.0;
    for (const auto& b : base.buyers) lowest_disclosure = std::min(lowest_disclosure, b.disclosure);
    const double premium = 1.0 + base.risk_premium * (1.0 - lowest_disclosure);
    double capacity_value = 0.0;
    for (int k = 1; k <= k_max; ++k) {
        double revenue = 0.0, ceiling = 0.0;
        for (int s = 0; s < seeds; ++s) {
            ScenarioConfig c = with_clones(base, k);
            c.seed = base.seed + static_cast<std::uint64_t>(s);
            const auto m = run_market(c);
            revenue += operator_profit(m, c, attacker);
            for (double rate : m.going_rate) ceiling += std::max(0.0, std::min(rate * premium, c.price_hi) - cost);
        }
        revenue /= seeds;
        capacity_value = std::max(capacity_value, ceiling / seeds);
        SybilRow row{k, revenue, 0.0};
        if (k > 1) row.benefit = revenue - r.rows.front().revenue - (k - 1) * base.sybil->capability_cost;
        r.rows.push_back(row);
    }
    for (std::size_t i = 1; i < r.rows.size(); ++i) r.marginal.push_back(r.rows[i].benefit - r.rows[i - 1].benefit);
    // Mann-Kendall over k = 2..k_max; B(2) - B(1) is the first entry.
    r.trend = mann_kendall(r.marginal);
    r.marginal_non_increasing = r.trend.p_increasing >= 0.05;

    // The operator holds one unit of capacity: at most one sale per round, never
    // above the going rate its buyers face.
    r.budget_bound = std::max(0.0, capacity_value - r.rows.front().revenue);
    r.within_budget = std::all_of(r.rows.begin(), r.rows.end(), [&](const SybilRow& row) {
        return row.benefit < r.rows.front().benefit + r.budget_bound + 1e-9;
    });
    return r;
}

Json SybilReport::to_json() const {
    Json rows_json = Json::array();
    for (const auto& row : rows) rows_json.push_back({{"k", row.k}, {"revenue", row.revenue}, {"benefit", row.benefit}});
    return {{"rows", rows_json},
            {"marginal", marginal},
            {"mann_kendall", {{"s", trend.s}, {"z", trend.z}, {"p_increasing", trend.p_increasing}}},
            {"budget_bound", budget_bound},
            {"marginal_non_increasing", marginal_non_increasing},
            {"within_budget", within_budget}};
}

ConvergenceReport convergence_experiment(const ScenarioConfig& c, const std::vector<double>& epsilons,
                                         std::size_t window) {
    const auto m = run_market(c);
    ConvergenceReport r;
    r.equilibrium_price = m.equilibrium_price;
    r.epsilons = epsilons;
    r.filtered = rolling_median(m.errors, window);
    for (double eps : epsilons) {
        std::optional<long> settle;
        const auto last_bad = std::find_if(r.filtered.rbegin(), r.filtered.rend(), [&](double e) { return e >= eps; });
        if (last_bad == r.filtered.rbegin()) settle = std::nullopt;
        else settle = static_cast<long>(r.filtered.rend() - last_bad) + 1;
        r.settle_round.push_back(settle);
    }
    const std::size_t tail = std::max<std::size_t>(1, m.errors.size() / 10);
    r.tail_median_error = median_of({m.errors.end() - static_cast<long>(tail), m.errors.end()});

    std::vector<double> sampled;
    for (std::size_t i = window - 1; i < r.filtered.size(); i += window) sampled.push_back(r.filtered[i]);
    r.trend = mann_kendall(sampled);
    // Non-increasing up to one currency tick: no sample exceeds an earlier one.
    r.non_increasing = true;
    double lowest = INFINITY;
    for (double f : sampled) {
        if (f > lowest + c.tick() + 1e-9) r.non_increasing = false;
        lowest = std::min(lowest, f);
    }
    return r;
}

Json ConvergenceReport::to_json() const {
    Json settle = Json::array();
    for (const auto& s : settle_round) settle.push_back(optional_json(s));
    return {{"equilibrium_price", equilibrium_price},
            {"epsilons", epsilons},
            {"settle_round", settle},
            {"tail_median_error", tail_median_error},
            {"mann_kendall", {{"s", trend.s}, {"z", trend.z}, {"p_increasing", trend.p_increasing}}},
            {"non_increasing", non_increasing}};
}

std::vector<EfficiencyRow> efficiency_experiment(const std::vector<std::size_t>& agent_counts, int seeds, long rounds,
                                                 double disclosure) {
    std::vector<EfficiencyRow> rows;
    for (std::size_t n : agent_counts) {
        if (n < 2) throw ValidationError("efficiency markets need at least two agents");
        EfficiencyRow row{n, 0.0, INFINITY, -INFINITY};
        int used = 0;
        for (int s = 1; s <= seeds; ++s) {
            GeneratedMarket g;
            g.buyers = n / 2;
            g.sellers = n - n / 2;
            g.disclosure = disclosure;
            const auto c = generate_market(g, static_cast<std::uint64_t>(s) * 7919 + n, rounds);
            MarketMetrics m;
            try {
                m = run_market(c);
            } catch (const InfeasibleError&) {
                continue;  // no gains from trade in this draw
            }
            row.mean += m.efficiency;
            row.min = std::min(row.min, m.efficiency);
            row.max = std::max(row.max, m.efficiency);
            ++used;
        }
        if (used == 0) throw InfeasibleError("no market with gains from trade");
        row.mean /= used;
        rows.push_back(row);
    }
    return rows;
}

double risk_premium_price(double reference, double premium, double sigma) {
    if (!(premium >= 0.0 && premium <= 1.0)) throw ValidationError("risk premium must be in [0, 1]");
    if (!(sigma >= 0.0 && sigma <= 1.0)) throw ValidationError("disclosure level must be in [0, 1]");
    return reference * (1.0 + premium * (1.0 - sigma));
}

ElasticityReport elasticity_experiment(const ScenarioConfig& c, int seeds, const std::vector<double>& sigmas) {
    ElasticityReport r;
    r.min = INFINITY;
    r.max = -INFINITY;
    for (int s = 0; s < seeds; ++s) {
        ScenarioConfig cfg = c;
        cfg.seed = c.seed + static_cast<std::uint64_t>(s);
        const auto m = run_market(cfg);
        const std::size_t tail = std::max<std::size_t>(1, m.going_rate.size() / 10);
        const double reference = median_of({m.going_rate.end() - static_cast<long>(tail), m.going_rate.end()});
        auto rng = make_stream(cfg.seed, "elasticity-premium");
        const double premium = uniform01(rng);
        for (double sigma : sigmas) {
            const double xi = privacy::privacy_elasticity(
                [&](double x) { return risk_premium_price(reference, premium, x); }, sigma);
            r.estimates.push_back(xi);
            r.min = std::min(r.min, xi);
            r.max = std::max(r.max, xi);
        }
    }
    return r;
}

Json ElasticityReport::to_json() const { return {{"estimates", estimates}, {"min", min}, {"max", max}}; }

}  // namespace cpmm::sim
