#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "cpmm/error.hpp"
#include "cpmm/sim.hpp"

namespace cpmm::sim {

namespace {

constexpr double kEps = 1e-9;

template <typename T>
T value_or(const Json& j, const char* key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace

double ScenarioConfig::tick() const { return std::pow(10.0, -precision); }

std::size_t ScenarioConfig::belief_atoms() const {
    if (learning.belief_atoms) return learning.belief_atoms;
    return static_cast<std::size_t>(std::llround((price_hi - price_lo) / tick())) + 1;
}

void ScenarioConfig::validate() const {
    if (rounds < 1) throw ValidationError("scenario needs at least one round");
    if (precision < 0 || precision > 8) throw ValidationError("currency precision must be in [0, 8]");
    if (!(price_hi > price_lo) || price_lo < 0) throw ValidationError("price grid must be a non-empty non-negative range");
    if (buyers.empty() || sellers.empty()) throw ValidationError("scenario needs buyers and sellers");
    if (!(risk_premium >= 0.0 && risk_premium <= 1.0)) throw ValidationError("risk premium must be in [0, 1]");
    if (learning.memory < 0 || (learning.belief_atoms != 0 && learning.belief_atoms < 3) || learning.search_passes < 1 || learning.markup_ticks.empty())
        throw ValidationError("invalid learning settings");
    const std::size_t d = dimensions.size();
    std::set<std::string> ids;
    for (const auto& b : buyers) {
        if (!ids.insert(b.id).second) throw ValidationError("duplicate agent id '" + b.id + "'");
        if (b.quality.size() != d || b.weights.size() != d)
            throw DimensionError("buyer '" + b.id + "' does not match the dimension registry");
        for (double q : b.quality)
            if (!(q >= 0.0 && q <= 1.0)) throw ValidationError("quality requests must be in [0, 1]");
        for (double w : b.weights)
            if (!(w >= 0.0)) throw ValidationError("value weights must be non-negative");
        if (b.valuation != "linear" && b.valuation != "sqrt") throw ValidationError("unknown valuation '" + b.valuation + "'");
        if (!(b.disclosure >= 0.0 && b.disclosure <= 1.0)) throw ValidationError("disclosure must be in [0, 1]");
    }
    for (const auto& s : sellers) {
        if (!ids.insert(s.id).second) throw ValidationError("duplicate agent id '" + s.id + "'");
        if (s.coefficients.size() != d || s.exponents.size() != d || s.region.lo.size() != d)
            throw DimensionError("seller '" + s.id + "' does not match the dimension registry");
        s.region.validate();
        if (s.fixed_cost < 0) throw ValidationError("fixed cost must be non-negative");
        for (double a : s.coefficients)
            if (!(a >= 0.0)) throw ValidationError("cost coefficients must be non-negative");
        for (double e : s.exponents)
            if (!(e > 1.0)) throw ValidationError("cost exponents must exceed 1");
        if (!(s.disclosure >= 0.0 && s.disclosure <= 1.0)) throw ValidationError("disclosure must be in [0, 1]");
    }
    if (sybil && std::none_of(sellers.begin(), sellers.end(), [&](const SellerConfig& s) { return s.id == sybil->attacker; }))
        throw ValidationError("sybil attacker '" + sybil->attacker + "' is not a seller");
}

ScenarioConfig scenario_from_json(const Json& j) {
    try {
        ScenarioConfig c;
        c.name = value_or<std::string>(j, "name", c.name);
        c.seed = value_or<std::uint64_t>(j, "seed", c.seed);
        c.rounds = value_or<long>(j, "rounds", c.rounds);
        c.currency = value_or<std::string>(j, "currency", c.currency);
        c.precision = value_or<int>(j, "precision", c.precision);
        if (j.contains("price_grid")) {
            c.price_lo = j["price_grid"].at("lo").get<double>();
            c.price_hi = j["price_grid"].at("hi").get<double>();
        }
        c.risk_premium = value_or<double>(j, "risk_premium", 0.0);
        c.full_protocol = value_or<bool>(j, "full_protocol", false);
        if (j.contains("matching")) {
            const auto& m = j["matching"];
            c.matching.mode = registry::match_mode_from_string(value_or<std::string>(m, "mode", "random"));
            c.matching.temperature = value_or<double>(m, "temperature", 1.0);
            c.matching.reputation_weight = value_or<double>(m, "reputation_weight", 1.0);
            c.matching.exploration_c = value_or<double>(m, "exploration_c", 0.0);
        }
        if (j.contains("learning")) {
            const auto& l = j["learning"];
            c.learning.memory = value_or<int>(l, "memory", c.learning.memory);
            c.learning.belief_atoms = value_or<std::size_t>(l, "belief_atoms", c.learning.belief_atoms);
            c.learning.signal_noise = value_or<double>(l, "signal_noise", c.learning.signal_noise);
            c.learning.markup_ticks = value_or<std::vector<int>>(l, "markup_ticks", c.learning.markup_ticks);
            c.learning.search_passes = value_or<int>(l, "search_passes", c.learning.search_passes);
        }
        if (j.contains("sybil"))
            c.sybil = SybilConfig{j["sybil"].at("attacker").get<std::string>(),
                                  value_or<double>(j["sybil"], "capability_cost", 0.0)};

        if (j.contains("generate")) {
            const auto& g = j["generate"];
            GeneratedMarket gm;
            gm.buyers = value_or<std::size_t>(g, "buyers", gm.buyers);
            gm.sellers = value_or<std::size_t>(g, "sellers", gm.sellers);
            if (g.contains("value_range")) {
                gm.value_lo = g["value_range"].at(0).get<double>();
                gm.value_hi = g["value_range"].at(1).get<double>();
            }
            if (g.contains("cost_range")) {
                gm.cost_lo = g["cost_range"].at(0).get<double>();
                gm.cost_hi = g["cost_range"].at(1).get<double>();
            }
            gm.disclosure = value_or<double>(g, "disclosure", 1.0);
            auto generated = generate_market(gm, c.seed, c.rounds);
            c.dimensions = generated.dimensions;
            c.buyers = std::move(generated.buyers);
            c.sellers = std::move(generated.sellers);
        } else {
            std::vector<econ::Dimension> dims;
            for (const auto& d : j.at("dimensions"))
                dims.push_back({d.at("name").get<std::string>(), value_or<std::string>(d, "unit", ""),
                                value_or<bool>(d, "higher_is_better", true), value_or<double>(d, "cap", 1.0)});
            c.dimensions = econ::DimensionRegistry(dims);
            for (const auto& b : j.at("buyers"))
                c.buyers.push_back({b.at("id").get<std::string>(), value_or<std::string>(b, "capability", "compute"),
                                    b.at("quality").get<std::vector<double>>(), b.at("weights").get<std::vector<double>>(),
                                    value_or<std::string>(b, "valuation", "linear"), value_or<double>(b, "disclosure", 1.0)});
            for (const auto& s : j.at("sellers")) {
                SellerConfig sc;
                sc.id = s.at("id").get<std::string>();
                sc.capabilities = value_or<std::vector<std::string>>(s, "capabilities", {"compute"});
                sc.region = s.contains("region")
                                ? econ::QualityBox{s["region"].at("lo").get<std::vector<double>>(),
                                                   s["region"].at("hi").get<std::vector<double>>()}
                                : econ::QualityBox::full(dims.size());
                sc.fixed_cost = value_or<double>(s, "fixed_cost", 0.0);
                sc.coefficients = s.at("coefficients").get<std::vector<double>>();
                sc.exponents = s.at("exponents").get<std::vector<double>>();
                sc.disclosure = value_or<double>(s, "disclosure", 1.0);
                sc.operator_id = value_or<std::string>(s, "operator", "");
                c.sellers.push_back(std::move(sc));
            }
        }
        c.validate();
        return c;
    } catch (const Json::exception& ex) {
        throw ParseError("scenario", ex.what());
    }
}

Json to_json(const ScenarioConfig& c) {
    Json dims = Json::array();
    for (const auto& d : c.dimensions.dimensions())
        dims.push_back({{"name", d.name}, {"unit", d.unit}, {"higher_is_better", d.higher_is_better}, {"cap", d.cap}});
    Json buyers = Json::array();
    for (const auto& b : c.buyers)
        buyers.push_back({{"id", b.id}, {"capability", b.capability}, {"quality", b.quality}, {"weights", b.weights},
                          {"valuation", b.valuation}, {"disclosure", b.disclosure}});
    Json sellers = Json::array();
    for (const auto& s : c.sellers)
        sellers.push_back({{"id", s.id}, {"capabilities", s.capabilities},
                           {"region", {{"lo", s.region.lo}, {"hi", s.region.hi}}}, {"fixed_cost", s.fixed_cost},
                           {"coefficients", s.coefficients}, {"exponents", s.exponents}, {"disclosure", s.disclosure},
                           {"operator", s.operator_id}});
    Json j{{"name", c.name},
           {"seed", c.seed},
           {"rounds", c.rounds},
           {"currency", c.currency},
           {"precision", c.precision},
           {"price_grid", {{"lo", c.price_lo}, {"hi", c.price_hi}}},
           {"dimensions", dims},
           {"buyers", buyers},
           {"sellers", sellers},
           {"matching",
            {{"mode", registry::to_string(c.matching.mode)},
             {"temperature", c.matching.temperature},
             {"reputation_weight", c.matching.reputation_weight},
             {"exploration_c", c.matching.exploration_c}}},
           {"learning",
            {{"memory", c.learning.memory},
             {"belief_atoms", c.learning.belief_atoms},
             {"signal_noise", c.learning.signal_noise},
             {"markup_ticks", c.learning.markup_ticks},
             {"search_passes", c.learning.search_passes}}},
           {"risk_premium", c.risk_premium},
           {"full_protocol", c.full_protocol}};
    if (c.sybil) j["sybil"] = {{"attacker", c.sybil->attacker}, {"capability_cost", c.sybil->capability_cost}};
    return j;
}

ScenarioConfig generate_market(const GeneratedMarket& g, std::uint64_t seed, long rounds) {
    if (g.buyers == 0 || g.sellers == 0) throw ValidationError("generated market needs agents on both sides");
    ScenarioConfig c;
    c.name = "generated";
    c.seed = seed;
    c.rounds = rounds;
    c.price_lo = 0.0;
    c.price_hi = std::ceil(std::max(g.value_hi, g.cost_hi) + 1.0);
    c.dimensions = econ::DimensionRegistry({{"quality", "score", true, 1.0}});
    c.matching.exploration_c = 1.0;
    auto rng = make_stream(seed, "generated-market");
    for (std::size_t i = 0; i < g.buyers; ++i) {
        const double v = g.value_lo + (g.value_hi - g.value_lo) * uniform01(rng);
        c.buyers.push_back({"b" + std::to_string(i + 1), "compute", {1.0}, {v}, "linear", g.disclosure});
    }
    for (std::size_t i = 0; i < g.sellers; ++i) {
        const double cost = g.cost_lo + (g.cost_hi - g.cost_lo) * uniform01(rng);
        SellerConfig s;
        s.id = "s" + std::to_string(i + 1);
        s.region = econ::QualityBox::full(1);
        s.coefficients = {cost};
        s.exponents = {2.0};
        s.disclosure = g.disclosure;
        c.sellers.push_back(std::move(s));
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------

ClearingRange clearing_range(const std::vector<double>& values, const std::vector<double>& costs, double lo,
                             double hi, double tick) {
    if (values.empty() || costs.empty()) throw InfeasibleError("no trade possible: one side is empty");
    if (*std::max_element(values.begin(), values.end()) < *std::min_element(costs.begin(), costs.end()))
        throw InfeasibleError("no trade possible at any price");
    const auto n = static_cast<long>(std::llround((hi - lo) / tick));
    auto price = [&](long i) { return lo + static_cast<double>(i) * tick; };
    auto excess = [&](long i) {
        const double p = price(i);
        long d = 0, s = 0;
        for (double v : values) d += v >= p - kEps;
        for (double c : costs) s += c <= p + kEps;
        return d - s;
    };
    // excess() is non-increasing in i; find the first index with excess <= 0
    // and the last with excess >= 0.
    long a = 0, b = n + 1;
    while (a < b) {
        const long m = (a + b) / 2;
        if (excess(m) <= 0) b = m;
        else a = m + 1;
    }
    const long first_nonpos = a;
    a = -1, b = n;
    while (a < b) {
        const long m = (a + b + 1) / 2;
        if (excess(m) >= 0) a = m;
        else b = m - 1;
    }
    const long last_nonneg = a;
    if (first_nonpos > n || last_nonneg < 0) throw InfeasibleError("clearing price lies outside the price grid");
    if (first_nonpos <= last_nonneg) return {price(first_nonpos), price(last_nonneg)};
    // Demand jumps from excess to shortage between two adjacent grid points.
    return {price(last_nonneg), price(first_nonpos)};
}

double buyer_value(const ScenarioConfig& c, const BuyerConfig& b) {
    econ::BuyerPreference pref;
    for (std::size_t j = 0; j < b.weights.size(); ++j) {
        pref.weights.push_back(econ::constant(b.weights[j]));
        if (b.valuation == "sqrt") pref.dim_valuations.push_back([](double x) { return std::sqrt(x); });
        else pref.dim_valuations.push_back([](double x) { return x; });
    }
    (void)c;
    return econ::eval_valuation(pref, econ::QualityVector(b.quality), {});
}

double seller_cost(const SellerConfig& s, const std::vector<double>& q) {
    econ::SellerCostModel m;
    m.fixed_cost = econ::constant(s.fixed_cost);
    for (double a : s.coefficients) m.coefficients.push_back(econ::constant(a));
    m.exponents = s.exponents;
    return econ::eval_cost(m, econ::QualityVector(q), {});
}

bool seller_can_serve(const SellerConfig& s, const BuyerConfig& b) {
    if (std::find(s.capabilities.begin(), s.capabilities.end(), b.capability) == s.capabilities.end()) return false;
    econ::CapabilitySpec spec{b.capability, "", s.region, ""};
    return econ::quality_feasible(spec, econ::QualityVector(b.quality));
}

std::vector<double> reference_quality(const ScenarioConfig& c) {
    std::vector<double> q(c.dimensions.size(), 0.0);
    for (const auto& b : c.buyers)
        for (std::size_t j = 0; j < q.size(); ++j) q[j] += b.quality[j] / static_cast<double>(c.buyers.size());
    return q;
}

Reservations reservations(const ScenarioConfig& c) {
    Reservations r;
    for (const auto& b : c.buyers) r.values.push_back(buyer_value(c, b));
    const auto q = reference_quality(c);
    for (const auto& s : c.sellers) r.costs.push_back(seller_cost(s, q));
    return r;
}

ClearingRange equilibrium_range(const ScenarioConfig& c) {
    const auto r = reservations(c);
    return clearing_range(r.values, r.costs, c.price_lo, c.price_hi, c.tick());
}

double equilibrium_oracle(const ScenarioConfig& c) { return equilibrium_range(c).mid(); }

double max_assignment(const std::vector<std::vector<double>>& gains) {
    const std::size_t rows = gains.size();
    if (rows == 0) return 0.0;
    const std::size_t cols = gains[0].size();
    const std::size_t n = std::max(rows, cols);
    // Hungarian algorithm (potentials form) minimizing -max(0, gain).
    std::vector<std::vector<double>> cost(n + 1, std::vector<double>(n + 1, 0.0));
    for (std::size_t i = 0; i < rows; ++i) {
        if (gains[i].size() != cols) throw DimensionError("gain matrix must be rectangular");
        for (std::size_t j = 0; j < cols; ++j) cost[i + 1][j + 1] = -std::max(0.0, gains[i][j]);
    }
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0][j] - u[i0] - v[j];
                if (cur < minv[j]) minv[j] = cur, way[j] = j0;
                if (minv[j] < delta) delta = minv[j], j1 = j;
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) u[p[j]] += delta, v[j] -= delta;
                else minv[j] -= delta;
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    double total = 0.0;
    for (std::size_t j = 1; j <= n; ++j) total -= cost[p[j]][j];
    return total;
}

double first_best(const ScenarioConfig& c) {
    std::vector<std::vector<double>> gains(c.buyers.size(), std::vector<double>(c.sellers.size()));
    for (std::size_t i = 0; i < c.buyers.size(); ++i) {
        const double v = buyer_value(c, c.buyers[i]);
        for (std::size_t j = 0; j < c.sellers.size(); ++j)
            gains[i][j] = seller_can_serve(c.sellers[j], c.buyers[i])
                              ? v - seller_cost(c.sellers[j], c.buyers[i].quality)
                              : -std::numeric_limits<double>::infinity();
    }
    return max_assignment(gains);
}

}  // namespace cpmm::sim
