#pragma once

// Repeated bilateral market simulator and the experiment harness built on it.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cpmm/bandits.hpp"
#include "cpmm/economic.hpp"
#include "cpmm/payloads.hpp"
#include "cpmm/registry.hpp"
#include "cpmm/rng.hpp"

namespace cpmm::sim {

using payload::Json;

struct BuyerConfig {
    std::string id;
    std::string capability = "compute";
    std::vector<double> quality;             ///< requested point of the normalized box
    std::vector<double> weights;             ///< per-dimension value weights
    std::string valuation = "linear";        ///< "linear" or "sqrt" per dimension
    double disclosure = 1.0;
};

struct SellerConfig {
    std::string id;
    std::vector<std::string> capabilities{"compute"};
    econ::QualityBox region;
    double fixed_cost = 0.0;
    std::vector<double> coefficients;
    std::vector<double> exponents;
    double disclosure = 1.0;
    /// Identities with the same operator share one unit of capacity per
    /// round. Empty means the seller operates alone.
    std::string operator_id;

    const std::string& owner() const { return operator_id.empty() ? id : operator_id; }
};

struct LearningConfig {
    int memory = 200;                  ///< bounded memory of each reservation belief
    std::size_t belief_atoms = 0;      ///< support size of each reservation belief; 0 = one atom per tick
    double signal_noise = 2.0;         ///< noise std at zero disclosure
    std::vector<int> markup_ticks{0, 1, 2};  ///< seller pricing arms, ticks over the going rate
    int search_passes = 64;            ///< cap on matching passes per round
};

struct SybilConfig {
    std::string attacker;
    double capability_cost = 0.0;  ///< charged per extra identity
};

struct ScenarioConfig {
    std::string name = "scenario";
    std::uint64_t seed = 1;
    long rounds = 1000;
    std::string currency = "UNITS";
    int precision = 2;
    double price_lo = 0.0;
    double price_hi = 20.0;
    econ::DimensionRegistry dimensions;
    std::vector<BuyerConfig> buyers;
    std::vector<SellerConfig> sellers;
    registry::MatchConfig matching;
    LearningConfig learning;
    std::optional<SybilConfig> sybil;
    double risk_premium = 0.0;     ///< quote inflation per unit of undisclosed information, in [0, 1]
    bool full_protocol = false;

    void validate() const;
    double tick() const;
    std::size_t belief_atoms() const;
};

ScenarioConfig scenario_from_json(const Json& j);
Json to_json(const ScenarioConfig& c);

/// Single-dimension market with uniformly drawn values and costs.
struct GeneratedMarket {
    std::size_t buyers = 10;
    std::size_t sellers = 10;
    double value_lo = 5.0, value_hi = 15.0;
    double cost_lo = 2.0, cost_hi = 12.0;
    double disclosure = 1.0;
};
ScenarioConfig generate_market(const GeneratedMarket& g, std::uint64_t seed, long rounds);

/// Reservation values at the configured quality requests: buyer values at
/// their own request, seller costs at the mean request of all buyers.
struct Reservations {
    std::vector<double> values;
    std::vector<double> costs;
};
Reservations reservations(const ScenarioConfig& c);

struct ClearingRange {
    double lo = 0.0;
    double hi = 0.0;
    double mid() const { return 0.5 * (lo + hi); }
    bool contains(double p, double tol = 1e-9) const { return p >= lo - tol && p <= hi + tol; }
};

/// Prices on the grid where demand (values >= p) meets supply (costs <= p).
/// Throws InfeasibleError when no trade is possible at any price.
ClearingRange clearing_range(const std::vector<double>& values, const std::vector<double>& costs, double lo,
                             double hi, double tick);
/// Midpoint of the clearing range of the complete-information snapshot.
double equilibrium_oracle(const ScenarioConfig& c);
ClearingRange equilibrium_range(const ScenarioConfig& c);

double buyer_value(const ScenarioConfig& c, const BuyerConfig& b);
double seller_cost(const SellerConfig& s, const std::vector<double>& quality);
/// Capability advertised and the requested quality inside its region.
bool seller_can_serve(const SellerConfig& s, const BuyerConfig& b);
/// Mean quality request across buyers.
std::vector<double> reference_quality(const ScenarioConfig& c);

/// Maximum total gains over one-to-one buyer/seller assignments where each
/// pair contributes max(0, gain). gains[i][j] may be -inf for infeasible pairs.
double max_assignment(const std::vector<std::vector<double>>& gains);
/// First-best welfare of one round of the configured market.
double first_best(const ScenarioConfig& c);

struct StageOutcome {
    long round = 0;
    std::string buyer;
    std::string seller;
    bool traded = false;
    bool quoted = false;
    std::string reason;  ///< why no trade happened
    double price = 0.0;
    double max_price = 0.0;
    std::vector<double> quality;
    double buyer_utility = 0.0;
    double seller_profit = 0.0;
    double value = 0.0;
    double cost = 0.0;
    bool protocol_completed = false;
};

/// What each side believes the going rate is when the stage game starts.
struct StageContext {
    long round = 1;
    double buyer_rate = 0.0;   ///< caps the buyer's maximum price
    double seller_rate = 0.0;  ///< anchors the seller's quote
};

/// One five-step stage game. The seller's bandit picks a markup in ticks over
/// its anchor; a quote is never below cost. The buyer's maximum price is its
/// value capped at its going rate (both inflated by the risk premium for the
/// buyer's undisclosed share), and it accepts iff utility >= 0 and the quote
/// does not exceed that maximum. `pricing` is updated only when a quote is made.
StageOutcome run_stage_game(const ScenarioConfig& c, const BuyerConfig& b, const SellerConfig& s,
                            const StageContext& ctx, bandit::UcbState& pricing);

struct MarketMetrics {
    double equilibrium_price = 0.0;
    ClearingRange equilibrium;
    double first_best_per_round = 0.0;
    std::vector<double> prices;      ///< p_t, mean traded price (going rate when nothing traded)
    std::vector<double> errors;      ///< |p_t - p*|
    std::vector<double> welfare;     ///< realized gains per round
    std::vector<double> regret;      ///< cumulative first-best shortfall
    std::vector<long> trades;        ///< trades per round
    std::vector<double> going_rate;  ///< belief-implied clearing price used in round t
    std::map<std::string, double> profit;   ///< per seller id
    std::map<std::string, double> utility;  ///< per buyer id
    double efficiency = 0.0;
    long sessions_completed = 0;
    bool escrow_conserved = true;
    std::vector<StageOutcome> outcomes;  ///< kept only when requested

    Json summary() const;
    /// One row per round: t, price, error, welfare, regret, trades, going_rate.
    std::string table() const;
};

struct RunOptions {
    bool keep_outcomes = false;
};

MarketMetrics run_market(const ScenarioConfig& c, const RunOptions& opts = {});

/// Achieved welfare over first-best; W* must be positive.
double measure_efficiency(const std::vector<StageOutcome>& outcomes, double first_best_total);

/// Mann-Kendall trend test.
struct TrendTest {
    double s = 0.0;
    double z = 0.0;
    double p_increasing = 1.0;  ///< one-sided p-value for an increasing trend
    double p_decreasing = 1.0;
};
TrendTest mann_kendall(const std::vector<double>& x);

/// Rolling median over a trailing window (shorter at the start).
std::vector<double> rolling_median(const std::vector<double>& x, std::size_t window);

struct SybilRow {
    int k = 1;
    double revenue = 0.0;  ///< attacker profit, mean over seeds
    double benefit = 0.0;  ///< B(k): revenue gain over k = 1 minus capability spend
};
struct SybilReport {
    std::vector<SybilRow> rows;
    std::vector<double> marginal;  ///< B(k) - B(k-1) for k = 2..k_max
    TrendTest trend;
    double budget_bound = 0.0;     ///< extra profit if the shared unit sold every round at the going rate
    bool marginal_non_increasing = false;
    bool within_budget = false;
    Json to_json() const;
};
SybilReport sybil_experiment(const ScenarioConfig& base, int k_max, int seeds);

struct ConvergenceReport {
    double equilibrium_price = 0.0;
    std::vector<double> epsilons;
    std::vector<std::optional<long>> settle_round;  ///< first round after which the filtered error stays below eps
    std::vector<double> filtered;                   ///< rolling-median error, window 100
    double tail_median_error = 0.0;                 ///< median error over the last 10% of rounds
    TrendTest trend;                                ///< on filtered error sampled every window
    bool non_increasing = false;
    Json to_json() const;
};
ConvergenceReport convergence_experiment(const ScenarioConfig& c, const std::vector<double>& epsilons,
                                         std::size_t window = 100);

struct EfficiencyRow {
    std::size_t agents = 0;
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
};
std::vector<EfficiencyRow> efficiency_experiment(const std::vector<std::size_t>& agent_counts, int seeds, long rounds,
                                                 double disclosure);

/// Price under the risk-premium model: reference * (1 + premium * (1 - sigma)).
double risk_premium_price(double reference, double premium, double sigma);

struct ElasticityReport {
    std::vector<double> estimates;
    double min = 0.0;
    double max = 0.0;
    Json to_json() const;
};
ElasticityReport elasticity_experiment(const ScenarioConfig& c, int seeds, const std::vector<double>& sigmas);

}  // namespace cpmm::sim
