#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "cpmm/acnbp.hpp"
#include "cpmm/error.hpp"
#include "cpmm/samples.hpp"
#include "cpmm/sim.hpp"

namespace cpmm::sim {

namespace {

double floor_tick(double x, double tick) { return std::floor(x / tick + 1e-9) * tick; }
double ceil_tick(double x, double tick) { return std::ceil(x / tick - 1e-9) * tick; }
double round_tick(double x, double tick) { return std::round(x / tick) * tick; }

double premium_factor(const ScenarioConfig& c, const BuyerConfig& b) {
    return 1.0 + c.risk_premium * (1.0 - b.disclosure);
}

// Box-Muller on the portable uniform draw, so runs match across standard libraries.
double gaussian(Rng& rng) {
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

/// Posterior over one agent's reservation value, observed through noisy
/// readings disclosed during negotiations.
struct ReservationBelief {
    econ::BeliefState belief;
    double median;
};

class ProtocolReplay {
public:
    explicit ProtocolReplay(const ScenarioConfig& c)
        : config_(c),
          book_(std::make_shared<rail::EscrowBook>()),
          engine_(crypto::SigningKey::derive("market-authority"), payload::samples::root_key().public_key(), book_),
          chain_(payload::samples::attester_chain()) {}

    bool replay(const StageOutcome& o, long round) {
        acnbp::TradeSetup t;
        t.session_id = "r" + std::to_string(round) + "-" + o.buyer + "-" + o.seller;
        t.buyer_id = o.buyer;
        t.seller_id = o.seller;
        t.buyer_key = &key(o.buyer);
        t.seller_key = &key(o.seller);
        t.capability = "compute";
        t.units = 1;
        t.max_price = Money::from_double(o.max_price, config_.precision);
        t.quote = Money::from_double(o.price, config_.precision);
        t.currency = config_.currency;
        t.proposal_template = payload::samples::proposal_unsigned();
        t.quality_request = {{"latency", "100ms"}, {"accuracy", "95%"}};
        t.delivered = {{"latency", "85ms", "client_side_timing", ""},
                       {"accuracy", "97.3%", "reference_comparison", ""}};
        t.attester_key = &payload::samples::attester_key();
        t.attester_chain = chain_;
        t.start = payload::samples::kEpoch + round * 100;
        const auto s = acnbp::run_trade(engine_, t);
        return s.step == acnbp::Step::Audit && s.escrow_state == rail::EscrowState::Released;
    }

    bool conserved() const {
        std::int64_t total = 0;
        for (const auto& [acct, bal] : book_->ledger().balances()) total += bal;
        return total == 0;
    }

private:
    const crypto::SigningKey& key(const std::string& id) {
        auto it = keys_.find(id);
        if (it == keys_.end()) it = keys_.emplace(id, crypto::SigningKey::derive("sim-agent:" + id)).first;
        return it->second;
    }

    const ScenarioConfig& config_;
    std::shared_ptr<rail::EscrowBook> book_;
    acnbp::Engine engine_;
    std::vector<std::string> chain_;
    std::map<std::string, crypto::SigningKey> keys_;
};

}  // namespace

StageOutcome run_stage_game(const ScenarioConfig& c, const BuyerConfig& b, const SellerConfig& s,
                            const StageContext& ctx, bandit::UcbState& pricing) {
    const double tick = c.tick();
    StageOutcome o;
    o.round = ctx.round;
    o.buyer = b.id;
    o.seller = s.id;
    o.quality = b.quality;
    // Advertisement and quality request: the request must fall in the region.
    if (!seller_can_serve(s, b)) {
        o.reason = "quality outside the advertised region";
        return o;
    }
    o.value = buyer_value(c, b);
    o.cost = seller_cost(s, b.quality);
    const double premium = premium_factor(c, b);
    o.max_price = floor_tick(std::min(o.value, ctx.buyer_rate * premium), tick);
    // Price quote or rejection.
    if (o.max_price < o.cost - 1e-9) {
        o.reason = "402: maximum price below seller floor";
        return o;
    }
    const std::size_t arm = bandit::ucb_select(pricing);
    const double anchor = round_tick(ctx.seller_rate * premium, tick);
    o.price = std::max(anchor + c.learning.markup_ticks.at(arm) * tick, ceil_tick(o.cost, tick));
    o.price = round_tick(std::min(o.price, c.price_hi), tick);
    o.quoted = true;
    // Accept or reject.
    const bool accept = o.value - o.price >= -1e-9 && o.price <= o.max_price + 1e-9;
    double reward = 0.0;
    if (accept) {
        o.traded = true;
        o.buyer_utility = o.value - o.price;
        o.seller_profit = o.price - o.cost;
        reward = std::clamp(o.seller_profit / c.price_hi, 0.0, 1.0);
    } else {
        o.reason = "quote above maximum price";
        o.price = 0.0;
    }
    pricing = bandit::ucb_update(std::move(pricing), arm, reward);
    return o;
}

MarketMetrics run_market(const ScenarioConfig& c, const RunOptions& opts) {
    c.validate();
    const std::size_t nb = c.buyers.size(), ns = c.sellers.size();
    const double tick = c.tick();
    const auto& learn = c.learning;

    MarketMetrics m;
    m.equilibrium = equilibrium_range(c);
    m.equilibrium_price = m.equilibrium.mid();
    m.first_best_per_round = first_best(c);

    const auto truth = reservations(c);
    const std::size_t atoms = c.belief_atoms();
    const double atom_width = (c.price_hi - c.price_lo) / static_cast<double>(atoms - 1);
    auto fresh = [&] {
        auto b = econ::BeliefState::uniform_grid(c.price_lo, c.price_hi, atoms, learn.memory);
        const double med = b.median();
        return ReservationBelief{std::move(b), med};
    };
    std::vector<ReservationBelief> buyer_belief(nb, fresh()), seller_belief(ns, fresh());
    std::vector<bandit::UcbState> pricing(ns, bandit::UcbState(learn.markup_ticks.size()));

    std::vector<double> reputation(ns, 0.0);
    std::vector<long> negotiations(ns, 0), sales(ns, 0);
    std::vector<std::map<std::string, double>> affinity(nb);

    auto rng_match = make_stream(c.seed, "sim-match");
    auto rng_order = make_stream(c.seed, "sim-order");
    auto rng_signal = make_stream(c.seed, "sim-signal");

    std::optional<ProtocolReplay> replay;
    if (c.full_protocol) replay.emplace(c);

    auto observe = [&](ReservationBelief& rb, double truth_value, double disclosure) {
        const double sd = learn.signal_noise * (1.0 - disclosure);
        const double reading = std::clamp(truth_value + sd * gaussian(rng_signal), c.price_lo, c.price_hi);
        const double width = std::max(sd, atom_width);
        rb.belief = econ::update_beliefs(rb.belief, [&](double x) {
            const double z = (x - reading) / width;
            return std::abs(z) > 8.0 ? 0.0 : std::exp(-0.5 * z * z);
        });
        rb.median = rb.belief.median();
    };

    auto going_rate = [&](double previous) {
        std::vector<double> v(nb), cst;
        for (std::size_t i = 0; i < nb; ++i) v[i] = buyer_belief[i].median;
        // One unit of supply per unit of capacity, at its cheapest believed floor.
        std::map<std::string, double> floor_by_owner;
        for (std::size_t j = 0; j < ns; ++j) {
            auto [it, fresh_owner] = floor_by_owner.emplace(c.sellers[j].owner(), seller_belief[j].median);
            if (!fresh_owner) it->second = std::min(it->second, seller_belief[j].median);
        }
        for (const auto& [owner, f] : floor_by_owner) cst.push_back(f);
        try {
            return round_tick(clearing_range(v, cst, c.price_lo, c.price_hi, tick).mid(), tick);
        } catch (const InfeasibleError&) {
            return previous;
        }
    };

    // Registration: each advertisement discloses one reading of its reservation.
    for (std::size_t i = 0; i < nb; ++i) observe(buyer_belief[i], truth.values[i], c.buyers[i].disclosure);
    for (std::size_t j = 0; j < ns; ++j) observe(seller_belief[j], truth.costs[j], c.sellers[j].disclosure);
    double rate = going_rate(round_tick(0.5 * (c.price_lo + c.price_hi), tick));
    double cumulative_regret = 0.0;
    double welfare_total = 0.0;

    for (long t = 1; t <= c.rounds; ++t) {
        std::vector<bool> buyer_done(nb, false);
        std::map<std::string, bool> owner_busy;
        double traded_value = 0.0, welfare = 0.0;
        long trades = 0;
        std::vector<std::pair<std::size_t, std::size_t>> negotiated;

        for (int pass = 0; pass < learn.search_passes; ++pass) {
            std::vector<std::size_t> active, open;
            for (std::size_t i = 0; i < nb; ++i)
                if (!buyer_done[i]) active.push_back(i);
            for (std::size_t j = 0; j < ns; ++j)
                if (!owner_busy[c.sellers[j].owner()]) open.push_back(j);
            if (active.empty() || open.empty()) break;

            // Discovery: each buyer draws among open sellers offering its
            // capability whose believed floor does not exceed its maximum price.
            std::vector<std::optional<std::size_t>> pairing(active.size());
            for (std::size_t k = 0; k < active.size(); ++k) {
                const std::size_t i = active[k];
                const double max_price = std::min(buyer_belief[i].median, rate * premium_factor(c, c.buyers[i]));
                // With probability min(1, c/t) the query drops the price filter,
                // so every pair keeps a matching probability of order c/t.
                const bool explore = c.matching.exploration_c > 0.0 &&
                                     uniform01(rng_match) < c.matching.exploration_c / static_cast<double>(t);
                std::vector<std::size_t> shortlist;
                std::vector<registry::MatchSeller> ms;
                for (std::size_t j : open) {
                    if (!explore && seller_belief[j].median > max_price + 1e-9) continue;
                    shortlist.push_back(j);
                    ms.push_back({c.sellers[j].id, c.sellers[j].capabilities, reputation[j]});
                }
                if (ms.empty()) continue;
                const auto pick = registry::match(
                    c.matching, {{c.buyers[i].id, c.buyers[i].capability, affinity[i]}}, ms, rng_match, t)[0];
                if (pick) pairing[k] = shortlist[*pick];
            }

            std::vector<std::size_t> order(active.size());
            std::iota(order.begin(), order.end(), 0);
            for (std::size_t k = order.size(); k > 1; --k)
                std::swap(order[k - 1], order[uniform_index(rng_order, k)]);

            const std::size_t negotiated_before = negotiated.size();
            for (std::size_t k : order) {
                if (!pairing[k]) continue;
                const std::size_t i = active[k], j = *pairing[k];
                if (owner_busy[c.sellers[j].owner()]) continue;  // capacity already sold this round
                const bool feasible = seller_can_serve(c.sellers[j], c.buyers[i]);
                StageOutcome o = run_stage_game(c, c.buyers[i], c.sellers[j], {t, rate, rate}, pricing[j]);
                if (!feasible) {
                    if (opts.keep_outcomes) m.outcomes.push_back(std::move(o));
                    continue;  // nothing was negotiated
                }
                negotiated.emplace_back(i, j);
                ++negotiations[j];
                if (o.traded) {
                    buyer_done[i] = true;
                    owner_busy[c.sellers[j].owner()] = true;
                    ++sales[j];
                    ++trades;
                    traded_value += o.price;
                    welfare += o.buyer_utility + o.seller_profit;
                    m.profit[c.sellers[j].id] += o.seller_profit;
                    m.utility[c.buyers[i].id] += o.buyer_utility;
                    auto& a = affinity[i][c.sellers[j].id];
                    a = 0.5 * a + 0.5 * o.buyer_utility / c.price_hi;
                    if (replay && replay->replay(o, t)) {
                        o.protocol_completed = true;
                        ++m.sessions_completed;
                    }
                }
                reputation[j] = static_cast<double>(sales[j]) / static_cast<double>(negotiations[j]);
                if (opts.keep_outcomes) m.outcomes.push_back(std::move(o));
            }
            if (negotiated.size() == negotiated_before) break;  // search exhausted
        }

        // Every negotiation discloses a noisy reading of both reservations.
        for (const auto& [i, j] : negotiated) {
            observe(buyer_belief[i], truth.values[i], c.buyers[i].disclosure);
            observe(seller_belief[j], truth.costs[j], c.sellers[j].disclosure);
        }

        const double price = trades ? traded_value / static_cast<double>(trades) : rate;
        m.going_rate.push_back(rate);
        m.prices.push_back(price);
        m.errors.push_back(std::abs(price - m.equilibrium_price));
        m.welfare.push_back(welfare);
        m.trades.push_back(trades);
        welfare_total += welfare;
        cumulative_regret += m.first_best_per_round - welfare;
        m.regret.push_back(cumulative_regret);
        rate = going_rate(rate);
    }

    const double best = m.first_best_per_round * static_cast<double>(c.rounds);
    m.efficiency = best > 0 ? std::clamp(welfare_total / best, 0.0, 1.0) : 0.0;
    if (best > 0 && welfare_total / best > 1.0 + 1e-9) throw Error("realized welfare exceeds first-best");
    if (replay) m.escrow_conserved = replay->conserved();
    return m;
}

double measure_efficiency(const std::vector<StageOutcome>& outcomes, double first_best_total) {
    if (!(first_best_total > 0.0)) throw ValidationError("first-best welfare must be positive");
    double achieved = 0.0;
    for (const auto& o : outcomes)
        if (o.traded) achieved += o.buyer_utility + o.seller_profit;
    const double eta = achieved / first_best_total;
    if (eta > 1.0 + 1e-9) throw Error("realized welfare exceeds first-best");
    return std::clamp(eta, 0.0, 1.0);
}

Json MarketMetrics::summary() const {
    const std::size_t n = prices.size();
    std::vector<double> tail(errors.end() - static_cast<long>(std::max<std::size_t>(1, n / 10)), errors.end());
    std::nth_element(tail.begin(), tail.begin() + static_cast<long>(tail.size() / 2), tail.end());
    long total_trades = std::accumulate(trades.begin(), trades.end(), 0L);
    return {{"rounds", n},
            {"equilibrium_price", equilibrium_price},
            {"clearing_range", {equilibrium.lo, equilibrium.hi}},
            {"first_best_per_round", first_best_per_round},
            {"efficiency", efficiency},
            {"final_price", n ? prices.back() : 0.0},
            {"tail_median_error", n ? tail[tail.size() / 2] : 0.0},
            {"trades", total_trades},
            {"final_regret", n ? regret.back() : 0.0},
            {"sessions_completed", sessions_completed},
            {"escrow_conserved", escrow_conserved}};
}

std::string MarketMetrics::table() const {
    std::ostringstream out;
    out.precision(10);
    out << "round\tprice\terror\twelfare\tregret\ttrades\tgoing_rate\n";
    for (std::size_t t = 0; t < prices.size(); ++t)
        out << t + 1 << '\t' << prices[t] << '\t' << errors[t] << '\t' << welfare[t] << '\t' << regret[t] << '\t'
            << trades[t] << '\t' << going_rate[t] << '\n';
    return out.str();
}

}  // namespace cpmm::sim
