#pragma once

// Shared trade setups and the exhaustive protocol model check.

#include <functional>
#include <string>
#include <vector>

#include "cpmm/acnbp.hpp"
#include "cpmm/samples.hpp"

namespace fixture {

using namespace cpmm::acnbp;
namespace samples = cpmm::payload::samples;

inline const cpmm::crypto::SigningKey& authority_key() {
    static const auto k = cpmm::crypto::SigningKey::derive("test-authority");
    return k;
}

inline const std::vector<std::string>& chain() {
    static const auto c = samples::attester_chain();
    return c;
}

inline Engine make_engine(std::shared_ptr<cpmm::rail::EscrowBook> book = std::make_shared<cpmm::rail::EscrowBook>()) {
    return Engine(authority_key(), samples::root_key().public_key(), std::move(book));
}

/// Buyer offers at most 0.005 USD, seller quotes 0.003 USD.
inline TradeSetup paper_trade(std::string session_id = "s1") {
    TradeSetup t;
    t.session_id = std::move(session_id);
    t.buyer_id = "MarketOracleAgent";
    t.seller_id = "SchedulingAgent";
    t.buyer_key = &samples::buyer_key();
    t.seller_key = &samples::seller_key();
    t.capability = "ScheduleManagement";
    t.units = 100;
    t.max_price = cpmm::Money::parse("0.005", 3);
    t.quote = cpmm::Money::parse("0.003", 3);
    t.currency = "USD";
    t.proposal_template = samples::proposal_unsigned();
    t.quality_request = {{"latency", "100ms"}, {"accuracy", "95%"}};
    t.delivered = {{"latency", "85ms", "client_side_timing", ""}, {"accuracy", "97.3%", "reference_comparison", ""}};
    t.attester_key = &samples::attester_key();
    t.attester_chain = chain();
    t.start = samples::kEpoch;
    return t;
}

inline NegotiationSession open_for(const Engine& engine, const TradeSetup& t) {
    return engine.open(t.session_id, {t.buyer_id, t.buyer_key->public_key(), t.buyer_manifest},
                       {t.seller_id, t.seller_key->public_key(), t.seller_manifest});
}

/// Advances through the happy-path steps up to and including `last`.
inline NegotiationSession drive_to(Engine& engine, const TradeSetup& t, Step last) {
    auto s = open_for(engine, t);
    Timestamp at = t.start;
    for (Step step : kStepOrder) {
        s = engine.advance(s, scripted_message(t, s, step, at++));
        if (step == last) break;
    }
    return s;
}

inline Envelope signed_as(const TradeSetup& t, const NegotiationSession& s, Step step, Json payload, Timestamp at,
                          bool by_seller) {
    Envelope e{s.session_id, step, by_seller ? t.seller_id : t.buyer_id, std::move(payload), at, ""};
    return sign_envelope(std::move(e), by_seller ? *t.seller_key : *t.buyer_key);
}

/// Sum of signed balances over the whole ledger and, per escrow account,
/// funded amount against outflows plus what is still held.
inline bool escrow_conserved(const cpmm::rail::EscrowBook& book) {
    std::int64_t total = 0;
    for (const auto& [acct, bal] : book.ledger().balances()) total += bal;
    if (total != 0) return false;
    std::map<std::string, std::int64_t> net;
    for (const auto& e : book.ledger().entries()) {
        net[e.to] += e.amount.minor;
        net[e.from] -= e.amount.minor;
    }
    for (const auto& [party, value] : net) {
        if (party.rfind("escrow:", 0) != 0) continue;
        const auto acct = book.get(party.substr(7));
        if (value != acct.held.minor || value < 0) return false;
    }
    return true;
}

struct ModelCheckReport {
    std::size_t sequences = 0;  ///< accepted event sequences explored
    std::size_t rejected = 0;   ///< events refused by the engine
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

/// Explores every event sequence up to `max_length` over the alphabet: the
/// ten scripted messages, a rejecting NegotiateResponse, a Verify whose
/// delivery misses the request, rollback and abort. Rejected events leave the
/// state unchanged, so only accepted prefixes are extended.
inline ModelCheckReport model_check(int max_length) {
    ModelCheckReport report;
    TradeSetup good = paper_trade("mc");
    TradeSetup slow = good;
    slow.delivered[0].measured_value = "140ms";

    struct Node {
        NegotiationSession session;
        std::shared_ptr<cpmm::rail::EscrowBook> book;
    };
    const int kAlphabet = 14;

    std::function<void(const Node&, int)> walk = [&](const Node& node, int depth) {
        ++report.sequences;
        if (depth == max_length) return;
        for (int ev = 0; ev < kAlphabet; ++ev) {
            auto book = node.book->clone();
            Engine engine = make_engine(book);
            const auto& s = node.session;
            const Timestamp at = good.start + depth;
            const auto before = s.step;
            NegotiationSession next;
            bool rolled = false;
            std::optional<Envelope> message;
            try {
                if (ev < 10) message = scripted_message(good, s, kStepOrder[static_cast<std::size_t>(ev)], at);
                else if (ev == 10) message = signed_as(good, s, Step::NegotiateResponse, {{"accepted", false}}, at, true);
                else if (ev == 11) message = scripted_message(slow, s, Step::Verify, at);
            } catch (const cpmm::Error&) {
                // The script cannot even build this message from the current state.
                ++report.rejected;
                continue;
            }
            try {
                if (message) {
                    next = engine.advance(s, *message);
                } else if (ev == 12) {
                    next = engine.rollback(s, "model check", at);
                    rolled = true;
                } else {
                    next = engine.abort(s, "model check", at);
                }
            } catch (const cpmm::StateError&) {
                ++report.rejected;
                continue;
            }

            auto fail = [&](const std::string& what) {
                report.violations.push_back("depth " + std::to_string(depth) + " event " + std::to_string(ev) + ": " + what);
            };
            const Step now = *next.step;
            if ((now == Step::Release || now == Step::Audit) && !next.quality.outcome) fail("Release without Verify outcome");
            if (now != Step::Aborted && step_index(now) >= step_index(Step::Commit)) {
                auto at_bind = next;
                if (next.economic.terms_hash.empty() || !check_guard(at_bind, Step::Bind)) fail("Commit without Bind guard");
            }
            if (rolled) {
                if (!is_checkpoint(now)) fail("rollback landed on " + to_string(now));
                if (next.escrow_state == cpmm::rail::EscrowState::Funded) fail("rollback left escrow funded");
            } else if (now != Step::Aborted && before && *before != Step::Aborted) {
                const int a = step_index(*before), b = step_index(now);
                const bool renegotiate = *before == Step::NegotiateResponse && now == Step::NegotiateRequest;
                if (b != a + 1 && !renegotiate) fail("step skipped from " + to_string(*before) + " to " + to_string(now));
            }
            if (!escrow_conserved(*book)) fail("escrow conservation broken");
            if (!verify_message_log(next, authority_key().public_key())) fail("message log signature broken");
            walk(Node{std::move(next), book}, depth + 1);
        }
    };
    Engine root_engine = make_engine();
    walk(Node{open_for(root_engine, good), std::make_shared<cpmm::rail::EscrowBook>()}, 0);
    return report;
}

}  // namespace fixture
