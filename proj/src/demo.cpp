#include "cpmm/demo.hpp"

#include <ctime>
#include <regex>
#include <sstream>

#include "cpmm/error.hpp"
#include "cpmm/registry.hpp"
#include "cpmm/samples.hpp"

namespace cpmm::demo {

namespace {

using acnbp::Step;

std::string clock_time(payload::Timestamp at) {
    const std::time_t t = static_cast<std::time_t>(at);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%I:%M:%S %p", &tm);
    return buf;
}

std::string step_text(const DemoOptions& o, Step step) {
    const std::string units = std::to_string(o.amount) + " units";
    switch (step) {
        case Step::Discover:
            return o.buyer + " uses ANS to find agents with '" + o.capability + "' capability. Found " + o.seller + ".";
        case Step::PreScreen: return o.buyer + " filters candidates. " + o.seller + " passes basic checks.";
        case Step::NegotiateRequest: return o.buyer + " requests to use capability for " + units + ".";
        case Step::NegotiateResponse: return o.seller + " confirms capability and agrees to terms.";
        case Step::Bind: return "Mutual commitment to terms, creating an enforceable service agreement.";
        case Step::Commit: return "Cryptographic commitment to service delivery. Certificate generated.";
        case Step::Execute: return o.seller + " performs '" + o.capability + "' service for " + o.buyer + ".";
        case Step::Verify: return o.buyer + " verifies service quality and compliance.";
        case Step::Release: return o.buyer + " releases " + units + " to " + o.seller + ".";
        case Step::Audit: return "Transaction outcome recorded. Reputation scores for both agents updated.";
        case Step::Aborted: break;
    }
    return "";
}

}  // namespace

DemoResult run_demo(const DemoOptions& opts) {
    if (opts.amount <= 0) throw ValidationError("demo amount must be positive");
    const Money price = Money::from_minor(opts.amount, 0);

    registry::Registry reg;
    registry::CapabilityAdvert advert;
    advert.capability_id = opts.capability;
    advert.quality = {{"latency", 0.9}, {"accuracy", 0.95}};
    advert.base_price = price;
    advert.payment_methods = {"H402", "X402"};
    reg.register_agent({opts.seller, {advert}, 1.0, acnbp::ExtensionManifest::cpmm_default(), "ans://" + opts.seller});

    registry::DiscoveryQuery by_capability;
    by_capability.capability_id = opts.capability;
    registry::DiscoveryQuery screen = by_capability;
    screen.max_base_price = price;
    screen.required_methods = {"H402"};

    static const crypto::SigningKey authority = crypto::SigningKey::derive("CPMM Secure Authority");
    acnbp::Engine engine(authority, payload::samples::root_key().public_key());

    acnbp::TradeSetup t;
    t.session_id = "demo-" + opts.buyer + "-" + opts.seller;
    t.buyer_id = opts.buyer;
    t.seller_id = opts.seller;
    t.buyer_key = &payload::samples::buyer_key();
    t.seller_key = &payload::samples::seller_key();
    t.capability = opts.capability;
    t.units = opts.amount;
    t.max_price = price;
    t.quote = price;
    t.currency = "UNITS";
    t.proposal_template = payload::samples::proposal_unsigned();
    t.quality_request = {{"latency", "100ms"}, {"accuracy", "95%"}};
    t.delivered = {{"latency", "85ms", "client_side_timing", ""}, {"accuracy", "97.3%", "reference_comparison", ""}};
    t.attester_key = &payload::samples::attester_key();
    t.attester_chain = payload::samples::attester_chain();
    t.start = payload::samples::kEpoch;

    DemoResult r;
    r.session = engine.open(t.session_id, {t.buyer_id, t.buyer_key->public_key(), t.buyer_manifest},
                            {t.seller_id, t.seller_key->public_key(), t.seller_manifest});
    payload::Timestamp at = t.start;
    for (Step step : acnbp::kStepOrder) {
        if (step == Step::Discover) {
            const auto found = reg.discover(by_capability);
            if (found.empty() || found.front().agent_id != opts.seller) return r;
        }
        if (step == Step::PreScreen) {
            const auto passed = reg.discover(screen);
            if (passed.empty() || !passed.front().manifest.cpmm()) return r;
        }
        r.session = engine.advance(std::move(r.session), acnbp::scripted_message(t, r.session, step, at));
        r.lines.push_back({acnbp::display_label(step), step_text(opts, step), at});
        ++at;
    }
    r.completed = r.session.step == Step::Audit && r.session.escrow_state == rail::EscrowState::Released;
    if (auto it = engine.trails().find(t.session_id); it != engine.trails().end()) r.trail = it->second;
    if (r.completed) r.lines.push_back({"", "Simulation complete. All steps executed successfully.", at - 1});
    return r;
}

std::string render_certificate(const acnbp::TradeCertificate& c) {
    std::ostringstream out;
    out << "    Digital Trade Certificate\n"
        << "    Serial: " << c.serial << "\n"
        << "    Issuer: " << c.issuer << "\n"
        << "    Buyer: " << c.buyer << "\n"
        << "    Seller: " << c.seller << "\n"
        << "    Capability: " << c.capability << "\n"
        << "    Payment: " << c.payment << "\n"
        << "    Buyer Signature: " << acnbp::abbreviate_signature(c.buyer_signature) << "\n"
        << "    Seller Signature: " << acnbp::abbreviate_signature(c.seller_signature) << "\n";
    return out.str();
}

std::string render(const DemoResult& r) {
    std::ostringstream out;
    for (const auto& line : r.lines) {
        out << clock_time(line.at) << "  ";
        if (!line.label.empty()) out << "[" << line.label << "] ";
        out << line.text << "\n";
        if (line.label == "Commit" && r.session.certificate) out << render_certificate(*r.session.certificate);
    }
    return out.str();
}

std::vector<std::string> step_labels(const std::string& transcript) {
    static const std::regex label(R"(^\S+ [AP]M  \[([^\]]+)\])");
    std::vector<std::string> out;
    std::istringstream in(transcript);
    std::string line;
    std::smatch m;
    while (std::getline(in, line))
        if (std::regex_search(line, m, label)) out.push_back(m[1]);
    return out;
}

const std::vector<std::string>& reference_order() {
    static const std::vector<std::string> order{"Discover", "Pre-screen", "Negotiate", "Negotiate", "Bind",
                                                "Commit",   "Execute",    "Verify",    "Release",   "Audit"};
    return order;
}

}  // namespace cpmm::demo
