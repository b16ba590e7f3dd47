#pragma once

// Scripted single trade between two named agents: registry discovery followed
// by the ten protocol steps, rendered as a human-readable transcript.

#include <string>
#include <vector>

#include "cpmm/acnbp.hpp"

namespace cpmm::demo {

struct DemoOptions {
    std::string buyer = "MarketOracleAgent";
    std::string seller = "SchedulingAgent";
    std::string capability = "ScheduleManagement";
    std::int64_t amount = 100;  ///< whole units
};

struct DemoLine {
    std::string label;  ///< "Discover", "Pre-screen", "Negotiate", ...
    std::string text;
    payload::Timestamp at = 0;
};

struct DemoResult {
    std::vector<DemoLine> lines;
    acnbp::NegotiationSession session;
    acnbp::AuditTrail trail;
    bool completed = false;
};

DemoResult run_demo(const DemoOptions& opts = {});

/// Transcript with clock times; the certificate block follows the Commit line.
std::string render(const DemoResult& r);
std::string render_certificate(const acnbp::TradeCertificate& c);

/// Bracketed labels in transcript order.
std::vector<std::string> step_labels(const std::string& transcript);

/// Label order of a complete trade.
const std::vector<std::string>& reference_order();

}  // namespace cpmm::demo
