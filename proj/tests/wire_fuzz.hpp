#pragma once

// Random X402 challenges and H402 payment headers for codec round trips.

#include "cpmm/crypto.hpp"
#include "cpmm/rail.hpp"
#include "payload_fuzz.hpp"

namespace fuzz {

inline cpmm::rail::X402Challenge random_challenge(cpmm::Rng& rng) {
    static const std::vector<std::string> currencies{"USD", "EUR", "BTC", "JPY"};
    static const std::vector<std::string> methods{"H402", "X402", "lightning"};
    cpmm::rail::X402Challenge c;
    c.amount = cpmm::Money::from_minor(1 + static_cast<std::int64_t>(cpmm::uniform_index(rng, 1'000'000)),
                                 static_cast<int>(cpmm::uniform_index(rng, 7)));
    c.currency = currencies[cpmm::uniform_index(rng, currencies.size())];
    for (std::size_t i = 0, n = 1 + cpmm::uniform_index(rng, 3); i < n; ++i)
        c.methods.push_back(methods[cpmm::uniform_index(rng, methods.size())]);
    if (cpmm::uniform_index(rng, 2)) c.timeout_seconds = 1 + static_cast<std::int64_t>(cpmm::uniform_index(rng, 10000));
    c.payment_address = "H402://" + word(rng) + "/invoice/" + word(rng);
    if (cpmm::uniform_index(rng, 2)) {
        cpmm::rail::X402Metadata m;
        for (std::size_t i = 0, n = 1 + cpmm::uniform_index(rng, 3); i < n; ++i)
            m.sla_vector.emplace_back(word(rng), cpmm::payload::format_number(short_decimal(rng, 100)) + "ms");
        m.refund_policy = word(rng);
        c.metadata = m;
    }
    if (cpmm::uniform_index(rng, 2)) {
        std::vector<std::uint8_t> raw(1 + cpmm::uniform_index(rng, 40));
        for (auto& b : raw) b = static_cast<std::uint8_t>(rng());
        c.economic_proposal = cpmm::crypto::to_base64(raw);
    }
    if (cpmm::uniform_index(rng, 2)) c.negotiation_token = word(rng, 30);
    return c;
}

inline cpmm::rail::H402PaymentHeaders random_h402(cpmm::Rng& rng, const cpmm::rail::X402Challenge& c, int i) {
    cpmm::rail::H402PaymentHeaders h;
    h.payment_key = cpmm::crypto::to_base64(cpmm::crypto::SigningKey::derive("fuzz", i).public_key());
    h.amount = c.amount;
    h.currency = c.currency;
    h.invoice = c.invoice_id();
    h.signature = word(rng, 20);
    h.timestamp = std::to_string(cpmm::uniform_index(rng, 2'000'000'000));
    h.quality_request = {{"latency", "100ms"}, {word(rng), "95%"}};
    h.sla_acceptance = hex64(rng);
    return h;
}

}  // namespace fuzz
