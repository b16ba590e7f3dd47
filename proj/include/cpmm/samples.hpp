#pragma once

// Deterministic sample records used by the golden fixtures, the demo and the
// tests. Keys are derived from fixed labels so every build signs identically.

#include "cpmm/payloads.hpp"

namespace cpmm::payload::samples {

inline constexpr Timestamp kEpoch = 1735689600;  // 2025-01-01T00:00:00Z

const crypto::SigningKey& seller_key();
const crypto::SigningKey& buyer_key();
const crypto::SigningKey& attester_key();
const crypto::SigningKey& intermediate_key();
const crypto::SigningKey& root_key();

/// [attester leaf, intermediate, self-signed root]
std::vector<std::string> attester_chain();

EconomicProposal proposal_unsigned();
EconomicProposal proposal();
PaymentInstruction instruction();
QualityAttestation attestation();

}  // namespace cpmm::payload::samples
