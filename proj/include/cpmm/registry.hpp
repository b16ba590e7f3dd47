#pragma once

// In-process agent name service: registration with selective disclosure,
// discovery queries and the three matching modes.

#include <map>
#include <optional>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <vector>

#include "cpmm/acnbp.hpp"
#include "cpmm/money.hpp"
#include "cpmm/payloads.hpp"
#include "cpmm/rng.hpp"

namespace cpmm::registry {

using payload::Json;

/// One advertised capability. Attribute keys are "quality.<dimension>",
/// "base_price" and "payment_methods"; lower sensitivity ranks are disclosed
/// first, ties broken by key.
struct CapabilityAdvert {
    std::string capability_id;
    std::map<std::string, double> quality;  ///< best normalized quality offered
    std::optional<Money> base_price;
    std::vector<std::string> payment_methods;
    std::map<std::string, int> sensitivity;  ///< missing keys rank 0
    bool operator==(const CapabilityAdvert&) const = default;

    std::vector<std::string> attribute_keys() const;
};

struct RegistryEntry {
    std::string agent_id;
    std::vector<CapabilityAdvert> capabilities;
    double disclosure = 1.0;  ///< sigma in [0, 1]
    acnbp::ExtensionManifest manifest = acnbp::ExtensionManifest::cpmm_default();
    std::string endpoint;
    bool operator==(const RegistryEntry&) const = default;

    void validate() const;
};

/// What a capability looks like to a querying agent.
struct DisclosedCapability {
    std::string capability_id;
    std::map<std::string, double> quality;
    std::optional<Money> base_price;
    std::optional<std::vector<std::string>> payment_methods;
    bool operator==(const DisclosedCapability&) const = default;
};

/// Number of attributes disclosed at `sigma` out of `n`: ceil(sigma * n).
std::size_t disclosed_count(double sigma, std::size_t n);
/// Attribute keys in disclosure order.
std::vector<std::string> disclosure_order(const CapabilityAdvert& c);
DisclosedCapability disclose(const CapabilityAdvert& c, double sigma);

struct DiscoveryQuery {
    std::string capability_id;
    std::map<std::string, double> min_quality;  ///< thresholds in [0, 1]
    std::optional<Money> max_base_price;
    std::vector<std::string> required_methods;

    void validate() const;
};

/// Hidden attributes never satisfy a predicate.
bool satisfies(const DisclosedCapability& view, const DiscoveryQuery& q);

struct Candidate {
    std::string agent_id;
    std::string endpoint;
    acnbp::ExtensionManifest manifest;
    DisclosedCapability view;
};

/// Concurrent readers, one writer at a time.
class Registry {
public:
    Registry() = default;
    Registry(Registry&& other) noexcept : entries_(std::move(other.entries_)) {}
    Registry& operator=(Registry&& other) noexcept {
        if (this != &other) {
            std::unique_lock lock(mu_);
            entries_ = std::move(other.entries_);
        }
        return *this;
    }

    void register_agent(RegistryEntry entry);
    /// Matching entries ordered by agent id.
    std::vector<Candidate> discover(const DiscoveryQuery& q) const;
    std::optional<RegistryEntry> find(const std::string& agent_id) const;
    std::size_t size() const;

    Json to_json() const;
    static Registry from_json(const Json& j);

private:
    mutable std::shared_mutex mu_;
    std::map<std::string, RegistryEntry> entries_;
};

Json to_json(const RegistryEntry& e);
RegistryEntry entry_from_json(const Json& j);

// ---------------------------------------------------------------------------
// Matching

enum class MatchMode { Random, Capability, Preference };
std::string to_string(MatchMode m);
MatchMode match_mode_from_string(const std::string& s);

struct MatchBuyer {
    std::string id;
    std::string capability;                 ///< needed for capability mode
    std::map<std::string, double> affinity;  ///< seller id -> score from past experience
};

struct MatchSeller {
    std::string id;
    std::vector<std::string> capabilities;
    double reputation = 0.0;
};

struct MatchConfig {
    MatchMode mode = MatchMode::Random;
    double temperature = 1.0;        ///< softmax temperature, preference mode
    double reputation_weight = 1.0;  ///< preference score = affinity + weight * reputation
    /// Preference mode mixes in a uniform draw with weight min(1, c*m/t) so
    /// every pair has probability at least c/t. Zero disables the floor.
    double exploration_c = 0.0;
};

/// alpha_ij(t) for one buyer over all sellers; all zeros when no seller is
/// compatible in capability mode. Rounds t start at 1.
std::vector<double> matching_probabilities(const MatchConfig& cfg, const MatchBuyer& buyer,
                                           const std::vector<MatchSeller>& sellers, std::int64_t t);

/// Seller index per buyer; each buyer draws independently.
using Pairing = std::vector<std::optional<std::size_t>>;
Pairing match(const MatchConfig& cfg, const std::vector<MatchBuyer>& buyers, const std::vector<MatchSeller>& sellers,
              Rng& rng, std::int64_t t);

/// Inverse-CDF draw from a probability vector; nullopt when all are zero.
std::optional<std::size_t> sample_index(const std::vector<double>& probs, Rng& rng);

}  // namespace cpmm::registry
