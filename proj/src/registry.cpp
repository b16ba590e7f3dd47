#include "cpmm/registry.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include "cpmm/error.hpp"

namespace cpmm::registry {

std::vector<std::string> CapabilityAdvert::attribute_keys() const {
    std::vector<std::string> keys;
    for (const auto& [dim, value] : quality) keys.push_back("quality." + dim);
    if (base_price) keys.push_back("base_price");
    if (!payment_methods.empty()) keys.push_back("payment_methods");
    return keys;
}

void RegistryEntry::validate() const {
    if (agent_id.empty()) throw ValidationError("registry entry needs an agent id");
    if (!(disclosure >= 0.0 && disclosure <= 1.0)) throw ValidationError("disclosure level must be in [0, 1]");
    for (const auto& c : capabilities) {
        if (c.capability_id.empty()) throw ValidationError("capability id must be set");
        for (const auto& [dim, v] : c.quality)
            if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("advertised quality must be in [0, 1]");
        if (c.base_price && c.base_price->minor < 0) throw ValidationError("base price must be non-negative");
        const auto keys = c.attribute_keys();
        for (const auto& [key, rank] : c.sensitivity)
            if (std::find(keys.begin(), keys.end(), key) == keys.end())
                throw ValidationError("sensitivity given for unknown attribute '" + key + "'");
    }
}

std::size_t disclosed_count(double sigma, std::size_t n) {
    if (!(sigma >= 0.0 && sigma <= 1.0)) throw ValidationError("disclosure level must be in [0, 1]");
    // The epsilon keeps 0.5 * 4 at 2 despite binary rounding.
    return std::min(n, static_cast<std::size_t>(std::ceil(sigma * static_cast<double>(n) - 1e-12)));
}

std::vector<std::string> disclosure_order(const CapabilityAdvert& c) {
    auto keys = c.attribute_keys();
    auto rank = [&](const std::string& k) {
        auto it = c.sensitivity.find(k);
        return it == c.sensitivity.end() ? 0 : it->second;
    };
    std::stable_sort(keys.begin(), keys.end(), [&](const std::string& a, const std::string& b) {
        return std::pair(rank(a), a) < std::pair(rank(b), b);
    });
    return keys;
}

DisclosedCapability disclose(const CapabilityAdvert& c, double sigma) {
    const auto order = disclosure_order(c);
    DisclosedCapability view;
    view.capability_id = c.capability_id;
    for (std::size_t i = 0, n = disclosed_count(sigma, order.size()); i < n; ++i) {
        const auto& key = order[i];
        if (key == "base_price") view.base_price = c.base_price;
        else if (key == "payment_methods") view.payment_methods = c.payment_methods;
        else view.quality[key.substr(8)] = c.quality.at(key.substr(8));
    }
    return view;
}

void DiscoveryQuery::validate() const {
    if (capability_id.empty()) throw ValidationError("query needs a capability id");
    for (const auto& [dim, v] : min_quality)
        if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("quality thresholds must be in [0, 1]");
}

bool satisfies(const DisclosedCapability& view, const DiscoveryQuery& q) {
    if (view.capability_id != q.capability_id) return false;
    for (const auto& [dim, threshold] : q.min_quality) {
        auto it = view.quality.find(dim);
        if (it == view.quality.end() || it->second < threshold) return false;
    }
    if (q.max_base_price && (!view.base_price || *view.base_price > *q.max_base_price)) return false;
    if (!q.required_methods.empty()) {
        if (!view.payment_methods) return false;
        for (const auto& m : q.required_methods)
            if (std::find(view.payment_methods->begin(), view.payment_methods->end(), m) == view.payment_methods->end())
                return false;
    }
    return true;
}

void Registry::register_agent(RegistryEntry entry) {
    entry.validate();
    std::unique_lock lock(mu_);
    const auto id = entry.agent_id;
    if (!entries_.emplace(id, std::move(entry)).second) throw ValidationError("agent '" + id + "' is already registered");
}

std::vector<Candidate> Registry::discover(const DiscoveryQuery& q) const {
    q.validate();
    std::shared_lock lock(mu_);
    std::vector<Candidate> out;
    for (const auto& [id, e] : entries_) {
        for (const auto& c : e.capabilities) {
            auto view = disclose(c, e.disclosure);
            if (satisfies(view, q)) {
                out.push_back({id, e.endpoint, e.manifest, std::move(view)});
                break;
            }
        }
    }
    return out;
}

std::optional<RegistryEntry> Registry::find(const std::string& agent_id) const {
    std::shared_lock lock(mu_);
    auto it = entries_.find(agent_id);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

std::size_t Registry::size() const {
    std::shared_lock lock(mu_);
    return entries_.size();
}

Json to_json(const RegistryEntry& e) {
    Json caps = Json::array();
    for (const auto& c : e.capabilities) {
        Json j{{"capability_id", c.capability_id},
               {"quality", c.quality},
               {"payment_methods", c.payment_methods},
               {"sensitivity", c.sensitivity},
               {"base_price", nullptr}};
        if (c.base_price) j["base_price"] = {{"amount", c.base_price->to_string()}, {"precision", c.base_price->precision}};
        caps.push_back(std::move(j));
    }
    return {{"agent_id", e.agent_id},
            {"capabilities", caps},
            {"disclosure", e.disclosure},
            {"manifest", acnbp::to_json(e.manifest)},
            {"endpoint", e.endpoint}};
}

RegistryEntry entry_from_json(const Json& j) {
    try {
        RegistryEntry e;
        e.agent_id = j.at("agent_id").get<std::string>();
        e.disclosure = j.at("disclosure").get<double>();
        e.manifest = acnbp::manifest_from_json(j.at("manifest"));
        e.endpoint = j.at("endpoint").get<std::string>();
        for (const auto& cj : j.at("capabilities")) {
            CapabilityAdvert c;
            c.capability_id = cj.at("capability_id").get<std::string>();
            c.quality = cj.at("quality").get<std::map<std::string, double>>();
            c.payment_methods = cj.at("payment_methods").get<std::vector<std::string>>();
            c.sensitivity = cj.at("sensitivity").get<std::map<std::string, int>>();
            if (const auto& bp = cj.at("base_price"); !bp.is_null())
                c.base_price = Money::parse(bp.at("amount").get<std::string>(), bp.at("precision").get<int>());
            e.capabilities.push_back(std::move(c));
        }
        e.validate();
        return e;
    } catch (const Json::exception& ex) {
        throw ParseError("registry", ex.what());
    }
}

Json Registry::to_json() const {
    std::shared_lock lock(mu_);
    Json arr = Json::array();
    for (const auto& [id, e] : entries_) arr.push_back(registry::to_json(e));
    return {{"registry", arr}};
}

Registry Registry::from_json(const Json& j) {
    Registry r;
    try {
        for (const auto& e : j.at("registry")) r.register_agent(entry_from_json(e));
    } catch (const Json::exception& ex) {
        throw ParseError("registry", ex.what());
    }
    return r;
}

// ---------------------------------------------------------------------------

std::string to_string(MatchMode m) {
    switch (m) {
        case MatchMode::Random: return "random";
        case MatchMode::Capability: return "capability";
        case MatchMode::Preference: return "preference";
    }
    return "?";
}

MatchMode match_mode_from_string(const std::string& s) {
    if (s == "random") return MatchMode::Random;
    if (s == "capability") return MatchMode::Capability;
    if (s == "preference") return MatchMode::Preference;
    throw ValidationError("unknown matching mode '" + s + "'");
}

std::vector<double> matching_probabilities(const MatchConfig& cfg, const MatchBuyer& buyer,
                                           const std::vector<MatchSeller>& sellers, std::int64_t t) {
    if (sellers.empty()) throw ValidationError("matching needs at least one seller");
    if (t < 1) throw ValidationError("rounds start at 1");
    const std::size_t m = sellers.size();
    std::vector<double> p(m, 0.0);
    switch (cfg.mode) {
        case MatchMode::Random: std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(m)); break;
        case MatchMode::Capability: {
            std::size_t compatible = 0;
            for (std::size_t j = 0; j < m; ++j) {
                const auto& caps = sellers[j].capabilities;
                if (std::find(caps.begin(), caps.end(), buyer.capability) != caps.end()) {
                    p[j] = 1.0;
                    ++compatible;
                }
            }
            for (auto& x : p) x = compatible ? x / static_cast<double>(compatible) : 0.0;
            break;
        }
        case MatchMode::Preference: {
            if (!(cfg.temperature > 0.0)) throw ValidationError("softmax temperature must be positive");
            std::vector<double> score(m);
            for (std::size_t j = 0; j < m; ++j) {
                auto it = buyer.affinity.find(sellers[j].id);
                score[j] = (it == buyer.affinity.end() ? 0.0 : it->second) + cfg.reputation_weight * sellers[j].reputation;
            }
            const double top = *std::max_element(score.begin(), score.end());
            double total = 0.0;
            for (std::size_t j = 0; j < m; ++j) total += p[j] = std::exp((score[j] - top) / cfg.temperature);
            for (auto& x : p) x /= total;
            if (cfg.exploration_c > 0.0) {
                const double mix = std::min(1.0, cfg.exploration_c * static_cast<double>(m) / static_cast<double>(t));
                for (auto& x : p) x = (1.0 - mix) * x + mix / static_cast<double>(m);
            }
            break;
        }
    }
    return p;
}

std::optional<std::size_t> sample_index(const std::vector<double>& probs, Rng& rng) {
    double total = 0.0;
    for (double x : probs) total += x;
    if (!(total > 0.0)) return std::nullopt;
    const double u = uniform01(rng) * total;
    double acc = 0.0;
    std::optional<std::size_t> last;
    for (std::size_t j = 0; j < probs.size(); ++j) {
        if (probs[j] <= 0.0) continue;
        acc += probs[j];
        last = j;
        if (u < acc) return j;
    }
    return last;
}

Pairing match(const MatchConfig& cfg, const std::vector<MatchBuyer>& buyers, const std::vector<MatchSeller>& sellers,
              Rng& rng, std::int64_t t) {
    if (buyers.empty() || sellers.empty()) throw ValidationError("matching needs non-empty pools");
    Pairing out;
    out.reserve(buyers.size());
    for (const auto& b : buyers) out.push_back(sample_index(matching_probabilities(cfg, b, sellers, t), rng));
    return out;
}

}  // namespace cpmm::registry
