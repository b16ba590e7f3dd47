#include "cpmm/fixtures.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "cpmm/crypto.hpp"
#include "cpmm/error.hpp"
#include "cpmm/rail.hpp"
#include "cpmm/samples.hpp"
#include "cpmm/sim.hpp"

namespace cpmm::fixtures {

namespace fs = std::filesystem;
namespace samples = payload::samples;

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ValidationError("cannot read " + p.string());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

namespace {

void write_file(const fs::path& p, const std::string& bytes) {
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + p.string());
    out << bytes;
}

std::map<std::string, std::string> read_sums(const fs::path& p) {
    std::map<std::string, std::string> sums;
    std::istringstream in(read_file(p));
    std::string digest, name;
    while (in >> digest >> name) sums[name] = digest;
    return sums;
}

Check attempt(std::string name, const std::function<std::string()>& body) {
    try {
        std::string detail = body();
        return {std::move(name), detail.empty(), detail.empty() ? "ok" : detail};
    } catch (const std::exception& e) {
        return {std::move(name), false, e.what()};
    }
}

}  // namespace

std::string render_headers(const std::vector<std::pair<std::string, std::string>>& headers) {
    std::string out;
    for (const auto& [name, value] : headers) out += name + ": " + value + "\r\n";
    return out;
}

std::vector<std::pair<std::string, std::string>> parse_header_block(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto colon = line.find(": ");
        if (colon == std::string::npos || colon == 0) throw ParseError("header", "malformed header line '" + line + "'");
        out.emplace_back(line.substr(0, colon), line.substr(colon + 2));
    }
    return out;
}

std::vector<std::pair<std::string, std::string>> golden_payloads() {
    return {{"economic_proposal.json", payload::canonical_serialize(samples::proposal())},
            {"payment_instruction.json", payload::canonical_serialize(samples::instruction())},
            {"quality_attestation.json", payload::canonical_serialize(samples::attestation())}};
}

bool verify_payload(const std::string& name, const std::string& bytes) {
    try {
        const auto j = payload::Json::parse(bytes);
        if (name == "economic_proposal.json") {
            const auto ep = payload::proposal_from_json(j);
            return ep.cryptographic_commitment && verify_commitment(ep, *ep.cryptographic_commitment) &&
                   ep.cryptographic_commitment->public_key == crypto::to_base64(samples::seller_key().public_key());
        }
        if (name == "payment_instruction.json")
            return payload::verify_instruction(payload::instruction_from_json(j), samples::buyer_key().public_key());
        if (name == "quality_attestation.json")
            return payload::verify_attestation(payload::attestation_from_json(j), samples::root_key().public_key()) ==
                   payload::AttestationCheck::Ok;
    } catch (const std::exception&) {
        return false;
    }
    throw ValidationError("unknown payload fixture '" + name + "'");
}

std::vector<Check> verify(const fs::path& root) {
    std::vector<Check> checks;
    const auto wire_sums = read_sums(root / "wire/SHA256SUMS");
    auto frozen = [&](const std::string& name, const std::string& bytes) -> std::string {
        auto it = wire_sums.find(name);
        if (it == wire_sums.end()) return "missing from SHA256SUMS";
        return crypto::to_hex(crypto::sha256(bytes)) == it->second ? "" : "digest differs from SHA256SUMS";
    };
    checks.push_back(attempt("wire/x402_response.http", [&]() -> std::string {
        const auto text = read_file(root / "wire/x402_response.http");
        const auto again = rail::render_402_response(rail::parse_402_response(text));
        return again == text ? frozen("x402_response.http", text) : "re-encoded response differs";
    }));
    checks.push_back(attempt("wire/h402_headers.http", [&]() -> std::string {
        const auto text = read_file(root / "wire/h402_headers.http");
        const auto again = render_headers(rail::encode_h402(rail::parse_h402(parse_header_block(text))));
        return again == text ? frozen("h402_headers.http", text) : "re-encoded headers differ";
    }));

    const auto sums = read_sums(root / "payloads/SHA256SUMS");
    for (const auto& [name, expected] : golden_payloads()) {
        checks.push_back(attempt("payloads/" + name, [&, name = name, expected = expected]() -> std::string {
            const auto bytes = read_file(root / "payloads" / name);
            if (bytes != expected) return "sample record no longer serializes to the frozen bytes";
            auto it = sums.find(name);
            if (it == sums.end()) return "missing from SHA256SUMS";
            if (crypto::to_hex(crypto::sha256(bytes)) != it->second) return "digest differs from SHA256SUMS";
            if (!verify_payload(name, bytes)) return "signature or commitment does not verify";
            return "";
        }));
    }

    if (fs::exists(root / "scenarios"))
        for (const auto& entry : fs::directory_iterator(root / "scenarios")) {
            if (entry.path().extension() != ".json") continue;
            checks.push_back(attempt("scenarios/" + entry.path().filename().string(), [&]() -> std::string {
                sim::scenario_from_json(payload::Json::parse(read_file(entry.path())));
                return "";
            }));
        }
    return checks;
}

void write_golden(const fs::path& root) {
    std::string sums;
    for (const auto& [name, bytes] : golden_payloads()) {
        write_file(root / "payloads" / name, bytes);
        sums += crypto::to_hex(crypto::sha256(bytes)) + "  " + name + "\n";
    }
    write_file(root / "payloads/SHA256SUMS", sums);
}

}  // namespace cpmm::fixtures
