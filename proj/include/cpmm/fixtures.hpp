#pragma once

// Bundled wire and payload fixtures: verbatim header blocks, frozen payload
// bytes with their SHA-256 sums, and scenario files.

#include <filesystem>
#include <string>
#include <vector>

namespace cpmm::fixtures {

struct Check {
    std::string name;
    bool ok = false;
    std::string detail;
};

/// Every fixture under `root` re-encodes byte-identically, verifies and
/// matches its frozen digest.
std::vector<Check> verify(const std::filesystem::path& root);

/// Regenerates the payload files and SHA256SUMS from the sample records.
void write_golden(const std::filesystem::path& root);

/// (file name, canonical bytes) of the three sample records.
std::vector<std::pair<std::string, std::string>> golden_payloads();

/// Parses a payload fixture by file name and checks its signature or commitment.
bool verify_payload(const std::string& name, const std::string& bytes);

std::string read_file(const std::filesystem::path& p);

/// "Name: value" lines separated by CRLF.
std::string render_headers(const std::vector<std::pair<std::string, std::string>>& headers);
std::vector<std::pair<std::string, std::string>> parse_header_block(const std::string& text);

}  // namespace cpmm::fixtures
