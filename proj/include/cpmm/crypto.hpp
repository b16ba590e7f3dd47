#pragma once

// Thin value-type wrappers over libsodium: SHA-256, Ed25519, hex and base64.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cpmm::crypto {

using Bytes = std::vector<std::uint8_t>;
using Digest = std::array<std::uint8_t, 32>;
using PublicKey = std::array<std::uint8_t, 32>;
using Signature = std::array<std::uint8_t, 64>;

Digest sha256(std::span<const std::uint8_t> data);
Digest sha256(std::string_view data);

std::string to_hex(std::span<const std::uint8_t> data);
/// Lowercase or uppercase hex; throws ParseError on odd length or bad digit.
Bytes from_hex(std::string_view hex);

/// Standard alphabet with padding.
std::string to_base64(std::span<const std::uint8_t> data);
/// Accepts standard or URL-safe alphabet, padded or not. Throws ParseError.
Bytes from_base64(std::string_view text);

class SigningKey {
public:
    /// Fresh random key pair.
    static SigningKey generate();
    /// Deterministic key pair from a 32-byte seed (fixtures, simulations).
    static SigningKey from_seed(std::span<const std::uint8_t, 32> seed);
    /// Deterministic key pair derived from a label and a 64-bit seed.
    static SigningKey derive(std::string_view label, std::uint64_t seed = 0);

    const PublicKey& public_key() const { return public_; }
    Signature sign(std::span<const std::uint8_t> message) const;
    Signature sign(std::string_view message) const;

private:
    SigningKey() = default;
    std::array<std::uint8_t, 64> secret_{};
    PublicKey public_{};
};

bool verify(const PublicKey& key, std::span<const std::uint8_t> message, const Signature& sig);
bool verify(const PublicKey& key, std::string_view message, const Signature& sig);

/// Decodes a base64 public key / signature with exact length checks.
PublicKey public_key_from_base64(std::string_view text);
Signature signature_from_base64(std::string_view text);

}  // namespace cpmm::crypto
