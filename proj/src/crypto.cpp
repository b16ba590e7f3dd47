#include "cpmm/crypto.hpp"

#include <sodium.h>

#include <algorithm>
#include <stdexcept>

#include "cpmm/error.hpp"

namespace cpmm::crypto {

namespace {

void ensure_init() {
    static const bool ok = [] { return sodium_init() >= 0; }();
    if (!ok) throw Error("libsodium initialisation failed");
}

std::span<const std::uint8_t> as_bytes(std::string_view s) {
    return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

}  // namespace

Digest sha256(std::span<const std::uint8_t> data) {
    ensure_init();
    Digest out{};
    crypto_hash_sha256(out.data(), data.data(), data.size());
    return out;
}

Digest sha256(std::string_view data) { return sha256(as_bytes(data)); }

std::string to_hex(std::span<const std::uint8_t> data) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(data.size() * 2);
    for (auto b : data) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0xf]);
    }
    return out;
}

Bytes from_hex(std::string_view hex) {
    if (hex.size() % 2 != 0) throw ParseError("hex", "odd length");
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        throw ParseError("hex", std::string("bad digit '") + c + "'");
    };
    Bytes out(hex.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<std::uint8_t>(nibble(hex[2 * i]) << 4 | nibble(hex[2 * i + 1]));
    return out;
}

std::string to_base64(std::span<const std::uint8_t> data) {
    ensure_init();
    std::string out(sodium_base64_ENCODED_LEN(data.size(), sodium_base64_VARIANT_ORIGINAL), '\0');
    sodium_bin2base64(out.data(), out.size(), data.data(), data.size(), sodium_base64_VARIANT_ORIGINAL);
    out.resize(out.size() - 1);  // trailing NUL
    return out;
}

Bytes from_base64(std::string_view text) {
    ensure_init();
    if (text.empty()) return {};
    bool url = text.find_first_of("-_") != std::string_view::npos;
    bool padded = !text.empty() && text.back() == '=';
    int variant = url ? (padded ? sodium_base64_VARIANT_URLSAFE : sodium_base64_VARIANT_URLSAFE_NO_PADDING)
                      : (padded ? sodium_base64_VARIANT_ORIGINAL : sodium_base64_VARIANT_ORIGINAL_NO_PADDING);
    Bytes out(text.size());
    std::size_t len = 0;
    const char* end = nullptr;
    if (sodium_base642bin(out.data(), out.size(), text.data(), text.size(), nullptr, &len, &end, variant) != 0 ||
        end != text.data() + text.size())
        throw ParseError("base64", "invalid encoding");
    out.resize(len);
    return out;
}

SigningKey SigningKey::generate() {
    ensure_init();
    SigningKey k;
    crypto_sign_keypair(k.public_.data(), k.secret_.data());
    return k;
}

SigningKey SigningKey::from_seed(std::span<const std::uint8_t, 32> seed) {
    ensure_init();
    SigningKey k;
    crypto_sign_seed_keypair(k.public_.data(), k.secret_.data(), seed.data());
    return k;
}

SigningKey SigningKey::derive(std::string_view label, std::uint64_t seed) {
    std::string material(label);
    material += '#';
    material += std::to_string(seed);
    Digest d = sha256(material);
    return from_seed(std::span<const std::uint8_t, 32>(d));
}

Signature SigningKey::sign(std::span<const std::uint8_t> message) const {
    Signature sig{};
    crypto_sign_detached(sig.data(), nullptr, message.data(), message.size(), secret_.data());
    return sig;
}

Signature SigningKey::sign(std::string_view message) const { return sign(as_bytes(message)); }

bool verify(const PublicKey& key, std::span<const std::uint8_t> message, const Signature& sig) {
    ensure_init();
    return crypto_sign_verify_detached(sig.data(), message.data(), message.size(), key.data()) == 0;
}

bool verify(const PublicKey& key, std::string_view message, const Signature& sig) {
    return verify(key, as_bytes(message), sig);
}

PublicKey public_key_from_base64(std::string_view text) {
    Bytes b = from_base64(text);
    if (b.size() != 32) throw ParseError("public_key", "expected 32 bytes, got " + std::to_string(b.size()));
    PublicKey k{};
    std::copy(b.begin(), b.end(), k.begin());
    return k;
}

Signature signature_from_base64(std::string_view text) {
    Bytes b = from_base64(text);
    if (b.size() != 64) throw ParseError("signature", "expected 64 bytes, got " + std::to_string(b.size()));
    Signature s{};
    std::copy(b.begin(), b.end(), s.begin());
    return s;
}

}  // namespace cpmm::crypto
