#include "doctest.h"

#include <filesystem>
#include <functional>
#include <thread>

#include "cpmm/error.hpp"
#include "cpmm/rail.hpp"
#include "cpmm/samples.hpp"
#include "payload_fuzz.hpp"
#include "wire_fuzz.hpp"

using namespace cpmm::rail;
using cpmm::Money;
namespace samples = cpmm::payload::samples;

namespace {

const Headers kX402Fixture{
    {"X402-Payment-Required", "amount=0.001 currency=USD method=H402"},
    {"X402-Payment-Address", "H402://payment.endpoint/invoice/12345"},
    {"X402-Payment-Metadata", "sla_vector=latency:100ms,accuracy:95% refund_policy=automatic"},
    {"CPMM-Economic-Proposal", "base64_encoded_ep_record"},
    {"CPMM-Negotiation-Token", "jwt_token_for_continued_negotiation"},
};

const Headers kH402Fixture{
    {"H402-Payment-Key", "ed25519_public_key_base64"},
    {"H402-Payment-Amount", "0.001"},
    {"H402-Payment-Currency", "USD"},
    {"H402-Payment-Invoice", "invoice_id_12345"},
    {"H402-Payment-Signature", "schnorr_signature_base64"},
    {"H402-Payment-Timestamp", "unix_timestamp"},
    {"H402-Quality-Request", "latency:100ms,accuracy:95%"},
    {"H402-SLA-Acceptance", "sla_hash_sha256"},
};

constexpr std::int64_t kNow = samples::kEpoch + 600;

X402Challenge sample_challenge() {
    X402Challenge c = parse_402(kX402Fixture);
    c.economic_proposal = encode_proposal_header(samples::proposal());
    return c;
}

struct Fixture {
    X402Challenge challenge = sample_challenge();
    std::vector<cpmm::payload::SlaRule> rules = samples::proposal().service_level_agreement.rules();
    std::string agreed = sla_hash(samples::proposal().service_level_agreement);
    cpmm::payload::QualityAttestation att = samples::attestation();
    EphemeralKeyCache cache;
    PaymentVerifier verifier{samples::root_key().public_key()};

    H402PaymentHeaders pay(const std::string& label, QualityList q = {{"latency", "100ms"}, {"accuracy", "95%"}}) {
        return build_h402_payment(challenge, cpmm::crypto::SigningKey::derive(label), q, agreed, kNow, cache);
    }
};

cpmm::payload::QualityAttestation reattest(std::vector<cpmm::payload::QualityMeasurement> ms) {
    auto qa = samples::attestation();
    qa.quality_measurements = std::move(ms);
    qa.cryptographic_proof.reset();
    return cpmm::payload::sign_attestation(qa, samples::attester_key(), samples::attester_chain());
}

}  // namespace

TEST_CASE("X402 fixture headers are reproduced exactly") {
    auto c = parse_402(kX402Fixture);
    CHECK(c.amount == Money::parse("0.001", 3));
    CHECK(c.currency == "USD");
    CHECK(c.methods == std::vector<std::string>{"H402"});
    CHECK(c.invoice_id() == "12345");
    CHECK(c.metadata->sla_vector == QualityList{{"latency", "100ms"}, {"accuracy", "95%"}});
    CHECK(encode_402(c) == kX402Fixture);
    CHECK(encode_402(c)[0].second == "amount=0.001 currency=USD method=H402");

    std::string response = render_402_response(c);
    CHECK(response.rfind("HTTP/1.1 402 Payment Required\r\nContent-Type: application/json\r\n", 0) == 0);
    CHECK(response.find("X402-Payment-Metadata: sla_vector=latency:100ms,accuracy:95% refund_policy=automatic\r\n") !=
          std::string::npos);
    CHECK(response.find("Cache-Control: no-cache\r\n") != std::string::npos);
    CHECK(parse_402_response(response) == c);
}

TEST_CASE("X402 parse errors") {
    auto with = [](std::function<void(Headers&)> edit) {
        Headers h = kX402Fixture;
        edit(h);
        return h;
    };
    CHECK_THROWS_AS(parse_402(with([](Headers& h) { h.push_back(h[0]); })), cpmm::ParseError);
    CHECK_THROWS_AS(parse_402(with([](Headers& h) { h.erase(h.begin()); })), cpmm::ParseError);
    CHECK_THROWS_AS(parse_402(with([](Headers& h) { h.emplace_back("X402-Payment-Mood", "x"); })), cpmm::ParseError);
    CHECK_THROWS_AS(parse_402(with([](Headers& h) { h[0].second = "amount=0.001 currency=XYZ method=H402"; })),
                    cpmm::ParseError);
    CHECK_THROWS_AS(parse_402(with([](Headers& h) { h[0].second = "amount=1e-3 currency=USD method=H402"; })),
                    cpmm::ParseError);
    CHECK_THROWS_AS(parse_402(with([](Headers& h) { h[0].second = "amount=0.001  currency=USD method=H402"; })),
                    cpmm::ParseError);
    CHECK_THROWS_AS(parse_402(with([](Headers& h) { h[3].second = "not*base64"; })), cpmm::ParseError);
    CHECK_THROWS_AS(parse_402(with([](Headers& h) { h[1].second = "no-scheme"; })), cpmm::ParseError);
    try {
        parse_402(with([](Headers& h) { h[0].second = "amount=0.001 currency=XYZ method=H402"; }));
    } catch (const cpmm::ParseError& e) {
        CHECK(e.where() == "X402-Payment-Required");
    }
    auto ok = parse_402(with([](Headers& h) { h.emplace_back("Server", "demo"); }));
    CHECK(ok == parse_402(kX402Fixture));
}

TEST_CASE("embedded proposal decodes back to the record") {
    auto c = sample_challenge();
    CHECK(decode_proposal_header(*c.economic_proposal) == samples::proposal());
    CHECK(parse_402(encode_402(c)) == c);
}

TEST_CASE("H402 fixture headers are reproduced exactly") {
    auto h = parse_h402(kH402Fixture);
    CHECK(h.timestamp == "unix_timestamp");
    CHECK(encode_h402(h) == kH402Fixture);
    CHECK(signing_payload(h) ==
          "h402|v1|0.001|USD|invoice_id_12345|unix_timestamp|latency:100ms,accuracy:95%|sla_hash_sha256");
    Headers dup = kH402Fixture;
    dup.push_back(dup[2]);
    CHECK_THROWS_AS(parse_h402(dup), cpmm::ParseError);
    Headers missing(kH402Fixture.begin() + 1, kH402Fixture.end());
    CHECK_THROWS_AS(parse_h402(missing), cpmm::ParseError);

    // The placeholder values are lexically fine but fail semantic step 1.
    PaymentVerifier v(samples::root_key().public_key());
    auto r = v.verify(h, samples::attestation(), {}, "sla_hash_sha256", kNow);
    CHECK(r.failed_step == 1);
}

TEST_CASE("codec fuzz: parse and encode are mutual inverses") {
    auto rng = cpmm::make_stream(11, "x402-fuzz");
    for (int i = 0; i < 1000; ++i) {
        auto c = fuzz::random_challenge(rng);
        auto headers = encode_402(c);
        CHECK(parse_402(headers) == c);
        CHECK(encode_402(parse_402(headers)) == headers);

        auto h = fuzz::random_h402(rng, c, i);
        auto hh = encode_h402(h);
        CHECK(parse_h402(hh) == h);
        CHECK(encode_h402(parse_h402(hh)) == hh);
    }
}

TEST_CASE("H402 build and verify") {
    Fixture f;
    auto h = f.pay("eph-1");
    CHECK(parse_h402(encode_h402(h)) == h);
    CHECK(h.invoice == "12345");
    auto r = f.verifier.verify(h, f.att, f.rules, f.agreed, kNow);
    CHECK(r.settle);
    CHECK(r.failed_step == 0);
    REQUIRE(r.settlement);
    CHECK(r.settlement->amount == Money::parse("0.001", 3));

    SUBCASE("replay of the same key and invoice") {
        auto again = f.verifier.verify(h, f.att, f.rules, f.agreed, kNow);
        CHECK(again.failed_step == 1);
    }
    SUBCASE("ephemeral key reuse") {
        CHECK_THROWS_AS(f.pay("eph-1"), cpmm::StateError);
    }
}

TEST_CASE("verification failures report their step") {
    Fixture f;
    SUBCASE("tampered amount") {
        auto h = f.pay("t1");
        h.amount = Money::parse("0.002", 3);
        CHECK(f.verifier.verify(h, f.att, f.rules, f.agreed, kNow).failed_step == 1);
    }
    SUBCASE("stale timestamp") {
        auto h = f.pay("t2");
        CHECK(f.verifier.verify(h, f.att, f.rules, f.agreed, kNow + kClockSkewSeconds + 1).failed_step == 1);
    }
    SUBCASE("latency over the requested bound") {
        auto slow = reattest({{"latency", "120ms", "client_side_timing", ""}, {"accuracy", "97.3%", "reference_comparison", ""}});
        auto r = f.verifier.verify(f.pay("t3"), slow, f.rules, f.agreed, kNow);
        CHECK(r.failed_step == 2);
        CHECK_FALSE(r.settle);
    }
    SUBCASE("SLA penalty without a quality-request breach") {
        auto slow = reattest({{"latency", "120ms", "client_side_timing", ""}, {"accuracy", "97.3%", "reference_comparison", ""}});
        auto r = f.verifier.verify(f.pay("t4", {{"accuracy", "95%"}}), slow, f.rules, f.agreed, kNow);
        CHECK(r.failed_step == 3);
        CHECK(r.penalty_fraction == doctest::Approx(0.10));
    }
    SUBCASE("different SLA accepted") {
        auto r = f.verifier.verify(f.pay("t5"), f.att, f.rules, std::string(64, '0'), kNow);
        CHECK(r.failed_step == 3);
    }
    SUBCASE("broken certificate chain") {
        auto att = f.att;
        att.cryptographic_proof->certificate_chain.pop_back();
        CHECK(f.verifier.verify(f.pay("t6"), att, f.rules, f.agreed, kNow).failed_step == 4);
    }
    SUBCASE("lowest failing step wins") {
        auto att = reattest({{"latency", "120ms", "client_side_timing", ""}, {"accuracy", "80%", "reference_comparison", ""}});
        att.cryptographic_proof->certificate_chain.clear();
        auto h = f.pay("t7");
        CHECK(f.verifier.verify(h, att, f.rules, "wrong", kNow).failed_step == 2);
        h.currency = "EUR";
        CHECK(f.verifier.verify(h, att, f.rules, "wrong", kNow).failed_step == 1);
    }
}

TEST_CASE("quality request semantics") {
    using cpmm::payload::Measured;
    CHECK(quality_meets({85, "ms"}, {100, "ms"}));
    CHECK_FALSE(quality_meets({120, "ms"}, {100, "ms"}));
    CHECK(quality_meets({97.3, "%"}, {95, "%"}));
    CHECK_FALSE(quality_meets({94, "%"}, {95, "%"}));
    CHECK_FALSE(quality_meets({0.05, "s"}, {100, "ms"}));
}

TEST_CASE("escrow transitions") {
    EscrowAccount a{"e1", EscrowState::Created, Money::parse("1.000", 3), Money::parse("0", 3), "buyer", "seller", 0, ""};
    auto funded = escrow_transition(a, EscrowEvent::fund(), 1);
    CHECK(funded.account.state == EscrowState::Funded);
    CHECK(funded.account.held == Money::parse("1.000", 3));
    REQUIRE(funded.entries.size() == 1);
    CHECK(funded.entries[0].from == "buyer");
    CHECK(funded.entries[0].to == "escrow:e1");

    auto partial = escrow_transition(funded.account, EscrowEvent::verify_fail(0.10), 2);
    CHECK(partial.account.state == EscrowState::PartiallyRefunded);
    CHECK(partial.account.held.minor == 0);
    REQUIRE(partial.entries.size() == 2);
    CHECK(partial.entries[0].to == "buyer");
    CHECK(partial.entries[0].amount.minor == 100);
    CHECK(partial.entries[1].to == "seller");
    CHECK(partial.entries[1].amount.minor == 900);

    auto timeout = escrow_transition(funded.account, EscrowEvent::timeout(), 2);
    CHECK(timeout.account.state == EscrowState::Refunded);
    CHECK(timeout.entries[0].amount.minor == 1000);
    CHECK(timeout.entries[0].reason == EntryReason::RefundFull);

    auto full = escrow_transition(funded.account, EscrowEvent::verify_fail(1.0), 2);
    CHECK(full.account.state == EscrowState::Refunded);

    auto pass = escrow_transition(funded.account, EscrowEvent::verify_pass(), 2);
    CHECK(pass.account.state == EscrowState::Released);
    CHECK(pass.entries[0].to == "seller");

    CHECK_THROWS_AS(escrow_transition(a, EscrowEvent::verify_pass(), 1), cpmm::StateError);
    CHECK_THROWS_AS(escrow_transition(funded.account, EscrowEvent::fund(), 1), cpmm::StateError);
    CHECK_THROWS_AS(escrow_transition(pass.account, EscrowEvent::timeout(), 1), cpmm::StateError);

    // 0.5 of 5 minor units: payer share 2.5 rounds to 2, payee gets 3.
    EscrowAccount odd = funded.account;
    odd.held = Money::from_minor(5, 3);
    auto split = escrow_transition(odd, EscrowEvent::verify_fail(0.5), 3);
    CHECK(split.entries[0].amount.minor == 2);
    CHECK(split.entries[1].amount.minor == 3);
}

TEST_CASE("escrow model check: every event sequence up to length 6") {
    const std::vector<EscrowEvent> events{EscrowEvent::fund(), EscrowEvent::verify_pass(), EscrowEvent::verify_fail(0.1),
                                          EscrowEvent::verify_fail(0.37), EscrowEvent::verify_fail(1.0),
                                          EscrowEvent::timeout()};
    std::size_t sequences = 0;
    std::function<void(EscrowAccount, std::vector<LedgerEntry>, int)> walk = [&](EscrowAccount acct,
                                                                                 std::vector<LedgerEntry> log, int depth) {
        ++sequences;
        std::int64_t funded = 0, out_payer = 0, out_payee = 0, escrow = 0;
        bool full_refund = false, released = false;
        for (const auto& e : log) {
            if (e.reason == EntryReason::Fund) funded += e.amount.minor;
            if (e.from == acct.escrow_party()) {
                (e.to == acct.payer ? out_payer : out_payee) += e.amount.minor;
                if (e.reason == EntryReason::RefundFull) full_refund = true;
                if (e.reason == EntryReason::Release) released = true;
            }
            if (e.to == acct.escrow_party()) escrow += e.amount.minor;
            if (e.from == acct.escrow_party()) escrow -= e.amount.minor;
        }
        CHECK(funded == out_payer + out_payee + escrow);
        CHECK(escrow == acct.held.minor);
        CHECK_FALSE((full_refund && released));
        if (acct.terminal()) CHECK(acct.held.minor == 0);
        CHECK(funded <= acct.amount.minor);
        if (depth == 6) return;
        for (const auto& ev : events) {
            try {
                auto t = escrow_transition(acct, ev, depth);
                auto next = log;
                next.insert(next.end(), t.entries.begin(), t.entries.end());
                walk(t.account, next, depth + 1);
            } catch (const cpmm::StateError&) {
                walk(acct, log, depth + 1);
            }
        }
    };
    walk(EscrowAccount{"m", EscrowState::Created, Money::parse("9.99", 2), Money::parse("0", 2), "p", "q", 0, ""}, {}, 0);
    CHECK(sequences > 50000);
}

TEST_CASE("escrow book, ledger conservation and persistence") {
    EscrowBook book;
    for (int i = 0; i < 20; ++i) book.open("acct" + std::to_string(i), Money::from_minor(1000 + i, 3), "buyer" + std::to_string(i % 3), "seller", 100);
    std::vector<std::thread> threads;
    for (int i = 0; i < 20; ++i)
        threads.emplace_back([&book, i] {
            const std::string id = "acct" + std::to_string(i);
            book.apply(id, EscrowEvent::fund(), 1);
            if (i % 3 == 0) book.apply(id, EscrowEvent::verify_pass(), 2);
            else if (i % 3 == 1) book.apply(id, EscrowEvent::verify_fail(0.25), 2);
            else book.apply(id, EscrowEvent::timeout(), 2);
        });
    for (auto& t : threads) t.join();

    std::int64_t total = 0;
    for (const auto& [acct, bal] : book.ledger().balances()) total += bal;
    CHECK(total == 0);
    CHECK(book.get("acct0").state == EscrowState::Released);
    CHECK(book.get("acct1").state == EscrowState::PartiallyRefunded);
    CHECK(book.get("acct2").state == EscrowState::Refunded);

    auto before = book.get("acct0");
    CHECK_THROWS_AS(book.apply("acct0", EscrowEvent::timeout(), 3), cpmm::StateError);
    CHECK(book.get("acct0").state == before.state);
    CHECK_THROWS_AS(book.open("acct0", Money::from_minor(1, 3), "a", "b", 1), cpmm::ValidationError);

    auto path = std::filesystem::temp_directory_path() / "cpmm_ledger_test.jsonl";
    book.ledger().save(path.string());
    auto loaded = Ledger::load(path.string());
    CHECK(loaded.entries() == book.ledger().entries());
    CHECK(loaded.balances() == book.ledger().balances());
    std::filesystem::remove(path);
    CHECK_THROWS_AS(Ledger::from_jsonl("{\"entry_id\":2}\n"), cpmm::ParseError);
}

TEST_CASE("refund capability tokens") {
    EscrowBook book;
    const auto& authority_key = samples::seller_key();
    RefundAuthority authority(authority_key, book);
    book.open("r1", Money::parse("1.000", 3), "buyer", "seller", 100);
    book.apply("r1", EscrowEvent::fund(), 1);
    auto token = authority.issue("r1", {"service_failure"}, 1000);

    RefundEvidence timeout{true, false, std::nullopt};
    auto wrong = authority.exercise(token, "quality_degradation", timeout, 10);
    CHECK_FALSE(wrong.accepted);

    auto forged = token;
    forged.conditions.insert("quality_degradation");
    CHECK_FALSE(authority.exercise(forged, "quality_degradation", timeout, 10).accepted);

    CHECK_FALSE(authority.exercise(token, "service_failure", RefundEvidence{}, 10).accepted);
    CHECK_FALSE(authority.exercise(token, "service_failure", timeout, 2000).accepted);

    auto first = authority.exercise(token, "service_failure", timeout, 10);
    CHECK(first.accepted);
    CHECK(first.refund_fraction == 1.0);
    CHECK(book.get("r1").state == EscrowState::Refunded);
    const auto entries = book.ledger().entries().size();
    auto second = authority.exercise(token, "service_failure", timeout, 11);
    CHECK(second == first);
    CHECK(book.ledger().entries().size() == entries);

    book.open("r2", Money::parse("2.000", 3), "buyer", "seller", 100);
    book.apply("r2", EscrowEvent::fund(), 1);
    auto sla_token = authority.issue("r2", {"sla_violation", "quality_degradation"}, 1000);
    cpmm::payload::SlaReport report{false, 0.10, {"latency"}, Money::parse("0.200", 3)};
    auto partial = authority.exercise(sla_token, "sla_violation", RefundEvidence{false, false, report}, 10);
    CHECK(partial.accepted);
    CHECK(book.get("r2").state == EscrowState::PartiallyRefunded);
    CHECK(book.ledger().balance("buyer", 3) == Money::parse("-1.800", 3));
}
