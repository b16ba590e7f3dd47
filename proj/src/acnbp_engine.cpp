#include <algorithm>

#include "cpmm/acnbp.hpp"
#include "cpmm/error.hpp"

namespace cpmm::acnbp {

namespace {

using Kind = ProtocolError::Kind;

[[noreturn]] void payload_error(Step step, const std::string& what) {
    throw ProtocolError(Kind::Payload, to_string(step) + ": " + what);
}

const Json& field(const Envelope& m, const char* name) {
    if (!m.payload.is_object() || !m.payload.contains(name)) payload_error(m.step, std::string("missing '") + name + "'");
    return m.payload.at(name);
}

std::string text_field(const Envelope& m, const char* name) {
    const auto& v = field(m, name);
    if (!v.is_string()) payload_error(m.step, std::string("'") + name + "' must be a string");
    return v.get<std::string>();
}

bool bool_field(const Envelope& m, const char* name) {
    const auto& v = field(m, name);
    if (!v.is_boolean()) payload_error(m.step, std::string("'") + name + "' must be a boolean");
    return v.get<bool>();
}

/// Prices travel as JSON numbers (0.005) or decimal strings ("0.005").
Money money_field(const Envelope& m, const char* name) {
    const auto& v = field(m, name);
    std::string text;
    if (v.is_string()) text = v.get<std::string>();
    else if (v.is_number()) text = v.dump();
    else payload_error(m.step, std::string("'") + name + "' must be a decimal");
    try {
        Money out = Money::parse_exact(text);
        if (out.minor < 0) payload_error(m.step, std::string("'") + name + "' must be non-negative");
        return out;
    } catch (const ParseError& e) {
        payload_error(m.step, e.what());
    }
}

bool is_buyer_step(Step s) {
    return s != Step::NegotiateResponse && s != Step::Execute && s != Step::Audit;
}

std::string escrow_account_id(const NegotiationSession& s, int attempt) {
    return s.session_id + "-c" + std::to_string(attempt);
}

}  // namespace

Engine::Engine(const crypto::SigningKey& authority, crypto::PublicKey attestation_root,
               std::shared_ptr<rail::EscrowBook> book)
    : authority_(authority),
      attestation_root_(attestation_root),
      book_(std::move(book)),
      verifier_(attestation_root) {}

NegotiationSession Engine::open(std::string session_id, Participant buyer, Participant seller,
                                std::optional<Money> buyer_funds) const {
    if (session_id.empty() ||
        !std::all_of(session_id.begin(), session_id.end(),
                     [](unsigned char c) { return std::isalnum(c) || c == '-' || c == '_' || c == '.'; }))
        throw ValidationError("session id must be a non-empty token of [A-Za-z0-9._-]");
    if (buyer.id.empty() || seller.id.empty() || buyer.id == seller.id || buyer.id == "authority" ||
        seller.id == "authority")
        throw ValidationError("session needs two distinct named parties");
    NegotiationSession s;
    s.session_id = std::move(session_id);
    s.legacy = !(buyer.manifest.cpmm() && seller.manifest.cpmm());
    s.buyer = std::move(buyer);
    s.seller = std::move(seller);
    s.buyer_funds = buyer_funds;
    return s;
}

NegotiationSession Engine::advance(NegotiationSession s, const Envelope& m) {
    if (s.terminal()) throw ProtocolError(Kind::Terminal, "session " + s.session_id + " is closed");
    if (m.session_id != s.session_id) throw ProtocolError(Kind::Payload, "message belongs to another session");
    const auto next = allowed_next(s);
    if (std::find(next.begin(), next.end(), m.step) == next.end())
        throw ProtocolError(Kind::StepOrder, to_string(m.step) + " is not allowed after " +
                                                 (s.step ? to_string(*s.step) : std::string("session start")));

    const Participant* sender = nullptr;
    if (m.step == Step::Audit) sender = m.sender == s.buyer.id ? &s.buyer : m.sender == s.seller.id ? &s.seller : nullptr;
    else sender = is_buyer_step(m.step) ? &s.buyer : &s.seller;
    if (!sender || sender->id != m.sender)
        throw ProtocolError(Kind::Signature, to_string(m.step) + " must be sent by the " +
                                                 (is_buyer_step(m.step) ? "buyer" : "seller"));
    if (!verify_envelope(m, sender->key)) throw ProtocolError(Kind::Signature, "message signature does not verify");
    if (!s.message_log.empty() && m.timestamp < s.message_log.back().timestamp)
        throw ProtocolError(Kind::Payload, "message timestamp goes backwards");

    if (auto g = check_guard(s, m.step); !g) throw ProtocolError(Kind::Guard, g.violation);

    apply_effects(s, m);
    s.step = m.step;
    if (is_checkpoint(m.step)) s.checkpoint = m.step;
    s.message_log.push_back(m);

    if (m.step == Step::Audit) {
        const auto delta = reputation_delta(s);
        s.reputation.buyer_before = reputation_.score(s.buyer.id);
        s.reputation.seller_before = reputation_.score(s.seller.id);
        s.reputation.buyer_after = reputation_.apply(s.buyer.id, delta.buyer);
        s.reputation.seller_after = reputation_.apply(s.seller.id, delta.seller);
        auto trail = emit_audit(s, reputation_);
        std::lock_guard lock(trails_mu_);
        trails_[s.session_id] = std::move(trail);
    }
    return s;
}

void Engine::apply_effects(NegotiationSession& s, const Envelope& m) {
    auto& econ = s.economic;
    switch (m.step) {
        case Step::Discover: {
            if (text_field(m, "provider") != s.seller.id) payload_error(m.step, "provider is not the session seller");
            s.capability = text_field(m, "capability");
            if (s.capability.empty()) payload_error(m.step, "capability must be named");
            break;
        }
        case Step::PreScreen:
            if (text_field(m, "candidate") != s.seller.id) payload_error(m.step, "candidate is not the session seller");
            if (!bool_field(m, "passed")) payload_error(m.step, "candidate failed pre-screening");
            break;
        case Step::NegotiateRequest: {
            const auto& units = field(m, "units");
            if (!units.is_number_integer() || units.get<std::int64_t>() <= 0)
                payload_error(m.step, "units must be a positive integer");
            s.units = units.get<std::int64_t>();
            econ.accepted = false;
            if (s.legacy) break;
            econ.quality_request = field(m, "quality_request");
            if (!econ.quality_request.is_object()) payload_error(m.step, "quality_request must be an object");
            econ.max_price = money_field(m, "max_price");
            econ.payment_method = text_field(m, "payment_method");
            break;
        }
        case Step::NegotiateResponse: {
            ++s.rounds;
            econ.accepted = bool_field(m, "accepted");
            econ.proposal.reset();
            econ.agreed_price.reset();
            if (!econ.accepted || s.legacy) break;
            const Money quote = money_field(m, "price_quote");
            econ.sla_commitment = text_field(m, "sla_commitment");
            payload::EconomicProposal ep;
            try {
                ep = payload::proposal_from_json(field(m, "economic_proposal"));
            } catch (const Error& e) {
                payload_error(m.step, e.what());
            }
            const auto& c = ep.cryptographic_commitment;
            if (!c || c->public_key != crypto::to_base64(s.seller.key) || !payload::verify_commitment(ep, *c))
                payload_error(m.step, "economic proposal is not committed by the seller");
            if ((ep.pricing_model.base_price.amount <=> quote) != 0)
                payload_error(m.step, "price quote differs from the proposal base price");
            econ.agreed_price = ep.pricing_model.base_price.amount;
            econ.proposal = std::move(ep);
            break;
        }
        case Step::Bind: {
            const auto digest = terms_digest(s);
            if (text_field(m, "terms_hash") != crypto::to_hex(digest)) payload_error(m.step, "terms hash mismatch");
            const auto bsig = text_field(m, "buyer_signature");
            const auto ssig = text_field(m, "seller_signature");
            try {
                if (!crypto::verify(s.buyer.key, digest, crypto::signature_from_base64(bsig)) ||
                    !crypto::verify(s.seller.key, digest, crypto::signature_from_base64(ssig)))
                    throw ProtocolError(Kind::Signature, "terms signatures do not verify");
            } catch (const ParseError& e) {
                throw ProtocolError(Kind::Signature, e.what());
            }
            econ.terms_hash = crypto::to_hex(digest);
            econ.buyer_terms_signature = bsig;
            econ.seller_terms_signature = ssig;
            break;
        }
        case Step::Commit: {
            const int attempt = s.payment.commit_attempts + 1;
            const std::string account = escrow_account_id(s, attempt);
            TradeCertificate cert;
            cert.serial = "CERT-" + std::to_string(m.timestamp * 1000 + attempt);
            cert.buyer = s.buyer.id;
            cert.seller = s.seller.id;
            cert.capability = s.capability;
            cert.terms_hash = econ.terms_hash;
            cert.buyer_signature = crypto::to_hex(crypto::from_base64(econ.buyer_terms_signature));
            cert.seller_signature = crypto::to_hex(crypto::from_base64(econ.seller_terms_signature));
            if (s.legacy) {
                cert.payment = std::to_string(s.units) + " units";
            } else {
                if (text_field(m, "escrow_account") != account) payload_error(m.step, "unexpected escrow account id");
                payload::PaymentInstruction pi;
                try {
                    pi = payload::instruction_from_json(field(m, "payment_instruction"));
                } catch (const Error& e) {
                    payload_error(m.step, e.what());
                }
                const auto& currency = econ.proposal->pricing_model.base_price.currency;
                if (!payload::verify_instruction(pi, s.buyer.key))
                    throw ProtocolError(Kind::Signature, "payment instruction is not signed by the buyer");
                if ((pi.amount.base_amount <=> *econ.agreed_price) != 0 || pi.amount.currency != currency)
                    payload_error(m.step, "instruction amount differs from the agreed price");
                if (pi.escrow_details.escrow_contract != account)
                    payload_error(m.step, "instruction names another escrow account");
                if (pi.payment_method != econ.payment_method)
                    payload_error(m.step, "instruction uses another payment method");
                const Money price = *econ.agreed_price;
                cert.payment = currency == "UNITS" ? price.to_string() + " units" : price.to_string() + " " + currency;
                book_->open(account, price, s.buyer.id, s.seller.id, m.timestamp + pi.payment_schedule.timeout_seconds,
                            pi.instruction_id);
                book_->apply(account, rail::EscrowEvent::fund(), m.timestamp);
                s.escrow_state = rail::EscrowState::Funded;
                s.payment.instruction = std::move(pi);
                s.payment.escrow_account = account;
                s.released_to_seller = Money::from_minor(0, price.precision);
                s.refunded_to_buyer = Money::from_minor(0, price.precision);
            }
            cert.authority_signature = crypto::to_hex(authority_.sign(payload::canonical_serialize(to_json(cert))));
            s.payment.commit_attempts = attempt;
            s.certificate = std::move(cert);
            break;
        }
        case Step::Execute:
            if (!bool_field(m, "delivered")) payload_error(m.step, "delivery not confirmed");
            s.quality.delivery_hash = text_field(m, "output_hash");
            if (s.quality.delivery_hash.empty()) payload_error(m.step, "output_hash must be set");
            break;
        case Step::Verify: {
            VerifyOutcome out;
            if (s.legacy) {
                out.passed = bool_field(m, "verified");
                if (!out.passed) out.reason = "buyer rejected the delivery";
                s.quality.outcome = out;
                break;
            }
            payload::QualityAttestation att;
            rail::H402PaymentHeaders h;
            try {
                att = payload::attestation_from_json(field(m, "attestation"));
                rail::Headers headers;
                const auto& pay = field(m, "payment");
                if (!pay.is_object()) payload_error(m.step, "payment must be a header object");
                for (const auto& [name, value] : pay.items()) headers.emplace_back(name, value.get<std::string>());
                h = rail::parse_h402(headers);
            } catch (const ProtocolError&) {
                throw;
            } catch (const std::exception& e) {
                payload_error(m.step, e.what());
            }
            const auto& ep = *econ.proposal;
            if ((h.amount <=> *econ.agreed_price) != 0 || h.currency != ep.pricing_model.base_price.currency ||
                h.invoice != s.payment.escrow_account) {
                out.failed_step = static_cast<int>(rail::VerifyStep::Signature);
                out.reason = "payment does not match the committed instruction";
            } else {
                auto r = verifier_.verify(h, att, ep.service_level_agreement.rules(),
                                          rail::sla_hash(ep.service_level_agreement), m.timestamp);
                out.passed = r.settle;
                out.failed_step = r.failed_step;
                out.penalty_fraction = r.penalty_fraction;
                out.reason = r.reason;
            }
            s.quality.attestation = std::move(att);
            s.quality.outcome = out;
            break;
        }
        case Step::Release: {
            if (s.legacy) break;
            const auto& out = *s.quality.outcome;
            rail::EscrowEvent ev = rail::EscrowEvent::verify_pass();
            if (!out.passed)
                ev = rail::EscrowEvent::verify_fail(out.penalty_fraction > 0.0 ? std::min(out.penalty_fraction, 1.0) : 1.0);
            const auto before = book_->get(s.payment.escrow_account);
            const auto preview = rail::escrow_transition(before, ev, m.timestamp);
            book_->apply(s.payment.escrow_account, ev, m.timestamp);
            for (const auto& e : preview.entries) {
                if (e.to == before.payee) s.released_to_seller += e.amount;
                if (e.to == before.payer) s.refunded_to_buyer += e.amount;
            }
            s.escrow_state = preview.account.state;
            break;
        }
        case Step::Audit:
        case Step::Aborted: break;
    }
}

void Engine::log_system(NegotiationSession& s, Step step, Json payload, Timestamp now) {
    Envelope e{s.session_id, step, "authority", std::move(payload), now, ""};
    s.message_log.push_back(sign_envelope(std::move(e), authority_));
}

void Engine::refund_open_escrow(NegotiationSession& s, Timestamp now) {
    if (s.legacy || s.escrow_state != rail::EscrowState::Funded) return;
    const auto ev = rail::EscrowEvent::verify_fail(1.0);
    const auto before = book_->get(s.payment.escrow_account);
    const auto preview = rail::escrow_transition(before, ev, now);
    book_->apply(s.payment.escrow_account, ev, now);
    for (const auto& e : preview.entries) s.refunded_to_buyer += e.amount;
    s.escrow_state = preview.account.state;
}

NegotiationSession Engine::rollback(NegotiationSession s, const std::string& reason, Timestamp now) {
    if (!s.step || s.terminal())
        throw ProtocolError(Kind::Terminal, "rollback needs an open session past Discover");
    const Step from = *s.step;
    const Step to = *s.checkpoint;
    refund_open_escrow(s, now);
    if (step_index(to) <= step_index(Step::Discover)) {
        s.economic = EconomicContext{};
        s.rounds = 0;
        s.units = 0;
    }
    if (step_index(to) <= step_index(Step::Bind)) {
        s.quality = QualityMetrics{};
        s.certificate.reset();
        s.payment.instruction.reset();
        s.payment.escrow_account.clear();
        s.escrow_state.reset();
    }
    s.step = to;
    log_system(s, to, {{"event", "rollback"}, {"from", to_string(from)}, {"to", to_string(to)}, {"reason", reason}}, now);
    return s;
}

NegotiationSession Engine::abort(NegotiationSession s, const std::string& reason, Timestamp now) {
    if (s.terminal()) throw ProtocolError(Kind::Terminal, "session " + s.session_id + " is closed");
    const std::string from = s.step ? to_string(*s.step) : "start";
    refund_open_escrow(s, now);
    s.step = Step::Aborted;
    log_system(s, Step::Aborted, {{"event", "abort"}, {"from", from}, {"reason", reason}}, now);
    return s;
}

}  // namespace cpmm::acnbp
