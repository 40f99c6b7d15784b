#include "chainsmr/types.hpp"

#include <algorithm>

namespace chainsmr {

Round TC::max_high_qc_round() const {
    Round m = 0;
    for (const auto& q : high_qcs) m = std::max(m, q.round);
    return m;
}

Digest vote_digest(const Digest& block_id, Round round, View view, const std::optional<FallbackTag>& tag) {
    Writer w;
    w.str(tag ? "fvote" : "vote");
    w.digest(block_id);
    w.u64(round);
    w.u64(view);
    if (tag) {
        w.u64(tag->height);
        w.u64(tag->proposer);
    }
    return hash(w.bytes());
}

Digest qc_digest(const QC& qc) { return vote_digest(qc.block_id, qc.round, qc.view, qc.fallback); }

Digest round_timeout_digest(Round round) {
    Writer w;
    w.str("round");
    w.u64(round);
    return hash(w.bytes());
}

Digest view_timeout_digest(View view) {
    Writer w;
    w.str("view");
    w.u64(view);
    return hash(w.bytes());
}

Digest coin_digest(View view) { return hash(crypto::coin_message(view)); }

namespace {

void encode_sig(Writer& w, const crypto::ThresholdSig& sig) {
    w.digest(sig.message_digest);
    w.u64(sig.threshold);
    w.raw(sig.agg);
}

crypto::ThresholdSig decode_sig(Reader& r) {
    crypto::ThresholdSig sig;
    sig.message_digest = r.digest();
    sig.threshold = static_cast<std::uint32_t>(r.u64());
    sig.agg = r.fixed<32>();
    return sig;
}

}  // namespace

void encode_qc(Writer& w, const QC& qc) {
    w.digest(qc.block_id);
    w.u64(qc.round);
    w.u64(qc.view);
    w.boolean(qc.fallback.has_value());
    if (qc.fallback) {
        w.u64(qc.fallback->height);
        w.u64(qc.fallback->proposer);
    }
    encode_sig(w, qc.sig);
}

QC decode_qc(Reader& r) {
    QC qc;
    qc.block_id = r.digest();
    qc.round = r.u64();
    qc.view = r.u64();
    if (r.boolean()) {
        FallbackTag tag;
        tag.height = static_cast<std::uint32_t>(r.u64());
        tag.proposer = static_cast<ReplicaId>(r.u64());
        qc.fallback = tag;
    }
    qc.sig = decode_sig(r);
    return qc;
}

void encode_tc(Writer& w, const TC& tc) {
    w.u64(tc.round);
    encode_sig(w, tc.sig);
    w.u64(tc.high_qcs.size());
    for (const auto& q : tc.high_qcs) encode_qc(w, q);
}

TC decode_tc(Reader& r) {
    TC tc;
    tc.round = r.u64();
    tc.sig = decode_sig(r);
    auto count = r.u64();
    if (count > 1'000'000) throw DecodeError("implausible high-QC count");
    for (std::uint64_t i = 0; i < count; ++i) tc.high_qcs.push_back(decode_qc(r));
    return tc;
}

void encode_coin_qc(Writer& w, const CoinQC& c) {
    w.u64(c.view);
    encode_sig(w, c.sig);
    w.u64(c.leader);
}

CoinQC decode_coin_qc(Reader& r) {
    CoinQC c;
    c.view = r.u64();
    c.sig = decode_sig(r);
    c.leader = static_cast<ReplicaId>(r.u64());
    return c;
}

void encode_block(Writer& w, const Block& b) {
    w.digest(b.id);
    encode_qc(w, b.qc);
    w.boolean(b.tc.has_value());
    if (b.tc) encode_tc(w, *b.tc);
    w.boolean(b.coin_qc.has_value());
    if (b.coin_qc) encode_coin_qc(w, *b.coin_qc);
    w.u64(b.round);
    w.u64(b.view);
    w.bytes(b.payload);
}

Block decode_block(Reader& r) {
    Block b;
    b.id = r.digest();
    b.qc = decode_qc(r);
    if (r.boolean()) b.tc = decode_tc(r);
    if (r.boolean()) b.coin_qc = decode_coin_qc(r);
    b.round = r.u64();
    b.view = r.u64();
    b.payload = r.bytes();
    return b;
}

Digest compute_block_id(const QC& qc, Round round, View view, std::span<const std::uint8_t> payload) {
    Writer w;
    encode_qc(w, qc);
    w.u64(round);
    w.u64(view);
    w.bytes(payload);
    return hash(w.bytes());
}

Block make_block(QC qc, Round round, View view, Bytes payload, std::optional<TC> tc,
                 std::optional<CoinQC> coin_qc) {
    Block b;
    b.id = compute_block_id(qc, round, view, payload);
    b.qc = std::move(qc);
    b.tc = std::move(tc);
    b.coin_qc = std::move(coin_qc);
    b.round = round;
    b.view = view;
    b.payload = std::move(payload);
    return b;
}

Genesis make_genesis(const crypto::PublicSet& pub) {
    Genesis g;
    g.block = make_block(QC{}, 0, 0, {});
    g.qc.block_id = g.block.id;
    g.qc.round = 0;
    g.qc.view = 0;
    // Dealer-issued: the aggregate of the test scheme is subset-independent.
    auto digest = qc_digest(g.qc);
    g.qc.sig = crypto::ThresholdSig{digest, pub.quorum(), pub.scheme->combine(digest, pub.quorum(), {})};
    return g;
}

Rank rank_of(const QC& qc, bool endorsed) { return Rank{qc.view, endorsed && qc.is_fallback(), qc.round}; }

Rank rank_of(const Block& block) { return Rank{block.view, false, block.round}; }

bool verify_qc(const QC& qc, const crypto::PublicSet& pub) {
    if (qc.sig.threshold != pub.quorum()) return false;
    if (qc.fallback && (qc.fallback->height < 1 || qc.fallback->height > 2 || qc.fallback->proposer >= pub.n))
        return false;
    return crypto::verify_threshold_digest(qc.sig, qc_digest(qc), pub);
}

bool validate_tc(const TC& tc, const crypto::PublicSet& pub) {
    if (tc.sig.threshold != pub.quorum()) return false;
    if (!crypto::verify_threshold_digest(tc.sig, round_timeout_digest(tc.round), pub)) return false;
    if (tc.high_qcs.size() != pub.quorum()) return false;
    return std::all_of(tc.high_qcs.begin(), tc.high_qcs.end(),
                       [&](const QC& q) { return q.round < tc.round && verify_qc(q, pub); });
}

bool validate_ftc(const FTC& ftc, const crypto::PublicSet& pub) {
    return ftc.sig.threshold == pub.quorum() &&
           crypto::verify_threshold_digest(ftc.sig, view_timeout_digest(ftc.view), pub);
}

bool validate_coin_qc(const CoinQC& coin, const crypto::PublicSet& pub) {
    try {
        return crypto::coin_leader(coin.sig, coin.view, pub) == coin.leader;
    } catch (const crypto::CryptoError&) {
        return false;
    }
}

bool block_id_matches(const Block& block) {
    return block.id == compute_block_id(block.qc, block.round, block.view, block.payload);
}

AddResult ShareAccumulator::add(const crypto::SigShare& share, const crypto::PublicSet& pub) {
    if (!crypto::verify_share(share, pub)) return AddResult::Invalid;
    if (!shares_.empty() && shares_.begin()->second.message_digest != share.message_digest)
        return AddResult::Invalid;
    if (shares_.contains(share.signer)) return AddResult::Duplicate;
    shares_.emplace(share.signer, share);
    if (result_) return AddResult::AlreadyFormed;
    if (shares_.size() < threshold_) return AddResult::Counted;
    std::vector<crypto::SigShare> all;
    all.reserve(shares_.size());
    for (const auto& [_, s] : shares_) all.push_back(s);
    result_ = crypto::aggregate(all, threshold_, pub);
    return AddResult::Formed;
}

std::optional<QC> QcBuilder::add(const Vote& vote, AddResult* status) {
    auto digest = vote_digest(vote.block_id, vote.round, vote.view, vote.fallback);
    AddResult r = AddResult::Invalid;
    std::optional<QC> out;
    if (vote.share.message_digest == digest) {
        Key key{vote.view, vote.round, vote.block_id, vote.fallback};
        auto [it, _] = pending_.try_emplace(key, ShareAccumulator(pub_->quorum()));
        r = it->second.add(vote.share, *pub_);
        if (r == AddResult::Formed) out = QC{vote.block_id, vote.round, vote.view, vote.fallback, it->second.result()};
    }
    if (status) *status = r;
    return out;
}

std::optional<TC> TcBuilder::add(const Timeout& timeout, AddResult* status) {
    AddResult r = AddResult::Invalid;
    std::optional<TC> out;
    if (timeout.share.message_digest == round_timeout_digest(timeout.target) &&
        timeout.high_qc.round < timeout.target) {
        auto [it, _] = pending_.try_emplace(timeout.target, Pending{ShareAccumulator(pub_->quorum()), {}});
        r = it->second.acc.add(timeout.share, *pub_);
        if (r == AddResult::Counted || r == AddResult::Formed)
            it->second.high_qcs.emplace(timeout.share.signer, timeout.high_qc);
        if (r == AddResult::Formed) {
            TC tc;
            tc.round = timeout.target;
            tc.sig = it->second.acc.result();
            for (const auto& [_, q] : it->second.high_qcs) tc.high_qcs.push_back(q);
            out = std::move(tc);
        }
    }
    if (status) *status = r;
    return out;
}

std::optional<FTC> FtcBuilder::add(const crypto::SigShare& share, View view, AddResult* status) {
    AddResult r = AddResult::Invalid;
    std::optional<FTC> out;
    if (share.message_digest == view_timeout_digest(view)) {
        auto [it, _] = pending_.try_emplace(view, ShareAccumulator(pub_->quorum()));
        r = it->second.add(share, *pub_);
        if (r == AddResult::Formed) out = FTC{view, it->second.result()};
    }
    if (status) *status = r;
    return out;
}

std::optional<CoinQC> CoinBuilder::add(const crypto::SigShare& share, View view, AddResult* status) {
    AddResult r = AddResult::Invalid;
    std::optional<CoinQC> out;
    if (share.message_digest == coin_digest(view)) {
        auto [it, _] = pending_.try_emplace(view, ShareAccumulator(pub_->coin_threshold()));
        r = it->second.add(share, *pub_);
        if (r == AddResult::Formed) {
            const auto& sig = it->second.result();
            out = CoinQC{view, sig, crypto::coin_leader(sig, view, *pub_)};
        }
    }
    if (status) *status = r;
    return out;
}

std::optional<QC> form_qc(std::span<const Vote> votes, std::shared_ptr<const crypto::PublicSet> pub) {
    QcBuilder b(std::move(pub));
    std::optional<QC> out;
    for (const auto& v : votes)
        if (auto q = b.add(v)) out = q;
    return out;
}

std::optional<TC> form_tc(std::span<const Timeout> timeouts, std::shared_ptr<const crypto::PublicSet> pub) {
    TcBuilder b(std::move(pub));
    std::optional<TC> out;
    for (const auto& t : timeouts)
        if (auto tc = b.add(t)) out = tc;
    return out;
}

std::optional<FTC> form_ftc(std::span<const crypto::SigShare> shares, View view,
                            std::shared_ptr<const crypto::PublicSet> pub) {
    FtcBuilder b(std::move(pub));
    std::optional<FTC> out;
    for (const auto& s : shares)
        if (auto x = b.add(s, view)) out = x;
    return out;
}

std::optional<CoinQC> form_coinqc(std::span<const crypto::SigShare> shares, View view,
                                  std::shared_ptr<const crypto::PublicSet> pub) {
    CoinBuilder b(std::move(pub));
    std::optional<CoinQC> out;
    for (const auto& s : shares)
        if (auto x = b.add(s, view)) out = x;
    return out;
}

}  // namespace chainsmr
