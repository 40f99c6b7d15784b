#pragma once

#include "chainsmr/crypto.hpp"
#include "chainsmr/serialize.hpp"

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <tuple>
#include <vector>

namespace chainsmr {

using Round = std::uint64_t;
using View = std::uint64_t;

/// Certificate/block rank. Member order is the comparison order: view first,
/// then an endorsed f-QC beats any non-endorsed item of the same view, then round.
struct Rank {
    View view = 0;
    bool endorsed = false;
    Round round = 0;

    auto operator<=>(const Rank&) const = default;
};

/// Extra fields an f-QC (and the f-block it certifies) carries.
struct FallbackTag {
    std::uint32_t height = 0;
    ReplicaId proposer = 0;

    auto operator<=>(const FallbackTag&) const = default;
};

/// Quorum certificate over (block_id, round, view). With a fallback tag it is
/// an f-QC over (block_id, round, view, height, proposer).
struct QC {
    Digest block_id;
    Round round = 0;
    View view = 0;
    std::optional<FallbackTag> fallback;
    crypto::ThresholdSig sig;

    bool is_fallback() const noexcept { return fallback.has_value(); }
    bool operator==(const QC&) const = default;
};

using FQC = QC;

struct TC {
    Round round = 0;
    crypto::ThresholdSig sig;
    std::vector<QC> high_qcs;

    Round max_high_qc_round() const;
    bool operator==(const TC&) const = default;
};

struct FTC {
    View view = 0;
    crypto::ThresholdSig sig;

    bool operator==(const FTC&) const = default;
};

struct CoinQC {
    View view = 0;
    crypto::ThresholdSig sig;
    ReplicaId leader = 0;

    bool operator==(const CoinQC&) const = default;
};

/// Chained proposal. `tc` is only used by the 2-chain pacemaker protocol and
/// `coin_qc` only by the fallback protocol.
struct Block {
    Digest id;
    QC qc;
    std::optional<TC> tc;
    std::optional<CoinQC> coin_qc;
    Round round = 0;
    View view = 0;
    Bytes payload;

    bool operator==(const Block&) const = default;
};

struct FallbackBlock {
    Block inner;
    std::uint32_t height = 1;
    ReplicaId proposer = 0;

    FallbackTag tag() const { return FallbackTag{height, proposer}; }
    bool operator==(const FallbackBlock&) const = default;
};

// Domain-separated digests each share kind is taken over.
Digest vote_digest(const Digest& block_id, Round round, View view, const std::optional<FallbackTag>& tag);
Digest qc_digest(const QC& qc);
Digest round_timeout_digest(Round round);
Digest view_timeout_digest(View view);
Digest coin_digest(View view);

void encode_qc(Writer& w, const QC& qc);
void encode_tc(Writer& w, const TC& tc);
void encode_coin_qc(Writer& w, const CoinQC& c);
void encode_block(Writer& w, const Block& b);
QC decode_qc(Reader& r);
TC decode_tc(Reader& r);
CoinQC decode_coin_qc(Reader& r);
Block decode_block(Reader& r);

Digest compute_block_id(const QC& qc, Round round, View view, std::span<const std::uint8_t> payload);

Block make_block(QC qc, Round round, View view, Bytes payload, std::optional<TC> tc = std::nullopt,
                 std::optional<CoinQC> coin_qc = std::nullopt);

struct Genesis {
    Block block;
    QC qc;
};

/// Round-0, view-0 block with empty payload and its certificate, which every
/// replica holds from the start.
Genesis make_genesis(const crypto::PublicSet& pub);

Rank rank_of(const QC& qc, bool endorsed = false);
Rank rank_of(const Block& block);

bool verify_qc(const QC& qc, const crypto::PublicSet& pub);
/// Signature valid, exactly 2f+1 valid high-QCs, all with round < tc.round.
bool validate_tc(const TC& tc, const crypto::PublicSet& pub);
bool validate_ftc(const FTC& ftc, const crypto::PublicSet& pub);
bool validate_coin_qc(const CoinQC& coin, const crypto::PublicSet& pub);
bool block_id_matches(const Block& block);

struct Vote {
    Digest block_id;
    Round round = 0;
    View view = 0;
    std::optional<FallbackTag> fallback;
    crypto::SigShare share;
};

struct Timeout {
    std::uint64_t target = 0;  // round, or view for the fallback protocol
    crypto::SigShare share;
    QC high_qc;
};

enum class AddResult { Counted, Duplicate, Formed, AlreadyFormed, Invalid };

/// Accumulates shares for one message under a threshold. The certificate is
/// handed out exactly once, when the distinct-signer count first reaches it.
class ShareAccumulator {
public:
    ShareAccumulator() = default;
    explicit ShareAccumulator(std::uint32_t threshold) : threshold_(threshold) {}

    AddResult add(const crypto::SigShare& share, const crypto::PublicSet& pub);
    const crypto::ThresholdSig& result() const { return *result_; }
    std::size_t distinct_signers() const { return shares_.size(); }
    bool formed() const { return result_.has_value(); }
    bool has_signer(ReplicaId id) const { return shares_.contains(id); }

private:
    std::uint32_t threshold_ = 0;
    std::map<ReplicaId, crypto::SigShare> shares_;
    std::optional<crypto::ThresholdSig> result_;
};

/// Collects votes into QCs / f-QCs keyed by the voted tuple.
class QcBuilder {
public:
    explicit QcBuilder(std::shared_ptr<const crypto::PublicSet> pub) : pub_(std::move(pub)) {}

    std::optional<QC> add(const Vote& vote, AddResult* status = nullptr);

private:
    using Key = std::tuple<View, Round, Digest, std::optional<FallbackTag>>;
    std::shared_ptr<const crypto::PublicSet> pub_;
    std::map<Key, ShareAccumulator> pending_;
};

/// Collects round timeouts into a TC carrying every contributor's high QC.
class TcBuilder {
public:
    explicit TcBuilder(std::shared_ptr<const crypto::PublicSet> pub) : pub_(std::move(pub)) {}

    std::optional<TC> add(const Timeout& timeout, AddResult* status = nullptr);

private:
    struct Pending {
        ShareAccumulator acc;
        std::map<ReplicaId, QC> high_qcs;
    };
    std::shared_ptr<const crypto::PublicSet> pub_;
    std::map<Round, Pending> pending_;
};

class FtcBuilder {
public:
    explicit FtcBuilder(std::shared_ptr<const crypto::PublicSet> pub) : pub_(std::move(pub)) {}

    std::optional<FTC> add(const crypto::SigShare& share, View view, AddResult* status = nullptr);

private:
    std::shared_ptr<const crypto::PublicSet> pub_;
    std::map<View, ShareAccumulator> pending_;
};

class CoinBuilder {
public:
    explicit CoinBuilder(std::shared_ptr<const crypto::PublicSet> pub) : pub_(std::move(pub)) {}

    std::optional<CoinQC> add(const crypto::SigShare& share, View view, AddResult* status = nullptr);

private:
    std::shared_ptr<const crypto::PublicSet> pub_;
    std::map<View, ShareAccumulator> pending_;
};

// One-shot helpers over a complete message set.
std::optional<QC> form_qc(std::span<const Vote> votes, std::shared_ptr<const crypto::PublicSet> pub);
std::optional<TC> form_tc(std::span<const Timeout> timeouts, std::shared_ptr<const crypto::PublicSet> pub);
std::optional<FTC> form_ftc(std::span<const crypto::SigShare> shares, View view,
                            std::shared_ptr<const crypto::PublicSet> pub);
std::optional<CoinQC> form_coinqc(std::span<const crypto::SigShare> shares, View view,
                                  std::shared_ptr<const crypto::PublicSet> pub);

}  // namespace chainsmr
