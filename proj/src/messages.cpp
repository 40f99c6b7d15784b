#include "chainsmr/messages.hpp"

#include <array>

namespace chainsmr {

namespace {

constexpr std::array<std::string_view, kMessageKinds> kNames = {
    "proposal", "vote", "timeout", "tc", "ftc", "fblock", "fqc", "coin_share", "coin_qc", "block_request",
    "block_response"};

void encode_share(Writer& w, const crypto::SigShare& s) {
    w.u64(s.signer);
    w.digest(s.message_digest);
    w.raw(s.share);
}

crypto::SigShare decode_share(Reader& r) {
    crypto::SigShare s;
    s.signer = static_cast<ReplicaId>(r.u64());
    s.message_digest = r.digest();
    s.share = r.fixed<32>();
    return s;
}

template <class T>
void encode_optional(Writer& w, const std::optional<T>& v, void (*enc)(Writer&, const T&)) {
    w.boolean(v.has_value());
    if (v) enc(w, *v);
}

struct Encoder {
    Writer& w;

    void operator()(const ProposalMsg& m) { encode_block(w, m.block); }
    void operator()(const VoteMsg& m) {
        w.digest(m.vote.block_id);
        w.u64(m.vote.round);
        w.u64(m.vote.view);
        w.boolean(m.vote.fallback.has_value());
        if (m.vote.fallback) {
            w.u64(m.vote.fallback->height);
            w.u64(m.vote.fallback->proposer);
        }
        encode_share(w, m.vote.share);
    }
    void operator()(const TimeoutMsg& m) {
        w.u64(m.timeout.target);
        encode_share(w, m.timeout.share);
        encode_qc(w, m.timeout.high_qc);
        encode_optional<CoinQC>(w, m.endorsement, encode_coin_qc);
    }
    void operator()(const TcMsg& m) { encode_tc(w, m.tc); }
    void operator()(const FtcMsg& m) {
        w.u64(m.ftc.view);
        w.digest(m.ftc.sig.message_digest);
        w.u64(m.ftc.sig.threshold);
        w.raw(m.ftc.sig.agg);
    }
    void operator()(const FallbackProposalMsg& m) {
        encode_block(w, m.block.inner);
        w.u64(m.block.height);
        w.u64(m.block.proposer);
    }
    void operator()(const FqcMsg& m) { encode_qc(w, m.fqc); }
    void operator()(const CoinShareMsg& m) {
        w.u64(m.view);
        encode_share(w, m.share);
    }
    void operator()(const CoinQcMsg& m) { encode_coin_qc(w, m.coin); }
    void operator()(const BlockRequestMsg& m) { w.digest(m.id); }
    void operator()(const BlockResponseMsg& m) { encode_block(w, m.block); }
};

}  // namespace

Bytes encode(const Message& msg) {
    Writer w;
    w.u64(msg.index());
    std::visit(Encoder{w}, msg);
    return std::move(w).take();
}

Message decode(std::span<const std::uint8_t> data) {
    Reader r(data);
    auto tag = r.u64();
    Message out;
    switch (tag) {
        case 0: out = ProposalMsg{decode_block(r)}; break;
        case 1: {
            Vote v;
            v.block_id = r.digest();
            v.round = r.u64();
            v.view = r.u64();
            if (r.boolean()) {
                FallbackTag t;
                t.height = static_cast<std::uint32_t>(r.u64());
                t.proposer = static_cast<ReplicaId>(r.u64());
                v.fallback = t;
            }
            v.share = decode_share(r);
            out = VoteMsg{v};
            break;
        }
        case 2: {
            TimeoutMsg m;
            m.timeout.target = r.u64();
            m.timeout.share = decode_share(r);
            m.timeout.high_qc = decode_qc(r);
            if (r.boolean()) m.endorsement = decode_coin_qc(r);
            out = std::move(m);
            break;
        }
        case 3: out = TcMsg{decode_tc(r)}; break;
        case 4: {
            FTC ftc;
            ftc.view = r.u64();
            ftc.sig.message_digest = r.digest();
            ftc.sig.threshold = static_cast<std::uint32_t>(r.u64());
            ftc.sig.agg = r.fixed<32>();
            out = FtcMsg{ftc};
            break;
        }
        case 5: {
            FallbackBlock fb;
            fb.inner = decode_block(r);
            fb.height = static_cast<std::uint32_t>(r.u64());
            fb.proposer = static_cast<ReplicaId>(r.u64());
            out = FallbackProposalMsg{std::move(fb)};
            break;
        }
        case 6: out = FqcMsg{decode_qc(r)}; break;
        case 7: {
            CoinShareMsg m;
            m.view = r.u64();
            m.share = decode_share(r);
            out = m;
            break;
        }
        case 8: out = CoinQcMsg{decode_coin_qc(r)}; break;
        case 9: out = BlockRequestMsg{r.digest()}; break;
        case 10: out = BlockResponseMsg{decode_block(r)}; break;
        default: throw DecodeError("unknown message tag " + std::to_string(tag));
    }
    if (!r.done()) throw DecodeError("trailing bytes after message");
    return out;
}

std::string_view kind_name(const Message& msg) { return kNames[msg.index()]; }

std::string_view kind_name(std::size_t index) { return kNames.at(index); }

}  // namespace chainsmr
