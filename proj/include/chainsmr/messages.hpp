#pragma once

#include "chainsmr/types.hpp"

#include <string_view>
#include <variant>

namespace chainsmr {

struct ProposalMsg {
    Block block;
};

/// Vote share sent to the next leader (regular) or back to the f-block's
/// proposer (fallback tag set).
struct VoteMsg {
    Vote vote;
};

/// Timeout over a round (pacemaker protocols) or a view (fallback protocol),
/// carrying the sender's highest QC and, when that QC is an f-QC, the coin-QC
/// that endorses it.
struct TimeoutMsg {
    Timeout timeout;
    std::optional<CoinQC> endorsement;
};

struct TcMsg {
    TC tc;
};

struct FtcMsg {
    FTC ftc;
};

struct FallbackProposalMsg {
    FallbackBlock block;
};

/// A certified height-2 f-block, multicast to drive leader election.
struct FqcMsg {
    QC fqc;
};

struct CoinShareMsg {
    View view = 0;
    crypto::SigShare share;
};

struct CoinQcMsg {
    CoinQC coin;
};

struct BlockRequestMsg {
    Digest id;
};

struct BlockResponseMsg {
    Block block;
};

using Message = std::variant<ProposalMsg, VoteMsg, TimeoutMsg, TcMsg, FtcMsg, FallbackProposalMsg, FqcMsg,
                             CoinShareMsg, CoinQcMsg, BlockRequestMsg, BlockResponseMsg>;

/// Canonical wire encoding: a 64-bit variant tag followed by the fields in
/// declaration order.
Bytes encode(const Message& msg);
Message decode(std::span<const std::uint8_t> data);

std::string_view kind_name(const Message& msg);
inline constexpr std::size_t kMessageKinds = std::variant_size_v<Message>;
std::string_view kind_name(std::size_t index);

}  // namespace chainsmr
