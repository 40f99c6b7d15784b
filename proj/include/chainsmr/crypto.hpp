#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace chainsmr {

using Bytes = std::vector<std::uint8_t>;
using ReplicaId = std::uint32_t;

inline constexpr std::size_t kDigestSize = 32;

/// Fixed-size output of the collision-resistant hash.
struct Digest {
    std::array<std::uint8_t, kDigestSize> bytes{};

    auto operator<=>(const Digest&) const = default;

    std::string hex() const;
    static Digest from_hex(std::string_view hex);
};

struct DigestHash {
    std::size_t operator()(const Digest& d) const noexcept;
};

Digest hash(std::span<const std::uint8_t> data);
Digest hash(std::string_view data);

namespace crypto {

using ShareBytes = std::array<std::uint8_t, 32>;
using AggregateBytes = std::array<std::uint8_t, 32>;

struct SigShare {
    ReplicaId signer = 0;
    Digest message_digest;
    ShareBytes share{};

    bool operator==(const SigShare&) const = default;
};

struct ThresholdSig {
    Digest message_digest;
    std::uint32_t threshold = 0;
    AggregateBytes agg{};

    bool operator==(const ThresholdSig&) const = default;
};

class CryptoError : public std::runtime_error {
public:
    enum class Kind { InsufficientShares, MixedMessages, InvalidCoin };

    CryptoError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

struct SecretKey {
    std::array<std::uint8_t, 32> bytes{};
};

/// Backend for share signing and threshold combination. The test scheme is
/// the only implementation here; a pairing-based scheme can be slotted in
/// behind the same surface.
class ThresholdScheme {
public:
    virtual ~ThresholdScheme() = default;

    virtual ShareBytes sign(const SecretKey& key, const Digest& digest) const = 0;
    virtual bool verify_share(ReplicaId signer, const Digest& digest, const ShareBytes& share) const = 0;
    /// Called only with `threshold` distinct, already verified shares.
    virtual AggregateBytes combine(const Digest& digest, std::uint32_t threshold,
                                   std::span<const SigShare> shares) const = 0;
    virtual bool verify_aggregate(const Digest& digest, std::uint32_t threshold,
                                  const AggregateBytes& agg) const = 0;
};

/// Verification data for all replicas plus the quorum parameters.
struct PublicSet {
    std::uint32_t n = 0;
    std::uint32_t f = 0;
    std::shared_ptr<const ThresholdScheme> scheme;

    std::uint32_t quorum() const noexcept { return 2 * f + 1; }
    std::uint32_t coin_threshold() const noexcept { return f + 1; }
};

struct KeyMaterial {
    ReplicaId replica_id = 0;
    SecretKey secret;
    std::shared_ptr<const PublicSet> public_set;
};

// Keyed-MAC scheme derived from a dealer seed. A share is HMAC(sk_i, digest);
// the aggregate depends only on (digest, threshold, seed), so every subset of
// valid shares yields the same signature.
class TestScheme final : public ThresholdScheme {
public:
    TestScheme(std::uint64_t dealer_seed, std::uint32_t n);

    SecretKey secret_for(ReplicaId id) const;

    ShareBytes sign(const SecretKey& key, const Digest& digest) const override;
    bool verify_share(ReplicaId signer, const Digest& digest, const ShareBytes& share) const override;
    AggregateBytes combine(const Digest& digest, std::uint32_t threshold,
                           std::span<const SigShare> shares) const override;
    bool verify_aggregate(const Digest& digest, std::uint32_t threshold,
                          const AggregateBytes& agg) const override;

    ~TestScheme() override;

private:
    class Mac;
    struct AggKeyHash {
        std::size_t operator()(const std::pair<Digest, std::uint32_t>& k) const;
    };

    AggregateBytes expected_aggregate(const Digest& digest, std::uint32_t threshold) const;

    std::uint64_t seed_;
    std::vector<SecretKey> secrets_;
    SecretKey aggregate_key_;
    // Precomputed HMAC pads per key, and memoized aggregates. Not thread-safe:
    // one scheme per simulation.
    std::vector<std::unique_ptr<Mac>> share_macs_;
    std::unique_ptr<Mac> aggregate_mac_;
    mutable std::unordered_map<std::pair<Digest, std::uint32_t>, AggregateBytes, AggKeyHash> aggregates_;
};

/// Trusted dealer: equips n = 3f+1 replicas with keys under one seed.
std::vector<KeyMaterial> deal_keys(std::uint32_t f, std::uint64_t dealer_seed);

SigShare sign_share(const KeyMaterial& key, std::span<const std::uint8_t> message);
SigShare sign_digest(const KeyMaterial& key, const Digest& digest);
bool verify_share(const SigShare& share, const PublicSet& pub);

/// Duplicate signers are counted once; invalid shares are ignored.
ThresholdSig aggregate(std::span<const SigShare> shares, std::uint32_t threshold, const PublicSet& pub);

bool verify_threshold(const ThresholdSig& sig, std::span<const std::uint8_t> message, const PublicSet& pub);
bool verify_threshold_digest(const ThresholdSig& sig, const Digest& digest, const PublicSet& pub);

/// Message the coin shares of a view are taken over ("coin" || view).
Bytes coin_message(std::uint64_t view);

/// Leader elected by a view's coin: hash of the unique aggregate, mod n.
/// Throws InvalidCoin when the signature does not verify for that view.
ReplicaId coin_leader(const ThresholdSig& coin_sig, std::uint64_t view, const PublicSet& pub);

}  // namespace crypto
}  // namespace chainsmr
