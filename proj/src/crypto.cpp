#include "chainsmr/crypto.hpp"

#include "chainsmr/serialize.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/sha.h>

#include <algorithm>
#include <cstring>
#include <set>

namespace chainsmr {

namespace {

constexpr char kHexDigits[] = "0123456789abcdef";

int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

std::array<std::uint8_t, 32> hmac(std::span<const std::uint8_t> key, std::span<const std::uint8_t> data) {
    std::array<std::uint8_t, 32> out{};
    unsigned int len = 0;
    HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), data.data(), data.size(), out.data(), &len);
    return out;
}

}  // namespace

std::string Digest::hex() const {
    std::string s;
    s.reserve(2 * kDigestSize);
    for (auto b : bytes) {
        s.push_back(kHexDigits[b >> 4]);
        s.push_back(kHexDigits[b & 0xf]);
    }
    return s;
}

Digest Digest::from_hex(std::string_view hex) {
    if (hex.size() != 2 * kDigestSize) throw std::invalid_argument("digest hex must be 64 characters");
    Digest d;
    for (std::size_t i = 0; i < kDigestSize; ++i) {
        int hi = hex_value(hex[2 * i]);
        int lo = hex_value(hex[2 * i + 1]);
        if (hi < 0 || lo < 0) throw std::invalid_argument("invalid hex digit in digest");
        d.bytes[i] = static_cast<std::uint8_t>((hi << 4) | lo);
    }
    return d;
}

std::size_t DigestHash::operator()(const Digest& d) const noexcept {
    std::size_t h;
    std::memcpy(&h, d.bytes.data(), sizeof(h));
    return h;
}

Digest hash(std::span<const std::uint8_t> data) {
    Digest d;
    SHA256(data.data(), data.size(), d.bytes.data());
    return d;
}

Digest hash(std::string_view data) {
    return hash(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(data.data()), data.size()));
}

namespace crypto {

// HMAC-SHA256 with the key pads absorbed once up front.
class TestScheme::Mac {
public:
    explicit Mac(std::span<const std::uint8_t> key) : inner_(EVP_MD_CTX_new()), outer_(EVP_MD_CTX_new()) {
        std::array<std::uint8_t, 64> ipad{}, opad{};
        std::copy(key.begin(), key.end(), ipad.begin());
        opad = ipad;
        for (auto& b : ipad) b ^= 0x36;
        for (auto& b : opad) b ^= 0x5c;
        EVP_DigestInit_ex(inner_, EVP_sha256(), nullptr);
        EVP_DigestUpdate(inner_, ipad.data(), ipad.size());
        EVP_DigestInit_ex(outer_, EVP_sha256(), nullptr);
        EVP_DigestUpdate(outer_, opad.data(), opad.size());
    }
    ~Mac() {
        EVP_MD_CTX_free(inner_);
        EVP_MD_CTX_free(outer_);
    }
    Mac(const Mac&) = delete;
    Mac& operator=(const Mac&) = delete;

    std::array<std::uint8_t, 32> operator()(std::span<const std::uint8_t> data) const {
        std::array<std::uint8_t, 32> mid{}, out{};
        EVP_MD_CTX* c = EVP_MD_CTX_new();
        EVP_MD_CTX_copy_ex(c, inner_);
        EVP_DigestUpdate(c, data.data(), data.size());
        EVP_DigestFinal_ex(c, mid.data(), nullptr);
        EVP_MD_CTX_copy_ex(c, outer_);
        EVP_DigestUpdate(c, mid.data(), mid.size());
        EVP_DigestFinal_ex(c, out.data(), nullptr);
        EVP_MD_CTX_free(c);
        return out;
    }

private:
    EVP_MD_CTX* inner_;
    EVP_MD_CTX* outer_;
};

std::size_t TestScheme::AggKeyHash::operator()(const std::pair<Digest, std::uint32_t>& k) const {
    return DigestHash{}(k.first) ^ (static_cast<std::size_t>(k.second) * 0x9E3779B97F4A7C15ull);
}

TestScheme::TestScheme(std::uint64_t dealer_seed, std::uint32_t n) : seed_(dealer_seed) {
    secrets_.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        Writer w;
        w.str("replica-secret");
        w.u64(dealer_seed);
        w.u64(i);
        secrets_.push_back(SecretKey{hash(w.bytes()).bytes});
        share_macs_.push_back(std::make_unique<Mac>(secrets_.back().bytes));
    }
    Writer w;
    w.str("aggregate-key");
    w.u64(dealer_seed);
    aggregate_key_ = SecretKey{hash(w.bytes()).bytes};
    aggregate_mac_ = std::make_unique<Mac>(aggregate_key_.bytes);
}

TestScheme::~TestScheme() = default;

SecretKey TestScheme::secret_for(ReplicaId id) const { return secrets_.at(id); }

ShareBytes TestScheme::sign(const SecretKey& key, const Digest& digest) const {
    for (std::size_t i = 0; i < secrets_.size(); ++i)
        if (secrets_[i].bytes == key.bytes) return (*share_macs_[i])(digest.bytes);
    return hmac(key.bytes, digest.bytes);
}

bool TestScheme::verify_share(ReplicaId signer, const Digest& digest, const ShareBytes& share) const {
    if (signer >= secrets_.size()) return false;
    return (*share_macs_[signer])(digest.bytes) == share;
}

AggregateBytes TestScheme::expected_aggregate(const Digest& digest, std::uint32_t threshold) const {
    auto key = std::make_pair(digest, threshold);
    if (auto it = aggregates_.find(key); it != aggregates_.end()) return it->second;
    Writer w;
    w.u64(threshold);
    w.digest(digest);
    auto agg = (*aggregate_mac_)(w.bytes());
    if (aggregates_.size() > (1u << 20)) aggregates_.clear();
    aggregates_.emplace(key, agg);
    return agg;
}

AggregateBytes TestScheme::combine(const Digest& digest, std::uint32_t threshold,
                                   std::span<const SigShare>) const {
    return expected_aggregate(digest, threshold);
}

bool TestScheme::verify_aggregate(const Digest& digest, std::uint32_t threshold,
                                  const AggregateBytes& agg) const {
    return expected_aggregate(digest, threshold) == agg;
}

std::vector<KeyMaterial> deal_keys(std::uint32_t f, std::uint64_t dealer_seed) {
    const std::uint32_t n = 3 * f + 1;
    auto scheme = std::make_shared<TestScheme>(dealer_seed, n);
    auto pub = std::make_shared<PublicSet>(PublicSet{n, f, scheme});
    std::vector<KeyMaterial> keys;
    keys.reserve(n);
    for (ReplicaId i = 0; i < n; ++i) keys.push_back(KeyMaterial{i, scheme->secret_for(i), pub});
    return keys;
}

SigShare sign_digest(const KeyMaterial& key, const Digest& digest) {
    return SigShare{key.replica_id, digest, key.public_set->scheme->sign(key.secret, digest)};
}

SigShare sign_share(const KeyMaterial& key, std::span<const std::uint8_t> message) {
    return sign_digest(key, hash(message));
}

bool verify_share(const SigShare& share, const PublicSet& pub) {
    if (share.signer >= pub.n) return false;
    return pub.scheme->verify_share(share.signer, share.message_digest, share.share);
}

ThresholdSig aggregate(std::span<const SigShare> shares, std::uint32_t threshold, const PublicSet& pub) {
    if (!shares.empty()) {
        const auto& digest = shares.front().message_digest;
        bool mixed = std::any_of(shares.begin(), shares.end(),
                                 [&](const SigShare& s) { return s.message_digest != digest; });
        if (mixed) throw CryptoError(CryptoError::Kind::MixedMessages, "shares are over different messages");
    }
    std::set<ReplicaId> seen;
    std::vector<SigShare> distinct;
    for (const auto& s : shares) {
        if (seen.contains(s.signer) || !verify_share(s, pub)) continue;
        seen.insert(s.signer);
        distinct.push_back(s);
    }
    if (threshold == 0 || distinct.size() < threshold) {
        throw CryptoError(CryptoError::Kind::InsufficientShares,
                          "have " + std::to_string(distinct.size()) + " distinct valid shares, need " +
                              std::to_string(threshold));
    }
    distinct.resize(threshold);
    const auto& digest = distinct.front().message_digest;
    return ThresholdSig{digest, threshold, pub.scheme->combine(digest, threshold, distinct)};
}

bool verify_threshold_digest(const ThresholdSig& sig, const Digest& digest, const PublicSet& pub) {
    if (sig.message_digest != digest) return false;
    if (sig.threshold == 0 || sig.threshold > pub.n) return false;
    return pub.scheme->verify_aggregate(digest, sig.threshold, sig.agg);
}

bool verify_threshold(const ThresholdSig& sig, std::span<const std::uint8_t> message, const PublicSet& pub) {
    return verify_threshold_digest(sig, hash(message), pub);
}

Bytes coin_message(std::uint64_t view) {
    Writer w;
    w.str("coin");
    w.u64(view);
    return std::move(w).take();
}

ReplicaId coin_leader(const ThresholdSig& coin_sig, std::uint64_t view, const PublicSet& pub) {
    if (coin_sig.threshold != pub.coin_threshold() || !verify_threshold(coin_sig, coin_message(view), pub)) {
        throw CryptoError(CryptoError::Kind::InvalidCoin, "coin signature does not verify for view " +
                                                              std::to_string(view));
    }
    Digest randomness = hash(coin_sig.agg);
    std::uint64_t x = 0;
    for (int i = 7; i >= 0; --i) x = (x << 8) | randomness.bytes[i];
    return static_cast<ReplicaId>(x % pub.n);
}

}  // namespace crypto
}  // namespace chainsmr
