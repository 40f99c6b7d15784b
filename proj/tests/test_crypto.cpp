#include "chainsmr/crypto.hpp"
#include "chainsmr/serialize.hpp"

#include <doctest.h>

#include <bit>
#include <set>
#include <unordered_set>

using namespace chainsmr;
using namespace chainsmr::crypto;

namespace {

std::vector<SigShare> shares_for(const std::vector<KeyMaterial>& keys, const Bytes& msg) {
    std::vector<SigShare> out;
    for (const auto& k : keys) out.push_back(sign_share(k, msg));
    return out;
}

}  // namespace

TEST_CASE("shares verify only for their signer and message") {
    auto keys = deal_keys(1, 42);
    const auto& pub = *keys[0].public_set;
    Bytes m{1, 2, 3};
    auto s = sign_share(keys[2], m);
    CHECK(verify_share(s, pub));
    auto wrong_signer = s;
    wrong_signer.signer = 1;
    CHECK_FALSE(verify_share(wrong_signer, pub));
    auto wrong_msg = s;
    wrong_msg.message_digest = hash(Bytes{1, 2, 4});
    CHECK_FALSE(verify_share(wrong_msg, pub));
    auto out_of_range = s;
    out_of_range.signer = 9;
    CHECK_FALSE(verify_share(out_of_range, pub));

    auto other = deal_keys(1, 43);
    CHECK_FALSE(verify_share(sign_share(other[2], m), pub));
}

TEST_CASE("aggregation needs threshold distinct valid shares") {
    auto keys = deal_keys(2, 7);
    const auto& pub = *keys[0].public_set;
    Bytes m{9};
    auto shares = shares_for(keys, m);

    std::vector<SigShare> four(shares.begin(), shares.begin() + 4);
    CHECK_THROWS_AS(aggregate(four, pub.quorum(), pub), CryptoError);

    // Duplicates of one signer do not count twice.
    std::vector<SigShare> dup(shares.begin(), shares.begin() + 4);
    dup.push_back(shares[0]);
    CHECK_THROWS_AS(aggregate(dup, pub.quorum(), pub), CryptoError);

    auto bad = shares[5];
    bad.share[0] ^= 1;
    std::vector<SigShare> with_bad(shares.begin(), shares.begin() + 4);
    with_bad.push_back(bad);
    CHECK_THROWS_AS(aggregate(with_bad, pub.quorum(), pub), CryptoError);

    std::vector<SigShare> five(shares.begin(), shares.begin() + 5);
    auto sig = aggregate(five, pub.quorum(), pub);
    CHECK(verify_threshold(sig, m, pub));
    CHECK_FALSE(verify_threshold(sig, Bytes{8}, pub));
    auto tampered = sig;
    tampered.agg[3] ^= 0x10;
    CHECK_FALSE(verify_threshold(tampered, m, pub));
    auto relabeled = sig;
    relabeled.threshold = pub.coin_threshold();
    CHECK_FALSE(verify_threshold(relabeled, m, pub));

    std::vector<SigShare> mixed(shares.begin(), shares.begin() + 4);
    mixed.push_back(sign_share(keys[6], Bytes{8}));
    try {
        aggregate(mixed, pub.quorum(), pub);
        FAIL("mixed messages accepted");
    } catch (const CryptoError& e) {
        CHECK(e.kind() == CryptoError::Kind::MixedMessages);
    }
}

TEST_CASE("every threshold subset yields the same signature and coin leader") {
    for (std::uint32_t f : {1u, 2u}) {
        auto keys = deal_keys(f, 100 + f);
        const auto& pub = *keys[0].public_set;
        const std::uint32_t n = pub.n;
        for (std::uint64_t view : {0ull, 1ull, 17ull}) {
            auto msg = coin_message(view);
            auto shares = shares_for(keys, msg);
            std::set<AggregateBytes> aggs;
            std::set<ReplicaId> leaders;
            for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
                if (static_cast<std::uint32_t>(std::popcount(mask)) < f + 1) continue;
                std::vector<SigShare> subset;
                for (std::uint32_t i = 0; i < n; ++i)
                    if (mask & (1u << i)) subset.push_back(shares[i]);
                auto sig = aggregate(subset, pub.coin_threshold(), pub);
                aggs.insert(sig.agg);
                leaders.insert(coin_leader(sig, view, pub));
            }
            CHECK(aggs.size() == 1);
            CHECK(leaders.size() == 1);
        }
    }
}

TEST_CASE("coin_leader rejects a coin for another view") {
    auto keys = deal_keys(1, 5);
    const auto& pub = *keys[0].public_set;
    auto shares = shares_for(keys, coin_message(3));
    auto sig = aggregate(shares, pub.coin_threshold(), pub);
    CHECK_NOTHROW(coin_leader(sig, 3, pub));
    CHECK_THROWS_AS(coin_leader(sig, 4, pub), CryptoError);
    auto quorum_sig = aggregate(shares, pub.quorum(), pub);
    CHECK_THROWS_AS(coin_leader(quorum_sig, 3, pub), CryptoError);
}

TEST_CASE("coin leaders are uniform (chi-square)") {
    for (std::uint32_t f : {1u, 3u}) {
        auto keys = deal_keys(f, 2024);
        const auto& pub = *keys[0].public_set;
        const std::uint32_t n = pub.n;
        const int views = 20000;
        std::vector<int> counts(n, 0);
        for (std::uint64_t v = 0; v < static_cast<std::uint64_t>(views); ++v) {
            auto msg = coin_message(v);
            std::vector<SigShare> shares;
            for (std::uint32_t i = 0; i <= f; ++i) shares.push_back(sign_share(keys[i], msg));
            ++counts[coin_leader(aggregate(shares, f + 1, pub), v, pub)];
        }
        double expected = static_cast<double>(views) / n;
        double chi2 = 0;
        for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
        // Critical values at p = 0.001: 3 dof 16.27, 9 dof 27.88.
        double critical = n == 4 ? 16.27 : 27.88;
        CAPTURE(chi2);
        CHECK(chi2 < critical);
    }
}

TEST_CASE("any two quorums intersect in at least f+1 replicas") {
    for (std::uint32_t f : {1u, 2u}) {
        const std::uint32_t n = 3 * f + 1;
        const std::uint32_t q = 2 * f + 1;
        std::vector<std::uint32_t> quorums;
        for (std::uint32_t mask = 0; mask < (1u << n); ++mask)
            if (static_cast<std::uint32_t>(std::popcount(mask)) == q) quorums.push_back(mask);
        std::uint32_t min_overlap = n;
        for (auto a : quorums)
            for (auto b : quorums) min_overlap = std::min<std::uint32_t>(min_overlap, std::popcount(a & b));
        CHECK(min_overlap == f + 1);
        // Hence at least one honest replica in every intersection.
        CHECK(min_overlap > f);
    }
}

TEST_CASE("hash shows no collisions over 100000 distinct inputs") {
    std::unordered_set<Digest, DigestHash> seen;
    for (std::uint64_t i = 0; i < 100000; ++i) {
        Writer w;
        w.u64(i);
        seen.insert(hash(w.bytes()));
    }
    CHECK(seen.size() == 100000);
}

TEST_CASE("digest hex round trip") {
    auto d = hash(std::string_view("abc"));
    CHECK(d.hex() == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(Digest::from_hex(d.hex()) == d);
    CHECK_THROWS(Digest::from_hex("abc"));
}
