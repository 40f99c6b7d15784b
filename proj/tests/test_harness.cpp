#include "chainsmr/harness.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace chainsmr;
namespace fs = std::filesystem;

namespace {

std::vector<CommitEntry> log_of(std::initializer_list<int> ids) {
    std::vector<CommitEntry> out;
    for (int id : ids) {
        CommitEntry e;
        e.position = out.size();
        e.block_id = hash("block" + std::to_string(id));
        e.payload_digest = hash("payload" + std::to_string(id));
        e.round = static_cast<Round>(id);
        e.time = 10 * out.size();
        out.push_back(e);
    }
    return out;
}

Scenario small(Protocol p, AdversaryKind a) {
    Scenario s;
    s.protocol = p;
    s.adversary = a;
    s.tau = p == Protocol::Vaba2 ? 0 : 40;
    s.max_time = 3000;
    return s;
}

fs::path temp_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / ("chainsmr_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("safety checker") {
    std::vector<bool> honest(3, true);
    SUBCASE("identical logs pass") {
        auto l = log_of({1, 2, 3, 4});
        CHECK(check_safety({l, l, l}, honest).pass);
    }
    SUBCASE("a prefix passes") {
        CHECK(check_safety({log_of({1, 2, 3, 4, 5}), log_of({1, 2, 3, 4, 5, 6, 7, 8, 9}), {}}, honest).pass);
    }
    SUBCASE("a divergence is reported at its position with both blocks") {
        auto a = log_of({1, 2, 3, 4, 5});
        auto b = log_of({1, 2, 3, 9, 5});
        auto v = check_safety({a, a, b}, honest);
        CHECK_FALSE(v.pass);
        REQUIRE(v.position);
        CHECK(*v.position == 3);
        CHECK(v.replica_a == 0);
        CHECK(v.replica_b == 2);
        CHECK(v.block_a == a[3].block_id);
        CHECK(v.block_b == b[3].block_id);
    }
    SUBCASE("same block but a different payload at a position fails") {
        auto a = log_of({1, 2, 3});
        auto b = a;
        b[1].payload_digest = hash(std::string_view("other"));
        auto v = check_safety({a, b, a}, honest);
        CHECK_FALSE(v.pass);
        CHECK(*v.position == 1);
    }
    SUBCASE("faulty replicas are ignored") {
        auto v = check_safety({log_of({1, 2}), log_of({7, 8}), log_of({1})}, {true, false, true});
        CHECK(v.pass);
    }
    SUBCASE("every single-position mutation of a real trace is detected") {
        auto t = simulate(small(Protocol::Jolteon, AdversaryKind::Synchronous));
        REQUIRE(check_safety(t).pass);
        for (std::size_t k = 0; k < std::min<std::size_t>(t.logs[1].size(), 40); ++k) {
            auto logs = t.logs;
            logs[1][k].block_id = hash("forged" + std::to_string(k));
            auto v = check_safety(logs, t.honest);
            CHECK_FALSE(v.pass);
            CHECK(*v.position == k);
        }
    }
}

TEST_CASE("liveness checker") {
    auto t = simulate(small(Protocol::Ditto, AdversaryKind::Synchronous));
    CHECK(t.batches.empty());
    auto v = check_liveness(t, 0);
    CHECK(v.pass);
    CHECK(v.expected == 0);

    Scenario s = small(Protocol::Jolteon, AdversaryKind::LeaderDdos);
    s.ddos_delay = 80;
    s.load_rate = 0.2;
    s.batch_size = 5;
    auto dead = simulate(s);
    auto neg = check_liveness(dead, 100);
    CHECK_FALSE(neg.pass);
    CHECK(neg.missing == neg.expected);
}

TEST_CASE("hop statistics use nearest-rank percentiles") {
    std::vector<std::uint64_t> v;
    for (std::uint64_t i = 100; i >= 1; --i) v.push_back(i);
    auto s = hop_stats(v);
    CHECK(s.count == 100);
    CHECK(s.mean == doctest::Approx(50.5));
    CHECK(s.min == 1);
    CHECK(s.max == 100);
    CHECK(s.p50 == 50);
    CHECK(s.p95 == 95);
    CHECK(s.p99 == 99);
    auto one = hop_stats({7});
    CHECK(one.p50 == 7);
    CHECK(one.p99 == 7);
    CHECK(hop_stats({}).count == 0);
}

TEST_CASE("messages per commit on the happy path stay within 4n") {
    for (std::uint32_t n : {4u, 7u}) {
        Scenario s = small(Protocol::Jolteon, AdversaryKind::Synchronous);
        s.n = n;
        s.f = (n - 1) / 3;
        s.max_commits = 100;
        auto r = make_report(simulate(s));
        // Per round: one multicast (n envelopes) plus n votes, one commit per round.
        CHECK(r.messages_per_commit <= 4.0 * n);
        CHECK(r.messages_per_commit >= 2.0 * n - 1);
    }
}

TEST_CASE("persisted logs round-trip and reject tampering") {
    auto dir = temp_dir("logs");
    auto log = log_of({1, 2, 3, 4, 5, 6});
    log[2].depth = 17;
    write_persisted_log(dir / "r.log", 3, log);
    auto back = read_persisted_log(dir / "r.log");
    CHECK(back.replica == 3);
    REQUIRE(back.entries.size() == log.size());
    for (std::size_t i = 0; i < log.size(); ++i) {
        CHECK(back.entries[i].block_id == log[i].block_id);
        CHECK(back.entries[i].payload_digest == log[i].payload_digest);
        CHECK(back.entries[i].depth == log[i].depth);
    }

    std::string text;
    {
        std::ifstream in(dir / "r.log", std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        text = ss.str();
    }
    // Rewriting the file yields the same bytes.
    write_persisted_log(dir / "again.log", 3, log);
    {
        std::ifstream in(dir / "again.log", std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        CHECK(ss.str() == text);
    }
    // Flip one bit in every byte position of the body; each must be caught.
    auto body_start = text.find('\n') + 1;
    for (std::size_t pos = body_start; pos < text.size(); pos += 13) {
        if (text[pos] == '\n' || text[pos] == ' ') continue;
        std::string bad = text;
        bad[pos] = static_cast<char>(bad[pos] ^ 0x01);
        {
            std::ofstream out(dir / "bad.log", std::ios::binary | std::ios::trunc);
            out << bad;
        }
        CAPTURE(pos);
        CHECK_THROWS_AS(read_persisted_log(dir / "bad.log"), std::runtime_error);
    }
    // Dropping a line is caught too.
    std::string dropped = text;
    auto second = dropped.find('\n', body_start);
    dropped.erase(body_start, second + 1 - body_start);
    {
        std::ofstream out(dir / "bad.log", std::ios::binary | std::ios::trunc);
        out << dropped;
    }
    CHECK_THROWS_AS(read_persisted_log(dir / "bad.log"), std::runtime_error);
    fs::remove_all(dir);
}

TEST_CASE("unique certification checker flags a conflicting QC") {
    auto t = simulate(small(Protocol::Jolteon, AdversaryKind::Synchronous));
    CHECK(check_unique_certification(t).empty());
    auto forged = t;
    CertEntry extra = forged.certificates.front();
    extra.cert.block_id = hash(std::string_view("conflict"));
    forged.certificates.push_back(extra);
    CHECK(check_unique_certification(forged).size() == 1);
}

TEST_CASE("structure checker flags a view regression") {
    auto t = simulate(small(Protocol::Ditto, AdversaryKind::Asynchronous));
    CHECK(check_structure(t).empty());
    auto forged = t;
    ViewEntry back;
    back.replica = 0;
    back.view = 0;
    forged.view_entries.push_back(back);
    if (!t.view_entries.empty() && t.view_entries.back().view > 0) CHECK_FALSE(check_structure(forged).empty());
}

TEST_CASE("TC lemma checker flags a TC that forgets a committed round") {
    auto t = simulate(small(Protocol::Jolteon, AdversaryKind::Synchronous));
    CHECK(check_tc_direct_commit(t).empty());
    REQUIRE_FALSE(t.direct_commits.empty());
    auto forged = t;
    CertEntry tc;
    tc.cert.kind = CertKind::TC;
    tc.cert.round = t.direct_commits.back().round + 5;
    tc.cert.max_high_qc_round = 0;
    forged.certificates.push_back(tc);
    CHECK(check_tc_direct_commit(forged).size() == 1);
}

TEST_CASE("an equivocating replica cannot break safety or certify two blocks per round") {
    for (auto p : {Protocol::Jolteon, Protocol::DiemBFT3, Protocol::Ditto, Protocol::Vaba2}) {
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            Scenario s = small(p, seed == 1 ? AdversaryKind::Synchronous : AdversaryKind::Asynchronous);
            s.seed = seed;
            s.equivocators = {static_cast<ReplicaId>(seed % 4)};
            auto t = simulate(s);
            CAPTURE(to_string(p));
            CAPTURE(seed);
            CHECK(check_safety(t).pass);
            CHECK(check_unique_certification(t).empty());
            CHECK(check_structure(t).empty());
            CHECK(check_tc_direct_commit(t).empty());
        }
    }
}

TEST_CASE("serial and parallel sweeps give identical reports") {
    std::vector<Scenario> scenarios;
    for (auto p : {Protocol::Jolteon, Protocol::Ditto, Protocol::Vaba2}) {
        for (std::uint64_t seed = 1; seed <= 4; ++seed) {
            Scenario s = small(p, AdversaryKind::Asynchronous);
            s.seed = seed;
            s.max_time = 2000;
            scenarios.push_back(s);
        }
    }
    auto serial = run_sweep_serial(scenarios, 200);
    auto parallel = run_sweep_parallel(scenarios, 200);
    REQUIRE(serial.size() == parallel.size());
    for (std::size_t i = 0; i < serial.size(); ++i)
        CHECK(report_to_json(serial[i]).dump() == report_to_json(parallel[i]).dump());
    CHECK(sweep_csv(serial) == sweep_csv(parallel));

    auto agg = aggregate_reports(serial);
    REQUIRE_FALSE(agg.empty());
    CHECK(agg[0].metric == "commits_total");
    double mean = 0;
    for (const auto& r : serial) mean += static_cast<double>(r.commits_total);
    CHECK(agg[0].mean == doctest::Approx(mean / serial.size()));
}

TEST_CASE("reports are deterministic and echo the scenario") {
    Scenario s = small(Protocol::Ditto, AdversaryKind::PartialSynchrony);
    s.load_rate = 0.1;
    auto a = report_to_json(make_report(simulate(s), 300));
    auto b = report_to_json(make_report(simulate(s), 300));
    CHECK(a.dump() == b.dump());
    CHECK(a["scenario"] == scenario_to_json(s));
    CHECK(a["paths"]["steady_commits"].get<std::uint64_t>() + a["paths"]["fallback_commits"].get<std::uint64_t>() ==
          a["commits_total"].get<std::uint64_t>());
}
