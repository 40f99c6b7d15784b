#pragma once

#include "chainsmr/simnet.hpp"

#include <filesystem>
#include <map>
#include <set>

namespace chainsmr {

struct SafetyVerdict {
    bool pass = true;
    std::optional<std::uint64_t> position;  // first divergent log position
    ReplicaId replica_a = 0;
    ReplicaId replica_b = 0;
    Digest block_a;
    Digest block_b;
    std::string detail;
};

/// Pairwise prefix consistency of the honest commit logs.
SafetyVerdict check_safety(const std::vector<std::vector<CommitEntry>>& logs, const std::vector<bool>& honest);
SafetyVerdict check_safety(const Trace& t);

struct LivenessVerdict {
    bool pass = true;
    std::uint64_t expected = 0;  // batches old enough to be required
    std::uint64_t missing = 0;
    std::string detail;
};

/// Every batch injected at least `window` ticks before the end of the trace is
/// in every honest log.
LivenessVerdict check_liveness(const Trace& t, Tick window);

/// Unique certification plus the chain-shape invariants; one string per
/// violation.
std::vector<std::string> check_unique_certification(const Trace& t);
std::vector<std::string> check_structure(const Trace& t);
std::vector<std::string> check_tc_direct_commit(const Trace& t);

/// Blocks each view's coin leader endorses, as observable from the trace.
std::map<View, std::set<Digest>> endorsed_blocks(const Trace& t);

struct HopStats {
    std::uint64_t count = 0;
    double mean = 0;
    std::uint64_t min = 0;
    std::uint64_t max = 0;
    std::uint64_t p50 = 0;
    std::uint64_t p95 = 0;
    std::uint64_t p99 = 0;
};

HopStats hop_stats(std::vector<std::uint64_t> hops);

/// Hops from each block's proposal event to its commit at the last honest
/// replica, for blocks every honest replica committed.
std::vector<std::uint64_t> block_hops(const Trace& t);

struct DecisionStats {
    std::uint64_t decisions = 0;
    double views_per_decision = 0;
    double hops_mean = 0;
    std::vector<std::uint64_t> hops;
};

/// A decision is a fallback view whose leader's height-1 f-block is directly
/// committed by some honest replica. Latency runs from the first entry into
/// the first view after the previous decision.
DecisionStats decision_stats(const Trace& t);

struct Report {
    Scenario scenario;
    std::uint64_t commits_total = 0;
    std::uint64_t commits_min = 0;
    std::uint64_t txns_committed = 0;
    double throughput = 0;
    HopStats hops;
    std::uint64_t messages_total = 0;
    double messages_per_commit = 0;
    std::uint64_t steady_commits = 0;
    std::uint64_t fallback_commits = 0;
    std::uint64_t fallback_views = 0;
    std::uint64_t fallback_views_committing = 0;
    double fallback_commit_fraction = 0;
    std::uint64_t views_completed = 0;
    double messages_per_view = 0;
    DecisionStats decisions;
    SafetyVerdict safety;
    LivenessVerdict liveness;
    std::vector<std::string> violations;
    std::uint64_t duplicate_shares = 0;
    Tick end_time = 0;
    bool truncated = false;
};

Report make_report(const Trace& t, Tick liveness_window = 0);
nlohmann::json report_to_json(const Report& r);

// Persisted commit logs: one text file per replica with a running hash chain.
void write_persisted_log(const std::filesystem::path& path, ReplicaId replica, const std::vector<CommitEntry>& log);

struct PersistedLog {
    ReplicaId replica = 0;
    std::vector<CommitEntry> entries;
};

/// Throws std::runtime_error naming the first bad line.
PersistedLog read_persisted_log(const std::filesystem::path& path);

// Sweeps. Both return reports in scenario order; the parallel one spreads
// scenarios over OpenMP threads.
std::vector<Report> run_sweep_serial(const std::vector<Scenario>& scenarios, Tick liveness_window = 0);
std::vector<Report> run_sweep_parallel(const std::vector<Scenario>& scenarios, Tick liveness_window = 0);

struct Aggregate {
    std::string metric;
    double mean = 0;
    double stddev = 0;
};

std::vector<Aggregate> aggregate_reports(const std::vector<Report>& reports);
std::string sweep_csv(const std::vector<Report>& reports);

}  // namespace chainsmr
