#pragma once

#include "chainsmr/replica.hpp"

#include <json.hpp>

#include <random>
#include <stdexcept>
#include <string>

namespace chainsmr {

enum class Protocol { DiemBFT3, Jolteon, Ditto, Vaba2 };
enum class AdversaryKind { Synchronous, PartialSynchrony, Asynchronous, LeaderDdos, Crash, Composite };

std::string to_string(Protocol p);
std::string to_string(AdversaryKind a);
Protocol parse_protocol(std::string_view s);
AdversaryKind parse_adversary(std::string_view s);

class InvalidScenario : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr Tick kDefaultMaxTime = 10'000'000;

struct Scenario {
    std::uint32_t n = 4;
    std::uint32_t f = 1;
    Protocol protocol = Protocol::Jolteon;
    AdversaryKind adversary = AdversaryKind::Synchronous;
    Tick delta = 10;
    Tick tau = 40;
    std::optional<Tick> gst;  // defaults to 50 delta
    std::uint64_t seed = 1;
    Tick max_time = kDefaultMaxTime;
    std::uint64_t max_commits = 0;  // 0: unbounded
    std::uint64_t max_views = 0;    // 0: unbounded
    double load_rate = 0.0;         // transactions per tick
    std::uint32_t batch_size = 1;
    Tick ddos_delay = 0;
    std::vector<ReplicaId> crash_set;
    std::uint64_t backoff_factor = 5;
    /// Replicas replaced by the equivocation driver. Test-only; not part of
    /// the file format.
    std::vector<ReplicaId> equivocators;

    Tick effective_gst() const { return gst.value_or(50 * delta); }
    bool is_crashed(ReplicaId id) const;
    bool is_honest(ReplicaId id) const;
    /// Throws InvalidScenario.
    void validate() const;
};

Scenario scenario_from_json(const nlohmann::json& j);
nlohmann::json scenario_to_json(const Scenario& s);
Scenario load_scenario(const std::string& path);

struct MessageRecord {
    Tick send_time = 0;
    Tick deliver_time = 0;
    ReplicaId from = 0;
    ReplicaId to = 0;
    std::uint8_t kind = 0;
    std::uint32_t size = 0;
    std::uint64_t hops = 0;
    bool delivered = false;
};

struct ProposalRecord {
    Digest id;
    Digest parent;
    Round parent_round = 0;
    View parent_view = 0;
    std::optional<FallbackTag> parent_tag;
    Round round = 0;
    View view = 0;
    std::optional<FallbackTag> tag;
    ReplicaId proposer = 0;
    std::uint64_t depth = 0;
    Tick time = 0;
    Digest payload_digest;
    std::uint32_t payload_size = 0;
};

struct CertEntry {
    ReplicaId former = 0;
    Tick time = 0;
    std::uint64_t depth = 0;
    CertRecord cert;
};

struct ViewEntry {
    ReplicaId replica = 0;
    View view = 0;
    std::uint64_t depth = 0;
    Tick time = 0;
};

struct FallbackExit {
    ReplicaId replica = 0;
    View view = 0;
    ReplicaId leader = 0;
    bool committed_new = false;
    std::uint64_t depth = 0;
    Tick time = 0;
};

struct DirectCommit {
    ReplicaId replica = 0;
    Digest block_id;
    Round round = 0;
    View view = 0;
    Tick time = 0;
};

struct InjectedBatch {
    Tick time = 0;
    Digest digest;
    std::uint32_t txns = 0;
};

struct Trace {
    Scenario scenario;
    std::vector<bool> honest;
    std::vector<std::vector<CommitEntry>> logs;
    std::vector<MessageRecord> messages;
    std::vector<ProposalRecord> proposals;
    std::vector<CertEntry> certificates;
    std::vector<ViewEntry> view_entries;
    std::vector<FallbackExit> fallback_exits;
    std::vector<DirectCommit> direct_commits;
    std::vector<InjectedBatch> batches;
    std::vector<std::pair<ReplicaId, Digest>> local_conflicts;
    std::vector<View> final_views;
    std::uint64_t duplicate_shares = 0;
    Tick end_time = 0;
    bool truncated = false;
};

nlohmann::json trace_to_json(const Trace& t);

/// Payload of the k-th client batch: its index followed by the transaction
/// ids it carries.
Bytes make_batch(std::uint64_t index, std::uint32_t batch_size);

std::unique_ptr<Replica> make_replica(Protocol p, ReplicaConfig cfg);

/// Wraps an honest replica; splits every own proposal and height-1 f-block
/// into two conflicting versions sent to disjoint halves, and votes for every
/// proposal and f-block it receives.
class EquivocatingReplica final : public Replica {
public:
    EquivocatingReplica(std::unique_ptr<Replica> inner, crypto::KeyMaterial key, std::uint32_t n);

    void start(Context& ctx) override;
    void on_message(ReplicaId from, const Message& msg, Context& ctx) override;
    void on_timer(const TimerTag& tag, Context& ctx) override;
    void on_client_batch(Bytes batch, Context& ctx) override;

    ReplicaId id() const override { return inner_->id(); }
    const std::vector<CommitEntry>& commit_log() const override { return inner_->commit_log(); }
    bool is_steady_leader() const override { return inner_->is_steady_leader(); }
    View current_view() const override { return inner_->current_view(); }
    Round current_round() const override { return inner_->current_round(); }

private:
    class Splitter;
    void vote_for(const Block& b, std::optional<FallbackTag> tag, ReplicaId to, Context& ctx);

    std::unique_ptr<Replica> inner_;
    crypto::KeyMaterial key_;
    std::uint32_t n_;
};

/// Deterministic discrete-event simulator: one run is a pure function of the
/// scenario.
class Simulator {
public:
    explicit Simulator(Scenario s);
    ~Simulator();

    Trace run();

    /// Delivery delay for a message sent now; the base draw plus any policy
    /// surcharge. Exposed for tests.
    Tick delay_of(ReplicaId from, ReplicaId to, bool from_steady_leader, Tick now);

private:
    class Ctx;
    struct Event;
    struct EventOrder {
        bool operator()(const Event& a, const Event& b) const;
    };

    void push(Event e);
    void dispatch(const Event& e);
    void deliver_send(ReplicaId from, ReplicaId to, std::shared_ptr<const Message> msg, std::uint32_t size,
                      std::uint64_t hops);
    bool done() const;
    double uniform01();

    Scenario s_;
    std::mt19937_64 rng_;
    std::vector<std::unique_ptr<Replica>> replicas_;
    std::vector<Event> queue_;
    std::uint64_t seq_ = 0;
    Tick now_ = 0;
    std::uint64_t depth_ = 0;
    ReplicaId current_ = 0;
    std::uint64_t pending_honest_ = 0;
    Trace trace_;
};

Trace simulate(const Scenario& s);

}  // namespace chainsmr
