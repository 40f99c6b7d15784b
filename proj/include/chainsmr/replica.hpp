#pragma once

#include "chainsmr/block_tree.hpp"
#include "chainsmr/messages.hpp"

#include <deque>
#include <functional>
#include <unordered_map>
#include <unordered_set>

namespace chainsmr {

using Tick = std::uint64_t;

enum class TimerKind { Round, Fetch };

struct TimerTag {
    TimerKind kind = TimerKind::Round;
    View view = 0;
    Round round = 0;
    Digest block;  // fetch only
};

struct CommitEntry {
    std::uint64_t position = 0;
    Digest block_id;
    Digest payload_digest;
    Round round = 0;
    View view = 0;
    Tick time = 0;
    std::uint64_t depth = 0;
};

enum class CertKind { QC, FQC, TC, FTC, Coin };

struct CertRecord {
    CertKind kind = CertKind::QC;
    View view = 0;
    Round round = 0;
    Digest block_id;
    std::optional<FallbackTag> tag;
    std::uint64_t max_high_qc_round = 0;  // TC only
    ReplicaId leader = 0;                 // coin only
};

/// Everything a replica may ask of its host. The simulator implements it; unit
/// tests use a recording stub.
class Context {
public:
    virtual ~Context() = default;

    virtual void send(ReplicaId to, Message msg) = 0;
    /// Delivered to every replica, the sender included.
    virtual void multicast(Message msg) = 0;
    virtual void set_timer(Tick delay, TimerTag tag) = 0;
    virtual Tick now() const = 0;
    /// Causal depth of the event being handled.
    virtual std::uint64_t depth() const = 0;

    // Observations for the trace.
    virtual void note_commit(const CommitEntry&, const Block&) {}
    virtual void note_proposal(const Block&, std::optional<FallbackTag>) {}
    virtual void note_certificate(const CertRecord&) {}
    virtual void note_view_entry(View) {}
    virtual void note_fallback_exit(View, ReplicaId /*leader*/, bool /*committed_new*/) {}
    virtual void note_direct_commit(const Block&) {}
    virtual void note_duplicate_share() {}
    virtual void note_local_conflict(const Digest&) {}
};

struct ReplicaConfig {
    ReplicaId id = 0;
    crypto::KeyMaterial key;
    Tick tau = 40;
    Tick fetch_delay = 11;
    bool vaba = false;
    std::uint64_t backoff_factor = 5;
};

class Replica {
public:
    virtual ~Replica() = default;

    virtual void start(Context& ctx) = 0;
    virtual void on_message(ReplicaId from, const Message& msg, Context& ctx) = 0;
    virtual void on_timer(const TimerTag& tag, Context& ctx) = 0;
    virtual void on_client_batch(Bytes batch, Context& ctx) = 0;

    virtual ReplicaId id() const = 0;
    virtual const std::vector<CommitEntry>& commit_log() const = 0;
    /// True while this replica is the round leader of the steady path.
    virtual bool is_steady_leader() const = 0;
    virtual View current_view() const = 0;
    virtual Round current_round() const = 0;
};

/// Shared plumbing: block tree, commit log, mempool, block fetch and commit
/// checks deferred until missing blocks arrive.
class ReplicaBase : public Replica {
public:
    explicit ReplicaBase(ReplicaConfig cfg);

    ReplicaId id() const override { return cfg_.id; }
    const std::vector<CommitEntry>& commit_log() const override { return log_; }
    void on_client_batch(Bytes batch, Context& ctx) override;

    const BlockTree& tree() const { return tree_; }
    std::size_t mempool_size() const { return mempool_.size(); }

protected:
    ReplicaId leader_of(Round r) const { return static_cast<ReplicaId>(r % pub_->n); }
    const crypto::PublicSet& pub() const { return *pub_; }

    /// Stores a block and its knowledge depth; re-runs commit checks waiting
    /// on it. Returns false when already known.
    bool learn_block(const Block& block, Context& ctx);
    void learn_cert_depth(const Digest& id, Context& ctx);
    std::uint64_t block_depth(const Digest& id) const;
    std::uint64_t cert_depth(const Digest& id) const;

    /// Commits `target` and its uncommitted ancestors. Missing ancestors defer
    /// the commit and schedule a fetch from `hint`.
    void commit_through(const Digest& target, std::uint64_t depth, Context& ctx);
    bool is_committed(const Digest& id) const { return committed_.contains(id); }

    /// Records that a commit rule needs block `id`; `retry` runs once it
    /// arrives.
    void defer_until(const Digest& id, std::function<void(Context&)> retry, Context& ctx);
    void need_block(const Digest& id, Context& ctx);

    /// First queued batch that is neither committed nor already on the chain
    /// ending at `parent`.
    Bytes next_payload(const Digest& parent);

    /// Serves block requests; returns a fetched block once stored.
    std::optional<Block> handle_fetch(ReplicaId from, const Message& msg, Context& ctx);
    void on_fetch_timer(const TimerTag& tag, Context& ctx);
    void set_sender_hint(ReplicaId from) { sender_hint_ = from; }

    /// Called after a block is inserted; protocols re-evaluate state that
    /// depended on it.
    virtual void on_block_learned(const Block&, Context&) {}

    ReplicaConfig cfg_;
    std::shared_ptr<const crypto::PublicSet> pub_;
    Genesis genesis_;
    BlockTree tree_;

private:
    std::vector<CommitEntry> log_;
    std::unordered_set<Digest, DigestHash> committed_;
    std::unordered_set<Digest, DigestHash> committed_payloads_;
    Digest last_committed_;
    std::deque<Bytes> mempool_;
    std::unordered_map<Digest, std::uint64_t, DigestHash> block_depth_;
    std::unordered_map<Digest, std::uint64_t, DigestHash> cert_depth_;
    std::unordered_map<Digest, std::vector<std::function<void(Context&)>>, DigestHash> waiting_;
    std::unordered_map<Digest, std::uint32_t, DigestHash> fetch_attempts_;
    std::unordered_map<Digest, ReplicaId, DigestHash> fetch_hint_;
    ReplicaId sender_hint_ = 0;
};

}  // namespace chainsmr
