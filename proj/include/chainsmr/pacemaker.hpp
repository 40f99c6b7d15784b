#pragma once

#include "chainsmr/replica.hpp"

namespace chainsmr {

/// Round-based steady state plus the timeout/TC pacemaker shared by the
/// 3-chain and 2-chain protocols. Subclasses supply the lock, commit and vote
/// rules and whether proposals carry the entry TC.
class PacemakerReplica : public ReplicaBase {
public:
    explicit PacemakerReplica(ReplicaConfig cfg);

    void start(Context& ctx) override;
    void on_message(ReplicaId from, const Message& msg, Context& ctx) override;
    void on_timer(const TimerTag& tag, Context& ctx) override;

    bool is_steady_leader() const override { return leader_of(r_cur_) == cfg_.id; }
    View current_view() const override { return 0; }
    Round current_round() const override { return r_cur_; }

    Round r_vote() const { return r_vote_; }
    const QC& qc_high() const { return qc_high_; }

protected:
    virtual void lock(const QC& qc) = 0;
    /// Applies the commit rule for a freshly learned QC.
    virtual void try_commit(const QC& qc, Context& ctx) = 0;
    virtual bool safe_to_vote(const Block& b) const = 0;
    virtual bool attach_tc() const = 0;

    /// Max knowledge depth over the given blocks and their certificates.
    std::uint64_t chain_depth(std::initializer_list<Digest> ids) const;

    QC qc_high_;

private:
    void on_proposal(ReplicaId from, const Block& b, Context& ctx);
    void consider(const Block& b, Context& ctx);
    void on_vote(ReplicaId from, const Vote& v, Context& ctx);
    void on_timeout(ReplicaId from, const TimeoutMsg& m, Context& ctx);
    void process_qc(const QC& qc, Context& ctx);
    void process_tc(const TC& tc, Context& ctx);
    void enter_round(Round r, std::optional<TC> via, Context& ctx);
    void propose(Context& ctx);

    Round r_vote_ = 0;
    Round r_cur_ = 0;
    Round timed_out_round_ = 0;
    Round proposed_round_ = 0;
    Round considered_round_ = 0;
    std::optional<TC> entry_tc_;
    std::map<Round, Block> pending_;  // proposals ahead of r_cur
    QcBuilder votes_;
    TcBuilder timeouts_;
};

}  // namespace chainsmr
