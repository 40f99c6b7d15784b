#pragma once

#include "chainsmr/replica.hpp"

#include <map>
#include <set>

namespace chainsmr {

/// Ditto: 2-chain steady state with an asynchronous fallback per view. With
/// `cfg.vaba` set, the steady path is disabled and every view runs the
/// fallback immediately (2-chain VABA).
class DittoReplica final : public ReplicaBase {
public:
    explicit DittoReplica(ReplicaConfig cfg);

    void start(Context& ctx) override;
    void on_message(ReplicaId from, const Message& msg, Context& ctx) override;
    void on_timer(const TimerTag& tag, Context& ctx) override;

    bool is_steady_leader() const override { return !cfg_.vaba && !mode_ && leader_of(r_cur_) == cfg_.id; }
    View current_view() const override { return v_cur_; }
    Round current_round() const override { return r_cur_; }

    bool in_fallback() const { return mode_; }
    Round r_vote() const { return r_vote_; }
    const QC& qc_high() const { return qc_high_; }
    Rank qc_high_rank() const { return qc_high_rank_; }
    std::uint64_t backoff_x() const { return backoff_x_; }
    std::optional<ReplicaId> coin_leader_of(View v) const;

    /// f-QC of a view whose coin is known and which that coin endorses.
    bool is_endorsed(const QC& fqc) const;

private:
    struct FbInfo {
        Digest id;
        QC qc;
        Round round = 0;
        FallbackTag tag;
    };

    void on_proposal(ReplicaId from, const Block& b, Context& ctx);
    void consider(const Block& b, Context& ctx);
    void on_vote(ReplicaId from, const Vote& v, Context& ctx);
    void on_timeout(ReplicaId from, const TimeoutMsg& m, Context& ctx);
    void on_fblock(ReplicaId from, const FallbackBlock& fb, Context& ctx);
    void fallback_vote(const FallbackBlock& fb, Context& ctx);
    void on_coin_share(ReplicaId from, const CoinShareMsg& m, Context& ctx);

    /// Accepts a QC or f-QC from any source. Regular and endorsed ones drive
    /// lock, commit and round advance.
    void learn_qc(const QC& qc, Context& ctx);
    void learn_fqc(const QC& fqc, Context& ctx);
    void fallback_fqc_action(const QC& fqc, Context& ctx);
    bool learn_coin(const CoinQC& coin, Context& ctx);
    void process_qc(const QC& qc, Context& ctx);
    void try_commit(const QC& tip, Context& ctx);
    Rank qc_rank(const QC& qc) const;
    bool usable(const QC& qc) const { return !qc.is_fallback() || is_endorsed(qc); }
    std::optional<CoinQC> evidence_for(const QC& qc) const;

    void enter_round(Round r, Context& ctx);
    void enter_view(View v, Context& ctx);
    void reset_timer(Context& ctx);
    void time_out(Context& ctx);
    void propose(Context& ctx);
    void enter_fallback(const FTC& ftc, Context& ctx);
    void exit_fallback(const CoinQC& coin, Context& ctx);
    bool in_fallback_of(View v) const { return mode_ && fallback_view_ == v && v_cur_ == v; }
    void buffer(View v, ReplicaId from, Message msg);

    Round r_vote_ = 0;
    Round r_cur_ = 0;
    View v_cur_ = 0;
    QC qc_high_;
    Rank qc_high_rank_;
    bool mode_ = false;
    std::optional<View> fallback_view_;
    std::optional<View> timed_out_view_;
    std::pair<View, Round> proposed_{0, 0};
    std::pair<View, Round> considered_{0, 0};
    std::map<std::pair<View, Round>, Block> pending_;

    std::vector<Round> fvoted_round_;
    std::vector<std::uint32_t> fvoted_height_;
    bool h2_proposed_ = false;
    bool h2_relayed_ = false;
    std::set<ReplicaId> h2_proposers_;
    std::optional<View> coin_share_view_;

    std::map<View, CoinQC> coins_;
    std::map<View, std::uint64_t> coin_depth_;
    std::map<View, std::vector<QC>> fqcs_;
    std::map<View, std::vector<FbInfo>> fblocks_;
    std::map<View, std::vector<std::pair<ReplicaId, Message>>> buffered_;

    std::uint64_t backoff_x_ = 1;
    std::uint64_t skip_remaining_ = 0;
    bool awaiting_leader_ = false;

    QcBuilder votes_;
    FtcBuilder timeouts_;
    CoinBuilder coin_shares_;
};

}  // namespace chainsmr
