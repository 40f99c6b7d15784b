#include "chainsmr/pacemaker.hpp"

#include <algorithm>

namespace chainsmr {

PacemakerReplica::PacemakerReplica(ReplicaConfig cfg)
    : ReplicaBase(std::move(cfg)), qc_high_(genesis_.qc), votes_(pub_), timeouts_(pub_) {}

std::uint64_t PacemakerReplica::chain_depth(std::initializer_list<Digest> ids) const {
    std::uint64_t d = 0;
    for (const auto& id : ids) d = std::max({d, block_depth(id), cert_depth(id)});
    return d;
}

void PacemakerReplica::start(Context& ctx) { enter_round(1, std::nullopt, ctx); }

void PacemakerReplica::on_message(ReplicaId from, const Message& msg, Context& ctx) {
    set_sender_hint(from);
    if (const auto* p = std::get_if<ProposalMsg>(&msg)) {
        on_proposal(from, p->block, ctx);
    } else if (const auto* v = std::get_if<VoteMsg>(&msg)) {
        on_vote(from, v->vote, ctx);
    } else if (const auto* t = std::get_if<TimeoutMsg>(&msg)) {
        on_timeout(from, *t, ctx);
    } else if (const auto* tc = std::get_if<TcMsg>(&msg)) {
        if (validate_tc(tc->tc, pub())) process_tc(tc->tc, ctx);
    } else {
        handle_fetch(from, msg, ctx);
    }
}

void PacemakerReplica::on_timer(const TimerTag& tag, Context& ctx) {
    if (tag.kind == TimerKind::Fetch) {
        on_fetch_timer(tag, ctx);
        return;
    }
    if (tag.round != r_cur_ || timed_out_round_ >= r_cur_) return;
    timed_out_round_ = r_cur_;
    TimeoutMsg m;
    m.timeout.target = r_cur_;
    m.timeout.share = crypto::sign_digest(cfg_.key, round_timeout_digest(r_cur_));
    m.timeout.high_qc = qc_high_;
    ctx.multicast(std::move(m));
}

void PacemakerReplica::on_proposal(ReplicaId from, const Block& b, Context& ctx) {
    if (b.view != 0 || b.round == 0 || leader_of(b.round) != from || !block_id_matches(b)) return;
    if (!verify_qc(b.qc, pub()) || b.qc.is_fallback()) return;
    if (b.tc && !validate_tc(*b.tc, pub())) return;
    if (tree_.contains(b.id)) return;
    // The carried certificates go first: the block itself may complete a
    // commit that was waiting on it.
    process_qc(b.qc, ctx);
    if (b.tc) process_tc(*b.tc, ctx);
    learn_block(b, ctx);

    if (b.round > r_cur_) {
        pending_.try_emplace(b.round, b);
        return;
    }
    consider(b, ctx);
}

void PacemakerReplica::consider(const Block& b, Context& ctx) {
    if (b.round != r_cur_ || b.round <= considered_round_) return;
    considered_round_ = b.round;
    if (b.round <= r_vote_ || timed_out_round_ >= b.round || !safe_to_vote(b)) return;
    r_vote_ = b.round;
    Vote v;
    v.block_id = b.id;
    v.round = b.round;
    v.view = 0;
    v.share = crypto::sign_digest(cfg_.key, vote_digest(b.id, b.round, 0, std::nullopt));
    ctx.send(leader_of(b.round + 1), VoteMsg{v});
}

void PacemakerReplica::on_vote(ReplicaId from, const Vote& v, Context& ctx) {
    if (v.share.signer != from || v.fallback || v.view != 0) return;
    if (v.share.message_digest != vote_digest(v.block_id, v.round, v.view, std::nullopt)) return;
    AddResult status;
    auto qc = votes_.add(v, &status);
    if (status == AddResult::Duplicate) ctx.note_duplicate_share();
    if (!qc) return;
    CertRecord rec;
    rec.kind = CertKind::QC;
    rec.round = qc->round;
    rec.block_id = qc->block_id;
    ctx.note_certificate(rec);
    process_qc(*qc, ctx);
}

void PacemakerReplica::on_timeout(ReplicaId from, const TimeoutMsg& m, Context& ctx) {
    const Timeout& t = m.timeout;
    if (t.share.signer != from || t.share.message_digest != round_timeout_digest(t.target)) return;
    if (!verify_qc(t.high_qc, pub()) || t.high_qc.is_fallback() || t.high_qc.round >= t.target) return;
    process_qc(t.high_qc, ctx);
    AddResult status;
    auto tc = timeouts_.add(t, &status);
    if (status == AddResult::Duplicate) ctx.note_duplicate_share();
    if (!tc) return;
    CertRecord rec;
    rec.kind = CertKind::TC;
    rec.round = tc->round;
    rec.max_high_qc_round = tc->max_high_qc_round();
    ctx.note_certificate(rec);
    process_tc(*tc, ctx);
}

void PacemakerReplica::process_qc(const QC& qc, Context& ctx) {
    learn_cert_depth(qc.block_id, ctx);
    tree_.certify(qc);
    if (rank_of(qc) > rank_of(qc_high_)) qc_high_ = qc;
    if (tree_.contains(qc.block_id)) {
        lock(qc);
        try_commit(qc, ctx);
    } else {
        defer_until(
            qc.block_id,
            [this, qc](Context& c) {
                lock(qc);
                try_commit(qc, c);
            },
            ctx);
    }
    if (qc.round + 1 > r_cur_) enter_round(qc.round + 1, std::nullopt, ctx);
}

void PacemakerReplica::process_tc(const TC& tc, Context& ctx) {
    for (const auto& q : tc.high_qcs) process_qc(q, ctx);
    if (tc.round + 1 > r_cur_) enter_round(tc.round + 1, tc, ctx);
}

void PacemakerReplica::enter_round(Round r, std::optional<TC> via, Context& ctx) {
    r_cur_ = r;
    entry_tc_ = std::move(via);
    if (entry_tc_ && leader_of(r) != cfg_.id) ctx.send(leader_of(r), TcMsg{*entry_tc_});
    TimerTag tag;
    tag.kind = TimerKind::Round;
    tag.round = r;
    ctx.set_timer(cfg_.tau, tag);
    if (leader_of(r) == cfg_.id) propose(ctx);

    pending_.erase(pending_.begin(), pending_.lower_bound(r));
    if (auto it = pending_.find(r); it != pending_.end()) {
        Block b = std::move(it->second);
        pending_.erase(it);
        consider(b, ctx);
    }
}

void PacemakerReplica::propose(Context& ctx) {
    if (proposed_round_ >= r_cur_) return;
    proposed_round_ = r_cur_;
    std::optional<TC> tc;
    if (attach_tc() && entry_tc_ && entry_tc_->round + 1 == r_cur_) tc = entry_tc_;
    Block b = make_block(qc_high_, r_cur_, 0, next_payload(qc_high_.block_id), std::move(tc));
    ctx.note_proposal(b, std::nullopt);
    ctx.multicast(ProposalMsg{std::move(b)});
}

}  // namespace chainsmr
