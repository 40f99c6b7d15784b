#include "chainsmr/ditto.hpp"

#include <algorithm>

namespace chainsmr {

namespace {

constexpr std::uint64_t kBackoffCap = 625;

bool same_cert(const QC& a, const QC& b) {
    return a.block_id == b.block_id && a.round == b.round && a.view == b.view && a.fallback == b.fallback;
}

}  // namespace

DittoReplica::DittoReplica(ReplicaConfig cfg)
    : ReplicaBase(std::move(cfg)),
      qc_high_(genesis_.qc),
      qc_high_rank_(rank_of(genesis_.qc)),
      fvoted_round_(pub_->n, 0),
      fvoted_height_(pub_->n, 0),
      votes_(pub_),
      timeouts_(pub_),
      coin_shares_(pub_) {}

std::optional<ReplicaId> DittoReplica::coin_leader_of(View v) const {
    auto it = coins_.find(v);
    if (it == coins_.end()) return std::nullopt;
    return it->second.leader;
}

bool DittoReplica::is_endorsed(const QC& q) const {
    if (!q.fallback) return false;
    auto leader = coin_leader_of(q.view);
    if (!leader) return false;
    if (q.fallback->height == 2) return q.fallback->proposer == *leader;
    // A height-1 f-QC belongs to the leader's chain when the leader's height-2
    // f-block was built on it, which may be an adopted f-block of another
    // proposer.
    bool leader_h2_known = false;
    if (auto it = fblocks_.find(q.view); it != fblocks_.end()) {
        for (const auto& fb : it->second) {
            if (fb.tag.height != 2 || fb.tag.proposer != *leader) continue;
            leader_h2_known = true;
            if (same_cert(fb.qc, q)) return true;
        }
    }
    return !leader_h2_known && q.fallback->proposer == *leader;
}

Rank DittoReplica::qc_rank(const QC& qc) const { return rank_of(qc, is_endorsed(qc)); }

std::optional<CoinQC> DittoReplica::evidence_for(const QC& qc) const {
    if (!qc.is_fallback()) return std::nullopt;
    auto it = coins_.find(qc.view);
    if (it == coins_.end()) return std::nullopt;
    return it->second;
}

void DittoReplica::start(Context& ctx) {
    ctx.note_view_entry(0);
    if (cfg_.vaba) {
        r_cur_ = 1;
        time_out(ctx);
        return;
    }
    enter_round(1, ctx);
}

void DittoReplica::on_message(ReplicaId from, const Message& msg, Context& ctx) {
    set_sender_hint(from);
    std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, ProposalMsg>) {
                on_proposal(from, m.block, ctx);
            } else if constexpr (std::is_same_v<T, VoteMsg>) {
                on_vote(from, m.vote, ctx);
            } else if constexpr (std::is_same_v<T, TimeoutMsg>) {
                on_timeout(from, m, ctx);
            } else if constexpr (std::is_same_v<T, FtcMsg>) {
                if (validate_ftc(m.ftc, pub())) enter_fallback(m.ftc, ctx);
            } else if constexpr (std::is_same_v<T, FallbackProposalMsg>) {
                on_fblock(from, m.block, ctx);
            } else if constexpr (std::is_same_v<T, FqcMsg>) {
                if (m.fqc.is_fallback() && verify_qc(m.fqc, pub())) learn_fqc(m.fqc, ctx);
            } else if constexpr (std::is_same_v<T, CoinShareMsg>) {
                on_coin_share(from, m, ctx);
            } else if constexpr (std::is_same_v<T, CoinQcMsg>) {
                learn_coin(m.coin, ctx);
            } else if constexpr (std::is_same_v<T, TcMsg>) {
                // round TCs belong to the pacemaker protocols
            } else {
                handle_fetch(from, msg, ctx);
            }
        },
        msg);
}

void DittoReplica::on_timer(const TimerTag& tag, Context& ctx) {
    if (tag.kind == TimerKind::Fetch) {
        on_fetch_timer(tag, ctx);
        return;
    }
    if (tag.view != v_cur_ || tag.round != r_cur_) return;
    if (awaiting_leader_) {
        // Missed the first leader after a fallback.
        awaiting_leader_ = false;
        backoff_x_ = std::min(backoff_x_ * cfg_.backoff_factor, kBackoffCap);
        skip_remaining_ = backoff_x_ - 1;
    }
    time_out(ctx);
}

// ---- steady state ----

void DittoReplica::on_proposal(ReplicaId from, const Block& b, Context& ctx) {
    if (b.round == 0 || leader_of(b.round) != from || !block_id_matches(b)) return;
    if (!verify_qc(b.qc, pub())) return;
    if (b.coin_qc && (!validate_coin_qc(*b.coin_qc, pub()) || b.coin_qc->view + 1 != b.view)) return;
    if (tree_.contains(b.id)) return;
    if (b.coin_qc) learn_coin(*b.coin_qc, ctx);
    learn_qc(b.qc, ctx);
    learn_block(b, ctx);
    if (std::pair{b.view, b.round} > std::pair{v_cur_, r_cur_}) {
        pending_.try_emplace({b.view, b.round}, b);
        return;
    }
    consider(b, ctx);
}

void DittoReplica::consider(const Block& b, Context& ctx) {
    std::pair key{b.view, b.round};
    if (b.view != v_cur_ || b.round != r_cur_ || key <= considered_) return;
    considered_ = key;
    if (!mode_) {
        awaiting_leader_ = false;
        backoff_x_ = 1;
        skip_remaining_ = 0;
    }
    if (mode_ || b.round <= r_vote_ || b.round != b.qc.round + 1) return;
    if (!usable(b.qc) || qc_rank(b.qc) < qc_high_rank_) return;
    r_vote_ = b.round;
    Vote v;
    v.block_id = b.id;
    v.round = b.round;
    v.view = b.view;
    v.share = crypto::sign_digest(cfg_.key, vote_digest(b.id, b.round, b.view, std::nullopt));
    ctx.send(leader_of(b.round + 1), VoteMsg{v});
}

void DittoReplica::on_vote(ReplicaId from, const Vote& v, Context& ctx) {
    if (v.share.signer != from) return;
    if (v.share.message_digest != vote_digest(v.block_id, v.round, v.view, v.fallback)) return;
    if (v.fallback && v.fallback->proposer != cfg_.id) return;
    AddResult status;
    auto qc = votes_.add(v, &status);
    if (status == AddResult::Duplicate) ctx.note_duplicate_share();
    if (!qc) return;
    CertRecord rec;
    rec.kind = qc->is_fallback() ? CertKind::FQC : CertKind::QC;
    rec.view = qc->view;
    rec.round = qc->round;
    rec.block_id = qc->block_id;
    rec.tag = qc->fallback;
    ctx.note_certificate(rec);
    learn_qc(*qc, ctx);
}

void DittoReplica::on_timeout(ReplicaId from, const TimeoutMsg& m, Context& ctx) {
    const Timeout& t = m.timeout;
    if (t.share.signer != from || t.share.message_digest != view_timeout_digest(t.target)) return;
    if (!verify_qc(t.high_qc, pub())) return;
    if (m.endorsement) learn_coin(*m.endorsement, ctx);
    learn_qc(t.high_qc, ctx);
    if (t.target < v_cur_) return;
    AddResult status;
    auto ftc = timeouts_.add(t.share, t.target, &status);
    if (status == AddResult::Duplicate) ctx.note_duplicate_share();
    if (!ftc) return;
    CertRecord rec;
    rec.kind = CertKind::FTC;
    rec.view = ftc->view;
    ctx.note_certificate(rec);
    enter_fallback(*ftc, ctx);
}

void DittoReplica::learn_qc(const QC& qc, Context& ctx) {
    if (qc.is_fallback()) {
        learn_fqc(qc, ctx);
    } else {
        process_qc(qc, ctx);
    }
}

void DittoReplica::process_qc(const QC& qc, Context& ctx) {
    learn_cert_depth(qc.block_id, ctx);
    if (!qc.is_fallback()) tree_.certify(qc);
    Rank rank = qc_rank(qc);
    if (rank > qc_high_rank_) {
        qc_high_ = qc;
        qc_high_rank_ = rank;
    }
    if (tree_.contains(qc.block_id)) {
        try_commit(qc, ctx);
    } else {
        defer_until(qc.block_id, [this, qc](Context& c) { try_commit(qc, c); }, ctx);
    }
    if (qc.round + 1 > r_cur_) enter_round(qc.round + 1, ctx);
}

void DittoReplica::try_commit(const QC& tip, Context& ctx) {
    const Block* second = tree_.find(tip.block_id);
    if (!second || tree_.is_genesis(tip.block_id)) return;
    const QC& parent = second->qc;
    if (parent.view != tip.view || tip.round != parent.round + 1) return;
    if (!usable(parent) || tree_.is_genesis(parent.block_id) || is_committed(parent.block_id)) return;
    if (!tree_.contains(parent.block_id)) {
        defer_until(parent.block_id, [this, tip](Context& c) { try_commit(tip, c); }, ctx);
        return;
    }
    std::uint64_t depth = std::max({block_depth(tip.block_id), cert_depth(tip.block_id),
                                    block_depth(parent.block_id), cert_depth(parent.block_id)});
    if (tip.is_fallback() || parent.is_fallback()) depth = std::max(depth, coin_depth_[tip.view]);
    ctx.note_direct_commit(*tree_.find(parent.block_id));
    commit_through(parent.block_id, depth, ctx);
}

void DittoReplica::enter_round(Round r, Context& ctx) {
    r_cur_ = r;
    reset_timer(ctx);
    propose(ctx);
    pending_.erase(pending_.begin(), pending_.lower_bound({v_cur_, r}));
    if (auto it = pending_.find({v_cur_, r}); it != pending_.end()) {
        Block b = std::move(it->second);
        pending_.erase(it);
        consider(b, ctx);
    }
}

void DittoReplica::enter_view(View v, Context& ctx) {
    v_cur_ = v;
    ctx.note_view_entry(v);
}

void DittoReplica::reset_timer(Context& ctx) {
    TimerTag tag;
    tag.kind = TimerKind::Round;
    tag.view = v_cur_;
    tag.round = r_cur_;
    ctx.set_timer(cfg_.tau, tag);
}

void DittoReplica::time_out(Context& ctx) {
    if (timed_out_view_ == v_cur_) return;
    timed_out_view_ = v_cur_;
    mode_ = true;
    TimeoutMsg m;
    m.timeout.target = v_cur_;
    m.timeout.share = crypto::sign_digest(cfg_.key, view_timeout_digest(v_cur_));
    m.timeout.high_qc = qc_high_;
    m.endorsement = evidence_for(qc_high_);
    ctx.multicast(std::move(m));
}

void DittoReplica::propose(Context& ctx) {
    if (cfg_.vaba || mode_ || leader_of(r_cur_) != cfg_.id) return;
    std::pair key{v_cur_, r_cur_};
    if (key <= proposed_) return;
    bool first_in_view = proposed_.first < v_cur_;
    proposed_ = key;
    std::optional<CoinQC> coin;
    if (first_in_view && v_cur_ > 0) {
        if (auto it = coins_.find(v_cur_ - 1); it != coins_.end()) coin = it->second;
    }
    Block b = make_block(qc_high_, r_cur_, v_cur_, next_payload(qc_high_.block_id), std::nullopt, std::move(coin));
    ctx.note_proposal(b, std::nullopt);
    ctx.multicast(ProposalMsg{std::move(b)});
}

// ---- fallback ----

void DittoReplica::buffer(View v, ReplicaId from, Message msg) { buffered_[v].emplace_back(from, std::move(msg)); }

void DittoReplica::enter_fallback(const FTC& ftc, Context& ctx) {
    if (ftc.view < v_cur_ || (fallback_view_ && *fallback_view_ >= ftc.view)) return;
    const View v = ftc.view;
    mode_ = true;
    fallback_view_ = v;
    if (v > v_cur_) enter_view(v, ctx);
    std::fill(fvoted_round_.begin(), fvoted_round_.end(), 0);
    std::fill(fvoted_height_.begin(), fvoted_height_.end(), 0);
    h2_proposed_ = false;
    h2_relayed_ = false;
    h2_proposers_.clear();
    ctx.multicast(FtcMsg{ftc});

    FallbackBlock fb;
    fb.inner = make_block(qc_high_, qc_high_.round + 1, v, next_payload(qc_high_.block_id), std::nullopt,
                          evidence_for(qc_high_));
    fb.height = 1;
    fb.proposer = cfg_.id;
    ctx.note_proposal(fb.inner, fb.tag());
    ctx.multicast(FallbackProposalMsg{std::move(fb)});

    auto replay = std::move(buffered_[v]);
    buffered_.erase(buffered_.begin(), buffered_.upper_bound(v));
    for (auto& [from, msg] : replay) {
        if (!in_fallback_of(v)) break;
        if (const auto* p = std::get_if<FallbackProposalMsg>(&msg)) {
            fallback_vote(p->block, ctx);
        } else if (const auto* q = std::get_if<FqcMsg>(&msg)) {
            fallback_fqc_action(q->fqc, ctx);
        }
    }
}

void DittoReplica::on_fblock(ReplicaId from, const FallbackBlock& fb, Context& ctx) {
    const Block& b = fb.inner;
    if (fb.proposer != from || fb.height < 1 || fb.height > 2 || !block_id_matches(b)) return;
    if (!verify_qc(b.qc, pub())) return;
    if (fb.height == 2 &&
        (!b.qc.fallback || b.qc.fallback->height != 1 || b.qc.view != b.view || b.round != b.qc.round + 1))
        return;
    if (b.coin_qc && !validate_coin_qc(*b.coin_qc, pub())) return;
    auto& known = fblocks_[b.view];
    bool fresh = std::none_of(known.begin(), known.end(),
                              [&](const FbInfo& k) { return k.id == b.id && k.tag == fb.tag(); });
    if (fresh) known.push_back(FbInfo{b.id, b.qc, b.round, fb.tag()});
    if (b.coin_qc) learn_coin(*b.coin_qc, ctx);
    learn_qc(b.qc, ctx);
    learn_block(b, ctx);
    // The leader's height-2 f-block endorses the height-1 f-QC it extends.
    if (fresh && fb.height == 2 && coin_leader_of(b.view) == fb.proposer) process_qc(b.qc, ctx);

    if (in_fallback_of(b.view)) {
        fallback_vote(fb, ctx);
    } else if (b.view > v_cur_ || (b.view == v_cur_ && !(fallback_view_ && *fallback_view_ >= b.view))) {
        buffer(b.view, from, FallbackProposalMsg{fb});
    }
}

void DittoReplica::fallback_vote(const FallbackBlock& fb, Context& ctx) {
    const Block& b = fb.inner;
    const ReplicaId j = fb.proposer;
    if (!in_fallback_of(b.view) || fb.height <= fvoted_height_[j]) return;
    if (fb.height == 1) {
        if (!usable(b.qc) || qc_rank(b.qc) < qc_high_rank_ || b.round != b.qc.round + 1) return;
    } else {
        if (!b.qc.fallback || b.qc.view != b.view || b.round != b.qc.round + 1 || b.round <= fvoted_round_[j] ||
            fb.height != b.qc.fallback->height + 1)
            return;
    }
    fvoted_round_[j] = b.round;
    fvoted_height_[j] = fb.height;
    Vote v;
    v.block_id = b.id;
    v.round = b.round;
    v.view = b.view;
    v.fallback = fb.tag();
    v.share = crypto::sign_digest(cfg_.key, vote_digest(b.id, b.round, b.view, v.fallback));
    ctx.send(j, VoteMsg{v});
}

void DittoReplica::learn_fqc(const QC& q, Context& ctx) {
    auto& known = fqcs_[q.view];
    if (std::any_of(known.begin(), known.end(), [&](const QC& k) { return same_cert(k, q); })) return;
    known.push_back(q);
    learn_cert_depth(q.block_id, ctx);
    if (in_fallback_of(q.view)) {
        fallback_fqc_action(q, ctx);
    } else if (q.view > v_cur_ || (q.view == v_cur_ && !(fallback_view_ && *fallback_view_ >= q.view))) {
        buffer(q.view, cfg_.id, FqcMsg{q});
    }
    if (is_endorsed(q)) process_qc(q, ctx);
}

void DittoReplica::fallback_fqc_action(const QC& q, Context& ctx) {
    const View v = q.view;
    if (!in_fallback_of(v)) return;
    if (q.fallback->height == 1) {
        if (h2_proposed_) return;
        h2_proposed_ = true;
        FallbackBlock fb;
        fb.inner = make_block(q, q.round + 1, v, next_payload(q.block_id));
        fb.height = 2;
        fb.proposer = cfg_.id;
        ctx.note_proposal(fb.inner, fb.tag());
        ctx.multicast(FallbackProposalMsg{std::move(fb)});
        return;
    }
    const bool own = q.fallback->proposer == cfg_.id;
    if (own || !h2_relayed_) ctx.multicast(FqcMsg{q});
    h2_relayed_ = true;
    h2_proposers_.insert(q.fallback->proposer);
    if (h2_proposers_.size() >= pub().quorum() && coin_share_view_ != v) {
        coin_share_view_ = v;
        ctx.multicast(CoinShareMsg{v, crypto::sign_digest(cfg_.key, coin_digest(v))});
    }
}

void DittoReplica::on_coin_share(ReplicaId from, const CoinShareMsg& m, Context& ctx) {
    if (m.share.signer != from || m.share.message_digest != coin_digest(m.view)) return;
    if (m.view < v_cur_ || coins_.contains(m.view)) return;
    AddResult status;
    auto coin = coin_shares_.add(m.share, m.view, &status);
    if (status == AddResult::Duplicate) ctx.note_duplicate_share();
    if (coin) learn_coin(*coin, ctx);
}

bool DittoReplica::learn_coin(const CoinQC& coin, Context& ctx) {
    if (coins_.contains(coin.view) || !validate_coin_qc(coin, pub())) return false;
    coins_.emplace(coin.view, coin);
    coin_depth_[coin.view] = ctx.depth();
    CertRecord rec;
    rec.kind = CertKind::Coin;
    rec.view = coin.view;
    rec.leader = coin.leader;
    ctx.note_certificate(rec);
    if (coin.view >= v_cur_) {
        exit_fallback(coin, ctx);
    } else {
        auto endorsed = fqcs_[coin.view];
        std::sort(endorsed.begin(), endorsed.end(), [](const QC& a, const QC& b) { return a.round < b.round; });
        for (const auto& q : endorsed)
            if (is_endorsed(q)) process_qc(q, ctx);
    }
    return true;
}

void DittoReplica::exit_fallback(const CoinQC& coin, Context& ctx) {
    ctx.multicast(CoinQcMsg{coin});
    const std::size_t before = commit_log().size();
    const ReplicaId leader = coin.leader;
    if (mode_ && fallback_view_ == coin.view) r_vote_ = fvoted_round_[leader];
    mode_ = false;
    enter_view(coin.view + 1, ctx);

    const bool immediate = cfg_.vaba || skip_remaining_ > 0;
    if (!cfg_.vaba && skip_remaining_ > 0) --skip_remaining_;
    // Time out before re-evaluating so no steady proposal is made in a view
    // that is skipped; the timeout itself waits for the updated qc_high.
    if (immediate) mode_ = true;
    auto fqcs = fqcs_[coin.view];
    std::sort(fqcs.begin(), fqcs.end(), [](const QC& a, const QC& b) { return a.round < b.round; });
    for (const auto& q : fqcs)
        if (is_endorsed(q)) process_qc(q, ctx);
    ctx.note_fallback_exit(coin.view, leader, commit_log().size() > before);

    if (immediate) {
        mode_ = false;
        time_out(ctx);
        return;
    }
    awaiting_leader_ = true;
    reset_timer(ctx);
    propose(ctx);
    if (auto it = pending_.find({v_cur_, r_cur_}); it != pending_.end()) {
        Block b = std::move(it->second);
        pending_.erase(it);
        consider(b, ctx);
    }
}

}  // namespace chainsmr
