#include "chainsmr/simnet.hpp"

#include "chainsmr/diembft.hpp"
#include "chainsmr/ditto.hpp"
#include "chainsmr/jolteon.hpp"

#include <algorithm>
#include <cmath>

namespace chainsmr {

std::unique_ptr<Replica> make_replica(Protocol p, ReplicaConfig cfg) {
    switch (p) {
        case Protocol::DiemBFT3: return std::make_unique<DiemReplica>(std::move(cfg));
        case Protocol::Jolteon: return std::make_unique<JolteonReplica>(std::move(cfg));
        case Protocol::Ditto: cfg.vaba = false; return std::make_unique<DittoReplica>(std::move(cfg));
        case Protocol::Vaba2: cfg.vaba = true; return std::make_unique<DittoReplica>(std::move(cfg));
    }
    throw InvalidScenario("unknown protocol");
}

Bytes make_batch(std::uint64_t index, std::uint32_t batch_size) {
    Writer w;
    w.str("batch");
    w.u64(index);
    w.u64(batch_size);
    for (std::uint32_t i = 0; i < batch_size; ++i) w.u64(index * batch_size + i);
    return std::move(w).take();
}

// ---- equivocation driver ----

class EquivocatingReplica::Splitter final : public Context {
public:
    Splitter(Context& base, EquivocatingReplica& owner) : base_(base), owner_(owner) {}

    void send(ReplicaId to, Message msg) override { base_.send(to, std::move(msg)); }
    void multicast(Message msg) override {
        if (auto* p = std::get_if<ProposalMsg>(&msg)) {
            split(p->block, std::nullopt);
        } else if (auto* fb = std::get_if<FallbackProposalMsg>(&msg); fb && fb->block.height == 1) {
            split(fb->block.inner, fb->block.tag());
        } else {
            base_.multicast(std::move(msg));
        }
    }
    void set_timer(Tick delay, TimerTag tag) override { base_.set_timer(delay, tag); }
    Tick now() const override { return base_.now(); }
    std::uint64_t depth() const override { return base_.depth(); }

    void note_commit(const CommitEntry& e, const Block& b) override { base_.note_commit(e, b); }
    void note_proposal(const Block& b, std::optional<FallbackTag> t) override { base_.note_proposal(b, t); }
    void note_certificate(const CertRecord& c) override { base_.note_certificate(c); }
    void note_view_entry(View v) override { base_.note_view_entry(v); }
    void note_fallback_exit(View v, ReplicaId l, bool c) override { base_.note_fallback_exit(v, l, c); }
    void note_direct_commit(const Block& b) override { base_.note_direct_commit(b); }
    void note_duplicate_share() override { base_.note_duplicate_share(); }
    void note_local_conflict(const Digest& d) override { base_.note_local_conflict(d); }

private:
    void split(const Block& original, std::optional<FallbackTag> tag) {
        Bytes payload = original.payload;
        payload.push_back(0xEE);
        Block fork = make_block(original.qc, original.round, original.view, std::move(payload), original.tc,
                                original.coin_qc);
        base_.note_proposal(fork, tag);
        for (ReplicaId i = 0; i < owner_.n_; ++i) {
            const Block& b = (i % 2 == 0) ? original : fork;
            if (tag) {
                base_.send(i, FallbackProposalMsg{FallbackBlock{b, tag->height, tag->proposer}});
            } else {
                base_.send(i, ProposalMsg{b});
            }
        }
        const ReplicaId target = tag ? owner_.id() : static_cast<ReplicaId>((original.round + 1) % owner_.n_);
        owner_.vote_for(original, tag, target, base_);
        owner_.vote_for(fork, tag, target, base_);
    }

    Context& base_;
    EquivocatingReplica& owner_;
};

EquivocatingReplica::EquivocatingReplica(std::unique_ptr<Replica> inner, crypto::KeyMaterial key, std::uint32_t n)
    : inner_(std::move(inner)), key_(std::move(key)), n_(n) {}

void EquivocatingReplica::vote_for(const Block& b, std::optional<FallbackTag> tag, ReplicaId to, Context& ctx) {
    Vote v;
    v.block_id = b.id;
    v.round = b.round;
    v.view = b.view;
    v.fallback = tag;
    v.share = crypto::sign_digest(key_, vote_digest(b.id, b.round, b.view, tag));
    ctx.send(to, VoteMsg{v});
}

void EquivocatingReplica::start(Context& ctx) {
    Splitter sp(ctx, *this);
    inner_->start(sp);
}

void EquivocatingReplica::on_message(ReplicaId from, const Message& msg, Context& ctx) {
    if (from != id()) {
        if (const auto* p = std::get_if<ProposalMsg>(&msg)) {
            vote_for(p->block, std::nullopt, static_cast<ReplicaId>((p->block.round + 1) % n_), ctx);
        } else if (const auto* fb = std::get_if<FallbackProposalMsg>(&msg)) {
            vote_for(fb->block.inner, fb->block.tag(), fb->block.proposer, ctx);
        }
    }
    Splitter sp(ctx, *this);
    inner_->on_message(from, msg, sp);
}

void EquivocatingReplica::on_timer(const TimerTag& tag, Context& ctx) {
    Splitter sp(ctx, *this);
    inner_->on_timer(tag, sp);
}

void EquivocatingReplica::on_client_batch(Bytes batch, Context& ctx) {
    Splitter sp(ctx, *this);
    inner_->on_client_batch(std::move(batch), sp);
}

// ---- simulator ----

struct Simulator::Event {
    enum class Kind { Deliver, Timer, Batch };
    Tick time = 0;
    std::uint64_t seq = 0;
    Kind kind = Kind::Deliver;
    ReplicaId to = 0;
    ReplicaId from = 0;
    std::shared_ptr<const Message> msg;
    TimerTag tag;
    std::uint64_t depth = 0;
    bool honest_pair = false;
    std::uint64_t batch_index = 0;
};

bool Simulator::EventOrder::operator()(const Event& a, const Event& b) const {
    // std heap is a max-heap: invert for earliest-first.
    return std::tie(a.time, a.seq) > std::tie(b.time, b.seq);
}

class Simulator::Ctx final : public Context {
public:
    explicit Ctx(Simulator& sim) : sim_(sim) {}

    void send(ReplicaId to, Message msg) override {
        auto size = static_cast<std::uint32_t>(encode(msg).size());
        sim_.deliver_send(sim_.current_, to, std::make_shared<const Message>(std::move(msg)), size,
                          sim_.depth_ + 1);
    }
    void multicast(Message msg) override {
        auto size = static_cast<std::uint32_t>(encode(msg).size());
        auto shared = std::make_shared<const Message>(std::move(msg));
        for (ReplicaId to = 0; to < sim_.s_.n; ++to) sim_.deliver_send(sim_.current_, to, shared, size, sim_.depth_ + 1);
    }
    void set_timer(Tick delay, TimerTag tag) override {
        Event e;
        e.time = sim_.now_ + delay;
        e.kind = Event::Kind::Timer;
        e.to = sim_.current_;
        e.tag = tag;
        e.depth = sim_.depth_;
        sim_.push(std::move(e));
    }
    Tick now() const override { return sim_.now_; }
    std::uint64_t depth() const override { return sim_.depth_; }

    void note_proposal(const Block& b, std::optional<FallbackTag> tag) override {
        ProposalRecord p;
        p.id = b.id;
        p.parent = b.qc.block_id;
        p.parent_round = b.qc.round;
        p.parent_view = b.qc.view;
        p.parent_tag = b.qc.fallback;
        p.round = b.round;
        p.view = b.view;
        p.tag = tag;
        p.proposer = sim_.current_;
        p.depth = sim_.depth_;
        p.time = sim_.now_;
        p.payload_digest = hash(b.payload);
        p.payload_size = static_cast<std::uint32_t>(b.payload.size());
        sim_.trace_.proposals.push_back(p);
    }
    void note_certificate(const CertRecord& c) override {
        sim_.trace_.certificates.push_back(CertEntry{sim_.current_, sim_.now_, sim_.depth_, c});
    }
    void note_view_entry(View v) override {
        sim_.trace_.view_entries.push_back(ViewEntry{sim_.current_, v, sim_.depth_, sim_.now_});
    }
    void note_fallback_exit(View v, ReplicaId leader, bool committed_new) override {
        sim_.trace_.fallback_exits.push_back(
            FallbackExit{sim_.current_, v, leader, committed_new, sim_.depth_, sim_.now_});
    }
    void note_direct_commit(const Block& b) override {
        sim_.trace_.direct_commits.push_back(DirectCommit{sim_.current_, b.id, b.round, b.view, sim_.now_});
    }
    void note_duplicate_share() override { ++sim_.trace_.duplicate_shares; }
    void note_local_conflict(const Digest& d) override { sim_.trace_.local_conflicts.emplace_back(sim_.current_, d); }

private:
    Simulator& sim_;
};

Simulator::Simulator(Scenario s) : s_(std::move(s)) {
    s_.validate();
    rng_.seed(s_.seed ^ 0x9E3779B97F4A7C15ULL);
    auto keys = crypto::deal_keys(s_.f, s_.seed);
    for (ReplicaId i = 0; i < s_.n; ++i) {
        ReplicaConfig cfg;
        cfg.id = i;
        cfg.key = keys[i];
        cfg.tau = s_.tau;
        cfg.fetch_delay = s_.delta + 1;
        cfg.backoff_factor = s_.backoff_factor;
        auto r = make_replica(s_.protocol, cfg);
        if (std::find(s_.equivocators.begin(), s_.equivocators.end(), i) != s_.equivocators.end())
            r = std::make_unique<EquivocatingReplica>(std::move(r), keys[i], s_.n);
        replicas_.push_back(std::move(r));
    }
    trace_.scenario = s_;
    for (ReplicaId i = 0; i < s_.n; ++i) trace_.honest.push_back(s_.is_honest(i));
}

Simulator::~Simulator() = default;

double Simulator::uniform01() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

Tick Simulator::delay_of(ReplicaId from, ReplicaId to, bool from_steady_leader, Tick now) {
    if (from == to) return 0;
    const Tick delta = s_.delta;
    auto sync = [&] { return 1 + rng_() % delta; };
    auto partial = [&]() -> Tick {
        const Tick gst = s_.effective_gst();
        if (now >= gst) return sync();
        // Pareto tail before GST, but delivered by GST + delta at the latest.
        double u = std::max(uniform01(), 1e-12);
        double d = static_cast<double>(delta) * std::pow(u, -1.0 / 1.1);
        Tick t = static_cast<Tick>(std::min(d, 1e12));
        return std::clamp<Tick>(t, 1, gst + delta - now);
    };
    Tick d = 0;
    bool ddos = false;
    switch (s_.adversary) {
        case AdversaryKind::Synchronous:
        case AdversaryKind::Crash: d = sync(); break;
        case AdversaryKind::PartialSynchrony: d = partial(); break;
        case AdversaryKind::Asynchronous: {
            double e = -3.0 * static_cast<double>(delta) * std::log1p(-uniform01());
            d = std::min<Tick>(1 + static_cast<Tick>(e), 30 * delta);
            break;
        }
        case AdversaryKind::LeaderDdos: d = sync(); ddos = true; break;
        case AdversaryKind::Composite: d = partial(); ddos = true; break;
    }
    if (ddos && from_steady_leader) d += s_.ddos_delay;
    return d;
}

void Simulator::push(Event e) {
    e.seq = seq_++;
    queue_.push_back(std::move(e));
    std::push_heap(queue_.begin(), queue_.end(), EventOrder{});
}

void Simulator::deliver_send(ReplicaId from, ReplicaId to, std::shared_ptr<const Message> msg, std::uint32_t size,
                             std::uint64_t hops) {
    MessageRecord rec;
    rec.send_time = now_;
    rec.from = from;
    rec.to = to;
    rec.kind = static_cast<std::uint8_t>(msg->index());
    rec.size = size;
    rec.hops = hops;
    if (s_.is_crashed(from) || s_.is_crashed(to)) {
        trace_.messages.push_back(rec);
        return;
    }
    Tick d = delay_of(from, to, replicas_[from]->is_steady_leader(), now_);
    rec.deliver_time = now_ + d;
    rec.delivered = true;
    trace_.messages.push_back(rec);

    Event e;
    e.time = now_ + d;
    e.kind = Event::Kind::Deliver;
    e.to = to;
    e.from = from;
    e.msg = std::move(msg);
    e.depth = hops;
    e.honest_pair = s_.is_honest(from) && s_.is_honest(to);
    if (e.honest_pair) ++pending_honest_;
    push(std::move(e));
}

void Simulator::dispatch(const Event& e) {
    now_ = e.time;
    Ctx ctx(*this);
    switch (e.kind) {
        case Event::Kind::Deliver:
            if (e.honest_pair) --pending_honest_;
            current_ = e.to;
            depth_ = e.depth;
            replicas_[e.to]->on_message(e.from, *e.msg, ctx);
            break;
        case Event::Kind::Timer:
            current_ = e.to;
            depth_ = e.depth;
            replicas_[e.to]->on_timer(e.tag, ctx);
            break;
        case Event::Kind::Batch: {
            depth_ = 0;
            Bytes batch = make_batch(e.batch_index, s_.batch_size);
            trace_.batches.push_back(InjectedBatch{now_, hash(batch), s_.batch_size});
            for (ReplicaId i = 0; i < s_.n; ++i) {
                if (s_.is_crashed(i)) continue;
                current_ = i;
                replicas_[i]->on_client_batch(batch, ctx);
            }
            double interval = static_cast<double>(s_.batch_size) / s_.load_rate;
            Event next;
            next.kind = Event::Kind::Batch;
            next.batch_index = e.batch_index + 1;
            next.time = static_cast<Tick>(std::floor(static_cast<double>(next.batch_index + 1) * interval));
            if (next.time <= s_.max_time) push(std::move(next));
            break;
        }
    }
}

bool Simulator::done() const {
    if (s_.max_commits == 0 && s_.max_views == 0) return false;
    bool commits_met = s_.max_commits > 0;
    bool views_met = s_.max_views > 0;
    for (ReplicaId i = 0; i < s_.n; ++i) {
        if (!s_.is_honest(i)) continue;
        if (replicas_[i]->commit_log().size() < s_.max_commits) commits_met = false;
        if (replicas_[i]->current_view() < s_.max_views) views_met = false;
    }
    return commits_met || views_met;
}

Trace Simulator::run() {
    Ctx ctx(*this);
    for (ReplicaId i = 0; i < s_.n; ++i) {
        if (s_.is_crashed(i)) continue;
        current_ = i;
        depth_ = 0;
        replicas_[i]->start(ctx);
    }
    if (s_.load_rate > 0) {
        Event e;
        // A batch is released once its last transaction has arrived.
        e.kind = Event::Kind::Batch;
        e.time = static_cast<Tick>(std::floor(static_cast<double>(s_.batch_size) / s_.load_rate));
        if (e.time <= s_.max_time) push(std::move(e));
    }
    while (!queue_.empty() && !done()) {
        std::pop_heap(queue_.begin(), queue_.end(), EventOrder{});
        Event e = std::move(queue_.back());
        queue_.pop_back();
        if (e.time > s_.max_time) {
            queue_.push_back(std::move(e));
            std::push_heap(queue_.begin(), queue_.end(), EventOrder{});
            now_ = s_.max_time;
            break;
        }
        dispatch(e);
    }
    trace_.end_time = now_;
    trace_.truncated = pending_honest_ > 0;
    for (const auto& r : replicas_) {
        trace_.logs.push_back(r->commit_log());
        trace_.final_views.push_back(r->current_view());
    }
    return std::move(trace_);
}

Trace simulate(const Scenario& s) { return Simulator(s).run(); }

}  // namespace chainsmr
