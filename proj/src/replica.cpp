#include "chainsmr/replica.hpp"

#include <algorithm>
#include <unordered_set>

namespace chainsmr {

ReplicaBase::ReplicaBase(ReplicaConfig cfg)
    : cfg_(std::move(cfg)),
      pub_(cfg_.key.public_set),
      genesis_(make_genesis(*pub_)),
      tree_(genesis_),
      last_committed_(genesis_.block.id) {
    committed_.insert(genesis_.block.id);
}

void ReplicaBase::on_client_batch(Bytes batch, Context&) { mempool_.push_back(std::move(batch)); }

bool ReplicaBase::learn_block(const Block& block, Context& ctx) {
    if (!tree_.insert(block)) return false;
    block_depth_.emplace(block.id, ctx.depth());
    fetch_attempts_.erase(block.id);
    if (auto it = waiting_.find(block.id); it != waiting_.end()) {
        auto retries = std::move(it->second);
        waiting_.erase(it);
        for (auto& retry : retries) retry(ctx);
    }
    on_block_learned(block, ctx);
    return true;
}

void ReplicaBase::learn_cert_depth(const Digest& id, Context& ctx) { cert_depth_.try_emplace(id, ctx.depth()); }

std::uint64_t ReplicaBase::block_depth(const Digest& id) const {
    auto it = block_depth_.find(id);
    return it == block_depth_.end() ? 0 : it->second;
}

std::uint64_t ReplicaBase::cert_depth(const Digest& id) const {
    auto it = cert_depth_.find(id);
    return it == cert_depth_.end() ? 0 : it->second;
}

void ReplicaBase::commit_through(const Digest& target, std::uint64_t depth, Context& ctx) {
    if (committed_.contains(target)) return;
    // Walk back to the first committed block only; the tree below it is
    // already in the log.
    std::vector<const Block*> chain;
    Digest cur = target;
    while (!committed_.contains(cur)) {
        const Block* b = tree_.find(cur);
        if (!b) {
            defer_until(cur, [this, target, depth](Context& c) { commit_through(target, depth, c); }, ctx);
            return;
        }
        chain.push_back(b);
        cur = b->qc.block_id;
    }
    if (cur != last_committed_) {
        // The committed tip is not an ancestor: `target` sits on a
        // conflicting branch.
        if (!tree_.extends(last_committed_, target)) ctx.note_local_conflict(target);
        return;
    }
    std::reverse(chain.begin(), chain.end());
    for (const Block* b : chain) depth = std::max(depth, block_depth(b->id));
    for (const Block* it : chain) {
        CommitEntry e;
        e.position = log_.size();
        e.block_id = it->id;
        e.payload_digest = hash(it->payload);
        e.round = it->round;
        e.view = it->view;
        e.time = ctx.now();
        e.depth = depth;
        committed_.insert(it->id);
        if (!it->payload.empty()) committed_payloads_.insert(e.payload_digest);
        log_.push_back(e);
        ctx.note_commit(e, *it);
    }
    last_committed_ = target;
    while (!mempool_.empty() && committed_payloads_.contains(hash(mempool_.front()))) mempool_.pop_front();
}

void ReplicaBase::defer_until(const Digest& id, std::function<void(Context&)> retry, Context& ctx) {
    waiting_[id].push_back(std::move(retry));
    need_block(id, ctx);
}

void ReplicaBase::need_block(const Digest& id, Context& ctx) {
    if (tree_.contains(id) || fetch_attempts_.contains(id)) return;
    fetch_attempts_.emplace(id, 0);
    fetch_hint_.emplace(id, sender_hint_);
    TimerTag tag;
    tag.kind = TimerKind::Fetch;
    tag.block = id;
    ctx.set_timer(cfg_.fetch_delay, tag);
}

void ReplicaBase::on_fetch_timer(const TimerTag& tag, Context& ctx) {
    auto it = fetch_attempts_.find(tag.block);
    if (it == fetch_attempts_.end() || tree_.contains(tag.block)) return;
    const std::uint32_t n = pub_->n;
    ReplicaId target = (fetch_hint_[tag.block] + it->second) % n;
    if (target == cfg_.id) target = (target + 1) % n;
    ++it->second;
    if (target != cfg_.id) ctx.send(target, BlockRequestMsg{tag.block});
    Tick backoff = cfg_.fetch_delay * std::min<Tick>(8, 1 + it->second);
    ctx.set_timer(backoff, tag);
}

std::optional<Block> ReplicaBase::handle_fetch(ReplicaId from, const Message& msg, Context& ctx) {
    if (const auto* req = std::get_if<BlockRequestMsg>(&msg)) {
        if (const Block* b = tree_.find(req->id); b && !tree_.is_genesis(req->id)) ctx.send(from, BlockResponseMsg{*b});
        return std::nullopt;
    }
    if (const auto* resp = std::get_if<BlockResponseMsg>(&msg)) {
        if (!block_id_matches(resp->block) || tree_.contains(resp->block.id)) return std::nullopt;
        if (!verify_qc(resp->block.qc, *pub_) && !tree_.is_genesis(resp->block.qc.block_id)) return std::nullopt;
        learn_block(resp->block, ctx);
        return resp->block;
    }
    return std::nullopt;
}

Bytes ReplicaBase::next_payload(const Digest& parent) {
    std::unordered_set<Digest, DigestHash> on_chain;
    Digest cur = parent;
    for (std::size_t steps = 0; steps <= tree_.size(); ++steps) {
        if (committed_.contains(cur)) break;
        const Block* b = tree_.find(cur);
        if (!b) return {};  // unknown ancestry: do not risk re-proposing
        if (!b->payload.empty()) on_chain.insert(hash(b->payload));
        cur = b->qc.block_id;
    }
    for (const auto& batch : mempool_) {
        auto d = hash(batch);
        if (!committed_payloads_.contains(d) && !on_chain.contains(d)) return batch;
    }
    return {};
}

}  // namespace chainsmr
