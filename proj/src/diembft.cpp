#include "chainsmr/diembft.hpp"

#include <algorithm>

namespace chainsmr {

void DiemReplica::lock(const QC& qc) {
    const Block* b = tree_.find(qc.block_id);
    if (b && !tree_.is_genesis(qc.block_id)) r_lock_ = std::max(r_lock_, b->qc.round);
}

void DiemReplica::try_commit(const QC& qc, Context& ctx) {
    const Block* third = tree_.find(qc.block_id);
    if (!third || tree_.is_genesis(qc.block_id)) return;
    const Digest middle = third->qc.block_id;
    if (!tree_.contains(middle)) {
        defer_until(middle, [this, qc](Context& c) { try_commit(qc, c); }, ctx);
        return;
    }
    auto first = three_chain(tree_, qc);
    if (!first || is_committed(*first)) return;
    if (!tree_.contains(*first)) {
        defer_until(*first, [this, qc](Context& c) { try_commit(qc, c); }, ctx);
        return;
    }
    ctx.note_direct_commit(*tree_.find(*first));
    commit_through(*first, chain_depth({qc.block_id, middle, *first}), ctx);
}

}  // namespace chainsmr
