#include "chainsmr/jolteon.hpp"

namespace chainsmr {

void JolteonReplica::try_commit(const QC& qc, Context& ctx) {
    auto first = two_chain(tree_, qc);
    if (!first || is_committed(*first)) return;
    if (!tree_.contains(*first)) {
        defer_until(*first, [this, qc](Context& c) { try_commit(qc, c); }, ctx);
        return;
    }
    ctx.note_direct_commit(*tree_.find(*first));
    commit_through(*first, chain_depth({qc.block_id, *first}), ctx);
}

bool JolteonReplica::safe_to_vote(const Block& b) const {
    if (b.round == b.qc.round + 1) return true;
    return b.tc && b.round == b.tc->round + 1 && b.qc.round >= b.tc->max_high_qc_round();
}

}  // namespace chainsmr
