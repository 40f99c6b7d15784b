#include "chainsmr/block_tree.hpp"

#include <algorithm>

namespace chainsmr {

BlockTree::BlockTree(Genesis genesis) : genesis_id_(genesis.block.id), genesis_qc_(genesis.qc) {
    blocks_.emplace(genesis_id_, std::move(genesis.block));
    certified_.emplace(genesis_id_, genesis_qc_);
}

bool BlockTree::insert(const Block& block) { return blocks_.emplace(block.id, block).second; }

const Block* BlockTree::find(const Digest& id) const {
    auto it = blocks_.find(id);
    return it == blocks_.end() ? nullptr : &it->second;
}

void BlockTree::certify(const QC& qc) {
    auto [it, inserted] = certified_.emplace(qc.block_id, qc);
    // Prefer a regular certificate over an f-QC for the same content.
    if (!inserted && it->second.is_fallback() && !qc.is_fallback()) it->second = qc;
}

const QC* BlockTree::certificate_of(const Digest& id) const {
    auto it = certified_.find(id);
    return it == certified_.end() ? nullptr : &it->second;
}

std::vector<Block> BlockTree::ancestors(const Digest& id) const {
    std::vector<Block> chain;
    Digest cur = id;
    while (true) {
        const Block* b = find(cur);
        if (!b) throw MissingAncestor(cur);
        chain.push_back(*b);
        if (cur == genesis_id_) break;
        if (chain.size() > blocks_.size()) throw std::logic_error("cycle in block ancestry");
        cur = b->qc.block_id;
    }
    std::reverse(chain.begin(), chain.end());
    return chain;
}

bool BlockTree::extends(const Digest& descendant, const Digest& ancestor) const {
    Digest cur = descendant;
    std::size_t steps = 0;
    while (true) {
        if (cur == ancestor) return true;
        if (cur == genesis_id_) return false;
        const Block* b = find(cur);
        if (!b || ++steps > blocks_.size()) return false;
        cur = b->qc.block_id;
    }
}

std::optional<Digest> two_chain(const BlockTree& tree, const QC& tip, bool require_same_view) {
    const Block* second = tree.find(tip.block_id);
    if (!second || tree.is_genesis(tip.block_id)) return std::nullopt;
    const QC& parent = second->qc;
    if (tip.round != parent.round + 1) return std::nullopt;
    if (require_same_view && tip.view != parent.view) return std::nullopt;
    return parent.block_id;
}

std::optional<Digest> three_chain(const BlockTree& tree, const QC& tip) {
    const Block* third = tree.find(tip.block_id);
    if (!third || tree.is_genesis(tip.block_id)) return std::nullopt;
    const QC& middle_qc = third->qc;
    if (tip.round != middle_qc.round + 1) return std::nullopt;
    const Block* middle = tree.find(middle_qc.block_id);
    if (!middle || tree.is_genesis(middle_qc.block_id)) return std::nullopt;
    const QC& first_qc = middle->qc;
    if (middle_qc.round != first_qc.round + 1) return std::nullopt;
    return first_qc.block_id;
}

}  // namespace chainsmr
