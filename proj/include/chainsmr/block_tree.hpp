#pragma once

#include "chainsmr/types.hpp"

#include <stdexcept>
#include <unordered_map>

namespace chainsmr {

class MissingAncestor : public std::runtime_error {
public:
    explicit MissingAncestor(const Digest& id)
        : std::runtime_error("missing ancestor " + id.hex()), missing(id) {}
    Digest missing;
};

/// Blocks keyed by id plus the certificates seen for them. Blocks whose parent
/// is not yet known are stored anyway; ancestry queries report the gap.
class BlockTree {
public:
    explicit BlockTree(Genesis genesis);

    /// Returns false if the block was already present.
    bool insert(const Block& block);
    const Block* find(const Digest& id) const;
    bool contains(const Digest& id) const { return blocks_.contains(id); }

    void certify(const QC& qc);
    const QC* certificate_of(const Digest& id) const;

    const Block& genesis() const { return *find(genesis_id_); }
    const QC& genesis_qc() const { return genesis_qc_; }
    bool is_genesis(const Digest& id) const { return id == genesis_id_; }

    /// Genesis-first chain ending at `id`. Throws MissingAncestor.
    std::vector<Block> ancestors(const Digest& id) const;

    /// True when `descendant` reaches `ancestor` through parent links. Unknown
    /// links count as "does not extend".
    bool extends(const Digest& descendant, const Digest& ancestor) const;

    std::size_t size() const { return blocks_.size(); }

private:
    Digest genesis_id_;
    QC genesis_qc_;
    std::unordered_map<Digest, Block, DigestHash> blocks_;
    std::unordered_map<Digest, QC, DigestHash> certified_;
};

/// First block of a 2-chain ending at the block `tip` certifies: the parent of
/// that block, when the two rounds are consecutive. Nullopt when the rule does
/// not hold or the certified block is unknown (check `tree.contains`).
std::optional<Digest> two_chain(const BlockTree& tree, const QC& tip, bool require_same_view = false);

/// First block of a 3-chain with consecutive rounds ending at `tip`'s block.
std::optional<Digest> three_chain(const BlockTree& tree, const QC& tip);

}  // namespace chainsmr
