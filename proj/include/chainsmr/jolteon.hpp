#pragma once

#include "chainsmr/pacemaker.hpp"

namespace chainsmr {

/// 2-chain Jolteon: 1-chain lock (qc_high only), 2-chain commit, proposals
/// justified by the entry TC after a timeout.
class JolteonReplica final : public PacemakerReplica {
public:
    using PacemakerReplica::PacemakerReplica;

protected:
    void lock(const QC&) override {}
    void try_commit(const QC& qc, Context& ctx) override;
    bool safe_to_vote(const Block& b) const override;
    bool attach_tc() const override { return true; }
};

}  // namespace chainsmr
