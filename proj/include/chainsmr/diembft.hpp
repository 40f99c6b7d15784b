#pragma once

#include "chainsmr/pacemaker.hpp"

namespace chainsmr {

/// 3-chain DiemBFT: 2-chain lock, 3-chain commit, view fixed at 0.
class DiemReplica final : public PacemakerReplica {
public:
    using PacemakerReplica::PacemakerReplica;

    Round r_lock() const { return r_lock_; }

protected:
    void lock(const QC& qc) override;
    void try_commit(const QC& qc, Context& ctx) override;
    bool safe_to_vote(const Block& b) const override { return b.qc.round >= r_lock_; }
    bool attach_tc() const override { return false; }

private:
    Round r_lock_ = 0;
};

}  // namespace chainsmr
