#include "chainsmr/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <omp.h>

namespace chainsmr {

using nlohmann::json;

namespace {

std::map<View, ReplicaId> coin_leaders(const Trace& t) {
    std::map<View, ReplicaId> out;
    for (const auto& c : t.certificates)
        if (c.cert.kind == CertKind::Coin) out.emplace(c.cert.view, c.cert.leader);
    return out;
}

std::map<Digest, const ProposalRecord*> proposal_index(const Trace& t) {
    std::map<Digest, const ProposalRecord*> out;
    for (const auto& p : t.proposals) {
        auto [it, fresh] = out.emplace(p.id, &p);
        if (!fresh && p.depth < it->second->depth) it->second = &p;
    }
    return out;
}

bool is_fallback_protocol(const Scenario& s) {
    return s.protocol == Protocol::Ditto || s.protocol == Protocol::Vaba2;
}

}  // namespace

// ---- safety and liveness ----

SafetyVerdict check_safety(const std::vector<std::vector<CommitEntry>>& logs, const std::vector<bool>& honest) {
    SafetyVerdict v;
    for (ReplicaId a = 0; a < logs.size(); ++a) {
        if (!honest[a]) continue;
        for (std::size_t k = 0; k < logs[a].size(); ++k) {
            if (logs[a][k].position != k) {
                v.pass = false;
                v.position = k;
                v.replica_a = v.replica_b = a;
                v.detail = "replica " + std::to_string(a) + " has a gap or reordering at position " + std::to_string(k);
                return v;
            }
        }
    }
    for (ReplicaId a = 0; a < logs.size(); ++a) {
        if (!honest[a]) continue;
        for (ReplicaId b = a + 1; b < logs.size(); ++b) {
            if (!honest[b]) continue;
            std::size_t common = std::min(logs[a].size(), logs[b].size());
            for (std::size_t k = 0; k < common; ++k) {
                const auto& x = logs[a][k];
                const auto& y = logs[b][k];
                if (x.block_id == y.block_id && x.payload_digest == y.payload_digest) continue;
                v.pass = false;
                v.position = k;
                v.replica_a = a;
                v.replica_b = b;
                v.block_a = x.block_id;
                v.block_b = y.block_id;
                v.detail = "logs of replicas " + std::to_string(a) + " and " + std::to_string(b) +
                           " diverge at position " + std::to_string(k) + ": " + x.block_id.hex().substr(0, 16) +
                           " vs " + y.block_id.hex().substr(0, 16);
                return v;
            }
        }
    }
    return v;
}

SafetyVerdict check_safety(const Trace& t) { return check_safety(t.logs, t.honest); }

LivenessVerdict check_liveness(const Trace& t, Tick window) {
    LivenessVerdict v;
    std::vector<std::set<Digest>> committed;
    for (ReplicaId i = 0; i < t.logs.size(); ++i) {
        if (!t.honest[i]) continue;
        std::set<Digest> s;
        for (const auto& e : t.logs[i]) s.insert(e.payload_digest);
        committed.push_back(std::move(s));
    }
    for (const auto& b : t.batches) {
        if (b.time + window > t.end_time) continue;
        ++v.expected;
        bool everywhere =
            std::all_of(committed.begin(), committed.end(), [&](const auto& s) { return s.contains(b.digest); });
        if (!everywhere) ++v.missing;
    }
    v.pass = v.missing == 0;
    v.detail = std::to_string(v.expected - v.missing) + "/" + std::to_string(v.expected) +
               " required batches committed by every honest replica";
    return v;
}

// ---- certificate and chain invariants ----

std::map<View, std::set<Digest>> endorsed_blocks(const Trace& t) {
    std::map<View, std::set<Digest>> out;
    for (const auto& [view, leader] : coin_leaders(t)) {
        auto& set = out[view];
        bool leader_h2 = false;
        for (const auto& p : t.proposals) {
            if (p.view != view || !p.tag || p.tag->height != 2 || p.tag->proposer != leader) continue;
            leader_h2 = true;
            set.insert(p.parent);
        }
        for (const auto& c : t.certificates) {
            if (c.cert.kind != CertKind::FQC || c.cert.view != view || !c.cert.tag) continue;
            if (c.cert.tag->proposer != leader) continue;
            if (c.cert.tag->height == 2 || !leader_h2) set.insert(c.cert.block_id);
        }
        if (set.empty()) out.erase(view);
    }
    return out;
}

std::vector<std::string> check_unique_certification(const Trace& t) {
    std::vector<std::string> out;
    std::map<std::pair<View, Round>, std::set<Digest>> regular;
    std::map<std::tuple<View, Round, std::uint32_t, ReplicaId>, std::set<Digest>> fallback;
    for (const auto& c : t.certificates) {
        if (c.cert.kind == CertKind::QC) regular[{c.cert.view, c.cert.round}].insert(c.cert.block_id);
        if (c.cert.kind == CertKind::FQC && c.cert.tag)
            fallback[{c.cert.view, c.cert.round, c.cert.tag->height, c.cert.tag->proposer}].insert(c.cert.block_id);
    }
    for (const auto& [k, ids] : regular)
        if (ids.size() > 1)
            out.push_back("view " + std::to_string(k.first) + " round " + std::to_string(k.second) + ": " +
                          std::to_string(ids.size()) + " distinct certified blocks");
    for (const auto& [k, ids] : fallback)
        if (ids.size() > 1)
            out.push_back("view " + std::to_string(std::get<0>(k)) + " round " + std::to_string(std::get<1>(k)) +
                          " f-QC h" + std::to_string(std::get<2>(k)) + "/p" + std::to_string(std::get<3>(k)) +
                          ": " + std::to_string(ids.size()) + " distinct blocks");
    auto index = proposal_index(t);
    for (const auto& [view, ids] : endorsed_blocks(t)) {
        std::map<Round, std::set<Digest>> by_round;
        for (const auto& id : ids)
            if (auto it = index.find(id); it != index.end()) by_round[it->second->round].insert(id);
        for (const auto& [r, set] : by_round)
            if (set.size() > 1)
                out.push_back("view " + std::to_string(view) + " round " + std::to_string(r) + ": " +
                              std::to_string(set.size()) + " distinct endorsed blocks");
    }
    return out;
}

std::vector<std::string> check_structure(const Trace& t) {
    std::vector<std::string> out;
    std::map<ReplicaId, View> last_view;
    for (const auto& e : t.view_entries) {
        if (!t.honest[e.replica]) continue;
        auto [it, fresh] = last_view.emplace(e.replica, e.view);
        if (!fresh && e.view < it->second)
            out.push_back("replica " + std::to_string(e.replica) + " moved from view " +
                          std::to_string(it->second) + " back to " + std::to_string(e.view));
        it->second = std::max(it->second, e.view);
    }
    for (const auto& [r, d] : t.local_conflicts)
        if (t.honest[r]) out.push_back("replica " + std::to_string(r) + " saw a certified conflict " + d.hex().substr(0, 16));

    auto index = proposal_index(t);
    std::set<Digest> certified;
    for (const auto& c : t.certificates)
        if (c.cert.kind == CertKind::QC) certified.insert(c.cert.block_id);
    auto endorsed_by_view = endorsed_blocks(t);
    std::set<Digest> endorsed;
    for (const auto& [v, ids] : endorsed_by_view) endorsed.insert(ids.begin(), ids.end());

    const bool fallback_proto = is_fallback_protocol(t.scenario);
    auto check_link = [&](const Digest& id, bool child_regular) {
        auto it = index.find(id);
        if (it == index.end()) return;
        const ProposalRecord& b = *it->second;
        const bool parent_certified = certified.contains(b.parent);
        const bool parent_endorsed = endorsed.contains(b.parent);
        if (!parent_certified && !parent_endorsed) return;
        auto pit = index.find(b.parent);
        if (pit == index.end()) return;
        const ProposalRecord& p = *pit->second;
        if (b.view < p.view)
            out.push_back("block " + id.hex().substr(0, 16) + " of view " + std::to_string(b.view) +
                          " extends a block of view " + std::to_string(p.view));
        if (fallback_proto && b.round != p.round + 1)
            out.push_back("block " + id.hex().substr(0, 16) + " round " + std::to_string(b.round) +
                          " extends round " + std::to_string(p.round));
        if (child_regular && parent_endorsed && !parent_certified && b.view == p.view && !b.tag)
            out.push_back("endorsed f-block " + b.parent.hex().substr(0, 16) +
                          " is the parent of a certified regular block of view " + std::to_string(b.view));
    };
    for (const auto& id : certified) check_link(id, true);
    for (const auto& id : endorsed) check_link(id, false);

    auto extends = [&](Digest d, const Digest& ancestor) {
        for (std::size_t steps = 0; steps <= index.size(); ++steps) {
            if (d == ancestor) return true;
            auto it = index.find(d);
            if (it == index.end()) return false;
            d = it->second->parent;
        }
        return false;
    };
    for (const auto& [view, ids] : endorsed_by_view) {
        std::vector<Digest> v(ids.begin(), ids.end());
        for (std::size_t i = 0; i < v.size(); ++i)
            for (std::size_t j = i + 1; j < v.size(); ++j)
                if (!extends(v[i], v[j]) && !extends(v[j], v[i]))
                    out.push_back("endorsed f-blocks " + v[i].hex().substr(0, 16) + " and " +
                                  v[j].hex().substr(0, 16) + " of view " + std::to_string(view) +
                                  " do not extend one another");
    }
    return out;
}

std::vector<std::string> check_tc_direct_commit(const Trace& t) {
    std::vector<std::string> out;
    if (t.scenario.protocol != Protocol::Jolteon) return out;
    std::vector<Round> committed;
    for (const auto& d : t.direct_commits)
        if (t.honest[d.replica]) committed.push_back(d.round);
    std::sort(committed.begin(), committed.end());
    for (const auto& c : t.certificates) {
        if (c.cert.kind != CertKind::TC) continue;
        auto it = std::lower_bound(committed.begin(), committed.end(), c.cert.round);
        if (it == committed.begin()) continue;
        Round r = *std::prev(it);
        if (c.cert.max_high_qc_round < r)
            out.push_back("TC of round " + std::to_string(c.cert.round) + " has max high-QC round " +
                          std::to_string(c.cert.max_high_qc_round) + " below direct-committed round " +
                          std::to_string(r));
    }
    return out;
}

// ---- metrics ----

HopStats hop_stats(std::vector<std::uint64_t> hops) {
    HopStats s;
    if (hops.empty()) return s;
    std::sort(hops.begin(), hops.end());
    s.count = hops.size();
    s.mean = static_cast<double>(std::accumulate(hops.begin(), hops.end(), std::uint64_t{0})) /
             static_cast<double>(hops.size());
    s.min = hops.front();
    s.max = hops.back();
    auto pct = [&](double p) {
        auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(hops.size())));
        return hops[std::clamp<std::size_t>(rank, 1, hops.size()) - 1];
    };
    s.p50 = pct(0.50);
    s.p95 = pct(0.95);
    s.p99 = pct(0.99);
    return s;
}

std::vector<std::uint64_t> block_hops(const Trace& t) {
    auto index = proposal_index(t);
    std::map<Digest, std::pair<std::uint64_t, std::size_t>> latest;  // max depth, replicas
    std::size_t honest = 0;
    for (ReplicaId i = 0; i < t.logs.size(); ++i) {
        if (!t.honest[i]) continue;
        ++honest;
        for (const auto& e : t.logs[i]) {
            auto& [depth, count] = latest[e.block_id];
            depth = std::max(depth, e.depth);
            ++count;
        }
    }
    std::vector<std::uint64_t> out;
    for (const auto& [id, dc] : latest) {
        auto it = index.find(id);
        if (dc.second != honest || it == index.end()) continue;
        out.push_back(dc.first - it->second->depth);
    }
    return out;
}

DecisionStats decision_stats(const Trace& t) {
    DecisionStats s;
    std::map<View, std::uint64_t> entry;
    entry[0] = 0;
    for (const auto& e : t.view_entries) {
        if (!t.honest[e.replica]) continue;
        auto [it, fresh] = entry.emplace(e.view, e.depth);
        if (!fresh) it->second = std::min(it->second, e.depth);
    }
    std::map<Digest, std::uint64_t> commit_depth;
    for (ReplicaId i = 0; i < t.logs.size(); ++i) {
        if (!t.honest[i]) continue;
        for (const auto& e : t.logs[i]) commit_depth[e.block_id] = std::max(commit_depth[e.block_id], e.depth);
    }
    std::set<std::pair<View, Digest>> direct;
    for (const auto& d : t.direct_commits)
        if (t.honest[d.replica]) direct.emplace(d.view, d.block_id);

    std::uint64_t total_views = 0;
    View attempt_start = 0;
    for (const auto& [view, leader] : coin_leaders(t)) {
        std::optional<Digest> decided;
        for (const auto& p : t.proposals) {
            if (p.view != view || !p.tag || p.tag->height != 2 || p.tag->proposer != leader) continue;
            if (direct.contains({view, p.parent})) decided = p.parent;
        }
        if (!decided) continue;
        auto start = entry.lower_bound(attempt_start);
        auto cd = commit_depth.find(*decided);
        if (start == entry.end() || cd == commit_depth.end()) continue;
        ++s.decisions;
        total_views += view - attempt_start + 1;
        s.hops.push_back(cd->second - start->second);
        attempt_start = view + 1;
    }
    if (s.decisions > 0) {
        s.views_per_decision = static_cast<double>(total_views) / static_cast<double>(s.decisions);
        s.hops_mean = static_cast<double>(std::accumulate(s.hops.begin(), s.hops.end(), std::uint64_t{0})) /
                      static_cast<double>(s.decisions);
    }
    return s;
}

Report make_report(const Trace& t, Tick liveness_window) {
    Report r;
    r.scenario = t.scenario;
    const std::vector<CommitEntry>* longest = nullptr;
    bool first = true;
    for (ReplicaId i = 0; i < t.logs.size(); ++i) {
        if (!t.honest[i]) continue;
        const auto& log = t.logs[i];
        if (!longest || log.size() > longest->size()) longest = &log;
        r.commits_min = first ? log.size() : std::min<std::uint64_t>(r.commits_min, log.size());
        first = false;
    }
    if (longest) {
        r.commits_total = longest->size();
        std::map<Digest, std::uint32_t> batch_txns;
        for (const auto& b : t.batches) batch_txns.emplace(b.digest, b.txns);
        std::set<Digest> fallback_ids;
        for (const auto& p : t.proposals)
            if (p.tag) fallback_ids.insert(p.id);
        for (const auto& e : *longest) {
            if (auto it = batch_txns.find(e.payload_digest); it != batch_txns.end()) r.txns_committed += it->second;
            (fallback_ids.contains(e.block_id) ? r.fallback_commits : r.steady_commits)++;
        }
    }
    r.throughput = t.end_time > 0 ? static_cast<double>(r.txns_committed) / static_cast<double>(t.end_time) : 0;
    r.hops = hop_stats(block_hops(t));
    r.messages_total = t.messages.size();
    r.messages_per_commit =
        r.commits_total > 0 ? static_cast<double>(r.messages_total) / static_cast<double>(r.commits_total) : 0;

    std::map<View, bool> fallback_views;
    for (const auto& e : t.fallback_exits) {
        if (!t.honest[e.replica]) continue;
        fallback_views[e.view] = fallback_views[e.view] || e.committed_new;
    }
    r.fallback_views = fallback_views.size();
    for (const auto& [v, c] : fallback_views) r.fallback_views_committing += c;
    r.fallback_commit_fraction = r.fallback_views > 0 ? static_cast<double>(r.fallback_views_committing) /
                                                            static_cast<double>(r.fallback_views)
                                                      : 0;
    r.views_completed = coin_leaders(t).size();
    r.messages_per_view = r.views_completed > 0 ? static_cast<double>(r.messages_total) /
                                                      static_cast<double>(r.views_completed)
                                                : 0;
    r.decisions = decision_stats(t);
    r.safety = check_safety(t);
    r.liveness = check_liveness(t, liveness_window);
    for (auto* check : {check_unique_certification, check_structure, check_tc_direct_commit}) {
        auto v = check(t);
        r.violations.insert(r.violations.end(), v.begin(), v.end());
    }
    r.duplicate_shares = t.duplicate_shares;
    r.end_time = t.end_time;
    r.truncated = t.truncated;
    return r;
}

json report_to_json(const Report& r) {
    json j;
    j["scenario"] = scenario_to_json(r.scenario);
    j["commits_total"] = r.commits_total;
    j["commits_min"] = r.commits_min;
    j["txns_committed"] = r.txns_committed;
    j["throughput"] = r.throughput;
    j["hops"] = {{"count", r.hops.count}, {"mean", r.hops.mean}, {"min", r.hops.min}, {"max", r.hops.max},
                 {"p50", r.hops.p50},     {"p95", r.hops.p95},   {"p99", r.hops.p99}};
    j["messages_total"] = r.messages_total;
    j["messages_per_commit"] = r.messages_per_commit;
    j["paths"] = {{"steady_commits", r.steady_commits}, {"fallback_commits", r.fallback_commits}};
    j["fallback"] = {{"views", r.fallback_views},
                     {"views_committing", r.fallback_views_committing},
                     {"commit_fraction", r.fallback_commit_fraction},
                     {"views_completed", r.views_completed},
                     {"messages_per_view", r.messages_per_view}};
    j["decisions"] = {{"count", r.decisions.decisions},
                      {"views_per_decision", r.decisions.views_per_decision},
                      {"hops_mean", r.decisions.hops_mean}};
    j["safety_verdict"] = {{"pass", r.safety.pass}, {"detail", r.safety.detail}};
    if (r.safety.position) j["safety_verdict"]["position"] = *r.safety.position;
    j["liveness_verdict"] = {{"pass", r.liveness.pass}, {"detail", r.liveness.detail}};
    j["invariant_violations"] = r.violations;
    j["duplicate_shares"] = r.duplicate_shares;
    j["end_time"] = r.end_time;
    j["truncated"] = r.truncated;
    return j;
}

// ---- persisted logs ----

namespace {

constexpr std::string_view kLogMagic = "chainsmr-log 1";

std::string log_body(const CommitEntry& e) {
    std::ostringstream os;
    os << e.position << ' ' << e.block_id.hex() << ' ' << e.payload_digest.hex() << ' ' << e.round << ' ' << e.view
       << ' ' << e.time << ' ' << e.depth;
    return os.str();
}

Digest chain_link(const Digest& prev, const std::string& body) { return hash(prev.hex() + " " + body); }

}  // namespace

void write_persisted_log(const std::filesystem::path& path, ReplicaId replica, const std::vector<CommitEntry>& log) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << kLogMagic << " replica " << replica << '\n';
    Digest link = hash(std::string_view("genesis"));
    for (const auto& e : log) {
        std::string body = log_body(e);
        link = chain_link(link, body);
        out << body << ' ' << link.hex() << '\n';
    }
}

PersistedLog read_persisted_log(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    PersistedLog out;
    std::string line;
    if (!std::getline(in, line) || line.rfind(kLogMagic, 0) != 0)
        throw std::runtime_error("line 1: missing log header");
    {
        std::istringstream hs(line.substr(kLogMagic.size()));
        std::string word;
        if (!(hs >> word >> out.replica) || word != "replica") throw std::runtime_error("line 1: malformed header");
    }
    Digest link = hash(std::string_view("genesis"));
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        auto fail = [&](const std::string& why) {
            throw std::runtime_error("line " + std::to_string(lineno) + ": " + why);
        };
        std::istringstream ls(line);
        CommitEntry e;
        std::string block, payload, chain;
        if (!(ls >> e.position >> block >> payload >> e.round >> e.view >> e.time >> e.depth >> chain))
            fail("malformed record");
        try {
            e.block_id = Digest::from_hex(block);
            e.payload_digest = Digest::from_hex(payload);
        } catch (const std::exception&) {
            fail("bad digest");
        }
        if (e.position != out.entries.size()) fail("position out of sequence");
        std::string body = log_body(e);
        link = chain_link(link, body);
        if (link.hex() != chain) fail("hash chain mismatch");
        out.entries.push_back(e);
    }
    return out;
}

// ---- sweeps ----

std::vector<Report> run_sweep_serial(const std::vector<Scenario>& scenarios, Tick liveness_window) {
    std::vector<Report> out;
    out.reserve(scenarios.size());
    for (const auto& s : scenarios) out.push_back(make_report(simulate(s), liveness_window));
    return out;
}

std::vector<Report> run_sweep_parallel(const std::vector<Scenario>& scenarios, Tick liveness_window) {
    std::vector<Report> out(scenarios.size());
    const auto count = static_cast<std::int64_t>(scenarios.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (std::int64_t i = 0; i < count; ++i) out[i] = make_report(simulate(scenarios[i]), liveness_window);
    return out;
}

std::vector<Aggregate> aggregate_reports(const std::vector<Report>& reports) {
    using Getter = double (*)(const Report&);
    static const std::pair<const char*, Getter> kMetrics[] = {
        {"commits_total", [](const Report& r) { return static_cast<double>(r.commits_total); }},
        {"throughput", [](const Report& r) { return r.throughput; }},
        {"hops_mean", [](const Report& r) { return r.hops.mean; }},
        {"messages_per_commit", [](const Report& r) { return r.messages_per_commit; }},
        {"fallback_commit_fraction", [](const Report& r) { return r.fallback_commit_fraction; }},
        {"views_per_decision", [](const Report& r) { return r.decisions.views_per_decision; }},
        {"decision_hops_mean", [](const Report& r) { return r.decisions.hops_mean; }},
    };
    std::vector<Aggregate> out;
    for (const auto& [name, get] : kMetrics) {
        Aggregate a;
        a.metric = name;
        if (!reports.empty()) {
            double sum = 0;
            for (const auto& r : reports) sum += get(r);
            a.mean = sum / static_cast<double>(reports.size());
            if (reports.size() > 1) {
                double sq = 0;
                for (const auto& r : reports) sq += (get(r) - a.mean) * (get(r) - a.mean);
                a.stddev = std::sqrt(sq / static_cast<double>(reports.size() - 1));
            }
        }
        out.push_back(a);
    }
    return out;
}

std::string sweep_csv(const std::vector<Report>& reports) {
    std::ostringstream os;
    os << "seed,protocol,adversary,n,commits_total,throughput,hops_mean,hops_p50,hops_p95,hops_p99,"
          "messages_per_commit,fallback_commit_fraction,views_per_decision,decision_hops_mean,safety,liveness,"
          "violations\n";
    for (const auto& r : reports) {
        os << r.scenario.seed << ',' << to_string(r.scenario.protocol) << ',' << to_string(r.scenario.adversary)
           << ',' << r.scenario.n << ',' << r.commits_total << ',' << r.throughput << ',' << r.hops.mean << ','
           << r.hops.p50 << ',' << r.hops.p95 << ',' << r.hops.p99 << ',' << r.messages_per_commit << ','
           << r.fallback_commit_fraction << ',' << r.decisions.views_per_decision << ',' << r.decisions.hops_mean
           << ',' << (r.safety.pass ? "PASS" : "FAIL") << ',' << (r.liveness.pass ? "PASS" : "FAIL") << ','
           << r.violations.size() << '\n';
    }
    return os.str();
}

}  // namespace chainsmr
