#include "chainsmr/simnet.hpp"

#include <fstream>
#include <set>

namespace chainsmr {

using nlohmann::json;

namespace {

constexpr std::pair<Protocol, std::string_view> kProtocols[] = {
    {Protocol::DiemBFT3, "diembft3"}, {Protocol::Jolteon, "jolteon"}, {Protocol::Ditto, "ditto"},
    {Protocol::Vaba2, "vaba2"}};

constexpr std::pair<AdversaryKind, std::string_view> kAdversaries[] = {
    {AdversaryKind::Synchronous, "synchronous"}, {AdversaryKind::PartialSynchrony, "partial_synchrony"},
    {AdversaryKind::Asynchronous, "asynchronous"}, {AdversaryKind::LeaderDdos, "leader_ddos"},
    {AdversaryKind::Crash, "crash"},             {AdversaryKind::Composite, "composite"}};

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return fallback;
    try {
        return it->get<T>();
    } catch (const json::exception& e) {
        throw InvalidScenario(std::string("field '") + key + "': " + e.what());
    }
}

json tag_json(const std::optional<FallbackTag>& t) {
    if (!t) return nullptr;
    return json::array({t->height, t->proposer});
}

}  // namespace

std::string to_string(Protocol p) {
    for (auto [k, name] : kProtocols)
        if (k == p) return std::string(name);
    return "?";
}

std::string to_string(AdversaryKind a) {
    for (auto [k, name] : kAdversaries)
        if (k == a) return std::string(name);
    return "?";
}

Protocol parse_protocol(std::string_view s) {
    for (auto [k, name] : kProtocols)
        if (name == s) return k;
    throw InvalidScenario("unknown protocol '" + std::string(s) + "'");
}

AdversaryKind parse_adversary(std::string_view s) {
    for (auto [k, name] : kAdversaries)
        if (name == s) return k;
    throw InvalidScenario("unknown adversary '" + std::string(s) + "'");
}

bool Scenario::is_crashed(ReplicaId id) const {
    return std::find(crash_set.begin(), crash_set.end(), id) != crash_set.end();
}

bool Scenario::is_honest(ReplicaId id) const {
    return !is_crashed(id) && std::find(equivocators.begin(), equivocators.end(), id) == equivocators.end();
}

void Scenario::validate() const {
    if (n != 3 * f + 1) throw InvalidScenario("n must equal 3f+1");
    if (delta == 0) throw InvalidScenario("delta must be positive");
    if (tau == 0 && protocol != Protocol::Vaba2) throw InvalidScenario("tau must be positive");
    if (batch_size == 0) throw InvalidScenario("batch_size must be positive");
    if (load_rate < 0) throw InvalidScenario("load_rate must be non-negative");
    if (backoff_factor == 0) throw InvalidScenario("backoff_factor must be positive");
    std::set<ReplicaId> faulty;
    for (auto id : crash_set) {
        if (id >= n) throw InvalidScenario("crash_set id out of range");
        faulty.insert(id);
    }
    for (auto id : equivocators) {
        if (id >= n) throw InvalidScenario("equivocator id out of range");
        faulty.insert(id);
    }
    if (faulty.size() > f) throw InvalidScenario("more than f faulty replicas");
}

Scenario scenario_from_json(const json& j) {
    if (!j.is_object()) throw InvalidScenario("scenario must be a JSON object");
    Scenario s;
    s.f = get_or<std::uint32_t>(j, "f", s.f);
    s.n = get_or<std::uint32_t>(j, "n", 3 * s.f + 1);
    if (!j.contains("f")) s.f = s.n > 0 ? (s.n - 1) / 3 : 0;
    s.protocol = parse_protocol(get_or<std::string>(j, "protocol", to_string(s.protocol)));
    s.adversary = parse_adversary(get_or<std::string>(j, "adversary", to_string(s.adversary)));
    s.delta = get_or<Tick>(j, "delta", s.delta);
    s.tau = get_or<Tick>(j, "tau", s.tau);
    if (j.contains("gst") && !j["gst"].is_null()) s.gst = get_or<Tick>(j, "gst", 0);
    s.seed = get_or<std::uint64_t>(j, "seed", s.seed);
    if (auto it = j.find("duration"); it != j.end()) {
        if (it->is_number()) {
            s.max_time = it->get<Tick>();
        } else if (it->is_object()) {
            s.max_time = get_or<Tick>(*it, "max_time", s.max_time);
            s.max_commits = get_or<std::uint64_t>(*it, "max_commits", 0);
            s.max_views = get_or<std::uint64_t>(*it, "max_views", 0);
        } else {
            throw InvalidScenario("duration must be a number or an object");
        }
    }
    s.load_rate = get_or<double>(j, "load_rate", s.load_rate);
    s.batch_size = get_or<std::uint32_t>(j, "batch_size", s.batch_size);
    s.ddos_delay = get_or<Tick>(j, "ddos_delay", s.ddos_delay);
    s.crash_set = get_or<std::vector<ReplicaId>>(j, "crash_set", {});
    s.backoff_factor = get_or<std::uint64_t>(j, "backoff_factor", s.backoff_factor);
    s.validate();
    return s;
}

json scenario_to_json(const Scenario& s) {
    json j;
    j["n"] = s.n;
    j["f"] = s.f;
    j["protocol"] = to_string(s.protocol);
    j["adversary"] = to_string(s.adversary);
    j["delta"] = s.delta;
    j["tau"] = s.tau;
    j["gst"] = s.effective_gst();
    j["seed"] = s.seed;
    j["duration"] = {{"max_time", s.max_time}, {"max_commits", s.max_commits}, {"max_views", s.max_views}};
    j["load_rate"] = s.load_rate;
    j["batch_size"] = s.batch_size;
    j["ddos_delay"] = s.ddos_delay;
    j["crash_set"] = s.crash_set;
    j["backoff_factor"] = s.backoff_factor;
    return j;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidScenario("cannot open scenario file " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw InvalidScenario(std::string("malformed scenario: ") + e.what());
    }
    return scenario_from_json(j);
}

json trace_to_json(const Trace& t) {
    json j;
    j["scenario"] = scenario_to_json(t.scenario);
    if (!t.scenario.equivocators.empty()) j["scenario"]["equivocators"] = t.scenario.equivocators;
    j["honest"] = t.honest;
    json logs = json::array();
    for (const auto& log : t.logs) {
        json l = json::array();
        for (const auto& e : log)
            l.push_back({e.position, e.block_id.hex(), e.payload_digest.hex(), e.round, e.view, e.time, e.depth});
        logs.push_back(std::move(l));
    }
    j["logs"] = std::move(logs);
    json msgs = json::array();
    for (const auto& m : t.messages)
        msgs.push_back({m.send_time, m.deliver_time, m.from, m.to, kind_name(m.kind), m.size, m.hops, m.delivered});
    j["messages"] = std::move(msgs);
    json props = json::array();
    for (const auto& p : t.proposals)
        props.push_back({{"id", p.id.hex()},
                         {"parent", p.parent.hex()},
                         {"parent_round", p.parent_round},
                         {"parent_view", p.parent_view},
                         {"parent_tag", tag_json(p.parent_tag)},
                         {"round", p.round},
                         {"view", p.view},
                         {"tag", tag_json(p.tag)},
                         {"proposer", p.proposer},
                         {"depth", p.depth},
                         {"time", p.time},
                         {"payload", p.payload_digest.hex()}});
    j["proposals"] = std::move(props);
    static constexpr const char* kCertNames[] = {"qc", "fqc", "tc", "ftc", "coin"};
    json certs = json::array();
    for (const auto& c : t.certificates)
        certs.push_back({kCertNames[static_cast<int>(c.cert.kind)], c.former, c.time, c.depth, c.cert.view,
                         c.cert.round, c.cert.block_id.hex(), tag_json(c.cert.tag), c.cert.max_high_qc_round,
                         c.cert.leader});
    j["certificates"] = std::move(certs);
    json views = json::array();
    for (const auto& v : t.view_entries) views.push_back({v.replica, v.view, v.depth, v.time});
    j["view_entries"] = std::move(views);
    json exits = json::array();
    for (const auto& e : t.fallback_exits)
        exits.push_back({e.replica, e.view, e.leader, e.committed_new, e.depth, e.time});
    j["fallback_exits"] = std::move(exits);
    json direct = json::array();
    for (const auto& d : t.direct_commits) direct.push_back({d.replica, d.block_id.hex(), d.round, d.view, d.time});
    j["direct_commits"] = std::move(direct);
    json batches = json::array();
    for (const auto& b : t.batches) batches.push_back({b.time, b.digest.hex(), b.txns});
    j["batches"] = std::move(batches);
    json conflicts = json::array();
    for (const auto& [r, d] : t.local_conflicts) conflicts.push_back({r, d.hex()});
    j["local_conflicts"] = std::move(conflicts);
    j["final_views"] = t.final_views;
    j["duplicate_shares"] = t.duplicate_shares;
    j["end_time"] = t.end_time;
    j["truncated"] = t.truncated;
    return j;
}

}  // namespace chainsmr
