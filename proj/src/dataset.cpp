#include "shopgraph/dataset.hpp"

#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "shopgraph/formats.hpp"
#include "shopgraph/parallel.hpp"

namespace shopgraph {

using nlohmann::json;

void BranchParams::validate() const {
    if (branches_per_instance < 0) throw std::invalid_argument("branches_per_instance must be >= 0");
    if (!(random_action_probability >= 0.0 && random_action_probability <= 1.0))
        throw std::invalid_argument("random_action_probability must lie in [0,1]");
    if (segment_length.lo < 1 || segment_length.hi < segment_length.lo)
        throw std::invalid_argument("segment_length must be a non-empty range of positive counts");
}

namespace {

struct Outcome {
    DatasetInstance info;
    std::vector<Transition> transitions;
    std::vector<std::string> notes;
    bool discarded = false;
};

std::vector<Transition> replay_any(const HeteroState& from, const Schedule& schedule) {
    try {
        return replay_schedule(from, schedule, {true});
    } catch (const UnreachableSchedule&) {
        return replay_schedule(from, schedule, {false});
    }
}

AssignmentSet random_assignment(const HeteroState& s, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::pair<ActionEdge, double>> ranked;
    for (const auto& e : legal_actions(s)) ranked.emplace_back(e, u(rng));
    return select_compatible_set(std::move(ranked));
}

Transition make_transition(const std::string& ref, int step_index, const HeteroState& s, const AssignmentSet& set,
                           int delta) {
    Transition t;
    t.instance_ref = ref;
    t.step = step_index;
    t.state = s;
    t.action_set = set;
    t.behavior = behavior_distribution(s, set);
    auto r = step(s, set);
    t.reward = r.reward;
    t.terminal = r.terminal;
    t.next_state = std::move(r.state);
    t.delta = delta;
    return t;
}

// Expert continuation from `s`. Falls back to the SPT rule when the search
// result cannot be replayed.
std::vector<Transition> continuation(const HeteroState& s, const DatasetOptions& opt, const std::string& ref,
                                     std::vector<std::string>& notes) {
    const auto plan = solve_from(s, opt.space, opt.node_limit);
    if (!plan.optimal)
        notes.push_back(ref + ": re-solve budget exhausted at step " + std::to_string(s.scheduled_count()) +
                        ", best incumbent used");
    try {
        return replay_any(s, plan.schedule);
    } catch (const UnreachableSchedule&) {
        notes.push_back(ref + ": re-solved plan unreachable, dispatch continuation used");
        return replay_any(s, dispatch_from(s, DispatchRule::Spt));
    }
}

Outcome label_instance(const std::shared_ptr<const Instance>& inst, const DatasetOptions& opt, std::uint64_t seed) {
    Outcome out;
    const std::string& ref = inst->name();
    out.info.instance = inst;
    Rng rng(seed);
    const HeteroState root = reset(inst, opt.env);
    if (root.terminal()) return out;

    const auto expert = solve_from(root, opt.space, opt.node_limit);
    out.info.expert_makespan = expert.makespan;
    out.info.expert_optimal = expert.optimal;
    if (!expert.optimal) out.notes.push_back(ref + ": expert budget exhausted, best incumbent used");
    std::vector<Transition> traj;
    try {
        traj = replay_any(root, expert.schedule);
    } catch (const UnreachableSchedule& e) {
        out.discarded = true;
        out.notes.push_back(ref + ": discarded, expert schedule unreachable (" + e.what() + ")");
        return out;
    }
    for (auto& t : traj) t.instance_ref = ref;
    out.transitions = traj;

    const auto& bp = opt.branch;
    std::bernoulli_distribution coin(bp.random_action_probability);
    for (int b = 0; b < bp.branches_per_instance; ++b) {
        const int depth = std::uniform_int_distribution<int>(0, static_cast<int>(traj.size()) - 1)(rng);
        const int length = std::uniform_int_distribution<int>(bp.segment_length.lo, bp.segment_length.hi)(rng);
        HeteroState s = traj[static_cast<std::size_t>(depth)].state;
        int step_index = depth;
        for (int i = 0; i < length && !s.terminal(); ++i) {
            const bool random = coin(rng);
            AssignmentSet set;
            if (random) {
                set = random_assignment(s, rng);
            } else {
                auto plan = continuation(s, opt, ref, out.notes);
                set = plan.front().action_set;
            }
            auto t = make_transition(ref, step_index++, s, set, random ? 0 : 1);
            s = t.next_state;
            out.transitions.push_back(std::move(t));
        }
        if (s.terminal()) continue;
        for (auto& t : continuation(s, opt, ref, out.notes)) {
            t.instance_ref = ref;
            t.step = step_index++;
            out.transitions.push_back(std::move(t));
        }
    }
    return out;
}

json edge_json(const ActionEdge& e) { return json::array({e.job, e.machine, e.start, e.duration}); }

ActionEdge edge_from(const json& j) {
    return {j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<Time>(), j.at(3).get<Time>()};
}

json rows(const std::vector<double>& flat, std::size_t width) {
    json out = json::array();
    for (std::size_t r = 0; width > 0 && r < flat.size() / width; ++r)
        out.push_back(std::vector<double>(flat.begin() + static_cast<std::ptrdiff_t>(r * width),
                                          flat.begin() + static_cast<std::ptrdiff_t>((r + 1) * width)));
    return out;
}

json graph_json(const StateGraph& g) {
    json j;
    json ids = json::array();
    for (const auto& id : g.op_ids) ids.push_back({id.job, id.index});
    j["op_ids"] = ids;
    j["op"] = rows(g.op_features, kOpFeatures);
    j["job"] = rows(g.job_features, kJobFeatures);
    j["machine"] = rows(g.machine_features, kMachineFeatures);
    j["om"] = {{"op", g.om_op}, {"machine", g.om_machine}, {"features", rows(g.om_features, kOpMachineFeatures)}};
    j["oj"] = {{"op", g.oj_op}, {"job", g.oj_job}};
    j["oo"] = {{"src", g.oo_src}, {"dst", g.oo_dst}};
    json edges = json::array();
    for (const auto& e : g.jm_edges) edges.push_back(edge_json(e));
    j["jm"] = {{"edges", edges},
               {"legal", g.jm_legal},
               {"features", rows(g.jm_features, static_cast<std::size_t>(g.jm_width))}};
    return j;
}

json schedule_json(const Schedule& s) {
    json out = json::array();
    for (const auto& [op, a] : s) out.push_back({op.job, op.index, a.machine, a.start, a.end});
    return out;
}

Schedule schedule_from(const json& j) {
    Schedule s;
    for (const auto& a : j)
        s.assign({a.at(0).get<int>(), a.at(1).get<int>()}, {a.at(2).get<int>(), a.at(3).get<Time>(), a.at(4).get<Time>()});
    return s;
}

json env_json(const EnvParams& p) {
    return {{"visible_ops_per_job", p.visible_ops_per_job},
            {"mask_factor", p.mask_factor},
            {"normalize_features", p.normalize_features}};
}

EnvParams env_from(const json& j) {
    EnvParams p;
    p.visible_ops_per_job = j.at("visible_ops_per_job").get<int>();
    p.mask_factor = j.at("mask_factor").get<double>();
    p.normalize_features = j.at("normalize_features").get<bool>();
    return p;
}

}  // namespace

Dataset generate_dataset(const std::vector<Instance>& instances, const DatasetOptions& options, std::uint64_t seed) {
    options.env.validate();
    options.branch.validate();
    std::set<std::string> names;
    for (const auto& inst : instances)
        if (!names.insert(inst.name()).second)
            throw std::invalid_argument("duplicate instance name '" + inst.name() + "'");

    std::vector<Outcome> outcomes(instances.size());
    parallel_for(static_cast<int>(instances.size()), options.threads, [&](int i) {
        const auto idx = static_cast<std::size_t>(i);
        auto ptr = std::make_shared<const Instance>(instances[idx]);
        outcomes[idx] = label_instance(ptr, options, derive_seed(seed, idx));
    });

    Dataset ds;
    ds.env = options.env;
    for (auto& o : outcomes) {
        ds.notes.insert(ds.notes.end(), o.notes.begin(), o.notes.end());
        if (o.discarded) continue;
        ds.instances.push_back(o.info);
        for (auto& t : o.transitions) ds.transitions.push_back(std::move(t));
    }
    return ds;
}

std::string dataset_to_jsonl(const Dataset& dataset) {
    std::ostringstream out;
    json header;
    header["version"] = kDatasetVersion;
    header["kind"] = "header";
    header["env"] = env_json(dataset.env);
    json insts = json::array();
    for (const auto& d : dataset.instances)
        insts.push_back({{"ref", d.instance->name()},
                         {"fjs", serialize_fjssp(*d.instance)},
                         {"expert_makespan", d.expert_makespan},
                         {"expert_optimal", d.expert_optimal}});
    header["instances"] = insts;
    header["notes"] = dataset.notes;
    out << header.dump() << '\n';

    for (const auto& t : dataset.transitions) {
        json rec;
        rec["version"] = kDatasetVersion;
        rec["instance_ref"] = t.instance_ref;
        rec["step"] = t.step;
        rec["state"] = {{"schedule", schedule_json(t.state.partial_schedule())}, {"graph", graph_json(t.state.graph())}};
        json actions = json::array();
        for (const auto& e : t.action_set) actions.push_back(edge_json(e));
        rec["action_edges"] = actions;
        rec["behavior_probs"] = t.behavior;
        rec["reward"] = t.reward;
        rec["terminal"] = t.terminal;
        rec["delta"] = t.delta;
        out << rec.dump() << '\n';
    }
    return out.str();
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
    write_text_file(path, dataset_to_jsonl(dataset));
}

Dataset dataset_from_jsonl(const std::string& text) {
    Dataset ds;
    std::map<std::string, std::shared_ptr<const Instance>> by_ref;
    std::istringstream in(text);
    std::string line;
    int number = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty()) continue;
        try {
            const json rec = json::parse(line);
            const int version = rec.at("version").get<int>();
            if (version != kDatasetVersion)
                throw DatasetError("dataset version " + std::to_string(version) + " is not supported (expected " +
                                       std::to_string(kDatasetVersion) + ")",
                                   number);
            if (!have_header) {
                if (rec.value("kind", "") != "header") throw DatasetError("first record must be the header", number);
                have_header = true;
                ds.env = env_from(rec.at("env"));
                for (const auto& d : rec.at("instances")) {
                    const auto ref = d.at("ref").get<std::string>();
                    auto inst = std::make_shared<const Instance>(parse_fjssp(d.at("fjs").get<std::string>(), ref));
                    by_ref[ref] = inst;
                    ds.instances.push_back(
                        {inst, d.at("expert_makespan").get<Time>(), d.at("expert_optimal").get<bool>()});
                }
                ds.notes = rec.at("notes").get<std::vector<std::string>>();
                continue;
            }
            Transition t;
            t.instance_ref = rec.at("instance_ref").get<std::string>();
            const auto it = by_ref.find(t.instance_ref);
            if (it == by_ref.end()) throw DatasetError("unknown instance_ref '" + t.instance_ref + "'", number);
            t.step = rec.at("step").get<int>();
            const auto& st = rec.at("state");
            t.state = rebuild(it->second, ds.env, schedule_from(st.at("schedule")));
            if (graph_json(t.state.graph()) != st.at("graph"))
                throw DatasetError("stored graph does not match its schedule", number);
            for (const auto& e : rec.at("action_edges")) t.action_set.push_back(edge_from(e));
            t.behavior = rec.at("behavior_probs").get<std::vector<double>>();
            if (t.behavior.size() != legal_actions(t.state).size())
                throw DatasetError("behavior_probs length does not match the legal edges", number);
            t.reward = rec.at("reward").get<Time>();
            t.terminal = rec.at("terminal").get<bool>();
            t.delta = rec.at("delta").get<int>();
            if (t.delta != 0 && t.delta != 1) throw DatasetError("delta must be 0 or 1", number);
            auto r = step(t.state, t.action_set);
            if (r.reward != t.reward || r.terminal != t.terminal)
                throw DatasetError("stored reward or terminal flag disagrees with the environment", number);
            t.next_state = std::move(r.state);
            ds.transitions.push_back(std::move(t));
        } catch (const DatasetError&) {
            throw;
        } catch (const std::exception& e) {
            throw DatasetError(std::string("malformed record: ") + e.what(), number);
        }
    }
    if (!have_header) throw DatasetError("missing header record", number);
    return ds;
}

Dataset load_dataset(const std::filesystem::path& path) { return dataset_from_jsonl(read_text_file(path)); }

}  // namespace shopgraph
