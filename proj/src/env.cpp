#include "shopgraph/env.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <set>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace shopgraph {

void EnvParams::validate() const {
    if (visible_ops_per_job < 1) throw std::invalid_argument("visible_ops_per_job must be >= 1");
    if (!(mask_factor > 1.0)) throw std::invalid_argument("mask_factor must be > 1");
}

namespace {

bool within_mask(Time start, Time earliest, double factor) {
    return static_cast<double>(start) <= static_cast<double>(earliest) * factor;
}

std::string edge_name(const ActionEdge& e) {
    return "(job " + std::to_string(e.job) + ", machine " + std::to_string(e.machine) + ")";
}

}  // namespace

void HeteroState::build_graph() {
    const Instance& inst = *instance_;
    const int n_jobs = inst.num_jobs();
    const int n_machines = inst.num_machines();
    const bool norm = params_.normalize_features;
    const double time_scale = norm && inst.total_mean_work() > 0 ? 1.0 / inst.total_mean_work() : 1.0;
    const double count_scale = norm && inst.num_operations() > 0 ? 1.0 / inst.num_operations() : 1.0;

    StateGraph g;

    // Remaining-work suffix sums per job, indexed by operation.
    std::vector<std::vector<double>> suffix(static_cast<std::size_t>(n_jobs));
    for (int j = 0; j < n_jobs; ++j) {
        const auto& ops = inst.job(j).operations;
        auto& s = suffix[static_cast<std::size_t>(j)];
        s.assign(ops.size() + 1, 0.0);
        for (int k = static_cast<int>(ops.size()) - 1; k >= 0; --k)
            s[static_cast<std::size_t>(k)] = s[static_cast<std::size_t>(k) + 1] + ops[static_cast<std::size_t>(k)].mean_time();
    }

    // Machine-side counts over all unscheduled operations.
    std::vector<int> assignable(static_cast<std::size_t>(n_machines), 0);
    std::vector<int> unique(static_cast<std::size_t>(n_machines), 0);
    for (int j = 0; j < n_jobs; ++j) {
        for (int k = next_op(j); k < inst.job_length(j); ++k) {
            const auto& op = inst.op({j, k});
            for (const auto& o : op.options) ++assignable[static_cast<std::size_t>(o.machine)];
            if (op.options.size() == 1) ++unique[static_cast<std::size_t>(op.options.front().machine)];
        }
    }

    // Action edges and the earliest start t_e.
    Time earliest = std::numeric_limits<Time>::max();
    for (int j = 0; j < n_jobs; ++j) {
        if (next_op(j) >= inst.job_length(j)) continue;
        const auto& op = inst.op({j, next_op(j)});
        for (const auto& o : op.options) {
            const Time start = std::max(machine_free(o.machine), job_ready(j));
            g.jm_edges.push_back({j, o.machine, start, o.duration});
            earliest = std::min(earliest, start);
        }
    }
    clock_ = g.jm_edges.empty() ? partial_makespan_ : earliest;
    for (const auto& e : g.jm_edges) g.jm_legal.push_back(within_mask(e.start, clock_, params_.mask_factor) ? 1 : 0);

    // Operation nodes.
    for (int j = 0; j < n_jobs; ++j) {
        const int first = next_op(j);
        const int last = std::min(inst.job_length(j), first + params_.visible_ops_per_job);
        for (int k = first; k < last; ++k) {
            g.op_ids.push_back({j, k});
            const double ready = k == first ? 1.0 : 0.0;
            g.op_features.insert(g.op_features.end(),
                                 {ready, static_cast<double>(job_ready(j)) * time_scale,
                                  static_cast<double>(inst.job_length(j) - k) * count_scale,
                                  suffix[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)] * time_scale});
        }
    }

    // Operation edges.
    for (int node = 0; node < g.num_ops(); ++node) {
        const OpId id = g.op_ids[static_cast<std::size_t>(node)];
        const auto& op = inst.op(id);
        const double rest = suffix[static_cast<std::size_t>(id.job)][static_cast<std::size_t>(id.index)];
        for (const auto& o : op.options) {
            const double p = static_cast<double>(o.duration);
            g.om_op.push_back(node);
            g.om_machine.push_back(o.machine);
            g.om_features.insert(g.om_features.end(),
                                 {p * time_scale, p / static_cast<double>(op.options.size()) * time_scale,
                                  p / assignable[static_cast<std::size_t>(o.machine)] * time_scale, p / rest});
        }
        g.oj_op.push_back(node);
        g.oj_job.push_back(id.job);
        if (id.index > next_op(id.job)) {
            g.oo_src.push_back(node - 1);
            g.oo_dst.push_back(node);
        }
    }

    // Job nodes.
    for (int j = 0; j < n_jobs; ++j) {
        const int first = next_op(j);
        const bool done = first >= inst.job_length(j);
        const double rest = suffix[static_cast<std::size_t>(j)][static_cast<std::size_t>(first)];
        double mean_first = 0.0;
        double min_first = 0.0;
        if (!done) {
            const auto& op = inst.op({j, first});
            mean_first = op.mean_time();
            min_first = static_cast<double>(op.min_time());
        }
        g.job_features.insert(g.job_features.end(),
                              {done ? 1.0 : 0.0, static_cast<double>(job_ready(j)) * time_scale,
                               static_cast<double>(inst.job_length(j) - first) * count_scale, rest * time_scale,
                               mean_first * time_scale, min_first * time_scale, done ? 0.0 : mean_first / rest});
    }

    // Machine nodes.
    std::vector<int> immediate(static_cast<std::size_t>(n_machines), 0);
    std::vector<double> opt_min(static_cast<std::size_t>(n_machines), 0.0);
    std::vector<double> opt_sum(static_cast<std::size_t>(n_machines), 0.0);
    for (const auto& e : g.jm_edges) {
        auto m = static_cast<std::size_t>(e.machine);
        const double p = static_cast<double>(e.duration);
        opt_min[m] = immediate[m] == 0 ? p : std::min(opt_min[m], p);
        opt_sum[m] += p;
        ++immediate[m];
    }
    for (int m = 0; m < n_machines; ++m) {
        const auto mi = static_cast<std::size_t>(m);
        const double final_time = static_cast<double>(machine_free(m));
        const double mean_opt = immediate[mi] ? opt_sum[mi] / immediate[mi] : 0.0;
        const double utilization = machine_free(m) > 0 ? static_cast<double>(machine_busy(m)) / final_time : 0.0;
        g.machine_features.insert(
            g.machine_features.end(),
            {assignable[mi] * count_scale, unique[mi] * count_scale, immediate[mi] * count_scale,
             final_time * time_scale, opt_min[mi] * time_scale, mean_opt * time_scale,
             (final_time - static_cast<double>(clock_)) * time_scale, machine_free(m) <= clock_ ? 1.0 : 0.0,
             utilization});
    }

    // Job-machine edge features, computed for the job's first pending operation.
    for (const auto& e : g.jm_edges) {
        const auto& op = inst.op({e.job, next_op(e.job)});
        const double p = static_cast<double>(e.duration);
        const double rest = suffix[static_cast<std::size_t>(e.job)][static_cast<std::size_t>(next_op(e.job))];
        const double idle = static_cast<double>(std::max<Time>(0, job_ready(e.job) - machine_free(e.machine)));
        g.jm_features.insert(g.jm_features.end(),
                             {p * time_scale, p / static_cast<double>(op.options.size()) * time_scale,
                              p / assignable[static_cast<std::size_t>(e.machine)] * time_scale, p / rest,
                              idle * time_scale});
    }

    graph_ = std::move(g);
}

std::uint64_t HeteroState::digest() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 1099511628211ULL;
        }
    };
    for (const auto& [op, a] : schedule_) {
        const std::int64_t fields[] = {op.job, op.index, a.machine, a.start, a.end};
        mix(fields, sizeof fields);
    }
    for (const auto* v : {&graph_.op_features, &graph_.job_features, &graph_.machine_features, &graph_.om_features,
                          &graph_.jm_features})
        mix(v->data(), v->size() * sizeof(double));
    mix(graph_.jm_legal.data(), graph_.jm_legal.size());
    return h;
}

HeteroState HeteroState::with_extra_jm_feature(const std::vector<double>& values) const {
    if (augmented()) throw EnvError("job-machine edges already carry an extra feature");
    if (values.size() != graph_.jm_edges.size())
        throw EnvError("extra feature has " + std::to_string(values.size()) + " values for " +
                       std::to_string(graph_.jm_edges.size()) + " edges");
    HeteroState out = *this;
    auto& g = out.graph_;
    std::vector<double> widened;
    widened.reserve(g.jm_features.size() + values.size());
    for (std::size_t e = 0; e < values.size(); ++e) {
        const auto row = g.jm_features.begin() + static_cast<std::ptrdiff_t>(e * kJobMachineFeatures);
        widened.insert(widened.end(), row, row + kJobMachineFeatures);
        widened.push_back(values[e]);
    }
    g.jm_features = std::move(widened);
    g.jm_width = kJobMachineFeatures + 1;
    return out;
}

bool HeteroState::same_as(const HeteroState& other) const {
    const bool same_instance = instance_ == other.instance_ || (instance_->name() == other.instance_->name() &&
                                                                instance_->same_structure(*other.instance_));
    return same_instance && params_ == other.params_ && next_op_ == other.next_op_ &&
           job_ready_ == other.job_ready_ && machine_free_ == other.machine_free_ &&
           machine_busy_ == other.machine_busy_ && schedule_ == other.schedule_ && clock_ == other.clock_ &&
           partial_makespan_ == other.partial_makespan_ && graph_ == other.graph_;
}

HeteroState reset(std::shared_ptr<const Instance> instance, const EnvParams& params) {
    if (!instance) throw std::invalid_argument("reset: null instance");
    params.validate();
    HeteroState s;
    s.instance_ = std::move(instance);
    s.params_ = params;
    s.next_op_.assign(static_cast<std::size_t>(s.instance_->num_jobs()), 0);
    s.job_ready_.assign(static_cast<std::size_t>(s.instance_->num_jobs()), 0);
    s.machine_free_.assign(static_cast<std::size_t>(s.instance_->num_machines()), 0);
    s.machine_busy_.assign(static_cast<std::size_t>(s.instance_->num_machines()), 0);
    s.build_graph();
    return s;
}

HeteroState rebuild(std::shared_ptr<const Instance> instance, const EnvParams& params, const Schedule& partial) {
    HeteroState s = reset(std::move(instance), params);
    const Instance& inst = *s.instance_;
    const auto violations = validate_schedule(inst, partial, false);
    if (!violations.empty()) throw EnvError("rebuild: infeasible partial schedule: " + violations.front().detail);
    for (const auto& [op, a] : partial) {
        auto& next = s.next_op_[static_cast<std::size_t>(op.job)];
        next = std::max(next, op.index + 1);
        auto& ready = s.job_ready_[static_cast<std::size_t>(op.job)];
        ready = std::max(ready, a.end);
        auto& free = s.machine_free_[static_cast<std::size_t>(a.machine)];
        free = std::max(free, a.end);
        s.machine_busy_[static_cast<std::size_t>(a.machine)] += a.end - a.start;
        s.partial_makespan_ = std::max(s.partial_makespan_, a.end);
    }
    s.schedule_ = partial;
    s.build_graph();
    return s;
}

std::vector<ActionEdge> legal_actions(const HeteroState& state) {
    if (state.terminal()) throw EnvError("legal_actions on a terminal state");
    std::vector<ActionEdge> out;
    const auto& g = state.graph();
    for (std::size_t e = 0; e < g.jm_edges.size(); ++e)
        if (g.jm_legal[e]) out.push_back(g.jm_edges[e]);
    return out;
}

StepResult step(const HeteroState& state, const AssignmentSet& actions) {
    if (state.terminal()) throw EnvError("step on a terminal state");
    if (actions.empty()) throw EnvError("empty assignment set");
    const auto& g = state.graph();
    std::set<int> jobs;
    std::set<int> machines;
    for (const auto& a : actions) {
        if (!jobs.insert(a.job).second) throw EnvError("job " + std::to_string(a.job) + " assigned twice");
        if (!machines.insert(a.machine).second)
            throw EnvError("machine " + std::to_string(a.machine) + " assigned twice");
        bool found = false;
        for (std::size_t e = 0; e < g.jm_edges.size(); ++e) {
            const auto& cand = g.jm_edges[e];
            if (cand.job != a.job || cand.machine != a.machine) continue;
            if (!g.jm_legal[e]) throw EnvError("edge " + edge_name(a) + " is masked");
            if (cand != a) throw EnvError("edge " + edge_name(a) + " has stale start or duration");
            found = true;
            break;
        }
        if (!found) throw EnvError("edge " + edge_name(a) + " does not exist in this state");
    }

    StepResult r{state, 0, false};
    HeteroState& s = r.state;
    for (const auto& a : actions) {
        const auto j = static_cast<std::size_t>(a.job);
        const auto m = static_cast<std::size_t>(a.machine);
        const Time end = a.start + a.duration;
        s.schedule_.assign({a.job, s.next_op_[j]}, {a.machine, a.start, end});
        ++s.next_op_[j];
        s.job_ready_[j] = end;
        s.machine_free_[m] = end;
        s.machine_busy_[m] += a.duration;
        s.partial_makespan_ = std::max(s.partial_makespan_, end);
    }
    s.build_graph();
    r.reward = state.partial_makespan() - s.partial_makespan();
    r.terminal = s.terminal();
    return r;
}

bool is_terminal(const HeteroState& state) { return state.terminal(); }

AssignmentSet select_compatible_set(std::vector<std::pair<ActionEdge, double>> ranked) {
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        if (a.first.job != b.first.job) return a.first.job < b.first.job;
        return a.first.machine < b.first.machine;
    });
    AssignmentSet out;
    std::set<int> jobs;
    std::set<int> machines;
    for (const auto& [edge, score] : ranked) {
        if (jobs.count(edge.job) || machines.count(edge.machine)) continue;
        jobs.insert(edge.job);
        machines.insert(edge.machine);
        out.push_back(edge);
    }
    return out;
}

void write_trace_record(std::ostream& out, int step_index, const HeteroState& before, const AssignmentSet& actions,
                        Time reward, const HeteroState& after) {
    nlohmann::json rec;
    rec["step"] = step_index;
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(before.digest()));
    rec["digest"] = hex;
    auto& list = rec["actions"] = nlohmann::json::array();
    for (const auto& a : actions) list.push_back({a.job, a.machine, a.start, a.duration});
    rec["reward"] = reward;
    rec["clock"] = after.clock();
    rec["terminal"] = after.terminal();
    out << rec.dump() << '\n';
}

}  // namespace shopgraph
