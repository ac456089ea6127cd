#include "shopgraph/expert.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <unordered_map>

namespace shopgraph {
namespace {

struct Candidate {
    int job;
    int machine;
    Time start;
    Time end;
};

struct KeyHash {
    std::size_t operator()(const std::vector<Time>& key) const noexcept {
        std::uint64_t h = 1469598103934665603ULL;
        for (Time v : key) {
            h ^= static_cast<std::uint64_t>(v);
            h *= 1099511628211ULL;
        }
        return static_cast<std::size_t>(h);
    }
};

class BranchAndBound {
public:
    static constexpr std::size_t kMaxTableEntries = 1u << 19;

    BranchAndBound(const Instance& inst, SearchSpace space, double mask_factor, std::int64_t node_limit)
        : inst_(inst), space_(space), mask_factor_(mask_factor), node_limit_(node_limit) {
        const auto n = static_cast<std::size_t>(inst.num_jobs());
        min_suffix_.resize(n);
        for (std::size_t j = 0; j < n; ++j) {
            const auto& ops = inst.jobs()[j].operations;
            auto& s = min_suffix_[j];
            s.assign(ops.size() + 1, 0);
            for (std::size_t k = ops.size(); k-- > 0;) s[k] = s[k + 1] + ops[k].min_time();
        }
    }

    void seed(const HeteroState& state, const Schedule& incumbent) {
        next_.resize(static_cast<std::size_t>(inst_.num_jobs()));
        ready_.resize(next_.size());
        for (int j = 0; j < inst_.num_jobs(); ++j) {
            next_[static_cast<std::size_t>(j)] = state.next_op(j);
            ready_[static_cast<std::size_t>(j)] = state.job_ready(j);
        }
        free_.resize(static_cast<std::size_t>(inst_.num_machines()));
        for (int m = 0; m < inst_.num_machines(); ++m) free_[static_cast<std::size_t>(m)] = state.machine_free(m);
        current_ = state.partial_schedule();
        best_ = incumbent;
        best_makespan_ = makespan(incumbent);
        remaining_ = inst_.num_operations() - state.scheduled_count();
    }

    SolveResult run(Time start_makespan) {
        exhausted_ = true;
        if (remaining_ > 0) dfs(start_makespan, 0, -1);
        SolveResult r;
        r.schedule = best_;
        r.makespan = best_makespan_;
        r.optimal = exhausted_;
        r.nodes = nodes_;
        return r;
    }

private:
    // Valid for every completion whose operations all start at or after `floor`.
    Time bound(Time makespan_so_far, Time floor) const {
        Time lb = makespan_so_far;
        const auto n_m = free_.size();
        std::vector<Time> unavoidable(n_m, 0);
        Time total = 0;
        for (std::size_t j = 0; j < next_.size(); ++j) {
            const int k = next_[j];
            const auto& ops = inst_.jobs()[j].operations;
            if (k >= static_cast<int>(ops.size())) continue;
            lb = std::max(lb, std::max(ready_[j], floor) + min_suffix_[j][static_cast<std::size_t>(k)]);
            total += min_suffix_[j][static_cast<std::size_t>(k)];
            for (std::size_t q = static_cast<std::size_t>(k); q < ops.size(); ++q)
                if (ops[q].options.size() == 1)
                    unavoidable[static_cast<std::size_t>(ops[q].options.front().machine)] += ops[q].options.front().duration;
        }
        Time free_sum = 0;
        for (std::size_t m = 0; m < n_m; ++m) {
            const Time f = std::max(free_[m], floor);
            free_sum += f;
            if (unavoidable[m] > 0) lb = std::max(lb, f + unavoidable[m]);
        }
        const auto machines = static_cast<Time>(n_m);
        if (machines > 0) lb = std::max(lb, (free_sum + total + machines - 1) / machines);
        return lb;
    }

    std::vector<Candidate> candidates() const {
        std::vector<Candidate> out;
        for (std::size_t j = 0; j < next_.size(); ++j) {
            const int k = next_[j];
            const auto& ops = inst_.jobs()[j].operations;
            if (k >= static_cast<int>(ops.size())) continue;
            for (const auto& o : ops[static_cast<std::size_t>(k)].options) {
                const Time s = std::max(ready_[j], free_[static_cast<std::size_t>(o.machine)]);
                out.push_back({static_cast<int>(j), o.machine, s, s + o.duration});
            }
        }
        return out;
    }

    std::vector<Time> key(Time last_start, int last_job) const {
        std::vector<Time> k;
        k.reserve(next_.size() * 2 + free_.size() + 2);
        for (int v : next_) k.push_back(v);
        for (Time v : ready_) k.push_back(v);
        for (Time v : free_) k.push_back(v);
        if (space_ == SearchSpace::Unrestricted) {
            k.push_back(last_start);
            k.push_back(last_job);
        }
        return k;
    }

    void dfs(Time makespan_so_far, Time last_start, int last_job) {
        if (nodes_ >= node_limit_) {
            exhausted_ = false;
            return;
        }
        ++nodes_;
        if (remaining_ == 0) {
            if (makespan_so_far < best_makespan_) {
                best_makespan_ = makespan_so_far;
                best_ = current_;
            }
            return;
        }

        auto cands = candidates();
        Time floor = last_start;
        if (space_ == SearchSpace::Reachable) {
            Time earliest = std::numeric_limits<Time>::max();
            for (const auto& c : cands) earliest = std::min(earliest, c.start);
            floor = earliest;
            std::erase_if(cands, [&](const Candidate& c) {
                return static_cast<double>(c.start) > static_cast<double>(earliest) * mask_factor_;
            });
        } else {
            // Chronological order with job index as tie-break, plus the
            // left-shift rule: an operation may not start at or after the
            // completion of another job's candidate.
            Time first = std::numeric_limits<Time>::max();
            Time second = std::numeric_limits<Time>::max();
            int first_job = -1;
            for (const auto& c : cands) {
                if (c.end < first) {
                    if (c.job != first_job) second = first;
                    first = c.end;
                    first_job = c.job;
                } else if (c.job != first_job && c.end < second) {
                    second = c.end;
                }
            }
            std::erase_if(cands, [&](const Candidate& c) {
                if (c.start < last_start || (c.start == last_start && c.job <= last_job)) return true;
                const Time threshold = c.job == first_job ? second : first;
                return c.start >= threshold;
            });
        }
        if (bound(makespan_so_far, floor) >= best_makespan_) return;

        const auto k = key(last_start, last_job);
        if (auto it = seen_.find(k); it != seen_.end() && it->second <= makespan_so_far) return;
        if (seen_.size() < kMaxTableEntries) seen_[k] = makespan_so_far;

        std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
            return std::tie(a.end, a.start, a.job, a.machine) < std::tie(b.end, b.start, b.job, b.machine);
        });

        for (const auto& c : cands) {
            const auto j = static_cast<std::size_t>(c.job);
            const auto m = static_cast<std::size_t>(c.machine);
            const OpId op{c.job, next_[j]};
            const Time saved_ready = ready_[j];
            const Time saved_free = free_[m];
            ready_[j] = c.end;
            free_[m] = c.end;
            ++next_[j];
            --remaining_;
            current_.assign(op, {c.machine, c.start, c.end});
            const Time ms = std::max(makespan_so_far, c.end);
            if (ms < best_makespan_) dfs(ms, c.start, c.job);
            current_.erase(op);
            ++remaining_;
            --next_[j];
            ready_[j] = saved_ready;
            free_[m] = saved_free;
            if (nodes_ >= node_limit_) {
                exhausted_ = false;
                return;
            }
        }
    }

    const Instance& inst_;
    SearchSpace space_;
    double mask_factor_;
    std::int64_t node_limit_;
    std::vector<std::vector<Time>> min_suffix_;

    std::vector<int> next_;
    std::vector<Time> ready_;
    std::vector<Time> free_;
    Schedule current_;
    int remaining_ = 0;

    Schedule best_;
    Time best_makespan_ = std::numeric_limits<Time>::max();
    std::int64_t nodes_ = 0;
    bool exhausted_ = true;
    std::unordered_map<std::vector<Time>, Time, KeyHash> seen_;
};

double remaining_work(const Instance& inst, int job, int from) {
    double w = 0.0;
    for (int k = from; k < inst.job_length(job); ++k) w += inst.op({job, k}).mean_time();
    return w;
}

}  // namespace

const char* to_string(DispatchRule rule) {
    switch (rule) {
        case DispatchRule::Spt: return "spt";
        case DispatchRule::Mwkr: return "mwkr";
    }
    return "?";
}

Schedule dispatch_from(const HeteroState& state, DispatchRule rule) {
    HeteroState s = state;
    while (!s.terminal()) {
        std::vector<std::pair<ActionEdge, double>> ranked;
        for (const auto& e : legal_actions(s)) {
            const double score = rule == DispatchRule::Spt
                                     ? -static_cast<double>(e.duration)
                                     : remaining_work(s.instance(), e.job, s.next_op(e.job));
            ranked.emplace_back(e, score);
        }
        s = step(s, select_compatible_set(std::move(ranked))).state;
    }
    return s.partial_schedule();
}

Schedule solve_dispatch(const Instance& instance, DispatchRule rule, const EnvParams& env) {
    return dispatch_from(reset(std::make_shared<const Instance>(instance), env), rule);
}

SolveResult solve_from(const HeteroState& state, SearchSpace space, std::int64_t node_limit) {
    Schedule incumbent = dispatch_from(state, DispatchRule::Spt);
    Schedule other = dispatch_from(state, DispatchRule::Mwkr);
    if (makespan(other) < makespan(incumbent)) incumbent = std::move(other);

    BranchAndBound bb(state.instance(), space, state.params().mask_factor, node_limit);
    bb.seed(state, incumbent);
    return bb.run(state.partial_makespan());
}

SolveResult solve_exact(const Instance& instance, std::int64_t node_limit) {
    return solve_from(reset(std::make_shared<const Instance>(instance)), SearchSpace::Unrestricted, node_limit);
}

std::vector<double> behavior_distribution(const HeteroState& state, const AssignmentSet& chosen) {
    const auto legal = legal_actions(state);
    std::vector<double> probs(legal.size(), kBehaviorFloor);
    const double share = chosen.empty() ? 0.0 : 1.0 / static_cast<double>(chosen.size());
    for (std::size_t i = 0; i < legal.size(); ++i)
        for (const auto& c : chosen)
            if (c.job == legal[i].job && c.machine == legal[i].machine) probs[i] = share;
    const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
    for (auto& p : probs) p /= total;
    return probs;
}

std::vector<Transition> replay_schedule(const HeteroState& start, const Schedule& schedule, ReplayOptions options) {
    const Instance& inst = start.instance();
    for (const auto& [op, a] : start.partial_schedule())
        if (!schedule.contains(op) || !(schedule.at(op) == a))
            throw UnreachableSchedule("schedule does not extend the start state");
    if (!is_complete(inst, schedule)) throw UnreachableSchedule("schedule is incomplete");

    // Machine sequences ordered by start time.
    std::vector<std::vector<OpId>> sequence(static_cast<std::size_t>(inst.num_machines()));
    for (const auto& [op, a] : schedule) sequence[static_cast<std::size_t>(a.machine)].push_back(op);
    for (auto& seq : sequence)
        std::sort(seq.begin(), seq.end(),
                  [&](const OpId& x, const OpId& y) { return schedule.at(x).start < schedule.at(y).start; });
    std::vector<std::size_t> cursor(sequence.size(), 0);
    for (std::size_t m = 0; m < sequence.size(); ++m)
        while (cursor[m] < sequence[m].size() && start.partial_schedule().contains(sequence[m][cursor[m]])) ++cursor[m];

    std::vector<Transition> out;
    HeteroState s = start;
    while (!s.terminal()) {
        std::vector<ActionEdge> ready;
        for (const auto& e : legal_actions(s)) {
            const OpId op{e.job, s.next_op(e.job)};
            const auto& a = schedule.at(op);
            const auto m = static_cast<std::size_t>(a.machine);
            if (a.machine != e.machine || a.start != e.start) continue;
            if (cursor[m] >= sequence[m].size() || sequence[m][cursor[m]] != op) continue;
            ready.push_back(e);
        }
        if (ready.empty())
            throw UnreachableSchedule("no schedule assignment is legal at clock " + std::to_string(s.clock()));
        std::stable_sort(ready.begin(), ready.end(), [](const ActionEdge& x, const ActionEdge& y) {
            return std::tie(x.start, x.job) < std::tie(y.start, y.job);
        });
        if (!options.group) ready.resize(1);

        Transition t;
        t.step = static_cast<int>(out.size());
        t.state = s;
        t.action_set = ready;
        t.behavior = behavior_distribution(s, ready);
        auto r = step(s, ready);
        t.reward = r.reward;
        t.terminal = r.terminal;
        t.next_state = r.state;
        t.delta = 1;
        for (const auto& e : ready) ++cursor[static_cast<std::size_t>(e.machine)];
        s = std::move(r.state);
        out.push_back(std::move(t));
    }
    return out;
}

std::vector<Transition> schedule_to_trajectory(std::shared_ptr<const Instance> instance, const Schedule& schedule,
                                               const EnvParams& env) {
    const auto violations = validate_schedule(*instance, schedule);
    if (!violations.empty()) throw UnreachableSchedule("invalid schedule: " + violations.front().detail);
    const HeteroState root = reset(std::move(instance), env);
    try {
        return replay_schedule(root, schedule, {true});
    } catch (const UnreachableSchedule&) {
        return replay_schedule(root, schedule, {false});
    }
}

}  // namespace shopgraph
