#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "shopgraph/env.hpp"
#include "shopgraph/instance.hpp"

namespace shopgraph {

/// Which schedules the branch-and-bound may build.
enum class SearchSpace {
    /// Every semi-active schedule: the true optimum.
    Unrestricted,
    /// Only schedules the environment can produce under its action mask.
    Reachable,
};

struct SolveResult {
    Schedule schedule;
    Time makespan = 0;
    /// True iff the search finished within the node budget.
    bool optimal = false;
    std::int64_t nodes = 0;
};

inline constexpr std::int64_t kDefaultNodeLimit = 2'000'000;

/// Depth-first branch-and-bound over chronological insertion orders, pruned by
/// a left-shift dominance rule, a lower bound and a transposition table.
SolveResult solve_exact(const Instance& instance, std::int64_t node_limit = kDefaultNodeLimit);

/// Completes the partial schedule of `state` optimally within `space`. The
/// returned schedule contains the already scheduled operations.
SolveResult solve_from(const HeteroState& state, SearchSpace space, std::int64_t node_limit = kDefaultNodeLimit);

enum class DispatchRule {
    Spt,   // shortest processing time
    Mwkr,  // most work remaining
};

const char* to_string(DispatchRule rule);

/// Runs the environment with rule-based edge scores until terminal.
Schedule solve_dispatch(const Instance& instance, DispatchRule rule, const EnvParams& env = {});
Schedule dispatch_from(const HeteroState& state, DispatchRule rule);

/// Per-legal-edge floor of the behavior distribution before renormalizing.
inline constexpr double kBehaviorFloor = 1e-6;

/// One offline-dataset tuple. `behavior` is indexed like the legal edges of
/// `state` (job-machine edges with jm_legal set, in graph order).
struct Transition {
    std::string instance_ref;
    int step = 0;
    HeteroState state;
    AssignmentSet action_set;
    std::vector<double> behavior;
    Time reward = 0;
    HeteroState next_state;
    bool terminal = false;
    /// 1 = expert generated, 0 = random.
    int delta = 1;
};

/// Uniform over the chosen edges, kBehaviorFloor elsewhere, renormalized.
std::vector<double> behavior_distribution(const HeteroState& state, const AssignmentSet& chosen);

class UnreachableSchedule : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ReplayOptions {
    /// Group every ready assignment into one step; otherwise one per step.
    bool group = true;
};

/// Replays `schedule` (which must extend the partial schedule of `start`)
/// through the environment. Each step takes the schedule's assignments whose
/// operations are next on both their job and their machine, are legal, and
/// start exactly when the schedule says. Throws UnreachableSchedule if the
/// environment cannot reproduce the schedule.
std::vector<Transition> replay_schedule(const HeteroState& start, const Schedule& schedule,
                                        ReplayOptions options = {});

/// Full replay from reset; grouped first, one-per-step as a fallback.
std::vector<Transition> schedule_to_trajectory(std::shared_ptr<const Instance> instance, const Schedule& schedule,
                                               const EnvParams& env = {});

}  // namespace shopgraph
