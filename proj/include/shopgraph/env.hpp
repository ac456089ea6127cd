#pragma once

#include <cstdint>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <utility>
#include <vector>

#include "shopgraph/instance.hpp"

namespace shopgraph {

struct EnvParams {
    /// Operation nodes shown per job, earliest pending first.
    int visible_ops_per_job = 10;
    /// Actions whose start exceeds earliest_start * mask_factor are masked.
    double mask_factor = 1.05;
    /// Divide time features by the instance's total mean work and counts by the
    /// operation count. Off gives raw magnitudes.
    bool normalize_features = true;

    /// Throws std::invalid_argument when out of range.
    void validate() const;

    friend bool operator==(const EnvParams&, const EnvParams&) = default;
};

/// Scheduling the first pending operation of `job` on `machine`.
struct ActionEdge {
    int job = 0;
    int machine = 0;
    Time start = 0;
    Time duration = 0;

    friend bool operator==(const ActionEdge&, const ActionEdge&) = default;
};

/// At most one edge per job and per machine.
using AssignmentSet = std::vector<ActionEdge>;

inline constexpr int kOpFeatures = 4;
inline constexpr int kJobFeatures = 7;
inline constexpr int kMachineFeatures = 9;
inline constexpr int kOpMachineFeatures = 4;
inline constexpr int kJobMachineFeatures = 5;

/// Node and edge tensors of the heterogeneous state graph. Matrices are stored
/// row-major with the widths above. Machine and job nodes are indexed by their
/// instance index; operation nodes by position in `op_ids`.
struct StateGraph {
    std::vector<OpId> op_ids;
    std::vector<double> op_features;
    std::vector<double> job_features;
    std::vector<double> machine_features;

    // machine <-> operation, one entry per (visible operation, eligible machine)
    std::vector<int> om_op;
    std::vector<int> om_machine;
    std::vector<double> om_features;

    // operation -> job
    std::vector<int> oj_op;
    std::vector<int> oj_job;

    // operation -> successor operation within a job
    std::vector<int> oo_src;
    std::vector<int> oo_dst;

    // job <-> machine action edges: every eligible machine of each job's first
    // pending operation. `jm_legal` marks edges that survive masking.
    std::vector<ActionEdge> jm_edges;
    std::vector<std::uint8_t> jm_legal;
    std::vector<double> jm_features;
    int jm_width = kJobMachineFeatures;

    int num_ops() const { return static_cast<int>(op_ids.size()); }
    int num_jm() const { return static_cast<int>(jm_edges.size()); }

    friend bool operator==(const StateGraph&, const StateGraph&) = default;
};

struct StepResult;
class HeteroState;

HeteroState reset(std::shared_ptr<const Instance> instance, const EnvParams& params = {});

/// Reconstructs the state reached after `partial` from scratch. The partial
/// schedule must schedule a precedence prefix of every job.
HeteroState rebuild(std::shared_ptr<const Instance> instance, const EnvParams& params, const Schedule& partial);

/// Applies every assignment at its earliest feasible start. Throws EnvError
/// naming the conflict if the set is empty, repeats a job or machine, or
/// contains an edge that is not legal in `state`.
StepResult step(const HeteroState& state, const AssignmentSet& actions);

/// Immutable MDP state: scheduling progress plus its graph encoding.
class HeteroState {
public:
    const Instance& instance() const { return *instance_; }
    const std::shared_ptr<const Instance>& instance_ptr() const { return instance_; }
    const EnvParams& params() const { return params_; }
    const StateGraph& graph() const { return graph_; }
    const Schedule& partial_schedule() const { return schedule_; }

    int next_op(int job) const { return next_op_[static_cast<std::size_t>(job)]; }
    Time job_ready(int job) const { return job_ready_[static_cast<std::size_t>(job)]; }
    Time machine_free(int machine) const { return machine_free_[static_cast<std::size_t>(machine)]; }
    Time machine_busy(int machine) const { return machine_busy_[static_cast<std::size_t>(machine)]; }

    /// Earliest feasible start over all action edges; makespan once terminal.
    Time clock() const { return clock_; }
    /// C(s): max end time among scheduled operations, 0 if none.
    Time partial_makespan() const { return partial_makespan_; }
    int scheduled_count() const { return static_cast<int>(schedule_.size()); }
    bool terminal() const { return scheduled_count() == instance_->num_operations(); }
    bool augmented() const { return graph_.jm_width != kJobMachineFeatures; }

    /// FNV-1a digest over the schedule and all graph tensors.
    std::uint64_t digest() const;

    /// Copy with one more scalar per job-machine edge. Throws EnvError if the
    /// state already carries an extra column or the size does not match.
    HeteroState with_extra_jm_feature(const std::vector<double>& values) const;

    /// Same instance content and name, same dynamics and same graph, bit for bit.
    bool same_as(const HeteroState& other) const;

private:
    friend HeteroState reset(std::shared_ptr<const Instance>, const EnvParams&);
    friend HeteroState rebuild(std::shared_ptr<const Instance>, const EnvParams&, const Schedule&);
    friend StepResult step(const HeteroState&, const AssignmentSet&);

    void build_graph();

    std::shared_ptr<const Instance> instance_;
    EnvParams params_;
    std::vector<int> next_op_;
    std::vector<Time> job_ready_;
    std::vector<Time> machine_free_;
    std::vector<Time> machine_busy_;
    Schedule schedule_;
    Time clock_ = 0;
    Time partial_makespan_ = 0;
    StateGraph graph_;
};

struct StepResult {
    HeteroState state;
    Time reward = 0;
    bool terminal = false;
};

class EnvError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Unmasked action edges. Throws EnvError on a terminal state.
std::vector<ActionEdge> legal_actions(const HeteroState& state);

bool is_terminal(const HeteroState& state);

/// Greedy matching by descending score; ties go to the lower job, then the
/// lower machine.
AssignmentSet select_compatible_set(std::vector<std::pair<ActionEdge, double>> ranked);

/// One JSON object per line: step, digest, actions, reward, clock, terminal.
void write_trace_record(std::ostream& out, int step_index, const HeteroState& before, const AssignmentSet& actions,
                        Time reward, const HeteroState& after);

}  // namespace shopgraph
