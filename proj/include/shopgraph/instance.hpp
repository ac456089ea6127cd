#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace shopgraph {

/// Integer time units. All benchmark formats use integral processing times.
using Time = std::int64_t;

struct Option {
    int machine = 0;
    Time duration = 0;

    friend bool operator==(const Option&, const Option&) = default;
};

struct Operation {
    std::vector<Option> options;

    Time min_time() const;
    double mean_time() const;
    std::optional<Time> time_on(int machine) const;
    bool eligible(int machine) const { return time_on(machine).has_value(); }

    friend bool operator==(const Operation&, const Operation&) = default;
};

struct Job {
    std::vector<Operation> operations;

    friend bool operator==(const Job&, const Job&) = default;
};

/// Identifies operation `index` (0-based, precedence order) of job `job`.
struct OpId {
    int job = 0;
    int index = 0;

    friend auto operator<=>(const OpId&, const OpId&) = default;
};

class InstanceError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A flexible job-shop instance. Classic job-shop instances are stored in the
/// same model with exactly one option per operation.
class Instance {
public:
    Instance() = default;
    /// Throws InstanceError when an invariant is violated.
    Instance(std::string name, int num_machines, std::vector<Job> jobs);

    const std::string& name() const { return name_; }
    void set_name(std::string name) { name_ = std::move(name); }

    int num_jobs() const { return static_cast<int>(jobs_.size()); }
    int num_machines() const { return num_machines_; }
    int num_operations() const { return num_operations_; }

    const std::vector<Job>& jobs() const { return jobs_; }
    const Job& job(int j) const { return jobs_.at(static_cast<std::size_t>(j)); }
    const Operation& op(OpId id) const;
    int job_length(int j) const { return static_cast<int>(job(j).operations.size()); }

    /// Dense 0-based index over all operations, jobs in order.
    int global_index(OpId id) const { return offsets_[static_cast<std::size_t>(id.job)] + id.index; }

    bool is_jssp() const;

    /// Sum over operations of the mean option time. Used as the time scale for
    /// feature and reward normalization.
    double total_mean_work() const { return total_mean_work_; }

    /// Structural equality; the name is not compared.
    bool same_structure(const Instance& other) const {
        return num_machines_ == other.num_machines_ && jobs_ == other.jobs_;
    }

private:
    std::string name_;
    int num_machines_ = 0;
    std::vector<Job> jobs_;
    std::vector<int> offsets_;
    int num_operations_ = 0;
    double total_mean_work_ = 0.0;
};

struct Assignment {
    int machine = 0;
    Time start = 0;
    Time end = 0;

    friend bool operator==(const Assignment&, const Assignment&) = default;
};

/// Operation -> (machine, start, end). Partial schedules are allowed.
class Schedule {
public:
    void assign(OpId op, Assignment a) { assignments_[op] = a; }
    void erase(OpId op) { assignments_.erase(op); }
    bool contains(OpId op) const { return assignments_.count(op) != 0; }
    const Assignment& at(OpId op) const { return assignments_.at(op); }
    std::size_t size() const { return assignments_.size(); }
    bool empty() const { return assignments_.empty(); }

    const std::map<OpId, Assignment>& assignments() const { return assignments_; }
    auto begin() const { return assignments_.begin(); }
    auto end() const { return assignments_.end(); }

    friend bool operator==(const Schedule&, const Schedule&) = default;

private:
    std::map<OpId, Assignment> assignments_;
};

bool is_complete(const Instance& instance, const Schedule& schedule);

/// Max end time over all assignments (0 for an empty schedule).
Time makespan(const Schedule& schedule);

/// Makespan of a complete schedule; throws std::invalid_argument otherwise.
Time makespan(const Instance& instance, const Schedule& schedule);

enum class ViolationKind {
    UnknownOperation,
    IneligibleMachine,
    WrongDuration,
    NegativeStart,
    MachineOverlap,
    PrecedenceViolated,
    MissingOperation,
};

const char* to_string(ViolationKind kind);

struct Violation {
    ViolationKind kind;
    OpId op;
    std::string detail;
};

/// Returns every constraint violation found; an empty list means the schedule
/// is feasible. With `require_complete` unset only scheduled operations are
/// checked (used for partial schedules).
std::vector<Violation> validate_schedule(const Instance& instance, const Schedule& schedule,
                                         bool require_complete = true);

/// Percentage excess of `achieved` over `reference`. Throws std::domain_error
/// when reference <= 0.
double optimal_gap(double achieved, double reference);

/// max(longest job by minimum times, largest unavoidable machine load).
Time lower_bound(const Instance& instance);

}  // namespace shopgraph
