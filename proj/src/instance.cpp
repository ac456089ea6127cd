#include "shopgraph/instance.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <tuple>

namespace shopgraph {

Time Operation::min_time() const {
    Time best = options.front().duration;
    for (const auto& o : options) best = std::min(best, o.duration);
    return best;
}

double Operation::mean_time() const {
    double sum = 0.0;
    for (const auto& o : options) sum += static_cast<double>(o.duration);
    return sum / static_cast<double>(options.size());
}

std::optional<Time> Operation::time_on(int machine) const {
    for (const auto& o : options)
        if (o.machine == machine) return o.duration;
    return std::nullopt;
}

Instance::Instance(std::string name, int num_machines, std::vector<Job> jobs)
    : name_(std::move(name)), num_machines_(num_machines), jobs_(std::move(jobs)) {
    if (num_machines_ < 0) throw InstanceError("negative machine count");
    offsets_.reserve(jobs_.size());
    for (std::size_t j = 0; j < jobs_.size(); ++j) {
        const auto& ops = jobs_[j].operations;
        if (ops.empty()) throw InstanceError("job " + std::to_string(j) + " has no operations");
        offsets_.push_back(num_operations_);
        num_operations_ += static_cast<int>(ops.size());
        for (std::size_t k = 0; k < ops.size(); ++k) {
            const auto where = "job " + std::to_string(j) + " operation " + std::to_string(k);
            if (ops[k].options.empty()) throw InstanceError(where + " has no eligible machine");
            std::set<int> seen;
            for (const auto& o : ops[k].options) {
                if (o.machine < 0 || o.machine >= num_machines_)
                    throw InstanceError(where + ": machine index " + std::to_string(o.machine) +
                                        " out of range");
                if (o.duration <= 0) throw InstanceError(where + ": non-positive processing time");
                if (!seen.insert(o.machine).second)
                    throw InstanceError(where + ": duplicate machine " + std::to_string(o.machine));
            }
            total_mean_work_ += ops[k].mean_time();
        }
    }
}

const Operation& Instance::op(OpId id) const {
    return job(id.job).operations.at(static_cast<std::size_t>(id.index));
}

bool Instance::is_jssp() const {
    for (const auto& j : jobs_)
        for (const auto& o : j.operations)
            if (o.options.size() != 1) return false;
    return true;
}

bool is_complete(const Instance& instance, const Schedule& schedule) {
    if (schedule.size() != static_cast<std::size_t>(instance.num_operations())) return false;
    for (int j = 0; j < instance.num_jobs(); ++j)
        for (int k = 0; k < instance.job_length(j); ++k)
            if (!schedule.contains({j, k})) return false;
    return true;
}

Time makespan(const Schedule& schedule) {
    Time best = 0;
    for (const auto& [op, a] : schedule) best = std::max(best, a.end);
    return best;
}

Time makespan(const Instance& instance, const Schedule& schedule) {
    if (!is_complete(instance, schedule))
        throw std::invalid_argument("makespan of an incomplete schedule (" + std::to_string(schedule.size()) +
                                    " of " + std::to_string(instance.num_operations()) + " operations)");
    return makespan(schedule);
}

const char* to_string(ViolationKind kind) {
    switch (kind) {
        case ViolationKind::UnknownOperation: return "unknown-operation";
        case ViolationKind::IneligibleMachine: return "ineligible-machine";
        case ViolationKind::WrongDuration: return "wrong-duration";
        case ViolationKind::NegativeStart: return "negative-start";
        case ViolationKind::MachineOverlap: return "machine-overlap";
        case ViolationKind::PrecedenceViolated: return "precedence";
        case ViolationKind::MissingOperation: return "missing-operation";
    }
    return "?";
}

namespace {

std::string op_name(OpId op) {
    return "o(" + std::to_string(op.job) + "," + std::to_string(op.index) + ")";
}

}  // namespace

std::vector<Violation> validate_schedule(const Instance& instance, const Schedule& schedule,
                                         bool require_complete) {
    std::vector<Violation> out;
    std::vector<std::vector<std::pair<OpId, Assignment>>> per_machine(
        static_cast<std::size_t>(instance.num_machines()));

    for (const auto& [op, a] : schedule) {
        if (op.job < 0 || op.job >= instance.num_jobs() || op.index < 0 ||
            op.index >= instance.job_length(op.job)) {
            out.push_back({ViolationKind::UnknownOperation, op, op_name(op) + " not in instance"});
            continue;
        }
        if (a.start < 0)
            out.push_back({ViolationKind::NegativeStart, op, op_name(op) + " starts before 0"});
        const auto time = instance.op(op).time_on(a.machine);
        if (!time) {
            out.push_back({ViolationKind::IneligibleMachine, op,
                           op_name(op) + " cannot run on machine " + std::to_string(a.machine)});
            continue;
        }
        if (a.end - a.start != *time)
            out.push_back({ViolationKind::WrongDuration, op,
                           op_name(op) + " lasts " + std::to_string(a.end - a.start) + ", expected " +
                               std::to_string(*time)});
        per_machine[static_cast<std::size_t>(a.machine)].emplace_back(op, a);
    }

    for (std::size_t m = 0; m < per_machine.size(); ++m) {
        auto& lane = per_machine[m];
        std::sort(lane.begin(), lane.end(), [](const auto& x, const auto& y) {
            return std::tie(x.second.start, x.second.end, x.first) < std::tie(y.second.start, y.second.end, y.first);
        });
        // Compare against every earlier interval so nested intervals are caught too.
        for (std::size_t i = 1; i < lane.size(); ++i) {
            for (std::size_t k = 0; k < i; ++k) {
                if (lane[k].second.end > lane[i].second.start) {
                    out.push_back({ViolationKind::MachineOverlap, lane[i].first,
                                   op_name(lane[i].first) + " overlaps " + op_name(lane[k].first) + " on machine " +
                                       std::to_string(m)});
                    break;
                }
            }
        }
    }

    for (int j = 0; j < instance.num_jobs(); ++j) {
        for (int k = 0; k < instance.job_length(j); ++k) {
            const OpId op{j, k};
            if (!schedule.contains(op)) {
                if (require_complete)
                    out.push_back({ViolationKind::MissingOperation, op, op_name(op) + " not scheduled"});
                continue;
            }
            if (k == 0) continue;
            const OpId prev{j, k - 1};
            if (!schedule.contains(prev)) {
                out.push_back({ViolationKind::PrecedenceViolated, op,
                               op_name(op) + " scheduled before its predecessor"});
            } else if (schedule.at(prev).end > schedule.at(op).start) {
                out.push_back({ViolationKind::PrecedenceViolated, op,
                               op_name(op) + " starts before " + op_name(prev) + " ends"});
            }
        }
    }
    return out;
}

double optimal_gap(double achieved, double reference) {
    if (!(reference > 0.0)) throw std::domain_error("optimal_gap: reference makespan must be positive");
    return (achieved / reference - 1.0) * 100.0;
}

Time lower_bound(const Instance& instance) {
    Time bound = 0;
    std::vector<Time> unavoidable(static_cast<std::size_t>(instance.num_machines()), 0);
    for (const auto& job : instance.jobs()) {
        Time length = 0;
        for (const auto& op : job.operations) {
            length += op.min_time();
            if (op.options.size() == 1)
                unavoidable[static_cast<std::size_t>(op.options.front().machine)] += op.options.front().duration;
        }
        bound = std::max(bound, length);
    }
    for (Time load : unavoidable) bound = std::max(bound, load);
    return bound;
}

}  // namespace shopgraph
