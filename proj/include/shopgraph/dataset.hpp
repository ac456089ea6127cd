#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "shopgraph/env.hpp"
#include "shopgraph/expert.hpp"
#include "shopgraph/generator.hpp"

namespace shopgraph {

inline constexpr int kDatasetVersion = 1;

/// Random-action branching around expert trajectories.
struct BranchParams {
    int branches_per_instance = 2;
    /// Chance that a step inside a branch segment is random (delta = 0)
    /// rather than the expert's next move.
    double random_action_probability = 1.0;
    IntRange segment_length{1, 3};

    void validate() const;
};

struct DatasetOptions {
    EnvParams env;
    BranchParams branch;
    /// Expert search space for trajectory labels.
    SearchSpace space = SearchSpace::Reachable;
    std::int64_t node_limit = kDefaultNodeLimit;
    int threads = 1;
};

struct DatasetInstance {
    std::shared_ptr<const Instance> instance;
    /// Makespan of the expert trajectory.
    Time expert_makespan = 0;
    bool expert_optimal = false;
};

struct Dataset {
    EnvParams env;
    std::vector<DatasetInstance> instances;
    std::vector<Transition> transitions;
    /// Discarded instances, exhausted re-solve budgets and similar events.
    std::vector<std::string> notes;
};

class DatasetError : public std::runtime_error {
public:
    DatasetError(const std::string& what, int line) : std::runtime_error(what), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

/// One expert trajectory per instance plus the configured random branches.
/// Instance names serve as references and must be unique. The output depends
/// only on the inputs and `seed`, not on the thread count.
Dataset generate_dataset(const std::vector<Instance>& instances, const DatasetOptions& options, std::uint64_t seed);

/// JSON lines: a header record, then one transition per line.
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
std::string dataset_to_jsonl(const Dataset& dataset);

/// Throws DatasetError (with the 1-based line) on a version mismatch, a
/// malformed record or a stored state that does not match its schedule.
Dataset load_dataset(const std::filesystem::path& path);
Dataset dataset_from_jsonl(const std::string& text);

}  // namespace shopgraph
