#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "shopgraph/instance.hpp"

namespace shopgraph {

using Rng = std::mt19937_64;

/// Inclusive integer range.
struct IntRange {
    int lo = 0;
    int hi = 0;
};

enum class ProblemKind { Jssp, Fjssp };

/// Sampling ranges for random instances. All ranges are inclusive.
///
/// JSSP: the machine count is additionally capped at the job count and the
/// operations per job are drawn as n_machines + ops_extra.
/// FJSSP: each operation draws a mean time from `mean_time`, an eligible
/// machine count from `machines_per_op` (hi <= 0 means "all machines"), and
/// per-machine times uniformly in [mean*(1-deviation), mean*(1+deviation)].
struct GenParams {
    ProblemKind kind = ProblemKind::Fjssp;
    IntRange jobs{12, 12};
    IntRange machines{4, 9};
    IntRange ops_per_job{2, 9};   // FJSSP
    IntRange ops_extra{0, 5};     // JSSP
    IntRange machines_per_op{2, 0};
    IntRange mean_time{5, 10};    // FJSSP
    IntRange time{5, 90};         // JSSP
    double deviation = 0.2;

    static GenParams jssp_paper();
    static GenParams fjssp_paper();
    static GenParams jssp_desk();
    static GenParams fjssp_desk();
    /// "jssp-paper", "fjssp-paper", "jssp-desk", "fjssp-desk"; throws on anything else.
    static GenParams preset(const std::string& name);
};

struct GeneratedInstance {
    Instance instance;
    /// Human-readable notes for parameters that had to be clamped.
    std::vector<std::string> notes;
};

/// Throws std::invalid_argument for empty ranges or deviation outside [0,1).
GeneratedInstance generate_instance(Rng& rng, const GenParams& params, std::string name = {});

/// Deterministic per-item seed so batches can be generated in any order.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

}  // namespace shopgraph
