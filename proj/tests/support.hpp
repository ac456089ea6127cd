#pragma once

#include <algorithm>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "shopgraph/env.hpp"
#include "shopgraph/formats.hpp"
#include "shopgraph/generator.hpp"
#include "shopgraph/instance.hpp"
#include "shopgraph/tensorcore.hpp"

namespace testing_support {

using namespace shopgraph;

inline std::string data_path(const std::string& file) { return std::string(SHOPGRAPH_TEST_DATA) + "/" + file; }

inline Instance table2() { return load_instance(data_path("table2.fjs")); }

inline std::shared_ptr<const Instance> table2_ptr() { return std::make_shared<const Instance>(table2()); }

// Machines are 0-based: m1 -> 0, m2 -> 1, m3 -> 2.
// Jobs 1 and 2 go first everywhere; job 3 waits behind them.
inline Schedule greedy_schedule() {
    Schedule s;
    s.assign({0, 0}, {0, 0, 3});
    s.assign({0, 1}, {1, 3, 7});
    s.assign({0, 2}, {0, 7, 9});
    s.assign({1, 0}, {2, 0, 3});
    s.assign({1, 1}, {0, 3, 5});
    s.assign({2, 0}, {2, 3, 5});
    s.assign({2, 1}, {1, 7, 10});
    s.assign({2, 2}, {2, 10, 15});
    return s;
}

// Job 3 (the longest chain) starts immediately; makespan 11.
inline Schedule optimal_schedule() {
    Schedule s;
    s.assign({0, 0}, {0, 0, 3});
    s.assign({0, 1}, {1, 5, 9});
    s.assign({0, 2}, {0, 9, 11});
    s.assign({1, 0}, {2, 2, 5});
    s.assign({1, 1}, {0, 5, 7});
    s.assign({2, 0}, {2, 0, 2});
    s.assign({2, 1}, {1, 2, 5});
    s.assign({2, 2}, {2, 5, 10});
    return s;
}

inline Instance tiny_fjssp(std::uint64_t seed, int max_ops = 9) {
    GenParams p = GenParams::fjssp_desk();
    p.jobs = {3, 3};
    p.machines = {3, 3};
    p.ops_per_job = {1, 3};
    Rng rng(seed);
    for (;;) {
        auto g = generate_instance(rng, p, "tiny" + std::to_string(seed));
        if (g.instance.num_operations() <= max_ops) return g.instance;
    }
}

// Random legal compatible set: shuffled legal edges swept greedily.
inline AssignmentSet random_compatible_set(const HeteroState& state, Rng& rng) {
    auto legal = legal_actions(state);
    std::shuffle(legal.begin(), legal.end(), rng);
    std::vector<std::pair<ActionEdge, double>> ranked;
    for (std::size_t i = 0; i < legal.size(); ++i) ranked.emplace_back(legal[i], -static_cast<double>(i));
    return select_compatible_set(std::move(ranked));
}

// Non-terminal states met along random rollouts of tiny instances.
inline std::vector<HeteroState> random_states(std::uint64_t seed, int count) {
    std::vector<HeteroState> out;
    Rng rng(seed);
    for (std::uint64_t k = 0; static_cast<int>(out.size()) < count; ++k) {
        HeteroState s = reset(std::make_shared<const Instance>(tiny_fjssp(seed * 1000 + k)));
        while (!s.terminal() && static_cast<int>(out.size()) < count) {
            out.push_back(s);
            s = step(s, random_compatible_set(s, rng)).state;
        }
    }
    return out;
}

inline std::vector<Tensor*> tensors_of(ParamSet& ps) {
    std::vector<Tensor*> out;
    for (auto& t : ps.tensors()) out.push_back(&t);
    return out;
}

}  // namespace testing_support
