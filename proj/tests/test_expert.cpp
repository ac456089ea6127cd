#include <doctest.h>

#include <numeric>

#include "oracle/brute_force.hpp"
#include "shopgraph/expert.hpp"
#include "support.hpp"

using namespace shopgraph;
using namespace testing_support;

TEST_CASE("oracle sanity") {
    CHECK(oracle::optimal_makespan(table2()) == 11);
    CHECK(oracle::optimal_makespan(parse_jssp("1 3\n0 3 1 4 2 2")) == 9);
}

TEST_CASE("solve_exact on table 2") {
    const auto r = solve_exact(table2());
    CHECK(r.makespan == 11);
    CHECK(r.optimal);
    CHECK(validate_schedule(table2(), r.schedule).empty());
    CHECK(makespan(table2(), r.schedule) == 11);
}

TEST_CASE("solve_exact on a single chain") {
    const Instance chain = parse_jssp("1 3\n0 3 1 4 2 2");
    const auto r = solve_exact(chain);
    CHECK(r.makespan == 9);
    CHECK(r.optimal);
}

TEST_CASE("solve_exact matches the brute-force oracle") {
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        const Instance inst = tiny_fjssp(1000 + seed);
        const auto r = solve_exact(inst);
        INFO("seed " << seed);
        CHECK(r.optimal);
        CHECK(r.makespan == oracle::optimal_makespan(inst));
        CHECK(validate_schedule(inst, r.schedule).empty());
    }
}

TEST_CASE("solve_exact matches the oracle on classic job-shop instances") {
    GenParams p = GenParams::jssp_desk();
    p.jobs = {3, 3};
    p.machines = {3, 3};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        const Instance inst = generate_instance(rng, p).instance;
        CHECK(solve_exact(inst).makespan == oracle::optimal_makespan(inst));
    }
}

TEST_CASE("node budget returns the incumbent unflagged") {
    Rng rng(5);
    const Instance inst = generate_instance(rng, GenParams::fjssp_desk()).instance;
    const auto r = solve_exact(inst, 1);
    CHECK_FALSE(r.optimal);
    CHECK(validate_schedule(inst, r.schedule).empty());
    CHECK(r.makespan == makespan(inst, r.schedule));
}

TEST_CASE("reachable search respects the mask") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        Rng rng(derive_seed(9, seed));
        const auto inst = std::make_shared<const Instance>(generate_instance(rng, GenParams::fjssp_desk()).instance);
        const auto exact = solve_exact(*inst);
        const auto reach = solve_from(reset(inst), SearchSpace::Reachable);
        CHECK(reach.optimal);
        CHECK(reach.makespan >= exact.makespan);
        CHECK(validate_schedule(*inst, reach.schedule).empty());
        const auto traj = replay_schedule(reset(inst), reach.schedule);
        CHECK(traj.back().next_state.partial_schedule() == reach.schedule);
    }
}

TEST_CASE("solve_from keeps the partial schedule") {
    const auto inst = table2_ptr();
    HeteroState s = reset(inst);
    s = step(s, {legal_actions(s).front()}).state;
    const auto r = solve_from(s, SearchSpace::Unrestricted);
    for (const auto& [op, a] : s.partial_schedule()) CHECK(r.schedule.at(op) == a);
    CHECK(validate_schedule(*inst, r.schedule).empty());
}

TEST_CASE("dispatch rules") {
    const Instance t2 = table2();
    for (auto rule : {DispatchRule::Spt, DispatchRule::Mwkr}) {
        const Schedule s = solve_dispatch(t2, rule);
        CHECK(validate_schedule(t2, s).empty());
        CHECK(makespan(t2, s) >= 11);
    }
    const Instance single_machine = parse_jssp("3 1\n0 4\n0 2\n0 7\n");
    CHECK(makespan(single_machine, solve_dispatch(single_machine, DispatchRule::Spt)) == 13);
    CHECK(makespan(single_machine, solve_dispatch(single_machine, DispatchRule::Mwkr)) == 13);
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        Rng rng(seed);
        const Instance inst = generate_instance(rng, GenParams::preset(seed % 2 ? "fjssp-desk" : "jssp-desk")).instance;
        for (auto rule : {DispatchRule::Spt, DispatchRule::Mwkr}) {
            const Schedule s = solve_dispatch(inst, rule);
            CHECK(validate_schedule(inst, s).empty());
            CHECK(makespan(inst, s) >= lower_bound(inst));
        }
    }
    CHECK(std::string(to_string(DispatchRule::Mwkr)) == "mwkr");
}

TEST_CASE("behavior distribution") {
    const HeteroState s = reset(table2_ptr());
    const auto legal = legal_actions(s);
    const auto probs = behavior_distribution(s, {legal[0]});
    CHECK(std::accumulate(probs.begin(), probs.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(probs[0] > 0.99999);
    CHECK(probs[1] == doctest::Approx(kBehaviorFloor).epsilon(1e-3));
    const auto two = behavior_distribution(s, {legal[0], legal[1]});
    CHECK(two[0] == doctest::Approx(two[1]));
}

TEST_CASE("schedule_to_trajectory") {
    const auto inst = table2_ptr();
    SUBCASE("optimal table 2 schedule") {
        const auto traj = schedule_to_trajectory(inst, optimal_schedule());
        Time total = 0;
        for (const auto& t : traj) {
            total += t.reward;
            CHECK(t.delta == 1);
            CHECK(t.reward == t.state.partial_makespan() - t.next_state.partial_makespan());
        }
        CHECK(total == -11);
        CHECK(traj.back().terminal);
        CHECK(traj.back().next_state.partial_schedule() == optimal_schedule());
    }
    SUBCASE("replaying the action sets reproduces the schedule") {
        const auto traj = schedule_to_trajectory(inst, greedy_schedule());
        HeteroState s = reset(inst);
        for (const auto& t : traj) s = step(s, t.action_set).state;
        CHECK(s.partial_schedule() == greedy_schedule());
    }
    SUBCASE("single operation") {
        const auto one = std::make_shared<const Instance>(parse_jssp("1 1\n0 5"));
        Schedule s;
        s.assign({0, 0}, {0, 0, 5});
        const auto traj = schedule_to_trajectory(one, s);
        REQUIRE(traj.size() == 1);
        CHECK(traj[0].terminal);
        CHECK(traj[0].delta == 1);
        CHECK(traj[0].behavior == std::vector<double>{1.0});
    }
    SUBCASE("grouping puts simultaneous starts in one step") {
        const auto traj = schedule_to_trajectory(inst, greedy_schedule());
        CHECK(traj.front().action_set.size() == 2);
    }
    SUBCASE("invalid schedules are rejected") {
        Schedule bad = optimal_schedule();
        bad.erase({0, 0});
        CHECK_THROWS_AS(schedule_to_trajectory(inst, bad), UnreachableSchedule);
    }
}

TEST_CASE("masked-out optimal schedule cannot be replayed") {
    // Job 0 runs 10 on machine 0 then 1 on machine 1. Job 1 runs 1 on
    // machine 1 then 1 on machine 0. Delaying job 1's start to 10 is legal
    // in a schedule but never reachable: at time 0 its start is t_e.
    const auto inst = std::make_shared<const Instance>(parse_jssp("2 2\n0 10 1 1\n1 1 0 1\n"));
    Schedule s;
    s.assign({0, 0}, {0, 0, 10});
    s.assign({0, 1}, {1, 10, 11});
    s.assign({1, 0}, {1, 11, 12});
    s.assign({1, 1}, {0, 12, 13});
    REQUIRE(validate_schedule(*inst, s).empty());
    CHECK_THROWS_AS(schedule_to_trajectory(inst, s), UnreachableSchedule);
}
