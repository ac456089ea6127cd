#include "shopgraph/generator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace shopgraph {
namespace {

int draw(Rng& rng, IntRange r) {
    return std::uniform_int_distribution<int>(r.lo, r.hi)(rng);
}

void check_range(IntRange r, const char* what) {
    if (r.lo > r.hi) throw std::invalid_argument(std::string("empty range for ") + what);
}

}  // namespace

GenParams GenParams::jssp_paper() {
    GenParams p;
    p.kind = ProblemKind::Jssp;
    p.jobs = {10, 20};
    p.machines = {10, 20};
    p.ops_extra = {0, 5};
    p.time = {5, 90};
    return p;
}

GenParams GenParams::fjssp_paper() {
    GenParams p;
    p.kind = ProblemKind::Fjssp;
    p.jobs = {12, 12};
    p.machines = {4, 9};
    p.ops_per_job = {2, 9};
    p.machines_per_op = {2, 0};
    p.mean_time = {5, 10};
    p.deviation = 0.2;
    return p;
}

GenParams GenParams::jssp_desk() {
    auto p = jssp_paper();
    p.jobs = {3, 6};
    p.machines = {3, 5};
    p.ops_extra = {0, 0};
    return p;
}

GenParams GenParams::fjssp_desk() {
    auto p = fjssp_paper();
    p.jobs = {3, 6};
    p.machines = {3, 5};
    p.ops_per_job = {2, 4};
    return p;
}

GenParams GenParams::preset(const std::string& name) {
    if (name == "jssp-paper") return jssp_paper();
    if (name == "fjssp-paper") return fjssp_paper();
    if (name == "jssp-desk") return jssp_desk();
    if (name == "fjssp-desk") return fjssp_desk();
    throw std::invalid_argument("unknown preset '" + name + "'");
}

GeneratedInstance generate_instance(Rng& rng, const GenParams& params, std::string name) {
    check_range(params.jobs, "jobs");
    check_range(params.machines, "machines");
    if (params.jobs.lo < 1 || params.machines.lo < 1)
        throw std::invalid_argument("job and machine counts must be at least 1");
    if (!(params.deviation >= 0.0 && params.deviation < 1.0))
        throw std::invalid_argument("deviation must lie in [0,1)");

    GeneratedInstance out;
    const int n_jobs = draw(rng, params.jobs);
    std::vector<Job> jobs(static_cast<std::size_t>(n_jobs));

    if (params.kind == ProblemKind::Jssp) {
        check_range(params.ops_extra, "ops_extra");
        check_range(params.time, "time");
        if (params.ops_extra.lo < 0 || params.time.lo < 1)
            throw std::invalid_argument("invalid JSSP ranges");
        IntRange machines = params.machines;
        if (machines.hi > n_jobs) {
            machines.hi = std::max(machines.lo, n_jobs);
            if (machines.hi > n_jobs)
                out.notes.push_back("machine range starts above the job count; using " + std::to_string(machines.lo));
        }
        const int n_machines = draw(rng, machines);
        std::vector<int> order(static_cast<std::size_t>(n_machines));
        for (auto& job : jobs) {
            const int n_ops = n_machines + draw(rng, params.ops_extra);
            std::vector<int> route;
            while (static_cast<int>(route.size()) < n_ops) {
                std::iota(order.begin(), order.end(), 0);
                std::shuffle(order.begin(), order.end(), rng);
                route.insert(route.end(), order.begin(), order.end());
            }
            route.resize(static_cast<std::size_t>(n_ops));
            for (int m : route) job.operations.push_back(Operation{{Option{m, draw(rng, params.time)}}});
        }
        out.instance = Instance(std::move(name), n_machines, std::move(jobs));
        return out;
    }

    check_range(params.ops_per_job, "ops_per_job");
    check_range(params.mean_time, "mean_time");
    if (params.ops_per_job.lo < 1 || params.mean_time.lo < 1)
        throw std::invalid_argument("invalid FJSSP ranges");
    const int n_machines = draw(rng, params.machines);
    IntRange per_op = params.machines_per_op;
    if (per_op.hi <= 0) per_op.hi = n_machines;
    const IntRange requested = per_op;
    per_op.lo = std::clamp(per_op.lo, 1, n_machines);
    per_op.hi = std::clamp(per_op.hi, per_op.lo, n_machines);
    if (per_op.lo != requested.lo || per_op.hi != requested.hi)
        out.notes.push_back("machines per operation clamped from [" + std::to_string(requested.lo) + "," +
                            std::to_string(requested.hi) + "] to [" + std::to_string(per_op.lo) + "," +
                            std::to_string(per_op.hi) + "]");

    std::vector<int> pool(static_cast<std::size_t>(n_machines));
    for (auto& job : jobs) {
        const int n_ops = draw(rng, params.ops_per_job);
        for (int k = 0; k < n_ops; ++k) {
            const int n_options = draw(rng, per_op);
            const double mean = draw(rng, params.mean_time);
            const int lo = std::max(1, static_cast<int>(std::lround(mean * (1.0 - params.deviation))));
            const int hi = std::max(lo, static_cast<int>(std::lround(mean * (1.0 + params.deviation))));
            std::iota(pool.begin(), pool.end(), 0);
            std::shuffle(pool.begin(), pool.end(), rng);
            std::sort(pool.begin(), pool.begin() + n_options);
            Operation op;
            for (int q = 0; q < n_options; ++q)
                op.options.push_back({pool[static_cast<std::size_t>(q)], draw(rng, {lo, hi})});
            job.operations.push_back(std::move(op));
        }
    }
    out.instance = Instance(std::move(name), n_machines, std::move(jobs));
    return out;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
    // splitmix64 over the combined key
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace shopgraph
