#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracle/brute_force.hpp"
#include "shopgraph/dataset.hpp"
#include "shopgraph/expert.hpp"
#include "shopgraph/formats.hpp"
#include "shopgraph/hgt.hpp"
#include "shopgraph/trainer.hpp"
#include "support.hpp"

using namespace shopgraph;
using namespace testing_support;

namespace {

constexpr std::uint64_t kSeed = 1;
constexpr std::uint64_t kRandomPolicySeed = 99;
constexpr int kDeskTrainInstances = 200;
constexpr int kDeskHeldOut = 30;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* format, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, format, a);
    return buf;
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;
int warnings = 0;

void report(int id, const std::string& title, const Outcome& o, bool warn_only = false) {
    const char* tag = o.pass ? "PASS" : (warn_only ? "WARN" : "FAIL");
    if (!o.pass) ++(warn_only ? warnings : failures);
    std::cout << "[" << tag << "] " << id << " " << title << ": " << o.detail << std::endl;
}

Instance random_instance(const GenParams& p, std::uint64_t seed, const std::string& name) {
    Rng rng(seed);
    return generate_instance(rng, p, name).instance;
}

const std::vector<GenParams>& fuzz_presets() {
    static const std::vector<GenParams> presets{GenParams::jssp_desk(), GenParams::fjssp_desk(),
                                                GenParams::jssp_paper(), GenParams::fjssp_paper()};
    return presets;
}

// 1
Outcome table2_optimum() {
    const Instance inst = table2();
    const auto t0 = Clock::now();
    const SolveResult r = solve_exact(inst);
    const double secs = seconds_since(t0);
    const bool feasible = validate_schedule(inst, r.schedule).empty();
    return {r.makespan == 11 && r.optimal && feasible && secs < 1.0,
            "makespan " + std::to_string(r.makespan) + (r.optimal ? ", optimal" : ", not proven optimal") +
                (feasible ? "" : ", infeasible schedule") + ", " + fmt("%.3f s", secs)};
}

// 2
Outcome oracle_equivalence() {
    GenParams p = GenParams::fjssp_desk();
    p.jobs = {2, 4};
    p.machines = {2, 4};
    p.ops_per_job = {1, 3};
    int agree = 0, total = 0;
    std::string first_mismatch;
    const auto t0 = Clock::now();
    for (std::uint64_t k = 0; total < 100; ++k) {
        const Instance inst = random_instance(p, derive_seed(kSeed, 200000 + k), "oracle" + std::to_string(k));
        if (inst.num_operations() > 9) continue;
        ++total;
        const SolveResult r = solve_exact(inst);
        const Time expected = oracle::optimal_makespan(inst);
        if (r.optimal && r.makespan == expected && validate_schedule(inst, r.schedule).empty())
            ++agree;
        else if (first_mismatch.empty())
            first_mismatch = ", first mismatch " + inst.name() + ": " + std::to_string(r.makespan) + " vs " +
                             std::to_string(expected);
    }
    const double secs = seconds_since(t0);
    return {agree == 100 && secs < 60.0,
            std::to_string(agree) + "/" + std::to_string(total) + " agree, " + fmt("%.2f s", secs) + first_mismatch};
}

// 3
Outcome gap_metric() {
    const double g = optimal_gap(15, 11);
    bool zero = true;
    for (double x : {1.0, 11.0, 1234.0, 0.5}) zero = zero && optimal_gap(x, x) == 0.0;
    return {std::abs(g - 400.0 / 11.0) <= 1e-9 && fmt("%.4f", g) == "36.3636" && zero,
            "optimal_gap(15,11) = " + fmt("%.10f", g) + (zero ? ", gap(x,x) = 0" : ", gap(x,x) != 0")};
}

// 4
Outcome telescoping_reward() {
    const std::vector<GenParams> presets{GenParams::jssp_desk(), GenParams::fjssp_desk()};
    int exact = 0;
    Rng rng(derive_seed(kSeed, 4));
    for (int k = 0; k < 100; ++k) {
        auto inst = std::make_shared<const Instance>(
            random_instance(presets[static_cast<std::size_t>(k % 2)], derive_seed(kSeed, 400000 + static_cast<std::uint64_t>(k)), "tele"));
        HeteroState s = reset(inst);
        Time total = 0;
        while (!s.terminal()) {
            StepResult r = step(s, random_compatible_set(s, rng));
            total += r.reward;
            s = std::move(r.state);
        }
        const Schedule& sched = s.partial_schedule();
        if (validate_schedule(*inst, sched).empty() && total == -makespan(*inst, sched)) ++exact;
    }
    return {exact == 100, std::to_string(exact) + "/100 rollouts with sum of rewards = -makespan"};
}

// Earliest starts recomputed from the partial schedule alone.
struct MaskCheck {
    bool ok = true;
    std::string problem;
};

MaskCheck check_mask(const HeteroState& s, double factor) {
    const Instance& inst = s.instance();
    std::vector<int> next(static_cast<std::size_t>(inst.num_jobs()), 0);
    std::vector<Time> job_ready(next.size(), 0);
    std::vector<Time> machine_free(static_cast<std::size_t>(inst.num_machines()), 0);
    for (const auto& [op, a] : s.partial_schedule()) {
        next[static_cast<std::size_t>(op.job)] = std::max(next[static_cast<std::size_t>(op.job)], op.index + 1);
        job_ready[static_cast<std::size_t>(op.job)] = std::max(job_ready[static_cast<std::size_t>(op.job)], a.end);
        machine_free[static_cast<std::size_t>(a.machine)] = std::max(machine_free[static_cast<std::size_t>(a.machine)], a.end);
    }
    Time t_e = -1;
    int unmasked = 0;
    std::vector<std::pair<int, int>> candidates;
    std::vector<Time> starts;
    for (int j = 0; j < inst.num_jobs(); ++j) {
        if (next[static_cast<std::size_t>(j)] >= inst.job_length(j)) continue;
        for (const Option& opt : inst.op({j, next[static_cast<std::size_t>(j)]}).options) {
            const Time start = std::max(job_ready[static_cast<std::size_t>(j)], machine_free[static_cast<std::size_t>(opt.machine)]);
            candidates.emplace_back(j, opt.machine);
            starts.push_back(start);
            if (t_e < 0 || start < t_e) t_e = start;
        }
    }
    for (Time start : starts)
        if (static_cast<double>(start) <= static_cast<double>(t_e) * factor) ++unmasked;

    const std::vector<ActionEdge> legal = legal_actions(s);
    if (legal.empty()) return {false, "empty legal set"};
    for (const ActionEdge& e : legal) {
        const auto it = std::find(candidates.begin(), candidates.end(), std::make_pair(e.job, e.machine));
        if (it == candidates.end()) return {false, "edge on a non-pending operation or ineligible machine"};
        const Time start = starts[static_cast<std::size_t>(it - candidates.begin())];
        if (e.start != start) return {false, "edge start differs from the earliest feasible start"};
        if (!(static_cast<double>(e.start) <= static_cast<double>(t_e) * factor))
            return {false, "edge start " + std::to_string(e.start) + " exceeds t_e " + std::to_string(t_e) + " * factor"};
    }
    if (static_cast<int>(legal.size()) != unmasked) return {false, "legal set misses unmasked edges"};
    return {};
}

// 5
Outcome masking_soundness() {
    const EnvParams env;
    Rng rng(derive_seed(kSeed, 5));
    int steps = 0, episodes = 0;
    while (steps < 10000) {
        const GenParams& p = fuzz_presets()[static_cast<std::size_t>(episodes % 4)];
        auto inst = std::make_shared<const Instance>(
            random_instance(p, derive_seed(kSeed, 500000 + static_cast<std::uint64_t>(episodes)), "fuzz"));
        ++episodes;
        HeteroState s = reset(inst, env);
        while (!s.terminal() && steps < 10000) {
            const MaskCheck c = check_mask(s, env.mask_factor);
            if (!c.ok) return {false, c.problem + " at step " + std::to_string(steps) + " of episode " + std::to_string(episodes)};
            AssignmentSet set;
            if (std::bernoulli_distribution(0.5)(rng)) {
                set = random_compatible_set(s, rng);
            } else {
                const auto legal = legal_actions(s);
                set = {legal[std::uniform_int_distribution<std::size_t>(0, legal.size() - 1)(rng)]};
            }
            s = step(s, set).state;
            ++steps;
        }
    }
    return {true, std::to_string(steps) + " steps over " + std::to_string(episodes) +
                      " episodes, every legal set non-empty and within t_e * 1.05"};
}

// 6
Outcome gradient_fidelity() {
    GenParams p = GenParams::fjssp_desk();
    p.jobs = {3, 3};
    p.machines = {3, 3};
    const Instance inst = random_instance(p, derive_seed(kSeed, 6), "fd3x3");
    const Dataset ds = generate_dataset({inst}, {}, derive_seed(kSeed, 60));
    const Transition* chosen = nullptr;
    for (const auto& t : ds.transitions)
        if (!t.terminal && t.delta == 1) {
            chosen = &t;
            break;
        }
    if (chosen == nullptr) return {false, "no non-terminal expert transition"};
    const Batch one{chosen};

    const auto t0 = Clock::now();
    TrainConfig cfg;
    NetBundle nets = NetBundle::create(cfg.model, derive_seed(kSeed, 61));
    nets.target = Networks::create(cfg.model, derive_seed(kSeed, 62));
    auto actor = [&](Tape& t) { return actor_loss(t, one, nets, cfg).loss; };
    auto critic = [&](Tape& t) { return critic_loss(t, one, nets, cfg).loss; };
    double worst_actor = 0.0, worst_critic = 0.0;
    int coords = 0;
    for (auto& [name, set] : nets.online.named_sets()) {
        const bool is_actor = name.rfind("actor", 0) == 0;
        const FdReport r = finite_difference_check(is_actor ? std::function<Var(Tape&)>(actor) : std::function<Var(Tape&)>(critic),
                                                   tensors_of(*set), 1e-4, 200, derive_seed(kSeed, 63));
        (is_actor ? worst_actor : worst_critic) = std::max(is_actor ? worst_actor : worst_critic, r.max_relative_error);
        coords += r.coordinates;
    }
    const double secs = seconds_since(t0);
    return {worst_actor < 1e-3 && worst_critic < 1e-3 && secs < 30.0,
            "max relative error actor " + fmt("%.2e", worst_actor) + ", critic " + fmt("%.2e", worst_critic) + " over " +
                std::to_string(coords) + " coordinates, " + fmt("%.1f s", secs)};
}

double attention_deviation(const std::vector<AttentionRecord>& records) {
    double worst = 0.0;
    for (const auto& rec : records) {
        Matrix sums = Matrix::Zero(rec.targets, rec.alpha.cols());
        std::vector<int> incoming(static_cast<std::size_t>(rec.targets), 0);
        for (Eigen::Index e = 0; e < rec.alpha.rows(); ++e) {
            const int t = rec.target[static_cast<std::size_t>(e)];
            sums.row(t) += rec.alpha.row(e);
            ++incoming[static_cast<std::size_t>(t)];
        }
        for (int t = 0; t < rec.targets; ++t)
            if (incoming[static_cast<std::size_t>(t)] > 0)
                for (Eigen::Index h = 0; h < sums.cols(); ++h) worst = std::max(worst, std::abs(sums(t, h) - 1.0));
    }
    return worst;
}

// 7
Outcome normalization() {
    const Networks nets = Networks::create({}, derive_seed(kSeed, 7));
    const std::vector<GenParams> presets{GenParams::jssp_desk(), GenParams::fjssp_desk()};
    Rng rng(derive_seed(kSeed, 70));
    double worst_policy = 0.0, worst_attention = 0.0;
    int states = 0, records = 0;
    for (std::uint64_t k = 0; states < 100; ++k) {
        auto inst = std::make_shared<const Instance>(random_instance(presets[k % 2], derive_seed(kSeed, 700000 + k), "norm"));
        HeteroState s = reset(inst);
        while (!s.terminal() && states < 100) {
            const PolicyDistribution d = actor_distribution(s, nets);
            double sum = 0.0;
            for (double pr : d.probs) sum += pr;
            worst_policy = std::max(worst_policy, std::abs(sum - 1.0));

            std::vector<AttentionRecord> att;
            Tape tape(false);
            actor_log_probs(tape, nets, make_batch({&s}), &att);
            const HeteroState aug = augment_with_action(s, d);
            const GraphBatch b = make_batch({&aug});
            encode(tape, nets.critic_encoder[0], nets.config, b, tape.constant(b.jm_x), &att);
            worst_attention = std::max(worst_attention, attention_deviation(att));
            records += static_cast<int>(att.size());
            ++states;
            s = step(s, random_compatible_set(s, rng)).state;
        }
    }
    return {worst_policy <= 1e-6 && worst_attention <= 1e-6,
            std::to_string(states) + " states, " + std::to_string(records) + " attention records, max deviation policy " +
                fmt("%.2e", worst_policy) + ", attention " + fmt("%.2e", worst_attention)};
}

// 8
Outcome kl_gate() {
    std::vector<Instance> insts;
    for (std::uint64_t k = 0; k < 6; ++k)
        insts.push_back(random_instance(GenParams::fjssp_desk(), derive_seed(kSeed, 800000 + k), "gate" + std::to_string(k)));
    const Dataset ds = generate_dataset(insts, {}, derive_seed(kSeed, 8));
    Batch batch;
    for (const auto& t : ds.transitions) batch.push_back(&t);
    TrainConfig cfg;
    const NetBundle nets = NetBundle::create(cfg.model, derive_seed(kSeed, 80));
    std::vector<const HeteroState*> states;
    for (const Transition* t : batch) states.push_back(&t->state);
    const GraphBatch g = make_batch(states);

    double mean_q = 0.0;
    for (const Transition* t : batch) {
        PolicyDistribution d;
        d.edges = legal_actions(t->state);
        d.probs = t->behavior;
        mean_q += critic_value(augment_with_action(t->state, d), nets.online, 0);
    }
    mean_q /= static_cast<double>(batch.size());
    double worst_q = 0.0;
    for (double lambda_rl : {0.0, 0.5, 1.0}) {
        cfg.lambda_rl = lambda_rl;
        Tape tape;
        const ActorLoss al = actor_loss_with_policy(tape, batch, g, tape.constant(behavior_column(batch, g)), nets, cfg);
        worst_q = std::max(worst_q, std::abs(al.loss.scalar() - (-lambda_rl * mean_q)));
    }

    std::vector<Transition> copies(ds.transitions.begin(), ds.transitions.end());
    for (auto& t : copies) t.delta = 0;
    Batch zero;
    for (const auto& t : copies) zero.push_back(&t);
    cfg = TrainConfig{};
    std::set<double> losses;
    for (double lambda_bc : {0.0, 1.0, 7.5, 100.0}) {
        cfg.lambda_bc = lambda_bc;
        Tape tape;
        losses.insert(actor_loss(tape, zero, nets, cfg).loss.scalar());
    }
    return {worst_q <= 1e-9 && losses.size() == 1,
            std::to_string(batch.size()) + " transitions, |loss + lambda_rl * mean Q| <= " + fmt("%.2e", worst_q) +
                (losses.size() == 1 ? ", delta=0 loss identical for 4 lambda_bc values"
                                    : ", delta=0 loss varies with lambda_bc")};
}

// Desk-scale pipeline shared by criteria 9 to 11.
struct DeskData {
    Dataset dataset;
    std::vector<EvalItem> held_out;
    int expert_optimal = 0;
    double seconds = 0.0;
};

DeskData desk_data(std::uint64_t seed) {
    const auto t0 = Clock::now();
    DeskData out;
    std::vector<Instance> train;
    for (int i = 0; i < kDeskTrainInstances; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "train%03d", i);
        train.push_back(random_instance(GenParams::fjssp_desk(), derive_seed(seed, static_cast<std::uint64_t>(i)), name));
    }
    out.dataset = generate_dataset(train, {}, derive_seed(seed, 0x64617461));
    for (const auto& di : out.dataset.instances) out.expert_optimal += di.expert_optimal ? 1 : 0;
    for (std::uint64_t k = 0; static_cast<int>(out.held_out.size()) < kDeskHeldOut; ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "test%03d", static_cast<int>(k));
        auto inst = std::make_shared<const Instance>(
            random_instance(GenParams::fjssp_desk(), derive_seed(seed, 1000000 + k), name));
        const SolveResult r = solve_exact(*inst);
        if (r.optimal) out.held_out.push_back({inst, r.makespan});
    }
    out.seconds = seconds_since(t0);
    return out;
}

struct DeskRun {
    GapTable gaps;
    std::string checkpoint;
    std::vector<EpochMetrics> metrics;
    bool diverged = false;
    double seconds = 0.0;
};

DeskRun desk_run(const DeskData& data, double lambda_rl, std::uint64_t seed) {
    const auto t0 = Clock::now();
    TrainConfig cfg;
    cfg.lambda_rl = lambda_rl;
    cfg.lambda_bc = 1.0;
    cfg.seed = seed;
    std::cerr << "training lambda_rl=" << lambda_rl << " on " << data.dataset.transitions.size() << " transitions"
              << std::endl;
    const TrainResult tr = train(data.dataset, cfg, {}, [&](const EpochMetrics& m) {
        std::cerr << "  epoch " << m.epoch << " critic " << m.critic_loss << " actor " << m.actor_loss << " kl " << m.kl
                  << " q " << m.mean_q << " (" << fmt("%.0f s", seconds_since(t0)) << ")" << std::endl;
    });
    DeskRun out;
    out.metrics = tr.metrics;
    out.diverged = tr.diverged;
    out.gaps = evaluate(tr.nets.online, data.held_out, data.dataset.env);
    out.checkpoint = checkpoint_to_bytes(training_checkpoint(tr.nets.online, data.dataset.env, cfg));
    out.seconds = seconds_since(t0);
    return out;
}

void save_artifact(const std::filesystem::path& dir, const std::string& file, const std::string& text) {
    if (dir.empty()) return;
    write_text_file(dir / file, text);
}

// 12
Outcome round_trips(const std::filesystem::path& scratch) {
    std::vector<std::string> problems;
    const std::string t2 = read_text_file(data_path("table2.fjs"));
    if (serialize_fjssp(parse_fjssp(t2)) != t2) problems.push_back("table 2 text");

    int instances_ok = 0;
    for (std::uint64_t k = 0; k < 20; ++k) {
        const Instance inst = random_instance(fuzz_presets()[k % 4], derive_seed(kSeed, 1200000 + k), "rt");
        const std::string text = serialize_fjssp(inst);
        const Instance back = parse_fjssp(text, "rt");
        if (back.same_structure(inst) && serialize_fjssp(back) == text) ++instances_ok;
    }
    if (instances_ok != 20) problems.push_back(std::to_string(20 - instances_ok) + " generated instances");

    std::vector<Instance> insts;
    for (std::uint64_t k = 0; k < 4; ++k)
        insts.push_back(random_instance(GenParams::fjssp_desk(), derive_seed(kSeed, 1210000 + k), "ds" + std::to_string(k)));
    const Dataset ds = generate_dataset(insts, {}, derive_seed(kSeed, 12));
    const auto ds_path = scratch / "roundtrip.jsonl";
    save_dataset(ds, ds_path);
    const Dataset back = load_dataset(ds_path);
    bool ds_ok = dataset_to_jsonl(back) == read_text_file(ds_path) && back.transitions.size() == ds.transitions.size();
    for (std::size_t i = 0; ds_ok && i < ds.transitions.size(); ++i) {
        const Transition& a = ds.transitions[i];
        const Transition& b = back.transitions[i];
        ds_ok = a.state.same_as(b.state) && a.next_state.same_as(b.next_state) && a.action_set == b.action_set &&
                a.behavior == b.behavior && a.reward == b.reward && a.terminal == b.terminal && a.delta == b.delta &&
                a.instance_ref == b.instance_ref && a.step == b.step;
    }
    if (!ds_ok) problems.push_back("dataset");

    const Networks nets = Networks::create({}, derive_seed(kSeed, 120));
    const Checkpoint ckpt = training_checkpoint(nets, {}, TrainConfig{});
    const auto ck_path = scratch / "roundtrip.ckpt";
    save_checkpoint(ckpt, ck_path);
    const Checkpoint ck_back = load_checkpoint(ck_path);
    if (!(ck_back == ckpt) || checkpoint_to_bytes(ck_back) != read_text_file(ck_path) ||
        !networks_from_checkpoint(ck_back).same_values(nets))
        problems.push_back("checkpoint");

    std::string detail = "table 2 file, 20 generated instances, dataset of " + std::to_string(ds.transitions.size()) +
                         " transitions, checkpoint";
    if (!problems.empty()) {
        detail += "; mismatches:";
        for (const auto& p : problems) detail += " " + p;
    }
    return {problems.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance checks"};
    std::vector<int> only;
    std::filesystem::path out_dir;
    app.add_option("--only", only, "Criteria to run (default all)")->delimiter(',');
    app.add_option("--out", out_dir, "Directory for gap tables, metrics and checkpoints");
    CLI11_PARSE(app, argc, argv);
    auto wanted = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };

    std::filesystem::path scratch = out_dir;
    if (scratch.empty()) scratch = std::filesystem::temp_directory_path() / "shopgraph_acceptance";
    std::filesystem::create_directories(scratch);
    reuse_freed_memory();

    if (wanted(1)) report(1, "Table 2 optimum", table2_optimum());
    if (wanted(2)) report(2, "oracle equivalence", oracle_equivalence());
    if (wanted(3)) report(3, "gap metric", gap_metric());
    if (wanted(4)) report(4, "telescoping reward", telescoping_reward());
    if (wanted(5)) report(5, "masking soundness", masking_soundness());
    if (wanted(6)) report(6, "gradient fidelity", gradient_fidelity());
    if (wanted(7)) report(7, "distribution and attention normalization", normalization());
    if (wanted(8)) report(8, "KL gate", kl_gate());

    if (wanted(9) || wanted(10) || wanted(11)) {
        const DeskData data = desk_data(kSeed);
        std::cerr << "desk data: " << data.dataset.transitions.size() << " transitions, " << data.expert_optimal << "/"
                  << kDeskTrainInstances << " expert labels optimal, " << fmt("%.0f s", data.seconds) << std::endl;
        const DeskRun main_run = desk_run(data, 0.5, kSeed);
        const GapTable random = evaluate_random_policy(data.held_out, data.dataset.env, kRandomPolicySeed);
        GapTable expert;
        for (const auto& item : data.held_out) {
            const Time c = makespan(solve_from(reset(item.instance, data.dataset.env), SearchSpace::Reachable).schedule);
            expert.rows.push_back({item.instance->name(), c, item.reference, optimal_gap(c, item.reference)});
        }
        summarize(expert);
        save_artifact(out_dir, "gaps_lambda_0.5.csv", gap_table_to_csv(main_run.gaps));
        save_artifact(out_dir, "gaps_random.csv", gap_table_to_csv(random));
        save_artifact(out_dir, "gaps_expert_reachable.csv", gap_table_to_csv(expert));
        save_artifact(out_dir, "metrics_lambda_0.5.csv", metrics_to_csv(main_run.metrics));
        save_artifact(out_dir, "model_lambda_0.5.ckpt", main_run.checkpoint);
        const double runtime = data.seconds + main_run.seconds;

        if (wanted(9)) {
            const bool labels = data.expert_optimal == kDeskTrainInstances;
            const double margin = random.mean - main_run.gaps.mean;
            report(9, "desk-scale learning",
                   {labels && !main_run.diverged && main_run.gaps.mean <= 15.0 && margin >= 12.0 && runtime < 1800.0,
                    "policy mean gap " + fmt("%.2f%%", main_run.gaps.mean) + " (median " +
                        fmt("%.2f", main_run.gaps.median) + "), random policy " + fmt("%.2f%%", random.mean) +
                        ", margin " + fmt("%.2f", margin) + " points, reachable expert " + fmt("%.2f%%", expert.mean) +
                        ", " + std::to_string(data.expert_optimal) + "/" + std::to_string(kDeskTrainInstances) +
                        " optimal labels" + (main_run.diverged ? ", diverged" : "") + ", " + fmt("%.0f s", runtime)});
        }
        if (wanted(10)) {
            const DeskRun bc = desk_run(data, 0.0, kSeed);
            save_artifact(out_dir, "gaps_lambda_0.csv", gap_table_to_csv(bc.gaps));
            save_artifact(out_dir, "metrics_lambda_0.csv", metrics_to_csv(bc.metrics));
            report(10, "lambda directionality",
                   {main_run.gaps.median <= bc.gaps.median + 1.0,
                    "median gap " + fmt("%.2f", main_run.gaps.median) + " at lambda_rl=0.5 vs " +
                        fmt("%.2f", bc.gaps.median) + " at lambda_rl=0 (means " + fmt("%.2f", main_run.gaps.mean) +
                        " vs " + fmt("%.2f", bc.gaps.mean) + ")"},
                   true);
        }
        if (wanted(11)) {
            const DeskData again = desk_data(kSeed);
            const DeskRun rerun = desk_run(again, 0.5, kSeed);
            const bool same_ckpt = rerun.checkpoint == main_run.checkpoint;
            const bool same_gaps = gap_table_to_csv(rerun.gaps) == gap_table_to_csv(main_run.gaps);
            report(11, "determinism",
                   {same_ckpt && same_gaps, std::string(same_ckpt ? "checkpoint bytes identical" : "checkpoint bytes differ") +
                                                " (" + std::to_string(main_run.checkpoint.size()) + " bytes), " +
                                                (same_gaps ? "gap tables identical" : "gap tables differ")});
        }
    }

    if (wanted(12)) report(12, "format round-trips", round_trips(scratch));

    std::cout << (failures == 0 ? "ALL HARD CRITERIA PASSED" : std::to_string(failures) + " HARD CRITERIA FAILED");
    if (warnings > 0) std::cout << ", " << warnings << " warning(s)";
    std::cout << std::endl;
    return failures == 0 ? 0 : 1;
}
