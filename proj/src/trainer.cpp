#include "shopgraph/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "shopgraph/generator.hpp"
#include "shopgraph/parallel.hpp"

namespace shopgraph {

using json = nlohmann::json;

namespace {

GraphBatch batch_of_states(const Batch& batch) {
    std::vector<const HeteroState*> states;
    states.reserve(batch.size());
    for (const Transition* t : batch) states.push_back(&t->state);
    return make_batch(states);
}

Var squared_error(Var a, Var b) {
    const Var d = sub(a, b);
    return mean(mul(d, d));
}

struct Optimizer {
    ParamSet* params;
    Adam adam;
};

std::vector<Optimizer> make_optimizers(const std::vector<ParamSet*>& sets, const AdamConfig& cfg) {
    std::vector<Optimizer> out;
    for (ParamSet* p : sets) out.push_back({p, Adam(*p, cfg)});
    return out;
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(const std::string& s) {
    if (s == "nan" || s.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("not a number: '" + s + "'");
    return v;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must be in [0,1]");
    if (!(lambda_rl >= 0.0) || !(lambda_bc >= 0.0)) throw std::invalid_argument("lambdas must be >= 0");
    if (policy_delay < 1) throw std::invalid_argument("policy_delay must be >= 1");
    if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must be in [0,1]");
    model.validate();
}

NetBundle NetBundle::create(const HgtConfig& config, std::uint64_t seed) {
    NetBundle b{Networks::create(config, seed), {}};
    b.target = b.online;
    return b;
}

double training_reward(const Transition& t, const TrainConfig& config) {
    const double r = static_cast<double>(t.reward);
    if (!config.scale_rewards) return r;
    const double work = t.state.instance().total_mean_work();
    return work > 0.0 ? r / work : r;
}

Matrix behavior_column(const Batch& batch, const GraphBatch& graphs) {
    Matrix col = Matrix::Constant(graphs.num_jm(), 1, kLogProbFloor);
    for (int g = 0; g < graphs.graphs; ++g) {
        const Transition& t = *batch[static_cast<std::size_t>(g)];
        std::size_t k = 0;
        for (int e = graphs.jm_offset[static_cast<std::size_t>(g)]; e < graphs.jm_offset[static_cast<std::size_t>(g) + 1];
             ++e) {
            if (!graphs.jm_legal[static_cast<std::size_t>(e)]) continue;
            if (k >= t.behavior.size()) throw std::invalid_argument("behavior distribution shorter than legal edges");
            col(e, 0) = std::max(std::log(t.behavior[k++]), kLogProbFloor);
        }
        if (k != t.behavior.size()) throw std::invalid_argument("behavior distribution longer than legal edges");
    }
    return col;
}

Matrix critic_targets(const Batch& batch, const NetBundle& nets, const TrainConfig& config) {
    Matrix y(static_cast<Eigen::Index>(batch.size()), 1);
    std::vector<const HeteroState*> next;
    std::vector<int> rows;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        y(static_cast<Eigen::Index>(i), 0) = training_reward(*batch[i], config);
        if (!batch[i]->terminal) {
            next.push_back(&batch[i]->next_state);
            rows.push_back(static_cast<int>(i));
        }
    }
    if (!next.empty()) {
        Tape tape(false);
        const GraphBatch g = make_batch(next);
        const Var action = action_column(actor_log_probs(tape, nets.target, g));
        const Matrix q1 = critic_q(tape, nets.target, 0, g, action).value();
        const Matrix q2 = critic_q(tape, nets.target, 1, g, action).value();
        for (std::size_t k = 0; k < rows.size(); ++k) {
            const auto r = static_cast<Eigen::Index>(k);
            y(rows[k], 0) += config.gamma * std::min(q1(r, 0), q2(r, 0));
        }
    }
    if (!y.allFinite()) throw std::runtime_error("critic target is not finite");
    return y;
}

CriticLoss critic_loss(Tape& tape, const Batch& batch, const NetBundle& nets, const TrainConfig& config) {
    if (batch.empty()) throw std::invalid_argument("critic_loss: empty batch");
    const Matrix y = critic_targets(batch, nets, config);
    const GraphBatch g = batch_of_states(batch);
    const Var action = tape.constant(behavior_column(batch, g));
    const Var q1 = critic_q(tape, nets.online, 0, g, action);
    const Var q2 = critic_q(tape, nets.online, 1, g, action);
    const Var target = tape.constant(y);
    const Var loss = scale(add(squared_error(q1, target), squared_error(q2, target)), 0.5);
    return {loss, y, q1.value(), q2.value()};
}

ActorLoss actor_loss_with_policy(Tape& tape, const Batch& batch, const GraphBatch& graphs, Var log_probs,
                                 const NetBundle& nets, const TrainConfig& config) {
    if (batch.empty()) throw std::invalid_argument("actor_loss: empty batch");
    const Var q = critic_q(tape, nets.online, 0, graphs, action_column(log_probs));

    // pi_D and log pi_D on legal edges, zero elsewhere.
    const Matrix behavior_log = behavior_column(batch, graphs);
    Matrix pd = Matrix::Zero(graphs.num_jm(), 1);
    Matrix log_pd = Matrix::Zero(graphs.num_jm(), 1);
    const double log_floor = std::log(kPolicyProbFloor);
    int clamped = 0;
    for (int e = 0; e < graphs.num_jm(); ++e) {
        if (!graphs.jm_legal[static_cast<std::size_t>(e)]) continue;
        log_pd(e, 0) = behavior_log(e, 0);
        pd(e, 0) = std::exp(behavior_log(e, 0));
        if (log_probs.value()(e, 0) < log_floor) ++clamped;
    }
    const Var kl_edges = mul(tape.constant(pd), sub(tape.constant(log_pd), clamp_min(log_probs, log_floor)));
    const Var kl = scatter_sum(kl_edges, graphs.jm_graph, graphs.graphs);

    Matrix delta(graphs.graphs, 1);
    for (int g = 0; g < graphs.graphs; ++g) delta(g, 0) = batch[static_cast<std::size_t>(g)]->delta;
    const Var per_graph = add(scale(q, -config.lambda_rl), scale(mul(kl, tape.constant(delta)), config.lambda_bc));

    ActorLoss out;
    out.loss = mean(per_graph);
    out.mean_q = q.value().mean();
    out.mean_kl = kl.value().mean();
    out.clamped = clamped;
    return out;
}

ActorLoss actor_loss(Tape& tape, const Batch& batch, const NetBundle& nets, const TrainConfig& config) {
    if (batch.empty()) throw std::invalid_argument("actor_loss: empty batch");
    const GraphBatch g = batch_of_states(batch);
    return actor_loss_with_policy(tape, batch, g, actor_log_probs(tape, nets.online, g), nets, config);
}

void soft_update(ParamSet& target, const ParamSet& online, double tau) {
    if (target.size() != online.size()) throw ShapeError("soft_update: parameter counts differ");
    for (std::size_t i = 0; i < target.size(); ++i) {
        Tensor& t = target.tensors()[i];
        const Tensor& o = online.tensors()[i];
        if (t.name != o.name || t.value.rows() != o.value.rows() || t.value.cols() != o.value.cols())
            throw ShapeError("soft_update: '" + t.name + "' does not match '" + o.name + "'");
        if (tau == 1.0)
            t.value = o.value;
        else if (tau != 0.0)
            t.value += tau * (o.value - t.value);
    }
}

void soft_update(Networks& target, const Networks& online, double tau) {
    auto t = target.named_sets();
    const auto o = online.named_sets();
    if (t.size() != o.size()) throw ShapeError("soft_update: networks differ in structure");
    for (std::size_t i = 0; i < t.size(); ++i) soft_update(*t[i].second, *o[i].second, tau);
}

TrainResult train(const Dataset& dataset, const TrainConfig& config, const std::vector<EvalItem>& validation,
                  const EpochCallback& on_epoch) {
    config.validate();
    if (dataset.transitions.empty()) throw std::invalid_argument("train: dataset has no transitions");
    reuse_freed_memory();

    TrainResult result{NetBundle::create(config.model, config.seed), {}, 0, 0, false, {}};
    NetBundle& nets = result.nets;
    AdamConfig adam;
    adam.lr = config.lr;

    std::vector<ParamSet*> critic_sets;
    if (config.model.share_encoder) critic_sets.push_back(&nets.online.actor_encoder);
    for (int i = 0; i < 2; ++i) {
        if (!config.model.share_encoder) critic_sets.push_back(&nets.online.critic_encoder[static_cast<std::size_t>(i)]);
        critic_sets.push_back(&nets.online.critic_head[static_cast<std::size_t>(i)]);
    }
    auto critic_opt = make_optimizers(critic_sets, adam);
    auto actor_opt = make_optimizers({&nets.online.actor_encoder, &nets.online.actor_head}, adam);

    std::vector<std::size_t> order(dataset.transitions.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(config.seed, 0x7261696eULL));
    const auto batch_size = static_cast<std::size_t>(config.batch_size);

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const NetBundle snapshot = nets;
        std::shuffle(order.begin(), order.end(), rng);
        EpochMetrics m;
        m.epoch = epoch;
        int critic_batches = 0, actor_batches = 0;
        try {
            for (std::size_t start = 0; start < order.size(); start += batch_size) {
                Batch batch;
                for (std::size_t i = start; i < std::min(order.size(), start + batch_size); ++i)
                    batch.push_back(&dataset.transitions[order[i]]);

                nets.online.zero_grad();
                {
                    Tape tape;
                    const CriticLoss cl = critic_loss(tape, batch, nets, config);
                    const double value = cl.loss.scalar();
                    if (!std::isfinite(value)) throw std::runtime_error("critic loss is not finite");
                    tape.backward(cl.loss);
                    for (auto& o : critic_opt) o.adam.step(*o.params);
                    m.critic_loss += value;
                    ++critic_batches;
                    ++result.critic_steps;
                }
                if (result.critic_steps % config.policy_delay != 0) continue;

                nets.online.zero_grad();
                Tape tape;
                const ActorLoss al = actor_loss(tape, batch, nets, config);
                const double value = al.loss.scalar();
                if (!std::isfinite(value)) throw std::runtime_error("actor loss is not finite");
                tape.backward(al.loss);
                for (auto& o : actor_opt) o.adam.step(*o.params);
                soft_update(nets.target, nets.online, config.tau);
                m.actor_loss += value;
                m.kl += al.mean_kl;
                m.mean_q += al.mean_q;
                ++actor_batches;
                ++result.actor_steps;
            }
        } catch (const std::runtime_error& e) {
            nets = snapshot;
            result.diverged = true;
            result.message = "epoch " + std::to_string(epoch) + ": " + e.what();
            return result;
        }
        m.critic_loss /= std::max(critic_batches, 1);
        if (actor_batches > 0) {
            m.actor_loss /= actor_batches;
            m.kl /= actor_batches;
            m.mean_q /= actor_batches;
        } else {
            m.actor_loss = m.kl = m.mean_q = std::numeric_limits<double>::quiet_NaN();
        }
        m.val_gap = validation.empty() ? std::numeric_limits<double>::quiet_NaN()
                                       : evaluate(nets.online, validation, dataset.env).mean;
        result.metrics.push_back(m);
        if (on_epoch) on_epoch(m);
    }
    return result;
}

std::string metrics_to_csv(const std::vector<EpochMetrics>& metrics) {
    std::string out = "epoch,critic_loss,actor_loss,kl,mean_q,val_gap\n";
    for (const auto& m : metrics)
        out += std::to_string(m.epoch) + "," + format_double(m.critic_loss) + "," + format_double(m.actor_loss) + "," +
               format_double(m.kl) + "," + format_double(m.mean_q) + "," + format_double(m.val_gap) + "\n";
    return out;
}

void summarize(GapTable& table) {
    if (table.rows.empty()) {
        table.mean = table.median = std::numeric_limits<double>::quiet_NaN();
        return;
    }
    std::vector<double> gaps;
    for (const auto& r : table.rows) gaps.push_back(r.gap);
    table.mean = std::accumulate(gaps.begin(), gaps.end(), 0.0) / static_cast<double>(gaps.size());
    std::sort(gaps.begin(), gaps.end());
    const std::size_t n = gaps.size();
    table.median = n % 2 ? gaps[n / 2] : 0.5 * (gaps[n / 2 - 1] + gaps[n / 2]);
}

namespace {

GapTable evaluate_with(const std::vector<EvalItem>& items, int threads,
                       const std::function<Schedule(std::size_t)>& solve) {
    GapTable table;
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (items[i].reference > 0)
            kept.push_back(i);
        else
            table.warnings.push_back("no reference for '" + items[i].instance->name() + "', skipped");
    }
    table.rows.resize(kept.size());
    parallel_for(static_cast<int>(kept.size()), threads, [&](int k) {
        const EvalItem& item = items[kept[static_cast<std::size_t>(k)]];
        const Schedule s = solve(kept[static_cast<std::size_t>(k)]);
        const auto violations = validate_schedule(*item.instance, s);
        if (!violations.empty())
            throw std::logic_error("decoded schedule for '" + item.instance->name() + "' is invalid");
        GapRow& row = table.rows[static_cast<std::size_t>(k)];
        row.instance = item.instance->name();
        row.makespan = makespan(*item.instance, s);
        row.reference = item.reference;
        row.gap = optimal_gap(static_cast<double>(row.makespan), static_cast<double>(row.reference));
    });
    summarize(table);
    return table;
}

}  // namespace

GapTable evaluate(const Networks& nets, const std::vector<EvalItem>& items, const EnvParams& env, int threads) {
    return evaluate_with(items, threads, [&](std::size_t i) { return greedy_decode(items[i].instance, nets, env); });
}

Schedule random_policy_decode(std::shared_ptr<const Instance> instance, const EnvParams& env, std::uint64_t seed) {
    Rng rng(seed);
    HeteroState state = reset(std::move(instance), env);
    while (!state.terminal()) {
        auto legal = legal_actions(state);
        std::shuffle(legal.begin(), legal.end(), rng);
        std::vector<std::pair<ActionEdge, double>> ranked;
        for (std::size_t i = 0; i < legal.size(); ++i) ranked.emplace_back(legal[i], -static_cast<double>(i));
        state = step(state, select_compatible_set(std::move(ranked))).state;
    }
    return state.partial_schedule();
}

GapTable evaluate_random_policy(const std::vector<EvalItem>& items, const EnvParams& env, std::uint64_t seed) {
    return evaluate_with(items, 1, [&](std::size_t i) {
        return random_policy_decode(items[i].instance, env, derive_seed(seed, i));
    });
}

std::string gap_table_to_csv(const GapTable& table) {
    std::string out = "instance,makespan,reference,gap\n";
    for (const auto& r : table.rows)
        out += r.instance + "," + std::to_string(r.makespan) + "," + std::to_string(r.reference) + "," +
               format_double(r.gap) + "\n";
    out += "mean,,," + format_double(table.mean) + "\n";
    out += "median,,," + format_double(table.median) + "\n";
    return out;
}

GapTable gap_table_from_csv(const std::string& text) {
    GapTable table;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    bool have_mean = false, have_median = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1) {
            if (line != "instance,makespan,reference,gap")
                throw std::invalid_argument("gap table: unexpected header '" + line + "'");
            continue;
        }
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != 4) throw std::invalid_argument("gap table line " + std::to_string(line_no) + ": 4 cells expected");
        try {
            if (cells[0] == "mean" && cells[1].empty()) {
                table.mean = parse_double(cells[3]);
                have_mean = true;
            } else if (cells[0] == "median" && cells[1].empty()) {
                table.median = parse_double(cells[3]);
                have_median = true;
            } else {
                table.rows.push_back({cells[0], std::stoll(cells[1]), std::stoll(cells[2]), parse_double(cells[3])});
            }
        } catch (const std::logic_error& e) {
            throw std::invalid_argument("gap table line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (line_no == 0) throw std::invalid_argument("gap table: empty input");
    if (!have_mean || !have_median) summarize(table);
    return table;
}

Checkpoint training_checkpoint(const Networks& nets, const EnvParams& env, const TrainConfig& config) {
    Checkpoint ckpt = networks_to_checkpoint(nets, env);
    json m = json::parse(ckpt.manifest);
    m["train"] = {{"epochs", config.epochs},       {"batch_size", config.batch_size},
                  {"lr", config.lr},               {"gamma", config.gamma},
                  {"lambda_rl", config.lambda_rl}, {"lambda_bc", config.lambda_bc},
                  {"policy_delay", config.policy_delay}, {"tau", config.tau},
                  {"seed", config.seed},           {"scale_rewards", config.scale_rewards}};
    ckpt.manifest = m.dump();
    return ckpt;
}

}  // namespace shopgraph
