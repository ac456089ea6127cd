#include "shopgraph/hgt.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace shopgraph {

using json = nlohmann::json;

namespace {

enum NodeType { kOp = 0, kJob = 1, kMachine = 2 };

struct RelationSpec {
    Relation relation;
    const char* key;
    NodeType source;
    NodeType target;
    // 0 none, 1 operation-machine features, 2 job-machine features
    int edge_kind;
};

constexpr std::array<RelationSpec, kRelationCount> kRelations{{
    {Relation::MachineToOp, "mo", kMachine, kOp, 1},
    {Relation::OpToOp, "oo", kOp, kOp, 0},
    {Relation::OpToMachine, "om", kOp, kMachine, 1},
    {Relation::JobToMachine, "jm", kJob, kMachine, 2},
    {Relation::OpToJob, "oj", kOp, kJob, 0},
    {Relation::MachineToJob, "mj", kMachine, kJob, 2},
    {Relation::JobToJob, "jj", kJob, kJob, 0},
}};

constexpr std::array<const char*, 3> kTypeKey{"o", "j", "m"};
constexpr std::array<int, 3> kRawWidth{kOpFeatures, kJobFeatures, kMachineFeatures};

// Parameters enter a grad tape as leaves that accumulate into their gradient
// buffer; a tape without gradients only copies the value.
Var use(Tape& tape, const Tensor& t) {
    if (!tape.grad_enabled()) return tape.constant(t.value);
    return tape.param(const_cast<Tensor&>(t));
}

Var use(Tape& tape, const ParamSet& ps, const std::string& name) { return use(tape, ps.at(name)); }

void glorot(Tensor& t, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(t.value.rows() + t.value.cols()));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (Eigen::Index i = 0; i < t.value.size(); ++i) t.value.data()[i] = u(rng);
}

std::string layer_key(int layer) { return "l" + std::to_string(layer) + "."; }

int encoder_jm_width(const ParamSet& encoder) {
    for (const auto& spec : kRelations)
        if (spec.edge_kind == 2) return static_cast<int>(encoder.at(layer_key(0) + spec.key + ".ek").value.rows());
    return 0;
}

void init_encoder(ParamSet& ps, const HgtConfig& c, int jm_width, std::mt19937_64& rng) {
    const int hd = c.heads * c.hidden;
    for (int l = 0; l < c.layers; ++l) {
        const std::string lk = layer_key(l);
        auto width = [&](NodeType t) { return l == 0 ? kRawWidth[t] : c.hidden; };
        for (const auto& spec : kRelations) {
            const std::string p = lk + spec.key;
            glorot(ps.add(p + ".q", width(spec.target), hd), rng);
            glorot(ps.add(p + ".k", width(spec.source), hd), rng);
            glorot(ps.add(p + ".v", width(spec.source), hd), rng);
            if (spec.edge_kind != 0) {
                const int ew = spec.edge_kind == 1 ? kOpMachineFeatures : jm_width;
                glorot(ps.add(p + ".ek", ew, hd), rng);
                glorot(ps.add(p + ".ev", ew, hd), rng);
            }
        }
        for (NodeType t : {kOp, kJob, kMachine}) {
            glorot(ps.add(lk + "self." + kTypeKey[t], width(t), hd), rng);
            glorot(ps.add(lk + "out." + kTypeKey[t], hd, c.hidden), rng);
        }
    }
}

void init_mlp(ParamSet& ps, const std::vector<int>& widths, std::mt19937_64& rng) {
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        glorot(ps.add("mlp" + std::to_string(i) + ".w", widths[i], widths[i + 1]), rng);
        ps.add("mlp" + std::to_string(i) + ".b", 1, widths[i + 1]);
    }
}

Var run_mlp(Tape& tape, const ParamSet& ps, Var x, double slope) {
    for (int i = 0;; ++i) {
        const std::string p = "mlp" + std::to_string(i);
        if (!ps.contains(p + ".w")) return x;
        x = add_row(matmul(x, use(tape, ps, p + ".w")), use(tape, ps, p + ".b"));
        if (ps.contains("mlp" + std::to_string(i + 1) + ".w")) x = leaky_relu(x, slope);
    }
}

std::vector<int> mlp_widths(int input, const HgtConfig& c) {
    std::vector<int> w{input};
    for (int i = 0; i + 1 < c.mlp_layers; ++i) w.push_back(c.hidden);
    w.push_back(1);
    return w;
}

Matrix to_matrix(const std::vector<double>& data, int width) {
    const Eigen::Index rows = width == 0 ? 0 : static_cast<Eigen::Index>(data.size()) / width;
    Matrix m(rows, width);
    std::copy(data.begin(), data.end(), m.data());
    return m;
}

void check_finite(const Var& v, int layer, const char* type) {
    if (!v.value().allFinite())
        throw std::runtime_error("encoder: non-finite " + std::string(type) + " embedding at layer " +
                                 std::to_string(layer));
}

}  // namespace

void HgtConfig::validate() const {
    if (layers < 1 || heads < 1 || hidden < 1 || mlp_layers < 1)
        throw std::invalid_argument("model sizes must be positive");
    if (!(slope >= 0.0 && slope < 1.0)) throw std::invalid_argument("leaky slope must be in [0,1)");
}

const char* to_string(Relation relation) {
    switch (relation) {
        case Relation::MachineToOp: return "machine->op";
        case Relation::OpToOp: return "op->op";
        case Relation::OpToMachine: return "op->machine";
        case Relation::JobToMachine: return "job->machine";
        case Relation::OpToJob: return "op->job";
        case Relation::MachineToJob: return "machine->job";
        case Relation::JobToJob: return "job->job";
    }
    return "?";
}

GraphBatch make_batch(const std::vector<const HeteroState*>& states) {
    GraphBatch b;
    b.graphs = static_cast<int>(states.size());
    if (!states.empty()) b.jm_width = states.front()->graph().jm_width;
    b.jm_offset.push_back(0);

    // Stack features first so each matrix is allocated once.
    Eigen::Index ops = 0, jobs = 0, machines = 0, om = 0, jm = 0;
    for (const HeteroState* s : states) {
        const StateGraph& g = s->graph();
        if (g.jm_width != b.jm_width) throw std::invalid_argument("make_batch: mixed job-machine feature widths");
        ops += g.num_ops();
        jobs += s->instance().num_jobs();
        machines += s->instance().num_machines();
        om += static_cast<Eigen::Index>(g.om_op.size());
        jm += g.num_jm();
    }
    b.op_x.resize(ops, kOpFeatures);
    b.job_x.resize(jobs, kJobFeatures);
    b.machine_x.resize(machines, kMachineFeatures);
    b.om_x.resize(om, kOpMachineFeatures);
    b.jm_x.resize(jm, b.jm_width);

    int op_base = 0, job_base = 0, machine_base = 0, om_base = 0, jm_base = 0;
    for (int gi = 0; gi < b.graphs; ++gi) {
        const HeteroState& s = *states[static_cast<std::size_t>(gi)];
        const StateGraph& g = s.graph();
        const int nj = s.instance().num_jobs();
        const int nm = s.instance().num_machines();
        const int no = g.num_ops();
        const int nom = static_cast<int>(g.om_op.size());
        const int njm = g.num_jm();

        if (no) b.op_x.middleRows(op_base, no) = to_matrix(g.op_features, kOpFeatures);
        if (nj) b.job_x.middleRows(job_base, nj) = to_matrix(g.job_features, kJobFeatures);
        if (nm) b.machine_x.middleRows(machine_base, nm) = to_matrix(g.machine_features, kMachineFeatures);
        if (nom) b.om_x.middleRows(om_base, nom) = to_matrix(g.om_features, kOpMachineFeatures);
        if (njm) b.jm_x.middleRows(jm_base, njm) = to_matrix(g.jm_features, g.jm_width);

        for (int e = 0; e < nom; ++e) {
            b.om_op.push_back(op_base + g.om_op[static_cast<std::size_t>(e)]);
            b.om_machine.push_back(machine_base + g.om_machine[static_cast<std::size_t>(e)]);
        }
        for (std::size_t e = 0; e < g.oj_op.size(); ++e) {
            b.oj_op.push_back(op_base + g.oj_op[e]);
            b.oj_job.push_back(job_base + g.oj_job[e]);
        }
        for (std::size_t e = 0; e < g.oo_src.size(); ++e) {
            b.oo_src.push_back(op_base + g.oo_src[e]);
            b.oo_dst.push_back(op_base + g.oo_dst[e]);
        }
        for (int e = 0; e < njm; ++e) {
            const ActionEdge& a = g.jm_edges[static_cast<std::size_t>(e)];
            b.jm_job.push_back(job_base + a.job);
            b.jm_machine.push_back(machine_base + a.machine);
            b.jm_legal.push_back(g.jm_legal[static_cast<std::size_t>(e)]);
            b.jm_graph.push_back(gi);
        }
        for (int i = 0; i < nj; ++i)
            for (int k = 0; k < nj; ++k)
                if (i != k) {
                    b.jj_src.push_back(job_base + k);
                    b.jj_dst.push_back(job_base + i);
                }
        b.job_graph.insert(b.job_graph.end(), static_cast<std::size_t>(nj), gi);
        b.machine_graph.insert(b.machine_graph.end(), static_cast<std::size_t>(nm), gi);

        op_base += no;
        job_base += nj;
        machine_base += nm;
        om_base += nom;
        jm_base += njm;
        b.jm_offset.push_back(jm_base);
    }
    return b;
}

Embeddings encode(Tape& tape, const ParamSet& encoder, const HgtConfig& c, const GraphBatch& batch, Var jm_x,
                  std::vector<AttentionRecord>* attention) {
    if (jm_x.rows() != batch.num_jm() || jm_x.cols() != encoder_jm_width(encoder))
        throw ShapeError("encode: job-machine features have " + std::to_string(jm_x.cols()) +
                         " columns, encoder expects " + std::to_string(encoder_jm_width(encoder)));
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(c.hidden));
    const std::array<int, 3> counts{static_cast<int>(batch.op_x.rows()), static_cast<int>(batch.job_x.rows()),
                                    static_cast<int>(batch.machine_x.rows())};
    std::array<Var, 3> h{tape.constant(batch.op_x), tape.constant(batch.job_x), tape.constant(batch.machine_x)};
    const Var om_x = tape.constant(batch.om_x);

    auto edges = [&](Relation r) -> std::pair<const Index*, const Index*> {
        switch (r) {
            case Relation::MachineToOp: return {&batch.om_machine, &batch.om_op};
            case Relation::OpToOp: return {&batch.oo_src, &batch.oo_dst};
            case Relation::OpToMachine: return {&batch.om_op, &batch.om_machine};
            case Relation::JobToMachine: return {&batch.jm_job, &batch.jm_machine};
            case Relation::OpToJob: return {&batch.oj_op, &batch.oj_job};
            case Relation::MachineToJob: return {&batch.jm_machine, &batch.jm_job};
            case Relation::JobToJob: return {&batch.jj_src, &batch.jj_dst};
        }
        throw std::logic_error("unknown relation");
    };

    for (int l = 0; l < c.layers; ++l) {
        const std::string lk = layer_key(l);
        std::array<Var, 3> next;
        for (NodeType t : {kOp, kJob, kMachine})
            next[t] = matmul(h[t], use(tape, encoder, lk + "self." + kTypeKey[t]));

        for (const auto& spec : kRelations) {
            const auto [src, dst] = edges(spec.relation);
            if (src->empty()) continue;
            const std::string p = lk + spec.key;
            const Var q = matmul(h[spec.target], use(tape, encoder, p + ".q"));
            const Var k = matmul(h[spec.source], use(tape, encoder, p + ".k"));
            const Var v = matmul(h[spec.source], use(tape, encoder, p + ".v"));
            Var key = gather_rows(k, *src);
            Var msg = gather_rows(v, *src);
            if (spec.edge_kind != 0) {
                const Var ex = spec.edge_kind == 1 ? om_x : jm_x;
                key = add(key, matmul(ex, use(tape, encoder, p + ".ek")));
                msg = add(msg, matmul(ex, use(tape, encoder, p + ".ev")));
            }
            const Var score = scale(block_dot(gather_rows(q, *dst), key, c.heads), inv_sqrt);
            const Var alpha = segment_softmax(score, *dst, counts[spec.target]);
            if (attention) attention->push_back({l, spec.relation, alpha.value(), *dst, counts[spec.target]});
            next[spec.target] = add(next[spec.target], scatter_sum(block_scale(msg, alpha, c.heads), *dst,
                                                                   counts[spec.target]));
        }
        for (NodeType t : {kOp, kJob, kMachine}) {
            Var out = matmul(next[t], use(tape, encoder, lk + "out." + kTypeKey[t]));
            if (l + 1 < c.layers) out = leaky_relu(out, c.slope);
            check_finite(out, l, kTypeKey[t]);
            h[t] = out;
        }
    }
    return {h[kOp], h[kJob], h[kMachine]};
}

Networks Networks::create(const HgtConfig& config, std::uint64_t seed) {
    config.validate();
    Networks n;
    n.config = config;
    std::mt19937_64 rng(seed);
    const int critic_width = kJobMachineFeatures + 1;
    init_encoder(n.actor_encoder, config, config.share_encoder ? critic_width : kJobMachineFeatures, rng);
    init_mlp(n.actor_head, mlp_widths(2 * config.hidden + kJobMachineFeatures, config), rng);
    for (int i = 0; i < 2; ++i) {
        if (!config.share_encoder) init_encoder(n.critic_encoder[static_cast<std::size_t>(i)], config, critic_width, rng);
        init_mlp(n.critic_head[static_cast<std::size_t>(i)], mlp_widths(2 * config.hidden, config), rng);
    }
    return n;
}

const ParamSet& Networks::encoder_of_critic(int which) const {
    if (which < 0 || which > 1) throw std::out_of_range("critic index must be 0 or 1");
    return config.share_encoder ? actor_encoder : critic_encoder[static_cast<std::size_t>(which)];
}

ParamSet& Networks::encoder_of_critic(int which) {
    return const_cast<ParamSet&>(static_cast<const Networks&>(*this).encoder_of_critic(which));
}

std::vector<std::pair<std::string, const ParamSet*>> Networks::named_sets() const {
    std::vector<std::pair<std::string, const ParamSet*>> out{{"actor.enc/", &actor_encoder},
                                                             {"actor.head/", &actor_head}};
    for (int i = 0; i < 2; ++i) {
        const std::string c = "critic" + std::to_string(i + 1);
        if (!config.share_encoder) out.emplace_back(c + ".enc/", &critic_encoder[static_cast<std::size_t>(i)]);
        out.emplace_back(c + ".head/", &critic_head[static_cast<std::size_t>(i)]);
    }
    return out;
}

std::vector<std::pair<std::string, ParamSet*>> Networks::named_sets() {
    std::vector<std::pair<std::string, ParamSet*>> out;
    for (const auto& [name, set] : static_cast<const Networks&>(*this).named_sets())
        out.emplace_back(name, const_cast<ParamSet*>(set));
    return out;
}

std::size_t Networks::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, set] : named_sets()) n += set->scalar_count();
    return n;
}

void Networks::zero_grad() {
    for (auto& [name, set] : named_sets()) set->zero_grad();
}

bool Networks::same_values(const Networks& other) const {
    if (!(config == other.config)) return false;
    const auto a = named_sets();
    const auto b = other.named_sets();
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!a[i].second->same_values(*b[i].second)) return false;
    return true;
}

Var actor_log_probs(Tape& tape, const Networks& nets, const GraphBatch& batch,
                    std::vector<AttentionRecord>* attention) {
    if (batch.jm_width != kJobMachineFeatures)
        throw std::invalid_argument("actor: expected an unaugmented batch");
    const Var base = tape.constant(batch.jm_x);
    Var enc_x = base;
    if (encoder_jm_width(nets.actor_encoder) == kJobMachineFeatures + 1)
        enc_x = tape.constant((Matrix(batch.jm_x.rows(), kJobMachineFeatures + 1) << batch.jm_x,
                               Matrix::Zero(batch.jm_x.rows(), 1))
                                  .finished());
    const Embeddings e = encode(tape, nets.actor_encoder, nets.config, batch, enc_x, attention);
    const Var x = concat_cols({gather_rows(e.job, batch.jm_job), gather_rows(e.machine, batch.jm_machine), base});
    const Var scores = run_mlp(tape, nets.actor_head, x, nets.config.slope);
    Matrix mask(batch.num_jm(), 1);
    for (int i = 0; i < batch.num_jm(); ++i) mask(i, 0) = batch.jm_legal[static_cast<std::size_t>(i)] ? 0.0 : 1.0;
    return segment_log_softmax(masked_fill(scores, mask, kMaskFill), batch.jm_graph, batch.graphs);
}

Var action_column(Var log_probs) { return clamp_min(log_probs, kLogProbFloor); }

Var critic_q(Tape& tape, const Networks& nets, int which, const GraphBatch& batch, Var action) {
    if (batch.jm_width != kJobMachineFeatures)
        throw std::invalid_argument("critic: expected an unaugmented batch plus an action column");
    if (action.rows() != batch.num_jm() || action.cols() != 1)
        throw ShapeError("critic: action column must be " + std::to_string(batch.num_jm()) + "x1");
    const Var jm_x = concat_cols({tape.constant(batch.jm_x), action});
    const Embeddings e = encode(tape, nets.encoder_of_critic(which), nets.config, batch, jm_x);
    const Var pooled = concat_cols({segment_mean(e.job, batch.job_graph, batch.graphs),
                                    segment_mean(e.machine, batch.machine_graph, batch.graphs)});
    return run_mlp(tape, nets.critic_head[static_cast<std::size_t>(which)], pooled, nets.config.slope);
}

PolicyDistribution actor_distribution(const HeteroState& state, const Networks& nets) {
    if (state.terminal()) throw EnvError("actor_distribution: terminal state");
    const GraphBatch batch = make_batch({&state});
    Tape tape(false);
    const Matrix lp = actor_log_probs(tape, nets, batch).value();
    PolicyDistribution d;
    const StateGraph& g = state.graph();
    for (int e = 0; e < g.num_jm(); ++e) {
        if (!g.jm_legal[static_cast<std::size_t>(e)]) continue;
        d.edges.push_back(g.jm_edges[static_cast<std::size_t>(e)]);
        d.log_probs.push_back(lp(e, 0));
        d.probs.push_back(std::exp(lp(e, 0)));
    }
    if (d.edges.empty()) throw EnvError("actor_distribution: no legal edge");
    return d;
}

HeteroState augment_with_action(const HeteroState& state, const PolicyDistribution& distribution) {
    const StateGraph& g = state.graph();
    std::vector<double> column(static_cast<std::size_t>(g.num_jm()), kLogProbFloor);
    std::size_t k = 0;
    for (int e = 0; e < g.num_jm(); ++e) {
        if (!g.jm_legal[static_cast<std::size_t>(e)]) continue;
        const bool matches = k < distribution.probs.size() &&
                             (distribution.edges.empty() || distribution.edges[k] == g.jm_edges[static_cast<std::size_t>(e)]);
        if (!matches)
            throw std::invalid_argument("augment_with_action: distribution does not match the legal edges");
        const double lp = distribution.log_probs.empty() ? std::log(distribution.probs[k]) : distribution.log_probs[k];
        column[static_cast<std::size_t>(e)] = std::max(lp, kLogProbFloor);
        ++k;
    }
    if (k != distribution.probs.size())
        throw std::invalid_argument("augment_with_action: distribution does not match the legal edges");
    return state.with_extra_jm_feature(column);
}

double critic_value(const HeteroState& augmented, const Networks& nets, int which) {
    if (!augmented.augmented()) throw std::invalid_argument("critic_value: state carries no action column");
    GraphBatch batch = make_batch({&augmented});
    Tape tape(false);
    const Matrix action = batch.jm_x.rightCols(1);
    batch.jm_x = Matrix(batch.jm_x.leftCols(kJobMachineFeatures));
    batch.jm_width = kJobMachineFeatures;
    return critic_q(tape, nets, which, batch, tape.constant(action)).scalar();
}

Schedule greedy_from(const HeteroState& start, const Networks& nets) {
    HeteroState state = start;
    while (!state.terminal()) {
        const PolicyDistribution d = actor_distribution(state, nets);
        std::vector<std::pair<ActionEdge, double>> ranked;
        ranked.reserve(d.edges.size());
        for (std::size_t i = 0; i < d.edges.size(); ++i) ranked.emplace_back(d.edges[i], d.log_probs[i]);
        state = step(state, select_compatible_set(std::move(ranked))).state;
    }
    return state.partial_schedule();
}

Schedule greedy_decode(std::shared_ptr<const Instance> instance, const Networks& nets, const EnvParams& env) {
    return greedy_from(reset(std::move(instance), env), nets);
}

Checkpoint networks_to_checkpoint(const Networks& nets, const EnvParams& env) {
    const HgtConfig& c = nets.config;
    json m = {{"kind", "shopgraph-hgt"},
              {"layers", c.layers},
              {"heads", c.heads},
              {"hidden", c.hidden},
              {"mlp_layers", c.mlp_layers},
              {"slope", c.slope},
              {"share_encoder", c.share_encoder},
              {"features",
               {{"op", kOpFeatures},
                {"job", kJobFeatures},
                {"machine", kMachineFeatures},
                {"op_machine", kOpMachineFeatures},
                {"job_machine", kJobMachineFeatures}}},
              {"env",
               {{"visible_ops_per_job", env.visible_ops_per_job},
                {"mask_factor", env.mask_factor},
                {"normalize_features", env.normalize_features}}}};
    Checkpoint ckpt;
    ckpt.manifest = m.dump();
    for (const auto& [prefix, set] : nets.named_sets()) add_to_checkpoint(ckpt, prefix, *set);
    return ckpt;
}

Networks networks_from_checkpoint(const Checkpoint& ckpt, EnvParams* env) {
    json m;
    try {
        m = json::parse(ckpt.manifest);
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("checkpoint manifest is not JSON: ") + e.what());
    }
    if (m.value("kind", "") != "shopgraph-hgt") throw std::runtime_error("checkpoint does not hold an HGT model");
    const json& f = m.at("features");
    if (f.at("op") != kOpFeatures || f.at("job") != kJobFeatures || f.at("machine") != kMachineFeatures ||
        f.at("op_machine") != kOpMachineFeatures || f.at("job_machine") != kJobMachineFeatures)
        throw std::runtime_error("checkpoint was trained with different feature widths");
    HgtConfig c;
    c.layers = m.at("layers").get<int>();
    c.heads = m.at("heads").get<int>();
    c.hidden = m.at("hidden").get<int>();
    c.mlp_layers = m.at("mlp_layers").get<int>();
    c.slope = m.at("slope").get<double>();
    c.share_encoder = m.at("share_encoder").get<bool>();
    Networks n = Networks::create(c, 0);
    for (auto& [prefix, set] : n.named_sets()) load_from_checkpoint(ckpt, prefix, *set);
    if (env) {
        const json& e = m.at("env");
        env->visible_ops_per_job = e.at("visible_ops_per_job").get<int>();
        env->mask_factor = e.at("mask_factor").get<double>();
        env->normalize_features = e.at("normalize_features").get<bool>();
    }
    return n;
}

}  // namespace shopgraph
