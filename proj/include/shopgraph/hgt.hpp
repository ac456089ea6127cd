#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "shopgraph/env.hpp"
#include "shopgraph/tensorcore.hpp"

namespace shopgraph {

struct HgtConfig {
    int layers = 5;
    int heads = 3;
    /// Width of every embedding and of each attention head.
    int hidden = 32;
    /// Linear layers in the actor and critic MLPs.
    int mlp_layers = 3;
    double slope = 0.01;
    /// Actor and critics use one encoder. The shared encoder sees the action
    /// column; the actor feeds zeros there.
    bool share_encoder = false;

    void validate() const;

    friend bool operator==(const HgtConfig&, const HgtConfig&) = default;
};

/// Log-probability written for masked edges and the lower clamp for legal
/// ones when a distribution becomes an edge attribute.
inline constexpr double kLogProbFloor = -30.0;
/// Additive logit mask for illegal edges.
inline constexpr double kMaskFill = -1e9;

enum class Relation { MachineToOp, OpToOp, OpToMachine, JobToMachine, OpToJob, MachineToJob, JobToJob };
inline constexpr int kRelationCount = 7;
const char* to_string(Relation relation);

/// Disjoint union of state graphs. Node and edge indices are global to the
/// batch; `*_graph` gives the owning graph of every job, machine and job-machine
/// edge.
struct GraphBatch {
    int graphs = 0;
    int jm_width = kJobMachineFeatures;

    Matrix op_x;
    Matrix job_x;
    Matrix machine_x;

    Index om_op, om_machine;
    Matrix om_x;
    Index oj_op, oj_job;
    Index oo_src, oo_dst;
    Index jm_job, jm_machine;
    Matrix jm_x;
    std::vector<std::uint8_t> jm_legal;
    /// Every ordered pair of distinct jobs within one graph.
    Index jj_src, jj_dst;

    Index job_graph, machine_graph, jm_graph;
    /// First job-machine edge of each graph plus a final end marker.
    std::vector<int> jm_offset;

    int num_jm() const { return static_cast<int>(jm_job.size()); }
};

/// All states must share one job-machine feature width.
GraphBatch make_batch(const std::vector<const HeteroState*>& states);

/// Attention coefficients of one relation in one layer: one row per edge, one
/// column per head.
struct AttentionRecord {
    int layer = 0;
    Relation relation = Relation::MachineToOp;
    Matrix alpha;
    Index target;
    int targets = 0;
};

struct Embeddings {
    Var op;
    Var job;
    Var machine;
};

/// Actor, twin critics and their encoders. When the encoder is shared the
/// critic encoder sets stay empty.
struct Networks {
    HgtConfig config;
    ParamSet actor_encoder;
    ParamSet actor_head;
    std::array<ParamSet, 2> critic_encoder;
    std::array<ParamSet, 2> critic_head;

    /// Glorot-uniform weights, zero biases, deterministic in `seed`.
    static Networks create(const HgtConfig& config, std::uint64_t seed);

    const ParamSet& encoder_of_critic(int which) const;
    ParamSet& encoder_of_critic(int which);

    /// (prefix, set) for every non-empty parameter set, in a fixed order.
    std::vector<std::pair<std::string, const ParamSet*>> named_sets() const;
    std::vector<std::pair<std::string, ParamSet*>> named_sets();
    std::size_t scalar_count() const;
    void zero_grad();
    bool same_values(const Networks& other) const;
};

/// Encoder forward pass. Gradients reach the encoder tensors only on a tape
/// with gradients enabled. Throws std::runtime_error naming the layer on a
/// non-finite embedding.
Embeddings encode(Tape& tape, const ParamSet& encoder, const HgtConfig& config, const GraphBatch& batch, Var jm_x,
                  std::vector<AttentionRecord>* attention = nullptr);

/// Actor log-probabilities for every job-machine edge of the batch (E x 1),
/// normalized per graph over legal edges. Illegal edges sit near kMaskFill.
Var actor_log_probs(Tape& tape, const Networks& nets, const GraphBatch& batch,
                    std::vector<AttentionRecord>* attention = nullptr);

/// Edge attribute built from log-probabilities: clamped below at kLogProbFloor.
Var action_column(Var log_probs);

/// Q per graph (G x 1) from critic `which`. `action` is one column per
/// job-machine edge; the batch must carry unaugmented features.
Var critic_q(Tape& tape, const Networks& nets, int which, const GraphBatch& batch, Var action);

/// Probabilities over the legal edges of a state, in legal-edge order.
struct PolicyDistribution {
    std::vector<ActionEdge> edges;
    std::vector<double> probs;
    /// Same order as probs; filled by actor_distribution.
    std::vector<double> log_probs;
};

/// Throws EnvError when the state has no legal edge.
PolicyDistribution actor_distribution(const HeteroState& state, const Networks& nets);

/// Copy of `state` with log pi appended to every job-machine edge
/// (kLogProbFloor on illegal edges).
HeteroState augment_with_action(const HeteroState& state, const PolicyDistribution& distribution);

/// Q of an augmented state. Throws std::invalid_argument on an unaugmented one.
double critic_value(const HeteroState& augmented, const Networks& nets, int which = 0);

/// Runs the environment from reset, taking the compatible set of the highest
/// probability edges at every step.
Schedule greedy_decode(std::shared_ptr<const Instance> instance, const Networks& nets, const EnvParams& env = {});
Schedule greedy_from(const HeteroState& start, const Networks& nets);

/// Manifest records the model shape, the feature widths and `env`.
Checkpoint networks_to_checkpoint(const Networks& nets, const EnvParams& env);
/// Throws std::runtime_error if the manifest does not describe this model.
Networks networks_from_checkpoint(const Checkpoint& ckpt, EnvParams* env = nullptr);

}  // namespace shopgraph
