#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "shopgraph/dataset.hpp"
#include "shopgraph/hgt.hpp"

namespace shopgraph {

struct TrainConfig {
    int epochs = 30;
    int batch_size = 128;
    double lr = 2e-4;
    double gamma = 1.0;
    double lambda_rl = 0.5;
    double lambda_bc = 1.0;
    /// Actor and target updates happen every `policy_delay` critic steps.
    int policy_delay = 2;
    double tau = 0.005;
    std::uint64_t seed = 0;
    /// Divide rewards by the instance's total mean work for training.
    bool scale_rewards = true;
    HgtConfig model;

    void validate() const;
};

/// Online networks and their slowly updated targets.
struct NetBundle {
    Networks online;
    Networks target;

    /// Targets start as exact copies of the online networks.
    static NetBundle create(const HgtConfig& config, std::uint64_t seed);
};

using Batch = std::vector<const Transition*>;

/// Reward used for training: scaled by 1 / total mean work when enabled.
double training_reward(const Transition& t, const TrainConfig& config);

/// Behavior log-probabilities as a job-machine edge column (kLogProbFloor on
/// illegal edges), in batch edge order.
Matrix behavior_column(const Batch& batch, const GraphBatch& graphs);

struct CriticLoss {
    Var loss;
    /// Per transition: bootstrapped target y, and both online estimates.
    Matrix target;
    Matrix q1;
    Matrix q2;
};

/// Targets come from a separate gradient-free tape, so target networks never
/// receive gradient. Throws std::runtime_error on a non-finite target.
CriticLoss critic_loss(Tape& tape, const Batch& batch, const NetBundle& nets, const TrainConfig& config);

/// y for each transition: r if terminal, else r + gamma * min(Q1', Q2') with the
/// next state augmented by the target actor.
Matrix critic_targets(const Batch& batch, const NetBundle& nets, const TrainConfig& config);

struct ActorLoss {
    Var loss;
    double mean_q = 0.0;
    double mean_kl = 0.0;
    /// Legal edges whose policy probability fell below the 1e-12 floor.
    int clamped = 0;
};

inline constexpr double kPolicyProbFloor = 1e-12;

/// -lambda_rl * Q1(s, pi) + delta * lambda_bc * KL(pi_D || pi), averaged.
ActorLoss actor_loss(Tape& tape, const Batch& batch, const NetBundle& nets, const TrainConfig& config);

/// Same loss with the policy log-probabilities supplied by the caller
/// (one row per job-machine edge of `graphs`).
ActorLoss actor_loss_with_policy(Tape& tape, const Batch& batch, const GraphBatch& graphs, Var log_probs,
                                 const NetBundle& nets, const TrainConfig& config);

/// target <- tau * online + (1 - tau) * target. Throws ShapeError on mismatch.
void soft_update(ParamSet& target, const ParamSet& online, double tau);
void soft_update(Networks& target, const Networks& online, double tau);

struct EpochMetrics {
    int epoch = 0;
    double critic_loss = 0.0;
    /// The actor columns are NaN in epochs without an actor step.
    double actor_loss = 0.0;
    double kl = 0.0;
    double mean_q = 0.0;
    /// Mean validation gap in percent; NaN without a validation set.
    double val_gap = 0.0;
};

struct EvalItem {
    std::shared_ptr<const Instance> instance;
    Time reference = 0;
};

struct TrainResult {
    NetBundle nets;
    std::vector<EpochMetrics> metrics;
    int critic_steps = 0;
    int actor_steps = 0;
    /// Set when the divergence guard fired; `nets` then holds the state from
    /// the start of the failing epoch.
    bool diverged = false;
    std::string message;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Throws std::invalid_argument on an empty dataset or invalid config.
TrainResult train(const Dataset& dataset, const TrainConfig& config, const std::vector<EvalItem>& validation = {},
                  const EpochCallback& on_epoch = {});

std::string metrics_to_csv(const std::vector<EpochMetrics>& metrics);

struct GapRow {
    std::string instance;
    Time makespan = 0;
    Time reference = 0;
    double gap = 0.0;
};

struct GapTable {
    std::vector<GapRow> rows;
    double mean = 0.0;
    double median = 0.0;
    std::vector<std::string> warnings;
};

/// Summary statistics over rows; NaN when empty.
void summarize(GapTable& table);

/// Greedy decoding of every item with a positive reference; items without one
/// are skipped with a warning.
GapTable evaluate(const Networks& nets, const std::vector<EvalItem>& items, const EnvParams& env = {}, int threads = 1);

/// Uniformly random compatible sets until terminal.
Schedule random_policy_decode(std::shared_ptr<const Instance> instance, const EnvParams& env, std::uint64_t seed);
GapTable evaluate_random_policy(const std::vector<EvalItem>& items, const EnvParams& env, std::uint64_t seed);

/// instance,makespan,reference,gap rows followed by mean and median rows.
std::string gap_table_to_csv(const GapTable& table);
GapTable gap_table_from_csv(const std::string& text);

/// Manifest of networks_to_checkpoint plus the training config.
Checkpoint training_checkpoint(const Networks& nets, const EnvParams& env, const TrainConfig& config);

}  // namespace shopgraph
