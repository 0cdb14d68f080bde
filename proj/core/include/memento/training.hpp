#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "memento/search.hpp"

namespace memento {

// Shared knob set for pretraining and memory training. Pretraining ignores
// budget, epsilon, memory_capacity, lr_memory, and refine_mode.
struct TrainConfig {
    int budget = 50;           // K attempts per instance per episode
    int batch_instances = 16;  // instances per micro-batch
    int starting_points = 20;  // P rollouts per attempt
    int accumulation = 4;      // micro-batches per optimizer step
    double lr_memory = 0.004;
    double lr_encoder = 1e-4;
    double lr_decoder = 1e-4;
    double epsilon = 0.01;  // of the log attempt weight
    int steps = 100;        // optimizer steps
    uint64_t seed = 0;
    bool refine_mode = false;  // base policy frozen, memory rate x 0.1
    double temperature = 1.0;
    int instance_size = 20;
    int memory_capacity = 40;

    void validate() const;
    // Rates actually applied, with the refine-mode reduction folded in.
    double effective_lr_memory() const { return refine_mode ? lr_memory * 0.1 : lr_memory; }
};

// ReLU-rectified improvement over the best return seen so far.
std::pair<double, double> improvement_advantage(double ret, double best_so_far);

// log(1 + epsilon + i) with 0-based attempt index i.
double attempt_weight(int attempt_index, double epsilon);

// Sequential advantage bookkeeping for one instance episode. Trajectories
// advance in attempt order (starts in index order within an attempt); the
// very first one seeds the best and gets zero advantage, which makes
// sum(advantages) = best final return - first return exact.
class AttemptLedger {
  public:
    // Returns the trajectory's advantage.
    double advance(double ret);

    double best_return() const { return best_; }
    double first_return() const { return first_; }
    // The telescoped closed form, so the identity sum(advantages) =
    // best - first holds exactly rather than up to accumulated rounding.
    double total_advantage() const { return count_ == 0 ? 0.0 : best_ - first_; }
    long long count() const { return count_; }
    long long zero_count() const { return zeros_; }

  private:
    double best_ = -std::numeric_limits<double>::infinity();
    double first_ = 0.0;
    long long count_ = 0;
    long long zeros_ = 0;
};

struct BatchStats {
    double loss = 0.0;       // weighted non-negative terms, see training loss
    double mean_cost = 0.0;  // over every trajectory of the batch
    double mean_best_cost = 0.0;  // over instances, cost of the episode best
    double mean_advantage = 0.0;
    double zero_advantage_fraction = 0.0;
    double best_return = -std::numeric_limits<double>::infinity();
    long long trajectories = 0;
    long long instances = 0;

    // Count-weighted pooling of means; losses add.
    void merge(const BatchStats& o);
};

// One micro-batch of memory training: per instance, K attempts of P rollouts
// against a fresh Memory with writes between attempts; per-trajectory terms
// -log(1+eps+i) * advantage * logp accumulate into the gradients, averaged
// by 1/(K * batch size). Gradients add into the given maps (callers zero or
// accumulate across micro-batches).
BatchStats memento_loss_grad(const std::vector<Instance>& batch, const TensorMap& params,
                             const PolicyConfig& cfg, const MemoryNet& net, const TrainConfig& tc,
                             TensorMap& policy_grads, TensorMap& net_grads, int num_threads = 1);

// Adaptive-moment optimizer over named tensors with per-group learning
// rates. Tensors group by name: mem.* -> memory rate, dec.* -> decoder rate,
// everything else (embed.*, enc*) -> encoder rate.
struct AdamState {
    TensorMap m;
    TensorMap v;
    long long t = 0;
};

void optimizer_step(TensorMap& params, const TensorMap& grads, AdamState& state,
                    double lr_memory, double lr_encoder, double lr_decoder);

struct TrainLogRow {
    int step = 0;
    double mean_cost = 0.0;
    double best_of_k = 0.0;
    double grad_norm = 0.0;
    double wall_ms = 0.0;
};

// CSV with header step,mean_cost,best_of_K,grad_norm,wall_ms.
std::string training_log_csv(const std::vector<TrainLogRow>& rows);

using CheckpointSink =
    std::function<void(int step, const TensorMap& params, const MemoryNet* net)>;

struct PretrainResult {
    TensorMap params;
    std::vector<TrainLogRow> log;
};

// Single-shot REINFORCE with the P-start mean return as baseline, from
// freshly initialized parameters.
PretrainResult pretrain(const TrainConfig& tc, const PolicyConfig& cfg, int num_threads = 1,
                        const CheckpointSink& on_checkpoint = {}, int checkpoint_interval = 0);

struct TrainResult {
    TensorMap params;
    MemoryNet net;
    std::vector<TrainLogRow> log;
};

// Memory training on top of a pretrained base policy; the memory net is
// freshly initialized from tc.seed.
TrainResult train(const TrainConfig& tc, const PolicyConfig& cfg, const TensorMap& base_params,
                  const MemoryNetConfig& net_cfg, int num_threads = 1,
                  const CheckpointSink& on_checkpoint = {}, int checkpoint_interval = 0);

}  // namespace memento
