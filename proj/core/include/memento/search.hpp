#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "memento/memory.hpp"

namespace memento {

// One search budget: B sequential attempts, each rolling one trajectory per
// starting point.
struct BudgetSpec {
    int attempts = 200;
    int starting_points = 1;
    double temperature = 1.0;

    long long total_rollouts() const {
        return static_cast<long long>(attempts) * starting_points;
    }
    void validate() const;
};

// Starting points are the first P of the instance's admissible starts: nodes
// 0..P-1 for TSP, customers 1..P for CVRP.
int max_starting_points(const Instance& instance);
int start_point_of(const Instance& instance, int start_index);

// Per-attempt cost statistics plus the winning solution. Costs, not returns:
// lower is better throughout.
struct SearchTrace {
    std::vector<double> best_so_far;
    std::vector<double> attempt_mean;
    std::vector<double> attempt_std;
    double best_cost = std::numeric_limits<double>::infinity();
    std::vector<int> best_solution;
    long long rollouts = 0;
};

struct MementoSearchConfig {
    int memory_capacity = 40;
    bool shared_memory = false;
};

// Per-instance gradient search on additive embedding offsets.
struct EasConfig {
    double learning_rate = 0.005;
    double imitation_weight = 0.1;
};

// All strategies draw rollout randomness from streams derived per
// (instance id, attempt, start index), so trajectories are independent of
// thread count and schedule. Each returned trace has passed the built-in
// budget and monotonicity checks.
SearchTrace sampling_search(const Instance& instance, const TensorMap& params,
                            const PolicyConfig& cfg, const BudgetSpec& budget, uint64_t seed,
                            int num_threads = 1);

SearchTrace memento_search(const Instance& instance, const TensorMap& params,
                           const PolicyConfig& cfg, const MemoryNet& net,
                           const BudgetSpec& budget, const MementoSearchConfig& mcfg,
                           uint64_t seed, int num_threads = 1);

SearchTrace eas_search(const Instance& instance, const TensorMap& params, const PolicyConfig& cfg,
                       const BudgetSpec& budget, const EasConfig& ecfg, uint64_t seed,
                       int num_threads = 1);

enum class Strategy : uint8_t { Greedy = 0, Sampling = 1, Memento = 2, Eas = 3 };
std::string strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

struct EvalOptions {
    Strategy strategy = Strategy::Sampling;
    BudgetSpec budget;
    MementoSearchConfig memento;
    EasConfig eas;
    uint64_t seed = 0;
    int num_threads = 1;
};

struct EvalRow {
    uint64_t instance_id = 0;
    double best_cost = 0.0;
    double gap_percent = 0.0;
    double wall_ms = 0.0;
};

struct EvalResult {
    std::vector<EvalRow> rows;
    double mean_cost = 0.0;
    double mean_gap_percent = 0.0;
};

// Runs the configured strategy over every instance (instances in parallel,
// searches single-threaded inside). reference_costs may be null: gaps are
// then reported as nan. Greedy forces temperature 0.
EvalResult evaluate(const Dataset& data, const TensorMap& params, const PolicyConfig& cfg,
                    const MemoryNet* net, const EvalOptions& opts,
                    const std::vector<double>* reference_costs);

// metrics CSV schema: instance_id,strategy,budget,best_cost,gap,wall_ms.
// include_wall=false zeroes the timing column so reruns are byte-identical.
std::string metrics_csv(const EvalResult& result, Strategy strategy, const BudgetSpec& budget,
                        bool include_wall);

}  // namespace memento
