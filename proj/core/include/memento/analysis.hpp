#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "memento/search.hpp"
#include "memento/training.hpp"

namespace memento {

// Axes of the update-rule heatmap: normalized return (z-scored units) by
// action log-probability.
struct RuleAxes {
    double ret_min = -3.0;
    double ret_max = 3.0;
    double logp_min = -6.0;
    double logp_max = 0.0;
    int resolution = 61;

    void validate() const;
};

// Values held fixed while the two axes sweep. traj_logp scales the logp axis
// value by horizon/4, a mid-trajectory stand-in; tail_logp uses the axis
// value itself.
struct RuleFixed {
    double budget_at_write = 0.5;
    double memory_logit = 0.0;
    int horizon = 20;
};

struct RuleGrid {
    RuleAxes axes;
    RuleFixed fixed;
    double remaining_budget = 0.5;
    // values(i, j) = H at return point i, logp point j (both ascending).
    Mat values;
};

RuleGrid rule_grid(const MemoryNet& net, const RuleAxes& axes, const RuleFixed& fixed,
                   double remaining_budget);

// The same sweep through an arbitrary weight function of the full feature
// row; ground-truth panels for analytic surrogates.
RuleGrid rule_grid_with(const std::function<double(const double*)>& weight_fn,
                        const RuleAxes& axes, const RuleFixed& fixed, double remaining_budget);

// Self-describing CSV: "# key=value" preamble, then ret,logp,weight rows.
std::string rule_grid_csv(const RuleGrid& grid);

// The three budget stages exported by default.
extern const double kRuleGridStages[3];

struct ReinforceCheckReport {
    int cases = 0;
    // Max |surrogate increment - R(1 - pi(a))| on the taken action.
    double max_on_action_deviation = 0.0;
    // Max |R * pi(b)| over non-taken actions: the REINFORCE term one-hot
    // aggregation cannot produce. Reported, not bounded.
    double max_off_action_residual = 0.0;
};

// Drives random states of one small instance through the analytic surrogate
// H* = R(1 - e^logp) and checks the aggregated increment against the
// REINFORCE logit gradient coordinate.
ReinforceCheckReport reinforce_capacity_check(const Instance& instance, const TensorMap& params,
                                              const PolicyConfig& cfg, int cases, uint64_t seed);

std::string reinforce_check_report_text(const ReinforceCheckReport& report);

struct AblationRow {
    FeatureSubset subset = FeatureSubset::Full;
    int attempt = 0;
    double mean_best_so_far = 0.0;
    double mean_latest_cost = 0.0;
};

struct AblationResult {
    std::vector<AblationRow> rows;
    // Final mean best cost per subset, in input order.
    std::vector<std::pair<FeatureSubset, double>> final_means;
};

// Trains one memory net per feature subset on top of the shared base policy,
// then runs memento search over the evaluation set and pools per-attempt
// curves across instances.
AblationResult run_ablation(const std::vector<FeatureSubset>& subsets,
                            const TensorMap& base_params, const TrainConfig& train_cfg,
                            const PolicyConfig& cfg, const Dataset& eval_data,
                            const BudgetSpec& eval_budget, const MementoSearchConfig& mcfg,
                            uint64_t eval_seed, int num_threads = 1);

std::string ablation_csv(const AblationResult& result);

// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double incomplete_beta(double a, double b, double x);

// One-sided paired test: p-value of "mean(diff) > 0" against a Student-t
// null with n-1 degrees of freedom. Zero-variance samples degenerate to 0
// (all positive) or 1.
double paired_t_pvalue(const std::vector<double>& diffs);

}  // namespace memento
