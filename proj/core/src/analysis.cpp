#include "memento/analysis.hpp"

#include <cmath>
#include <cstdio>

#include "memento/errors.hpp"
#include "memento/rng.hpp"
#include "memento/threads.hpp"

namespace memento {

const double kRuleGridStages[3] = {0.9, 0.5, 0.1};

void RuleAxes::validate() const {
    if (!(ret_max > ret_min) || !(logp_max > logp_min))
        throw ValidationError("rule grid: degenerate axis range");
    if (resolution < 2) throw ValidationError("rule grid: resolution must be >= 2");
}

namespace {

RuleGrid sweep(const std::function<double(const double*)>& weigh, const RuleAxes& axes,
               const RuleFixed& fixed, double remaining_budget) {
    axes.validate();
    if (!(remaining_budget >= 0.0 && remaining_budget <= 1.0))
        throw ValidationError("rule grid: remaining budget outside [0,1]");
    RuleGrid grid;
    grid.axes = axes;
    grid.fixed = fixed;
    grid.remaining_budget = remaining_budget;
    grid.values = Mat(axes.resolution, axes.resolution);
    const double dret = (axes.ret_max - axes.ret_min) / (axes.resolution - 1);
    const double dlogp = (axes.logp_max - axes.logp_min) / (axes.resolution - 1);
    double feat[kMemoryFeatures];
    for (int i = 0; i < axes.resolution; ++i) {
        const double ret = axes.ret_min + i * dret;
        for (int j = 0; j < axes.resolution; ++j) {
            const double logp = axes.logp_min + j * dlogp;
            feat[0] = logp;
            feat[1] = ret;
            feat[2] = fixed.budget_at_write;
            feat[3] = fixed.memory_logit;
            feat[4] = logp * (fixed.horizon / 4.0);
            feat[5] = logp;
            feat[6] = remaining_budget;
            grid.values(i, j) = weigh(feat);
        }
    }
    return grid;
}

}  // namespace

RuleGrid rule_grid(const MemoryNet& net, const RuleAxes& axes, const RuleFixed& fixed,
                   double remaining_budget) {
    return sweep([&net](const double* f) { return net.forward_one(f); }, axes, fixed,
                 remaining_budget);
}

RuleGrid rule_grid_with(const std::function<double(const double*)>& weight_fn,
                        const RuleAxes& axes, const RuleFixed& fixed, double remaining_budget) {
    return sweep(weight_fn, axes, fixed, remaining_budget);
}

std::string rule_grid_csv(const RuleGrid& grid) {
    char line[192];
    std::string out;
    std::snprintf(line, sizeof line, "# remaining_budget=%.6f\n", grid.remaining_budget);
    out += line;
    std::snprintf(line, sizeof line, "# budget_at_write=%.6f memory_logit=%.6f horizon=%d\n",
                  grid.fixed.budget_at_write, grid.fixed.memory_logit, grid.fixed.horizon);
    out += line;
    std::snprintf(line, sizeof line,
                  "# ret_range=[%.6f,%.6f] logp_range=[%.6f,%.6f] resolution=%d\n",
                  grid.axes.ret_min, grid.axes.ret_max, grid.axes.logp_min, grid.axes.logp_max,
                  grid.axes.resolution);
    out += line;
    out += "ret,logp,weight\n";
    const double dret = (grid.axes.ret_max - grid.axes.ret_min) / (grid.axes.resolution - 1);
    const double dlogp = (grid.axes.logp_max - grid.axes.logp_min) / (grid.axes.resolution - 1);
    for (int i = 0; i < grid.axes.resolution; ++i)
        for (int j = 0; j < grid.axes.resolution; ++j) {
            std::snprintf(line, sizeof line, "%.6f,%.6f,%.12g\n", grid.axes.ret_min + i * dret,
                          grid.axes.logp_min + j * dlogp, grid.values(i, j));
            out += line;
        }
    return out;
}

ReinforceCheckReport reinforce_capacity_check(const Instance& instance, const TensorMap& params,
                                              const PolicyConfig& cfg, int cases, uint64_t seed) {
    if (instance.size() > 6)
        throw ValidationError("reinforce check: instance must have at most 6 nodes");
    if (cases < 1) throw ValidationError("reinforce check: need at least one case");
    instance.validate();
    Mat h = encode(instance, params, cfg);
    const int n = instance.size();
    ReinforceCheckReport report;
    report.cases = cases;
    for (int c = 0; c < cases; ++c) {
        RngStream rng = RngStream::derive(seed, RngDomain::Test, instance.id,
                                          static_cast<uint64_t>(c));
        // Random reachable state: walk a few steps from a random start.
        const int start = start_point_of(
            instance, static_cast<int>(rng.uniform_int(max_starting_points(instance))));
        State s = reset(instance, start);
        const int walk = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(n - 1)));
        for (int t = 0; t < walk && !is_terminal(s); ++t) {
            std::vector<char> mask = action_mask(s);
            std::vector<int> feasible;
            for (int j = 0; j < n; ++j)
                if (mask[j]) feasible.push_back(j);
            step_inplace(s, feasible[rng.uniform_int(feasible.size())]);
        }
        if (is_terminal(s)) continue;
        std::vector<double> logits = policy_logits(s, h, params, cfg);
        std::vector<double> p = logits;
        softmax_row(p.data(), n);
        std::vector<int> feasible;
        for (int j = 0; j < n; ++j)
            if (logits[j] > kMaskedThreshold) feasible.push_back(j);
        const int a = feasible[rng.uniform_int(feasible.size())];
        const double advantage = rng.uniform(0.0, 2.0);

        // One stored entry for the taken action, features built directly so
        // logp passes through un-normalized.
        std::vector<int> actions = {a};
        Mat feats(1, kMemoryFeatures);
        feats(0, 0) = std::log(p[a]);
        std::vector<double> lm = correction_logits_with(
            actions, feats,
            [advantage](const double* f) { return advantage * (1.0 - std::exp(f[0])); }, n);

        const double reinforce_on = advantage * (1.0 - p[a]);
        report.max_on_action_deviation =
            std::max(report.max_on_action_deviation, std::abs(lm[a] - reinforce_on));
        for (int b = 0; b < n; ++b)
            if (b != a && logits[b] > kMaskedThreshold)
                report.max_off_action_residual =
                    std::max(report.max_off_action_residual, advantage * p[b]);
    }
    return report;
}

std::string reinforce_check_report_text(const ReinforceCheckReport& report) {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "cases=%d\n"
                  "max_on_action_deviation=%.3e\n"
                  "max_off_action_residual=%.3e\n"
                  "# The surrogate H* = R(1 - e^logp) reproduces the REINFORCE logit gradient\n"
                  "# R(1 - pi(a)) on the taken action. The -R*pi(b) term on other actions is\n"
                  "# outside one-hot aggregation's reach; its magnitude is reported above.\n",
                  report.cases, report.max_on_action_deviation, report.max_off_action_residual);
    return buf;
}

AblationResult run_ablation(const std::vector<FeatureSubset>& subsets,
                            const TensorMap& base_params, const TrainConfig& train_cfg,
                            const PolicyConfig& cfg, const Dataset& eval_data,
                            const BudgetSpec& eval_budget, const MementoSearchConfig& mcfg,
                            uint64_t eval_seed, int num_threads) {
    if (subsets.empty()) throw ValidationError("ablation: no feature subsets given");
    if (eval_data.instances.empty()) throw ValidationError("ablation: empty evaluation set");
    AblationResult result;
    const size_t count = eval_data.instances.size();
    for (FeatureSubset subset : subsets) {
        MemoryNetConfig nc;
        nc.subset = subset;
        TrainResult trained = train(train_cfg, cfg, base_params, nc, num_threads);
        std::vector<SearchTrace> traces(count);
        parallel_for(count, num_threads, [&](size_t i) {
            traces[i] = memento_search(eval_data.instances[i], trained.params, cfg, trained.net,
                                       eval_budget, mcfg, eval_seed, 1);
        });
        for (int att = 0; att < eval_budget.attempts; ++att) {
            double best = 0.0, latest = 0.0;
            for (const SearchTrace& tr : traces) {
                best += tr.best_so_far[att];
                latest += tr.attempt_mean[att];
            }
            result.rows.push_back({subset, att,
                                   best / static_cast<double>(count),
                                   latest / static_cast<double>(count)});
        }
        result.final_means.emplace_back(subset, result.rows.back().mean_best_so_far);
    }
    return result;
}

std::string ablation_csv(const AblationResult& result) {
    std::string out = "subset,attempt,mean_best_so_far,mean_latest_cost\n";
    char line[128];
    for (const AblationRow& r : result.rows) {
        std::snprintf(line, sizeof line, "%s,%d,%.9f,%.9f\n", subset_name(r.subset).c_str(),
                      r.attempt, r.mean_best_so_far, r.mean_latest_cost);
        out += line;
    }
    return out;
}

namespace {

// Lentz continued fraction for the incomplete beta.
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-14;
    constexpr double kTiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) return h;
    }
    throw ContractError("incomplete beta continued fraction did not converge");
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw ContractError("incomplete_beta needs a, b > 0");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    // The continued fraction converges fast only below the distribution's
    // bulk; above it, evaluate the mirrored tail.
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double paired_t_pvalue(const std::vector<double>& diffs) {
    const size_t n = diffs.size();
    if (n < 2) throw ValidationError("paired test needs at least two pairs");
    double mean = 0.0;
    for (double d : diffs) mean += d;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double d : diffs) ss += (d - mean) * (d - mean);
    const double var = ss / static_cast<double>(n - 1);
    if (var == 0.0) return mean > 0.0 ? 0.0 : 1.0;
    const double t = mean / std::sqrt(var / static_cast<double>(n));
    const double nu = static_cast<double>(n - 1);
    const double two_sided = incomplete_beta(0.5 * nu, 0.5, nu / (nu + t * t));
    return t >= 0.0 ? 0.5 * two_sided : 1.0 - 0.5 * two_sided;
}

}  // namespace memento
