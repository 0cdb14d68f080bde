#include "memento/search.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "memento/errors.hpp"
#include "memento/rng.hpp"
#include "memento/threads.hpp"

namespace memento {

namespace {

void attempt_stats(const std::vector<double>& costs, double& mean, double& sd) {
    const int p = static_cast<int>(costs.size());
    double s = 0.0;
    for (double c : costs) s += c;
    mean = s / p;
    double v = 0.0;
    for (double c : costs) v += (c - mean) * (c - mean);
    sd = std::sqrt(v / p);
}

void record_attempt(SearchTrace& trace, const std::vector<Trajectory>& batch, ProblemKind kind) {
    const int p = static_cast<int>(batch.size());
    std::vector<double> costs(p);
    for (int k = 0; k < p; ++k) costs[k] = -batch[k].ret;
    double mean, sd;
    attempt_stats(costs, mean, sd);
    trace.attempt_mean.push_back(mean);
    trace.attempt_std.push_back(sd);
    int bk = 0;
    for (int k = 1; k < p; ++k)
        if (costs[k] < costs[bk]) bk = k;
    if (costs[bk] < trace.best_cost) {
        trace.best_cost = costs[bk];
        trace.best_solution = batch[bk].solution(kind);
    }
    trace.best_so_far.push_back(trace.best_cost);
    trace.rollouts += p;
}

// Budget accounting and monotonicity, asserted on every finished search.
void check_trace(const SearchTrace& trace, const BudgetSpec& budget) {
    if (trace.rollouts != budget.total_rollouts())
        throw ContractError("search: rollout count does not match the budget");
    if (static_cast<int>(trace.best_so_far.size()) != budget.attempts)
        throw ContractError("search: attempt statistics incomplete");
    for (size_t i = 1; i < trace.best_so_far.size(); ++i)
        if (trace.best_so_far[i] > trace.best_so_far[i - 1])
            throw ContractError("search: best-so-far sequence increased");
    if (trace.best_cost != trace.best_so_far.back())
        throw ContractError("search: final best diverges from the recorded minimum");
}

void check_starts(const Instance& instance, const BudgetSpec& budget) {
    if (budget.starting_points > max_starting_points(instance))
        throw ValidationError("search: " + std::to_string(budget.starting_points) +
                              " starting points but the instance admits only " +
                              std::to_string(max_starting_points(instance)));
}

}  // namespace

void BudgetSpec::validate() const {
    if (attempts < 1) throw ValidationError("budget: attempts must be >= 1");
    if (starting_points < 1) throw ValidationError("budget: starting points must be >= 1");
    if (!(temperature >= 0.0)) throw ValidationError("budget: temperature must be >= 0");
}

int max_starting_points(const Instance& instance) {
    return instance.kind == ProblemKind::Tsp ? instance.size() : instance.num_customers();
}

int start_point_of(const Instance& instance, int start_index) {
    if (start_index < 0 || start_index >= max_starting_points(instance))
        throw ContractError("start_point_of: index out of range");
    return instance.kind == ProblemKind::Tsp ? start_index : start_index + 1;
}

SearchTrace sampling_search(const Instance& instance, const TensorMap& params,
                            const PolicyConfig& cfg, const BudgetSpec& budget, uint64_t seed,
                            int num_threads) {
    budget.validate();
    check_starts(instance, budget);
    InstanceRoller roller(instance, params, cfg);
    const int P = budget.starting_points;
    SearchTrace trace;
    std::vector<Trajectory> batch(P);
    for (int i = 0; i < budget.attempts; ++i) {
        parallel_for(P, num_threads, [&](size_t k) {
            RngStream rng = RngStream::derive(seed, RngDomain::Rollout, instance.id,
                                              static_cast<uint64_t>(i), k);
            batch[k] = roller.roll(start_point_of(instance, static_cast<int>(k)),
                                   budget.temperature, rng);
            batch[k].attempt_index = i;
        });
        record_attempt(trace, batch, cfg.kind);
    }
    check_trace(trace, budget);
    return trace;
}

SearchTrace memento_search(const Instance& instance, const TensorMap& params,
                           const PolicyConfig& cfg, const MemoryNet& net,
                           const BudgetSpec& budget, const MementoSearchConfig& mcfg,
                           uint64_t seed, int num_threads) {
    budget.validate();
    check_starts(instance, budget);
    InstanceRoller roller(instance, params, cfg);
    const int P = budget.starting_points;
    Memory memory(cfg.kind, instance.size(), mcfg.memory_capacity, mcfg.shared_memory);
    SearchTrace trace;
    std::vector<Trajectory> batch(P);
    for (int i = 0; i < budget.attempts; ++i) {
        // All P rollouts of the attempt read this frozen snapshot; writes
        // land afterwards in start order.
        const double remaining = 1.0 - static_cast<double>(i) / budget.attempts;
        parallel_for(P, num_threads, [&](size_t k) {
            RngStream rng = RngStream::derive(seed, RngDomain::Rollout, instance.id,
                                              static_cast<uint64_t>(i), k);
            MementoHook hook(memory, net, remaining);
            batch[k] = roller.roll(start_point_of(instance, static_cast<int>(k)),
                                   budget.temperature, rng, &hook);
            batch[k].attempt_index = i;
        });
        record_attempt(trace, batch, cfg.kind);
        for (int k = 0; k < P; ++k) memory.write_trajectory(batch[k], i, budget.attempts);
    }
    check_trace(trace, budget);
    return trace;
}

SearchTrace eas_search(const Instance& instance, const TensorMap& params, const PolicyConfig& cfg,
                       const BudgetSpec& budget, const EasConfig& ecfg, uint64_t seed,
                       int num_threads) {
    budget.validate();
    check_starts(instance, budget);
    const int n = instance.size(), d = cfg.dim;
    const int P = budget.starting_points;
    Mat offset(n, d), m1(n, d), m2(n, d);
    int adam_t = 0;
    SearchTrace trace;
    std::vector<Trajectory> batch(P);
    double best_ret = -std::numeric_limits<double>::infinity();
    Trajectory incumbent;
    for (int i = 0; i < budget.attempts; ++i) {
        InstanceRoller roller(instance, params, cfg, &offset);
        parallel_for(P, num_threads, [&](size_t k) {
            RngStream rng = RngStream::derive(seed, RngDomain::Rollout, instance.id,
                                              static_cast<uint64_t>(i), k);
            batch[k] = roller.roll(start_point_of(instance, static_cast<int>(k)),
                                   budget.temperature, rng);
            batch[k].attempt_index = i;
        });
        record_attempt(trace, batch, cfg.kind);
        if (trace.attempt_mean[i] > 1.5 * trace.attempt_mean[0]) {
            char msg[192];
            std::snprintf(msg, sizeof msg,
                          "eas diverged on instance %llu: attempt %d mean cost %.6f is more than "
                          "1.5x the first attempt's %.6f",
                          static_cast<unsigned long long>(instance.id), i + 1,
                          trace.attempt_mean[i], trace.attempt_mean[0]);
            throw DivergenceError(msg);
        }
        for (int k = 0; k < P; ++k)
            if (batch[k].ret > best_ret) {
                best_ret = batch[k].ret;
                incumbent = batch[k];
            }
        // The update after the last attempt would never be rolled against.
        if (i + 1 == budget.attempts || ecfg.learning_rate == 0.0) continue;
        // Ascend sum_k (R_k - R_best)/P * logp(tau_k) + lambda * logp(incumbent)
        // in the embedding offsets only.
        InstanceGradienter g(instance, params, cfg, &offset);
        for (int k = 0; k < P; ++k) g.add(batch[k], (batch[k].ret - best_ret) / P);
        g.add(incumbent, ecfg.imitation_weight);
        Mat doff(n, d);
        g.finish_offsets(doff);
        ++adam_t;
        const double bc1 = 1.0 - std::pow(0.9, adam_t);
        const double bc2 = 1.0 - std::pow(0.999, adam_t);
        for (size_t j = 0; j < offset.a.size(); ++j) {
            const double gneg = -doff.a[j];
            m1.a[j] = 0.9 * m1.a[j] + 0.1 * gneg;
            m2.a[j] = 0.999 * m2.a[j] + 0.001 * gneg * gneg;
            offset.a[j] -= ecfg.learning_rate * (m1.a[j] / bc1) / (std::sqrt(m2.a[j] / bc2) + 1e-8);
        }
    }
    check_trace(trace, budget);
    return trace;
}

std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::Greedy: return "greedy";
        case Strategy::Sampling: return "sampling";
        case Strategy::Memento: return "memento";
        case Strategy::Eas: return "eas";
    }
    throw ContractError("strategy_name: bad strategy");
}

Strategy strategy_from_name(const std::string& name) {
    if (name == "greedy") return Strategy::Greedy;
    if (name == "sampling") return Strategy::Sampling;
    if (name == "memento") return Strategy::Memento;
    if (name == "eas") return Strategy::Eas;
    throw ValidationError("unknown strategy: " + name +
                          " (expected greedy, sampling, memento, or eas)");
}

EvalResult evaluate(const Dataset& data, const TensorMap& params, const PolicyConfig& cfg,
                    const MemoryNet* net, const EvalOptions& opts,
                    const std::vector<double>* reference_costs) {
    const size_t count = data.instances.size();
    if (count == 0) throw ValidationError("evaluate: empty dataset");
    if (data.kind != cfg.kind)
        throw ValidationError("evaluate: dataset kind does not match the policy");
    if (reference_costs && reference_costs->size() != count)
        throw ValidationError("evaluate: reference file has " +
                              std::to_string(reference_costs->size()) + " costs for " +
                              std::to_string(count) + " instances");
    if (reference_costs)
        for (double r : *reference_costs)
            if (!(r > 0.0)) throw ValidationError("evaluate: reference costs must be positive");
    if (opts.strategy == Strategy::Memento && net == nullptr)
        throw ValidationError("evaluate: memento strategy needs a memory net");

    EvalOptions o = opts;
    if (o.strategy == Strategy::Greedy) o.budget.temperature = 0.0;
    o.budget.validate();

    EvalResult res;
    res.rows.resize(count);
    parallel_for(count, opts.num_threads, [&](size_t idx) {
        const Instance& inst = data.instances[idx];
        const auto t0 = std::chrono::steady_clock::now();
        SearchTrace tr;
        switch (o.strategy) {
            case Strategy::Greedy:
            case Strategy::Sampling:
                tr = sampling_search(inst, params, cfg, o.budget, o.seed, 1);
                break;
            case Strategy::Memento:
                tr = memento_search(inst, params, cfg, *net, o.budget, o.memento, o.seed, 1);
                break;
            case Strategy::Eas:
                tr = eas_search(inst, params, cfg, o.budget, o.eas, o.seed, 1);
                break;
        }
        const auto t1 = std::chrono::steady_clock::now();
        EvalRow& row = res.rows[idx];
        row.instance_id = inst.id;
        // Canonical re-measurement, so equal solutions from different
        // strategies (or the oracle) get bitwise-equal costs.
        row.best_cost = canonical_cost(inst, tr.best_solution);
        row.gap_percent =
            reference_costs
                ? (row.best_cost - (*reference_costs)[idx]) / (*reference_costs)[idx] * 100.0
                : std::numeric_limits<double>::quiet_NaN();
        row.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    });
    double sum_cost = 0.0, sum_gap = 0.0;
    for (const EvalRow& r : res.rows) {
        sum_cost += r.best_cost;
        sum_gap += r.gap_percent;
    }
    res.mean_cost = sum_cost / static_cast<double>(count);
    res.mean_gap_percent = reference_costs ? sum_gap / static_cast<double>(count)
                                           : std::numeric_limits<double>::quiet_NaN();
    return res;
}

std::string metrics_csv(const EvalResult& result, Strategy strategy, const BudgetSpec& budget,
                        bool include_wall) {
    std::string out = "instance_id,strategy,budget,best_cost,gap,wall_ms\n";
    const std::string name = strategy_name(strategy);
    char line[192];
    for (const EvalRow& r : result.rows) {
        std::snprintf(line, sizeof line, "%llu,%s,%d,%.9f,%.9f,%.3f\n",
                      static_cast<unsigned long long>(r.instance_id), name.c_str(),
                      budget.attempts, r.best_cost, r.gap_percent,
                      include_wall ? r.wall_ms : 0.0);
        out += line;
    }
    return out;
}

}  // namespace memento
