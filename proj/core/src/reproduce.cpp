#include "memento/reproduce.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "memento/analysis.hpp"
#include "memento/checkpoint.hpp"
#include "memento/dataset_io.hpp"
#include "memento/errors.hpp"
#include "memento/search.hpp"
#include "memento/training.hpp"

namespace memento {

namespace {

namespace fs = std::filesystem;

std::string hex64(uint64_t v) {
    char b[24];
    std::snprintf(b, sizeof b, "%016llx", static_cast<unsigned long long>(v));
    return b;
}

// Accumulates the pinned key=value lines of one stage; the text doubles as
// the resolved-config snapshot and, hashed, as the completion marker.
struct Pin {
    std::string text;

    void kv(const char* key, const std::string& v) {
        text += key;
        text += '=';
        text += v;
        text += '\n';
    }
    void kvi(const char* key, long long v) {
        char b[32];
        std::snprintf(b, sizeof b, "%lld", v);
        kv(key, b);
    }
    void kvd(const char* key, double v) {
        char b[40];
        std::snprintf(b, sizeof b, "%.17g", v);
        kv(key, b);
    }
    void kvb(const char* key, bool v) { kv(key, v ? "true" : "false"); }
};

void pin_policy(Pin& p, const PolicyConfig& cfg) {
    p.kv("policy.kind", kind_name(cfg.kind));
    p.kvi("policy.dim", cfg.dim);
    p.kvi("policy.blocks", cfg.blocks);
    p.kvi("policy.heads", cfg.heads);
    p.kvi("policy.ff", cfg.ff);
    p.kvd("policy.clip", cfg.clip);
}

void pin_train(Pin& p, const TrainConfig& tc) {
    p.kvi("train.seed", static_cast<long long>(tc.seed));
    p.kvi("train.steps", tc.steps);
    p.kvi("train.budget", tc.budget);
    p.kvi("train.batch_instances", tc.batch_instances);
    p.kvi("train.starting_points", tc.starting_points);
    p.kvi("train.accumulation", tc.accumulation);
    p.kvd("train.lr_memory", tc.lr_memory);
    p.kvd("train.lr_encoder", tc.lr_encoder);
    p.kvd("train.lr_decoder", tc.lr_decoder);
    p.kvd("train.epsilon", tc.epsilon);
    p.kvb("train.refine_mode", tc.refine_mode);
    p.kvd("train.temperature", tc.temperature);
    p.kvi("train.instance_size", tc.instance_size);
    p.kvi("train.memory_capacity", tc.memory_capacity);
}

struct StageIo {
    fs::path dir;
    std::string config;
    std::vector<std::string> outputs;
};

std::string marker_text(const StageIo& s) { return hex64(content_hash64(s.config)) + "\n"; }

bool stage_ready(const StageIo& s, bool force) {
    if (force) return false;
    std::error_code ec;
    const fs::path done = s.dir / ".done";
    if (!fs::exists(done, ec)) return false;
    if (read_text_file(done.string()) != marker_text(s)) return false;
    for (const std::string& o : s.outputs) {
        if (!fs::exists(s.dir / o, ec)) return false;
    }
    return true;
}

void stage_begin(const StageIo& s) {
    fs::create_directories(s.dir);
    std::error_code ec;
    fs::remove(s.dir / ".done", ec);
    write_text_file((s.dir / "config.resolved").string(), s.config);
}

void stage_mark(const StageIo& s) { write_text_file((s.dir / ".done").string(), marker_text(s)); }

std::vector<TrainLogRow> without_wall(std::vector<TrainLogRow> rows) {
    for (TrainLogRow& r : rows) r.wall_ms = 0.0;
    return rows;
}

std::string strip_header(const std::string& csv) {
    const size_t nl = csv.find('\n');
    return nl == std::string::npos ? std::string() : csv.substr(nl + 1);
}

// ---- pinned experiment scales ----
//
// Desk scale: small enough that the whole suite, training included, reruns
// in well under an hour on one core, while the trained artifacts still
// separate the strategies clearly on the 100-instance held-out sets.

PolicyConfig tsp_policy() {
    PolicyConfig cfg;
    cfg.kind = ProblemKind::Tsp;
    return cfg;
}

PolicyConfig cvrp_policy() {
    PolicyConfig cfg;
    cfg.kind = ProblemKind::Cvrp;
    return cfg;
}

TrainConfig tsp_pretrain_cfg() {
    TrainConfig tc;
    tc.seed = 1001;
    tc.steps = 80;
    tc.batch_instances = 16;
    tc.accumulation = 2;
    tc.starting_points = 20;
    tc.lr_encoder = 1e-3;
    tc.lr_decoder = 1e-3;
    tc.temperature = 1.0;
    tc.instance_size = 20;
    return tc;
}

TrainConfig tsp_train_cfg() {
    TrainConfig tc;
    tc.seed = 2001;
    tc.steps = 150;
    tc.budget = 50;
    tc.batch_instances = 8;
    tc.accumulation = 2;
    tc.starting_points = 20;
    tc.lr_memory = 0.004;
    tc.lr_encoder = 1e-4;
    tc.lr_decoder = 1e-4;
    tc.temperature = 1.0;
    tc.instance_size = 20;
    tc.memory_capacity = 40;
    return tc;
}

TrainConfig cvrp_pretrain_cfg() {
    TrainConfig tc = tsp_pretrain_cfg();
    tc.seed = 5001;
    tc.instance_size = 21;  // depot + 20 customers
    tc.temperature = 0.1;
    return tc;
}

TrainConfig cvrp_train_cfg() {
    TrainConfig tc = tsp_train_cfg();
    tc.seed = 5002;
    tc.instance_size = 21;
    tc.temperature = 0.1;
    return tc;
}

struct EvalPins {
    uint64_t data_seed = 0;
    int data_count = 100;
    int instance_size = 20;
    uint64_t search_seed = 0;
    int attempts = 200;
    int starting_points = 20;
    double temperature = 1.0;
    double eas_lr = 0.005;
    double eas_imitation = 0.1;
    int memory_capacity = 40;
};

EvalPins tsp_eval_pins() {
    EvalPins e;
    e.data_seed = 9101;
    e.search_seed = 3001;
    return e;
}

EvalPins cvrp_eval_pins() {
    EvalPins e;
    e.data_seed = 9301;
    e.instance_size = 21;
    e.search_seed = 5003;
    e.temperature = 0.1;
    return e;
}

// ---- stages ----

fs::path run_pretrain_stage(const ReproduceOptions& opts, const std::string& stage,
                            const PolicyConfig& cfg, const TrainConfig& tc) {
    Pin pin;
    pin.kv("stage.name", stage);
    pin_policy(pin, cfg);
    pin_train(pin, tc);
    StageIo s{fs::path(opts.out_root) / stage, pin.text, {"base.ckpt", "metrics.csv", "log.csv"}};
    if (stage_ready(s, opts.force)) return s.dir / "base.ckpt";
    stage_begin(s);

    PretrainResult pr = pretrain(tc, cfg, opts.num_threads);
    Checkpoint ck;
    ck.policy = cfg;
    ck.params = std::move(pr.params);
    ck.seed = tc.seed;
    ck.provenance = hex64(content_hash64(pin.text));
    save_checkpoint((s.dir / "base.ckpt").string(), ck);
    write_text_file((s.dir / "metrics.csv").string(), training_log_csv(without_wall(pr.log)));
    write_text_file((s.dir / "log.csv").string(), training_log_csv(pr.log));
    stage_mark(s);
    return s.dir / "base.ckpt";
}

fs::path run_train_stage(const ReproduceOptions& opts, const std::string& stage,
                         const PolicyConfig& cfg, const TrainConfig& tc,
                         const fs::path& base_ckpt) {
    Pin pin;
    pin.kv("stage.name", stage);
    pin_policy(pin, cfg);
    pin_train(pin, tc);
    pin.kv("train.base_checkpoint", base_ckpt.filename().string());
    StageIo s{fs::path(opts.out_root) / stage, pin.text,
              {"memento.ckpt", "metrics.csv", "log.csv"}};
    if (stage_ready(s, opts.force)) return s.dir / "memento.ckpt";
    stage_begin(s);

    const Checkpoint base = load_checkpoint(base_ckpt.string(), cfg);
    MemoryNetConfig nc;  // full feature set, default width
    TrainResult tr = train(tc, cfg, base.params, nc, opts.num_threads);
    Checkpoint ck;
    ck.policy = cfg;
    ck.params = std::move(tr.params);
    ck.has_memory_net = true;
    ck.net_config = nc;
    ck.net_params = tr.net.params();
    ck.seed = tc.seed;
    ck.provenance = hex64(content_hash64(pin.text));
    save_checkpoint((s.dir / "memento.ckpt").string(), ck);
    write_text_file((s.dir / "metrics.csv").string(), training_log_csv(without_wall(tr.log)));
    write_text_file((s.dir / "log.csv").string(), training_log_csv(tr.log));
    stage_mark(s);
    return s.dir / "memento.ckpt";
}

struct StrategyRun {
    Strategy strategy;
    BudgetSpec budget;
    EvalResult result;
};

void apply_reference(EvalResult& r, const std::vector<double>& refs) {
    double gap_sum = 0.0;
    for (size_t i = 0; i < r.rows.size(); ++i) {
        r.rows[i].gap_percent = (r.rows[i].best_cost - refs[i]) / refs[i] * 100.0;
        gap_sum += r.rows[i].gap_percent;
    }
    r.mean_gap_percent = r.rows.empty() ? 0.0 : gap_sum / static_cast<double>(r.rows.size());
}

void run_eval_stage(const ReproduceOptions& opts, const std::string& stage,
                    const PolicyConfig& cfg, const EvalPins& pins, const fs::path& base_ckpt,
                    const fs::path& memento_ckpt) {
    Pin pin;
    pin.kv("stage.name", stage);
    pin_policy(pin, cfg);
    pin.kvi("data.seed", static_cast<long long>(pins.data_seed));
    pin.kvi("data.count", pins.data_count);
    pin.kvi("data.instance_size", pins.instance_size);
    pin.kvi("search.seed", static_cast<long long>(pins.search_seed));
    pin.kvi("search.attempts", pins.attempts);
    pin.kvi("search.starting_points", pins.starting_points);
    pin.kvd("search.temperature", pins.temperature);
    pin.kvd("eas.learning_rate", pins.eas_lr);
    pin.kvd("eas.imitation_weight", pins.eas_imitation);
    pin.kvi("memento.capacity", pins.memory_capacity);
    StageIo s{fs::path(opts.out_root) / stage,
              pin.text,
              {"eval.dset", "reference.txt", "metrics.csv", "summary.csv", "compare.csv",
               "timings.csv"}};
    if (stage_ready(s, opts.force)) return;
    stage_begin(s);

    const Dataset data = generate_dataset(cfg.kind, pins.instance_size, pins.data_count,
                                          pins.data_seed, opts.num_threads);
    save_dataset((s.dir / "eval.dset").string(), data);

    const Checkpoint base = load_checkpoint(base_ckpt.string(), cfg);
    const Checkpoint tuned = load_checkpoint(memento_ckpt.string(), cfg);
    const MemoryNet net = checkpoint_net(tuned);

    BudgetSpec full;
    full.attempts = pins.attempts;
    full.starting_points = pins.starting_points;
    full.temperature = pins.temperature;
    BudgetSpec greedy = full;
    greedy.attempts = 1;  // further greedy attempts would repeat the first

    std::vector<StrategyRun> runs;
    runs.push_back({Strategy::Greedy, greedy, {}});
    runs.push_back({Strategy::Sampling, full, {}});
    runs.push_back({Strategy::Eas, full, {}});
    runs.push_back({Strategy::Memento, full, {}});
    for (StrategyRun& run : runs) {
        EvalOptions eo;
        eo.strategy = run.strategy;
        eo.budget = run.budget;
        eo.memento.memory_capacity = pins.memory_capacity;
        eo.eas.learning_rate = pins.eas_lr;
        eo.eas.imitation_weight = pins.eas_imitation;
        eo.seed = pins.search_seed;
        eo.num_threads = opts.num_threads;
        const bool tuned_params = run.strategy == Strategy::Memento;
        run.result = evaluate(data, tuned_params ? tuned.params : base.params, cfg,
                              tuned_params ? &net : nullptr, eo, nullptr);
    }

    // Reference: the best solution any strategy found per instance. Oracle
    // costs are out of reach at this size, so gaps are relative to the best
    // known, which makes them non-negative by construction.
    std::vector<double> refs(data.instances.size());
    for (size_t i = 0; i < refs.size(); ++i) {
        double best = runs[0].result.rows[i].best_cost;
        for (const StrategyRun& run : runs) best = std::min(best, run.result.rows[i].best_cost);
        refs[i] = best;
    }
    save_costs((s.dir / "reference.txt").string(), refs);
    for (StrategyRun& run : runs) apply_reference(run.result, refs);

    std::string metrics, timings;
    for (size_t r = 0; r < runs.size(); ++r) {
        const std::string with = metrics_csv(runs[r].result, runs[r].strategy, runs[r].budget, true);
        const std::string without =
            metrics_csv(runs[r].result, runs[r].strategy, runs[r].budget, false);
        metrics += r == 0 ? without : strip_header(without);
        timings += r == 0 ? with : strip_header(with);
    }
    write_text_file((s.dir / "metrics.csv").string(), metrics);
    write_text_file((s.dir / "timings.csv").string(), timings);

    std::string summary = "strategy,instances,mean_best_cost,mean_gap_percent\n";
    char line[160];
    for (const StrategyRun& run : runs) {
        std::snprintf(line, sizeof line, "%s,%d,%.9f,%.9f\n",
                      strategy_name(run.strategy).c_str(),
                      static_cast<int>(run.result.rows.size()), run.result.mean_cost,
                      run.result.mean_gap_percent);
        summary += line;
    }
    write_text_file((s.dir / "summary.csv").string(), summary);

    // Paired against sampling: positive mean_cost_diff means the strategy
    // beat it, p is the one-sided significance of that direction.
    const EvalResult& sampling = runs[1].result;
    std::string compare = "comparison,pairs,mean_cost_diff,p_value,wins\n";
    for (size_t r = 2; r < runs.size(); ++r) {
        std::vector<double> diffs(sampling.rows.size());
        int wins = 0;
        double mean_diff = 0.0;
        for (size_t i = 0; i < diffs.size(); ++i) {
            diffs[i] = sampling.rows[i].best_cost - runs[r].result.rows[i].best_cost;
            mean_diff += diffs[i];
            if (runs[r].result.rows[i].best_cost <= sampling.rows[i].best_cost) ++wins;
        }
        mean_diff /= static_cast<double>(diffs.size());
        std::snprintf(line, sizeof line, "%s_vs_sampling,%d,%.9f,%.9g,%d\n",
                      strategy_name(runs[r].strategy).c_str(), static_cast<int>(diffs.size()),
                      mean_diff, paired_t_pvalue(diffs), wins);
        compare += line;
    }
    write_text_file((s.dir / "compare.csv").string(), compare);
    stage_mark(s);
}

void run_ablation_stage(const ReproduceOptions& opts, const fs::path& base_ckpt) {
    TrainConfig tc;
    tc.seed = 4001;
    tc.steps = 20;
    tc.budget = 30;
    tc.batch_instances = 4;
    tc.accumulation = 1;
    tc.starting_points = 10;
    tc.instance_size = 20;
    const uint64_t data_seed = 9201;
    const int data_count = 16;
    const uint64_t eval_seed = 4101;
    BudgetSpec eval_budget;
    eval_budget.attempts = 100;
    eval_budget.starting_points = 10;

    const PolicyConfig cfg = tsp_policy();
    Pin pin;
    pin.kv("stage.name", "ablation");
    pin_policy(pin, cfg);
    pin_train(pin, tc);
    pin.kvi("data.seed", static_cast<long long>(data_seed));
    pin.kvi("data.count", data_count);
    pin.kvi("eval.seed", static_cast<long long>(eval_seed));
    pin.kvi("eval.attempts", eval_budget.attempts);
    pin.kvi("eval.starting_points", eval_budget.starting_points);
    StageIo s{fs::path(opts.out_root) / "ablation", pin.text, {"ablation.csv"}};
    if (stage_ready(s, opts.force)) return;
    stage_begin(s);

    const Checkpoint base = load_checkpoint(base_ckpt.string(), cfg);
    const Dataset eval_data =
        generate_dataset(ProblemKind::Tsp, tc.instance_size, data_count, data_seed,
                         opts.num_threads);
    const std::vector<FeatureSubset> subsets = {FeatureSubset::ReturnLogp,
                                                FeatureSubset::PlusRemainingBudget,
                                                FeatureSubset::PlusWriteBudget, FeatureSubset::Full};
    MementoSearchConfig mcfg;
    mcfg.memory_capacity = tc.memory_capacity;
    const AblationResult result = run_ablation(subsets, base.params, tc, cfg, eval_data,
                                               eval_budget, mcfg, eval_seed, opts.num_threads);
    write_text_file((s.dir / "ablation.csv").string(), ablation_csv(result));
    stage_mark(s);
}

void run_rule_grid_stage(const ReproduceOptions& opts, const fs::path& memento_ckpt) {
    const PolicyConfig cfg = tsp_policy();
    const RuleAxes axes;
    const RuleFixed fixed;
    Pin pin;
    pin.kv("stage.name", "rule-grid");
    pin.kvd("grid.ret_min", axes.ret_min);
    pin.kvd("grid.ret_max", axes.ret_max);
    pin.kvd("grid.logp_min", axes.logp_min);
    pin.kvd("grid.logp_max", axes.logp_max);
    pin.kvi("grid.resolution", axes.resolution);
    pin.kvd("grid.budget_at_write", fixed.budget_at_write);
    pin.kvd("grid.memory_logit", fixed.memory_logit);
    pin.kvi("grid.horizon", fixed.horizon);
    pin.kvd("grid.stage_early", kRuleGridStages[0]);
    pin.kvd("grid.stage_mid", kRuleGridStages[1]);
    pin.kvd("grid.stage_late", kRuleGridStages[2]);
    StageIo s{fs::path(opts.out_root) / "rule-grid",
              pin.text,
              {"rule_grid_early.csv", "rule_grid_mid.csv", "rule_grid_late.csv",
               "surrogate_grid.csv"}};
    if (stage_ready(s, opts.force)) return;
    stage_begin(s);

    const Checkpoint tuned = load_checkpoint(memento_ckpt.string(), cfg);
    const MemoryNet net = checkpoint_net(tuned);
    const char* names[3] = {"rule_grid_early.csv", "rule_grid_mid.csv", "rule_grid_late.csv"};
    for (int i = 0; i < 3; ++i) {
        const RuleGrid grid = rule_grid(net, axes, fixed, kRuleGridStages[i]);
        write_text_file((s.dir / names[i]).string(), rule_grid_csv(grid));
    }
    // Ground-truth panel: the on-action policy-gradient weight in closed
    // form, advantage x (1 - p).
    const RuleGrid surrogate = rule_grid_with(
        [](const double* f) { return f[1] * (1.0 - std::exp(f[0])); }, axes, fixed, 0.5);
    write_text_file((s.dir / "surrogate_grid.csv").string(), rule_grid_csv(surrogate));
    stage_mark(s);
}

// ---- experiment graph ----

fs::path ensure_tsp_pretrain(const ReproduceOptions& opts) {
    return run_pretrain_stage(opts, "pretrain-tsp20", tsp_policy(), tsp_pretrain_cfg());
}

fs::path ensure_tsp_train(const ReproduceOptions& opts) {
    const fs::path base = ensure_tsp_pretrain(opts);
    return run_train_stage(opts, "train-memento-tsp20", tsp_policy(), tsp_train_cfg(), base);
}

void run_tsp_eval(const ReproduceOptions& opts) {
    const fs::path base = ensure_tsp_pretrain(opts);
    const fs::path tuned = ensure_tsp_train(opts);
    run_eval_stage(opts, "eval-benchmark-tsp20", tsp_policy(), tsp_eval_pins(), base, tuned);
}

void run_cvrp_suite(const ReproduceOptions& opts) {
    const fs::path base =
        run_pretrain_stage(opts, "cvrp-suite/pretrain", cvrp_policy(), cvrp_pretrain_cfg());
    const fs::path tuned =
        run_train_stage(opts, "cvrp-suite/train", cvrp_policy(), cvrp_train_cfg(), base);
    run_eval_stage(opts, "cvrp-suite/eval", cvrp_policy(), cvrp_eval_pins(), base, tuned);
}

}  // namespace

const std::vector<std::string>& reproduce_experiments() {
    static const std::vector<std::string> kNames = {
        "pretrain-tsp20", "train-memento-tsp20", "eval-benchmark-tsp20",
        "ablation",       "rule-grid",           "cvrp-suite"};
    return kNames;
}

void reproduce(const std::string& experiment, const ReproduceOptions& opts) {
    if (opts.out_root.empty()) throw ValidationError("reproduce needs an output root");
    if (opts.num_threads < 1) throw ValidationError("worker thread count must be >= 1");
    if (experiment == "pretrain-tsp20") {
        ensure_tsp_pretrain(opts);
    } else if (experiment == "train-memento-tsp20") {
        ensure_tsp_train(opts);
    } else if (experiment == "eval-benchmark-tsp20") {
        run_tsp_eval(opts);
    } else if (experiment == "ablation") {
        run_ablation_stage(opts, ensure_tsp_pretrain(opts));
    } else if (experiment == "rule-grid") {
        run_rule_grid_stage(opts, ensure_tsp_train(opts));
    } else if (experiment == "cvrp-suite") {
        run_cvrp_suite(opts);
    } else {
        std::string known;
        for (const std::string& name : reproduce_experiments()) {
            if (!known.empty()) known += ", ";
            known += name;
        }
        throw ValidationError("unknown experiment \"" + experiment + "\"; available: " + known);
    }
}

}  // namespace memento
