#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "memento/analysis.hpp"
#include "memento/checkpoint.hpp"
#include "memento/config.hpp"
#include "memento/dataset_io.hpp"
#include "memento/errors.hpp"
#include "memento/reproduce.hpp"
#include "memento/search.hpp"
#include "memento/training.hpp"

namespace fs = std::filesystem;
using namespace memento;

namespace {

PolicyConfig policy_from(Config& c, ProblemKind default_kind) {
    PolicyConfig cfg;
    cfg.kind = kind_from_name(c.get_string("policy.kind", kind_name(default_kind)));
    cfg.dim = static_cast<int>(c.get_int("policy.dim", cfg.dim));
    cfg.blocks = static_cast<int>(c.get_int("policy.blocks", cfg.blocks));
    cfg.heads = static_cast<int>(c.get_int("policy.heads", cfg.heads));
    cfg.ff = static_cast<int>(c.get_int("policy.ff", cfg.ff));
    cfg.clip = c.get_double("policy.clip", cfg.clip);
    cfg.validate();
    return cfg;
}

TrainConfig train_from(Config& c) {
    TrainConfig tc;
    tc.seed = c.get_u64("train.seed", tc.seed);
    tc.steps = static_cast<int>(c.get_int("train.steps", tc.steps));
    tc.budget = static_cast<int>(c.get_int("train.budget", tc.budget));
    tc.batch_instances = static_cast<int>(c.get_int("train.batch_instances", tc.batch_instances));
    tc.starting_points = static_cast<int>(c.get_int("train.starting_points", tc.starting_points));
    tc.accumulation = static_cast<int>(c.get_int("train.accumulation", tc.accumulation));
    tc.lr_memory = c.get_double("train.lr_memory", tc.lr_memory);
    tc.lr_encoder = c.get_double("train.lr_encoder", tc.lr_encoder);
    tc.lr_decoder = c.get_double("train.lr_decoder", tc.lr_decoder);
    tc.epsilon = c.get_double("train.epsilon", tc.epsilon);
    tc.refine_mode = c.get_bool("train.refine_mode", tc.refine_mode);
    tc.temperature = c.get_double("train.temperature", tc.temperature);
    tc.instance_size = static_cast<int>(c.get_int("train.instance_size", tc.instance_size));
    tc.memory_capacity = static_cast<int>(c.get_int("train.memory_capacity", tc.memory_capacity));
    tc.validate();
    return tc;
}

Config load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
    Config c = path.empty() ? Config::parse_text("", "<defaults>") : Config::parse_file(path);
    for (const std::string& o : overrides) c.apply_override(o);
    return c;
}

void write_snapshot(const std::string& out_dir, const Config& c) {
    fs::create_directories(out_dir);
    write_text_file((fs::path(out_dir) / "config.resolved").string(), c.resolved_text());
}

std::vector<TrainLogRow> wall_zeroed(std::vector<TrainLogRow> rows) {
    for (auto& r : rows) r.wall_ms = 0.0;
    return rows;
}

std::string default_out_root() {
    const char* env = std::getenv("MEMENTO_OUT_ROOT");
    return env != nullptr && env[0] != '\0' ? env : "out";
}

struct CommonArgs {
    int threads = 1;
};

int run(int argc, char** argv) {
    CLI::App app{"Memory-augmented construction solver for routing problems"};
    app.require_subcommand(1);
    CommonArgs common;
    app.add_option("-j,--threads", common.threads, "Worker threads")->capture_default_str();

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate a random instance dataset");
    std::string gen_kind = "tsp";
    int gen_n = 20, gen_count = 100;
    uint64_t gen_seed = 0;
    std::string gen_out = "data.dset", gen_refs;
    gen->add_option("--kind", gen_kind, "tsp or cvrp")->capture_default_str();
    gen->add_option("--n", gen_n, "Nodes per instance (CVRP: depot included)")
        ->capture_default_str();
    gen->add_option("--count", gen_count, "Number of instances")->capture_default_str();
    gen->add_option("--seed", gen_seed, "Generator seed")->capture_default_str();
    gen->add_option("--out", gen_out, "Output dataset path")->capture_default_str();
    gen->add_option("--brute-force-refs", gen_refs,
                    "Also write exact optimal costs to this file (small n only)");

    // pretrain
    auto* pre = app.add_subcommand("pretrain", "Train a base policy from scratch");
    std::string pre_config, pre_out = "pretrain_out";
    std::vector<std::string> pre_sets;
    int pre_interval = 0;
    pre->add_option("--config", pre_config, "key=value config file");
    pre->add_option("--set", pre_sets, "Config override key=value (repeatable)");
    pre->add_option("--out", pre_out, "Output directory")->capture_default_str();
    pre->add_option("--checkpoint-interval", pre_interval,
                    "Also save the checkpoint every this many steps");

    // train
    auto* trn = app.add_subcommand("train", "Train the memory net on top of a base checkpoint");
    std::string trn_config, trn_base, trn_out = "train_out";
    std::vector<std::string> trn_sets;
    int trn_interval = 0;
    trn->add_option("--config", trn_config, "key=value config file");
    trn->add_option("--set", trn_sets, "Config override key=value (repeatable)");
    trn->add_option("--base", trn_base, "Base policy checkpoint")->required();
    trn->add_option("--out", trn_out, "Output directory")->capture_default_str();
    trn->add_option("--checkpoint-interval", trn_interval,
                    "Also save the checkpoint every this many steps");

    // search
    auto* sr = app.add_subcommand("search", "Evaluate a search strategy over a dataset");
    std::string sr_ckpt, sr_data, sr_strategy = "sampling", sr_refs, sr_out;
    int sr_attempts = 200, sr_starts = 1, sr_capacity = 40;
    double sr_temp = 1.0, sr_eas_lr = 0.005, sr_eas_imit = 0.1;
    uint64_t sr_seed = 0;
    bool sr_shared = false;
    sr->add_option("--checkpoint", sr_ckpt, "Policy checkpoint")->required();
    sr->add_option("--data", sr_data, "Dataset file")->required();
    sr->add_option("--strategy", sr_strategy, "greedy, sampling, memento, or eas")
        ->capture_default_str();
    sr->add_option("--attempts", sr_attempts, "Sequential attempts B")->capture_default_str();
    sr->add_option("--starts", sr_starts, "Starting points P per attempt (0 = all)")
        ->capture_default_str();
    sr->add_option("--temperature", sr_temp, "Sampling temperature")->capture_default_str();
    sr->add_option("--seed", sr_seed, "Search seed")->capture_default_str();
    sr->add_option("--refs", sr_refs, "Reference cost file for gap computation");
    sr->add_option("--capacity", sr_capacity, "Memory slot capacity")->capture_default_str();
    sr->add_flag("--shared-memory", sr_shared, "One memory shared by all starting points");
    sr->add_option("--eas-lr", sr_eas_lr, "EAS learning rate")->capture_default_str();
    sr->add_option("--eas-imitation", sr_eas_imit, "EAS imitation weight")->capture_default_str();
    sr->add_option("--out", sr_out, "Metrics CSV path (default: stdout)");

    // analyze
    auto* an = app.add_subcommand("analyze", "Interpretability artifacts");
    an->require_subcommand(1);

    auto* ang = an->add_subcommand("rule-grid", "Export learned update-rule grids as CSV");
    std::string ang_ckpt, ang_out = "rule_grid_out";
    ang->add_option("--checkpoint", ang_ckpt, "Checkpoint with a memory net")->required();
    ang->add_option("--out", ang_out, "Output directory")->capture_default_str();

    auto* anr = an->add_subcommand("reinforce-check",
                                   "Check the analytic surrogate against the policy gradient");
    std::string anr_ckpt, anr_out;
    int anr_n = 5, anr_cases = 1000;
    uint64_t anr_seed = 7;
    anr->add_option("--checkpoint", anr_ckpt, "Policy checkpoint (default: fresh parameters)");
    anr->add_option("--n", anr_n, "Instance size (max 6)")->capture_default_str();
    anr->add_option("--cases", anr_cases, "Random cases")->capture_default_str();
    anr->add_option("--seed", anr_seed, "Case seed")->capture_default_str();
    anr->add_option("--out", anr_out, "Report path (default: stdout)");

    auto* ana = an->add_subcommand("ablation", "Train and compare memory feature subsets");
    std::string ana_base, ana_out = "ablation_out";
    int ana_steps = 20, ana_k = 30, ana_instances = 16, ana_eval_attempts = 100;
    uint64_t ana_seed = 4001;
    ana->add_option("--base", ana_base, "Base policy checkpoint")->required();
    ana->add_option("--out", ana_out, "Output directory")->capture_default_str();
    ana->add_option("--steps", ana_steps, "Training steps per subset")->capture_default_str();
    ana->add_option("--attempts", ana_k, "Training attempts K per episode")->capture_default_str();
    ana->add_option("--instances", ana_instances, "Evaluation instances")->capture_default_str();
    ana->add_option("--eval-attempts", ana_eval_attempts, "Evaluation budget B")
        ->capture_default_str();
    ana->add_option("--seed", ana_seed, "Training seed")->capture_default_str();

    // reproduce
    auto* rep = app.add_subcommand("reproduce", "Run a pinned experiment pipeline");
    std::string rep_name, rep_out = default_out_root();
    bool rep_force = false, rep_list = false;
    rep->add_option("experiment", rep_name, "Experiment name");
    rep->add_option("--out", rep_out, "Output root (default: $MEMENTO_OUT_ROOT or ./out)")
        ->capture_default_str();
    rep->add_flag("--force", rep_force, "Rerun stages even when up to date");
    rep->add_flag("--list", rep_list, "List experiment names and exit");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    if (common.threads < 1) throw ValidationError("worker thread count must be >= 1");

    if (gen->parsed()) {
        const ProblemKind kind = kind_from_name(gen_kind);
        const Dataset data = generate_dataset(kind, gen_n, gen_count, gen_seed, common.threads);
        save_dataset(gen_out, data);
        std::fprintf(stderr, "wrote %d %s instances of size %d to %s\n", data.count(),
                     kind_name(kind).c_str(), data.n, gen_out.c_str());
        if (!gen_refs.empty()) {
            std::vector<double> refs(data.instances.size());
            for (size_t i = 0; i < refs.size(); ++i) {
                refs[i] = brute_force(data.instances[i]).cost;
            }
            save_costs(gen_refs, refs);
            std::fprintf(stderr, "wrote exact reference costs to %s\n", gen_refs.c_str());
        }
        return 0;
    }

    if (pre->parsed()) {
        Config c = load_run_config(pre_config, pre_sets);
        const PolicyConfig cfg = policy_from(c, ProblemKind::Tsp);
        const TrainConfig tc = train_from(c);
        c.reject_unknown();
        write_snapshot(pre_out, c);
        const std::string ckpt_path = (fs::path(pre_out) / "base.ckpt").string();
        const auto sink = [&](int step, const TensorMap& params, const MemoryNet*) {
            Checkpoint ck;
            ck.policy = cfg;
            ck.params = params;
            ck.seed = tc.seed;
            ck.provenance = "pretrain step " + std::to_string(step);
            save_checkpoint(ckpt_path, ck);
            std::fprintf(stderr, "saved %s at step %d\n", ckpt_path.c_str(), step);
        };
        PretrainResult pr = pretrain(tc, cfg, common.threads, sink, pre_interval);
        write_text_file((fs::path(pre_out) / "log.csv").string(), training_log_csv(pr.log));
        write_text_file((fs::path(pre_out) / "metrics.csv").string(),
                        training_log_csv(wall_zeroed(pr.log)));
        if (pre_interval <= 0) sink(tc.steps, pr.params, nullptr);
        return 0;
    }

    if (trn->parsed()) {
        Config c = load_run_config(trn_config, trn_sets);
        const PolicyConfig cfg = policy_from(c, ProblemKind::Tsp);
        const TrainConfig tc = train_from(c);
        MemoryNetConfig nc;
        nc.subset = subset_from_name(c.get_string("memory.subset", subset_name(nc.subset)));
        nc.hidden = static_cast<int>(c.get_int("memory.hidden", nc.hidden));
        c.reject_unknown();
        write_snapshot(trn_out, c);
        const Checkpoint base = load_checkpoint(trn_base, cfg);
        const std::string ckpt_path = (fs::path(trn_out) / "memento.ckpt").string();
        const auto sink = [&](int step, const TensorMap& params, const MemoryNet* net) {
            Checkpoint ck;
            ck.policy = cfg;
            ck.params = params;
            ck.has_memory_net = net != nullptr;
            if (net != nullptr) {
                ck.net_config = net->config();
                ck.net_params = net->params();
            }
            ck.seed = tc.seed;
            ck.provenance = "train step " + std::to_string(step);
            save_checkpoint(ckpt_path, ck);
            std::fprintf(stderr, "saved %s at step %d\n", ckpt_path.c_str(), step);
        };
        TrainResult tr = train(tc, cfg, base.params, nc, common.threads, sink, trn_interval);
        write_text_file((fs::path(trn_out) / "log.csv").string(), training_log_csv(tr.log));
        write_text_file((fs::path(trn_out) / "metrics.csv").string(),
                        training_log_csv(wall_zeroed(tr.log)));
        if (trn_interval <= 0) sink(tc.steps, tr.params, &tr.net);
        return 0;
    }

    if (sr->parsed()) {
        const Checkpoint ck = load_checkpoint(sr_ckpt);
        const Dataset data = load_dataset(sr_data);
        EvalOptions eo;
        eo.strategy = strategy_from_name(sr_strategy);
        eo.budget.attempts = sr_attempts;
        eo.budget.temperature = sr_temp;
        eo.seed = sr_seed;
        eo.num_threads = common.threads;
        eo.memento.memory_capacity = sr_capacity;
        eo.memento.shared_memory = sr_shared;
        eo.eas.learning_rate = sr_eas_lr;
        eo.eas.imitation_weight = sr_eas_imit;
        if (data.count() == 0) throw ValidationError("dataset is empty");
        const int max_starts = max_starting_points(data.instances.front());
        eo.budget.starting_points = sr_starts <= 0 ? max_starts : sr_starts;
        MemoryNet net;
        const bool needs_net = eo.strategy == Strategy::Memento;
        if (needs_net) net = checkpoint_net(ck);
        std::vector<double> refs;
        if (!sr_refs.empty()) refs = load_costs(sr_refs);
        const EvalResult result = evaluate(data, ck.params, ck.policy, needs_net ? &net : nullptr,
                                           eo, sr_refs.empty() ? nullptr : &refs);
        const std::string csv = metrics_csv(result, eo.strategy, eo.budget, true);
        if (sr_out.empty()) {
            std::fputs(csv.c_str(), stdout);
        } else {
            write_text_file(sr_out, csv);
        }
        std::fprintf(stderr, "%s over %d instances: mean best cost %.6f, mean gap %.4f%%\n",
                     strategy_name(eo.strategy).c_str(), data.count(), result.mean_cost,
                     result.mean_gap_percent);
        return 0;
    }

    if (ang->parsed()) {
        const Checkpoint ck = load_checkpoint(ang_ckpt);
        const MemoryNet net = checkpoint_net(ck);
        fs::create_directories(ang_out);
        const RuleAxes axes;
        const RuleFixed fixed;
        const char* names[3] = {"rule_grid_early.csv", "rule_grid_mid.csv", "rule_grid_late.csv"};
        for (int i = 0; i < 3; ++i) {
            write_text_file((fs::path(ang_out) / names[i]).string(),
                            rule_grid_csv(rule_grid(net, axes, fixed, kRuleGridStages[i])));
        }
        const RuleGrid surrogate = rule_grid_with(
            [](const double* f) { return f[1] * (1.0 - std::exp(f[0])); }, axes, fixed, 0.5);
        write_text_file((fs::path(ang_out) / "surrogate_grid.csv").string(),
                        rule_grid_csv(surrogate));
        std::fprintf(stderr, "wrote rule grids to %s\n", ang_out.c_str());
        return 0;
    }

    if (anr->parsed()) {
        PolicyConfig cfg;
        TensorMap params;
        if (anr_ckpt.empty()) {
            params = init_policy_params(cfg, anr_seed);
        } else {
            Checkpoint ck = load_checkpoint(anr_ckpt);
            cfg = ck.policy;
            params = std::move(ck.params);
        }
        RngStream rng = RngStream::derive(anr_seed, RngDomain::DataGen, 0);
        const Instance instance = random_instance(cfg.kind, anr_n, anr_seed, rng);
        const ReinforceCheckReport report =
            reinforce_capacity_check(instance, params, cfg, anr_cases, anr_seed);
        const std::string text = reinforce_check_report_text(report);
        if (anr_out.empty()) {
            std::fputs(text.c_str(), stdout);
        } else {
            write_text_file(anr_out, text);
        }
        return 0;
    }

    if (ana->parsed()) {
        const Checkpoint base = load_checkpoint(ana_base);
        TrainConfig tc;
        tc.seed = ana_seed;
        tc.steps = ana_steps;
        tc.budget = ana_k;
        tc.batch_instances = 4;
        tc.accumulation = 1;
        tc.starting_points = 10;
        tc.instance_size = base.policy.kind == ProblemKind::Cvrp ? 21 : 20;
        const Dataset eval_data = generate_dataset(base.policy.kind, tc.instance_size,
                                                   ana_instances, ana_seed + 100, common.threads);
        BudgetSpec eval_budget;
        eval_budget.attempts = ana_eval_attempts;
        eval_budget.starting_points = 10;
        const std::vector<FeatureSubset> subsets = {
            FeatureSubset::ReturnLogp, FeatureSubset::PlusRemainingBudget,
            FeatureSubset::PlusWriteBudget, FeatureSubset::Full};
        MementoSearchConfig mcfg;
        const AblationResult result =
            run_ablation(subsets, base.params, tc, base.policy, eval_data, eval_budget, mcfg,
                         ana_seed + 200, common.threads);
        fs::create_directories(ana_out);
        write_text_file((fs::path(ana_out) / "ablation.csv").string(), ablation_csv(result));
        std::fprintf(stderr, "wrote %s\n", (fs::path(ana_out) / "ablation.csv").string().c_str());
        return 0;
    }

    if (rep->parsed()) {
        if (rep_list) {
            for (const std::string& name : reproduce_experiments()) {
                std::printf("%s\n", name.c_str());
            }
            return 0;
        }
        if (rep_name.empty()) {
            throw ValidationError("reproduce needs an experiment name (or --list)");
        }
        ReproduceOptions ro;
        ro.out_root = rep_out;
        ro.num_threads = common.threads;
        ro.force = rep_force;
        reproduce(rep_name, ro);
        std::fprintf(stderr, "experiment %s complete under %s\n", rep_name.c_str(),
                     rep_out.c_str());
        return 0;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
