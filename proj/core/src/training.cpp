#include "memento/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "memento/errors.hpp"
#include "memento/rng.hpp"
#include "memento/threads.hpp"

namespace memento {

namespace {

double group_lr(const std::string& name, double lr_memory, double lr_encoder,
                double lr_decoder) {
    if (name.rfind("mem.", 0) == 0) return lr_memory;
    if (name.rfind("dec.", 0) == 0) return lr_decoder;
    return lr_encoder;
}

std::vector<Instance> sample_batch(const TrainConfig& tc, ProblemKind kind,
                                   uint64_t micro_index) {
    std::vector<Instance> batch;
    batch.reserve(tc.batch_instances);
    for (int b = 0; b < tc.batch_instances; ++b) {
        RngStream rng = RngStream::derive(tc.seed, RngDomain::TrainBatch, micro_index,
                                          static_cast<uint64_t>(b));
        uint64_t id = mix64(mix64(tc.seed, micro_index), static_cast<uint64_t>(b) + 1);
        batch.push_back(random_instance(kind, tc.instance_size, id, rng));
    }
    return batch;
}

void scale_tensors(TensorMap& m, double s) {
    for (auto& [name, mat] : m.items())
        for (double& x : mat.a) x *= s;
}

}  // namespace

void TrainConfig::validate() const {
    if (budget < 1) throw ValidationError("train config: budget must be >= 1");
    if (batch_instances < 1) throw ValidationError("train config: batch_instances must be >= 1");
    if (starting_points < 1) throw ValidationError("train config: starting_points must be >= 1");
    if (accumulation < 1) throw ValidationError("train config: accumulation must be >= 1");
    if (steps < 0) throw ValidationError("train config: steps must be >= 0");
    if (instance_size < 2) throw ValidationError("train config: instance_size must be >= 2");
    if (memory_capacity < 1) throw ValidationError("train config: memory_capacity must be >= 1");
    if (!(epsilon > 0.0)) throw ValidationError("train config: epsilon must be > 0");
    if (!(temperature >= 0.0)) throw ValidationError("train config: temperature must be >= 0");
    if (lr_memory < 0.0 || lr_encoder < 0.0 || lr_decoder < 0.0)
        throw ValidationError("train config: learning rates must be >= 0");
    if (refine_mode && (lr_encoder != 0.0 || lr_decoder != 0.0))
        throw ValidationError("train config: refine_mode requires zero base-policy learning rates");
}

std::pair<double, double> improvement_advantage(double ret, double best_so_far) {
    return {std::max(ret - best_so_far, 0.0), std::max(ret, best_so_far)};
}

double attempt_weight(int attempt_index, double epsilon) {
    if (attempt_index < 0 || !(epsilon > 0.0))
        throw ContractError("attempt_weight: index must be >= 0 and epsilon > 0");
    return std::log(1.0 + epsilon + attempt_index);
}

double AttemptLedger::advance(double ret) {
    double adv;
    if (count_ == 0) {
        // The opening trajectory defines the baseline; charging it an
        // advantage against -inf would poison the telescoping sum.
        first_ = ret;
        best_ = ret;
        adv = 0.0;
    } else {
        auto [a, nb] = improvement_advantage(ret, best_);
        adv = a;
        best_ = nb;
    }
    ++count_;
    if (adv == 0.0) ++zeros_;
    return adv;
}

void BatchStats::merge(const BatchStats& o) {
    const double tn = static_cast<double>(trajectories), to = static_cast<double>(o.trajectories);
    if (trajectories + o.trajectories > 0) {
        mean_cost = (mean_cost * tn + o.mean_cost * to) / (tn + to);
        mean_advantage = (mean_advantage * tn + o.mean_advantage * to) / (tn + to);
        zero_advantage_fraction =
            (zero_advantage_fraction * tn + o.zero_advantage_fraction * to) / (tn + to);
    }
    const double in = static_cast<double>(instances), io = static_cast<double>(o.instances);
    if (instances + o.instances > 0)
        mean_best_cost = (mean_best_cost * in + o.mean_best_cost * io) / (in + io);
    loss += o.loss;
    best_return = std::max(best_return, o.best_return);
    trajectories += o.trajectories;
    instances += o.instances;
}

BatchStats memento_loss_grad(const std::vector<Instance>& batch, const TensorMap& params,
                             const PolicyConfig& cfg, const MemoryNet& net, const TrainConfig& tc,
                             TensorMap& policy_grads, TensorMap& net_grads, int num_threads) {
    if (batch.empty()) throw ValidationError("memento_loss_grad: empty instance batch");
    const int K = tc.budget, P = tc.starting_points;
    const double inv_norm = 1.0 / (static_cast<double>(K) * batch.size());

    BatchStats stats;
    double sum_cost = 0.0, sum_adv = 0.0, loss = 0.0;
    long long zeros = 0;
    double sum_best_cost = 0.0;

    std::vector<Trajectory> att(P);
    std::vector<std::vector<StepRetrieval>> caps(P);
    for (const Instance& inst : batch) {
        if (P > max_starting_points(inst))
            throw ValidationError("memento_loss_grad: more starting points than the instance admits");
        InstanceRoller roller(inst, params, cfg);
        InstanceGradienter grad(inst, params, cfg);
        Memory memory(cfg.kind, inst.size(), tc.memory_capacity);
        AttemptLedger ledger;
        for (int i = 0; i < K; ++i) {
            const double remaining = 1.0 - static_cast<double>(i) / K;
            parallel_for(P, num_threads, [&](size_t k) {
                RngStream rng = RngStream::derive(tc.seed, RngDomain::Rollout, inst.id,
                                                  static_cast<uint64_t>(i), k);
                MementoHook hook(memory, net, remaining, true);
                att[k] = roller.roll(start_point_of(inst, static_cast<int>(k)), tc.temperature,
                                     rng, &hook);
                att[k].attempt_index = i;
                caps[k] = hook.take_captures();
            });
            const double w_att = attempt_weight(i, tc.epsilon);
            for (int k = 0; k < P; ++k) {
                const double adv = ledger.advance(att[k].ret);
                sum_cost += -att[k].ret;
                if (adv > 0.0) {
                    loss += w_att * adv * (-att[k].total_logp()) * inv_norm;
                    CaptureReplay replay(std::move(caps[k]), net, net_grads);
                    grad.add(att[k], -(w_att * adv) * inv_norm, &replay);
                }
            }
            for (int k = 0; k < P; ++k) memory.write_trajectory(att[k], i, K);
        }
        if (!std::isfinite(loss) || !std::isfinite(ledger.best_return())) {
            char msg[192];
            std::snprintf(msg, sizeof msg,
                          "training loss diverged on instance %llu (loss=%g, best return=%g)",
                          static_cast<unsigned long long>(inst.id), loss, ledger.best_return());
            throw DivergenceError(msg);
        }
        grad.finish(policy_grads);
        sum_adv += ledger.total_advantage();
        zeros += ledger.zero_count();
        sum_best_cost += -ledger.best_return();
        stats.best_return = std::max(stats.best_return, ledger.best_return());
    }

    stats.trajectories = static_cast<long long>(K) * P * static_cast<long long>(batch.size());
    stats.instances = static_cast<long long>(batch.size());
    stats.loss = loss;
    stats.mean_cost = sum_cost / static_cast<double>(stats.trajectories);
    stats.mean_advantage = sum_adv / static_cast<double>(stats.trajectories);
    stats.zero_advantage_fraction =
        static_cast<double>(zeros) / static_cast<double>(stats.trajectories);
    stats.mean_best_cost = sum_best_cost / static_cast<double>(batch.size());
    return stats;
}

void optimizer_step(TensorMap& params, const TensorMap& grads, AdamState& state,
                    double lr_memory, double lr_encoder, double lr_decoder) {
    if (!params.congruent(grads))
        throw ContractError("optimizer_step: gradient tensors do not match the parameters");
    if (state.t == 0) {
        state.m = params.zeros_like();
        state.v = params.zeros_like();
    } else if (!params.congruent(state.m)) {
        throw ContractError("optimizer_step: moment tensors do not match the parameters");
    }
    ++state.t;
    const double bc1 = 1.0 - std::pow(0.9, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(0.999, static_cast<double>(state.t));
    for (size_t ti = 0; ti < params.items().size(); ++ti) {
        Mat& p = params.items()[ti].second;
        const Mat& g = grads.items()[ti].second;
        Mat& m = state.m.items()[ti].second;
        Mat& v = state.v.items()[ti].second;
        const double lr = group_lr(params.items()[ti].first, lr_memory, lr_encoder, lr_decoder);
        for (size_t j = 0; j < p.a.size(); ++j) {
            m.a[j] = 0.9 * m.a[j] + 0.1 * g.a[j];
            v.a[j] = 0.999 * v.a[j] + 0.001 * g.a[j] * g.a[j];
            p.a[j] -= lr * (m.a[j] / bc1) / (std::sqrt(v.a[j] / bc2) + 1e-8);
        }
    }
    ++params.version;
}

std::string training_log_csv(const std::vector<TrainLogRow>& rows) {
    std::string out = "step,mean_cost,best_of_K,grad_norm,wall_ms\n";
    char line[160];
    for (const TrainLogRow& r : rows) {
        std::snprintf(line, sizeof line, "%d,%.9f,%.9f,%.9e,%.3f\n", r.step, r.mean_cost,
                      r.best_of_k, r.grad_norm, r.wall_ms);
        out += line;
    }
    return out;
}

PretrainResult pretrain(const TrainConfig& tc, const PolicyConfig& cfg, int num_threads,
                        const CheckpointSink& on_checkpoint, int checkpoint_interval) {
    tc.validate();
    cfg.validate();
    PretrainResult res;
    res.params = init_policy_params(cfg, tc.seed);
    AdamState adam;
    const int P = tc.starting_points;
    uint64_t micro = 0;
    double first_mean = 0.0;
    std::vector<Trajectory> rolls(P);

    for (int step = 1; step <= tc.steps; ++step) {
        const auto t0 = std::chrono::steady_clock::now();
        TensorMap grads = res.params.zeros_like();
        double sum_cost = 0.0, sum_best = 0.0;
        long long n_traj = 0, n_inst = 0;
        for (int a = 0; a < tc.accumulation; ++a) {
            std::vector<Instance> batch = sample_batch(tc, cfg.kind, micro++);
            const double inv_norm = 1.0 / (static_cast<double>(batch.size()) * P);
            for (const Instance& inst : batch) {
                if (P > max_starting_points(inst))
                    throw ValidationError("pretrain: more starting points than the instance admits");
                InstanceRoller roller(inst, res.params, cfg);
                parallel_for(P, num_threads, [&](size_t k) {
                    RngStream rng =
                        RngStream::derive(tc.seed, RngDomain::Rollout, inst.id, 0, k);
                    rolls[k] = roller.roll(start_point_of(inst, static_cast<int>(k)),
                                           tc.temperature, rng);
                });
                double baseline = 0.0, best = -std::numeric_limits<double>::infinity();
                for (int k = 0; k < P; ++k) {
                    baseline += rolls[k].ret;
                    best = std::max(best, rolls[k].ret);
                    sum_cost += -rolls[k].ret;
                }
                baseline /= P;
                InstanceGradienter grad(inst, res.params, cfg);
                for (int k = 0; k < P; ++k)
                    grad.add(rolls[k], -(rolls[k].ret - baseline) * inv_norm);
                grad.finish(grads);
                sum_best += -best;
                n_traj += P;
                ++n_inst;
            }
        }
        scale_tensors(grads, 1.0 / tc.accumulation);
        const double gnorm = grads.l2_norm();
        const double mean_cost = sum_cost / static_cast<double>(n_traj);
        if (!std::isfinite(gnorm) || !std::isfinite(mean_cost)) {
            char msg[128];
            std::snprintf(msg, sizeof msg, "pretrain diverged at step %d (grad norm %g, mean %g)",
                          step, gnorm, mean_cost);
            throw DivergenceError(msg);
        }
        if (step == 1) first_mean = mean_cost;
        if (mean_cost > 1.5 * first_mean) {
            char msg[160];
            std::snprintf(msg, sizeof msg,
                          "pretrain diverged at step %d: mean cost %.6f exceeds 1.5x the first "
                          "step's %.6f",
                          step, mean_cost, first_mean);
            throw DivergenceError(msg);
        }
        optimizer_step(res.params, grads, adam, 0.0, tc.lr_encoder, tc.lr_decoder);
        const auto t1 = std::chrono::steady_clock::now();
        res.log.push_back({step, mean_cost, sum_best / static_cast<double>(n_inst), gnorm,
                           std::chrono::duration<double, std::milli>(t1 - t0).count()});
        if (on_checkpoint && checkpoint_interval > 0 &&
            (step % checkpoint_interval == 0 || step == tc.steps))
            on_checkpoint(step, res.params, nullptr);
    }
    return res;
}

TrainResult train(const TrainConfig& tc, const PolicyConfig& cfg, const TensorMap& base_params,
                  const MemoryNetConfig& net_cfg, int num_threads,
                  const CheckpointSink& on_checkpoint, int checkpoint_interval) {
    tc.validate();
    cfg.validate();
    TrainResult res;
    res.params = base_params;
    res.net = MemoryNet(net_cfg, tc.seed);
    AdamState adam_policy, adam_net;
    uint64_t micro = 0;
    double first_mean = 0.0;

    for (int step = 1; step <= tc.steps; ++step) {
        const auto t0 = std::chrono::steady_clock::now();
        TensorMap policy_grads = res.params.zeros_like();
        TensorMap net_grads = res.net.params().zeros_like();
        BatchStats stats;
        for (int a = 0; a < tc.accumulation; ++a) {
            std::vector<Instance> batch = sample_batch(tc, cfg.kind, micro++);
            stats.merge(memento_loss_grad(batch, res.params, cfg, res.net, tc, policy_grads,
                                          net_grads, num_threads));
        }
        scale_tensors(policy_grads, 1.0 / tc.accumulation);
        scale_tensors(net_grads, 1.0 / tc.accumulation);
        const double np = policy_grads.l2_norm(), nn = net_grads.l2_norm();
        const double gnorm = std::sqrt(np * np + nn * nn);
        if (!std::isfinite(gnorm) || !std::isfinite(stats.mean_cost)) {
            char msg[128];
            std::snprintf(msg, sizeof msg, "training diverged at step %d (grad norm %g, mean %g)",
                          step, gnorm, stats.mean_cost);
            throw DivergenceError(msg);
        }
        if (step == 1) first_mean = stats.mean_cost;
        if (stats.mean_cost > 1.5 * first_mean) {
            char msg[160];
            std::snprintf(msg, sizeof msg,
                          "training diverged at step %d: mean cost %.6f exceeds 1.5x the first "
                          "step's %.6f",
                          step, stats.mean_cost, first_mean);
            throw DivergenceError(msg);
        }
        optimizer_step(res.params, policy_grads, adam_policy, 0.0, tc.lr_encoder, tc.lr_decoder);
        optimizer_step(res.net.params(), net_grads, adam_net, tc.effective_lr_memory(), 0.0, 0.0);
        const auto t1 = std::chrono::steady_clock::now();
        res.log.push_back({step, stats.mean_cost, stats.mean_best_cost, gnorm,
                           std::chrono::duration<double, std::milli>(t1 - t0).count()});
        if (on_checkpoint && checkpoint_interval > 0 &&
            (step % checkpoint_interval == 0 || step == tc.steps))
            on_checkpoint(step, res.params, &res.net);
    }
    return res;
}

}  // namespace memento
