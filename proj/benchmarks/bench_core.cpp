// Microbenchmarks for the per-rollout hot path: encoding, construction,
// memory retrieval, and the training-side gradient step.

#include <benchmark/benchmark.h>

#include "memento/memory.hpp"
#include "memento/training.hpp"

using namespace memento;

namespace {

PolicyConfig bench_policy(ProblemKind kind) {
    PolicyConfig cfg;
    cfg.kind = kind;
    return cfg;  // production shape: d=64, 2 blocks, 4 heads
}

Instance bench_instance(ProblemKind kind, int n) {
    RngStream rng = RngStream::derive(71, RngDomain::DataGen, static_cast<uint64_t>(n));
    return random_instance(kind, n, 0, rng);
}

// Saturated memory of real trajectories, the retrieval-cost worst case.
Memory populated_memory(const Instance& inst, const TensorMap& params, const PolicyConfig& cfg,
                        int capacity) {
    Memory mem(cfg.kind, inst.size(), capacity);
    for (int att = 0; att < capacity; ++att) {
        RngStream rng = RngStream::derive(72, RngDomain::Rollout, inst.id, att);
        Trajectory t = rollout(inst, start_point_of(inst, 0), params, cfg, 1.0, rng);
        t.attempt_index = att;
        mem.write_trajectory(t, att, capacity);
    }
    return mem;
}

void BM_Encode(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const PolicyConfig cfg = bench_policy(ProblemKind::Tsp);
    const TensorMap params = init_policy_params(cfg, 73);
    const Instance inst = bench_instance(ProblemKind::Tsp, n);
    for (auto _ : state) {
        benchmark::DoNotOptimize(encode(inst, params, cfg));
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Encode)->Arg(20)->Arg(50)->Arg(100);

void BM_RolloutSampling(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const PolicyConfig cfg = bench_policy(ProblemKind::Tsp);
    const TensorMap params = init_policy_params(cfg, 74);
    const Instance inst = bench_instance(ProblemKind::Tsp, n);
    const InstanceRoller roller(inst, params, cfg);
    uint64_t i = 0;
    for (auto _ : state) {
        RngStream rng = RngStream::derive(75, RngDomain::Rollout, inst.id, i++);
        benchmark::DoNotOptimize(roller.roll(0, 1.0, rng));
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_RolloutSampling)->Arg(20)->Arg(100);

void BM_RolloutMemento(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const PolicyConfig cfg = bench_policy(ProblemKind::Tsp);
    const TensorMap params = init_policy_params(cfg, 76);
    const Instance inst = bench_instance(ProblemKind::Tsp, n);
    const InstanceRoller roller(inst, params, cfg);
    const MemoryNet net(MemoryNetConfig{}, 77);
    const Memory mem = populated_memory(inst, params, cfg, 40);
    uint64_t i = 0;
    for (auto _ : state) {
        MementoHook hook(mem, net, 0.5);
        RngStream rng = RngStream::derive(78, RngDomain::Rollout, inst.id, i++);
        benchmark::DoNotOptimize(roller.roll(0, 1.0, rng, &hook));
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_RolloutMemento)->Arg(20)->Arg(100);

void BM_MemoryRetrieval(benchmark::State& state) {
    const PolicyConfig cfg = bench_policy(ProblemKind::Tsp);
    const TensorMap params = init_policy_params(cfg, 79);
    const Instance inst = bench_instance(ProblemKind::Tsp, 20);
    const Memory mem = populated_memory(inst, params, cfg, 40);
    const MemoryNet net(MemoryNetConfig{}, 80);
    std::vector<MemoryEntry> entries;
    for (auto _ : state) {
        entries.clear();
        mem.retrieve(0, 7, entries);
        const FeatureBatch fb = build_features(entries, 0.5);
        benchmark::DoNotOptimize(correction_logits(fb.actions, fb.feats, net, inst.size()));
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_MemoryRetrieval);

void BM_LossGrad(benchmark::State& state) {
    const PolicyConfig cfg = bench_policy(ProblemKind::Tsp);
    const TensorMap params = init_policy_params(cfg, 81);
    const MemoryNet net(MemoryNetConfig{}, 82);
    TrainConfig tc;
    tc.budget = 10;
    tc.batch_instances = 2;
    tc.starting_points = 5;
    tc.seed = 83;
    const Dataset data = generate_dataset(ProblemKind::Tsp, 20, tc.batch_instances, 84);
    TensorMap pg = params.zeros_like();
    TensorMap ng = net.params().zeros_like();
    for (auto _ : state) {
        pg.zero();
        ng.zero();
        benchmark::DoNotOptimize(
            memento_loss_grad(data.instances, params, cfg, net, tc, pg, ng));
    }
    // Rollouts per gradient call, the unit training throughput is quoted in.
    state.SetItemsProcessed(state.iterations() * tc.budget * tc.batch_instances *
                            tc.starting_points);
}
BENCHMARK(BM_LossGrad);

void BM_OptimizerStep(benchmark::State& state) {
    const PolicyConfig cfg = bench_policy(ProblemKind::Tsp);
    TensorMap params = init_policy_params(cfg, 85);
    TensorMap grads = params.zeros_like();
    RngStream rng = RngStream::derive(86, RngDomain::Test);
    for (auto& [name, m] : grads.items()) {
        (void)name;
        for (double& v : m.a) v = rng.normal();
    }
    AdamState adam;
    adam.m = params.zeros_like();
    adam.v = params.zeros_like();
    for (auto _ : state) {
        optimizer_step(params, grads, adam, 4e-3, 1e-4, 1e-4);
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_OptimizerStep);

}  // namespace

BENCHMARK_MAIN();
