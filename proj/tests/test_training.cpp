#include <cmath>
#include <vector>

#include "doctest.h"
#include "memento/training.hpp"
#include "test_support.hpp"

using namespace memento;

TEST_CASE("improvement advantage rectifies at the running best") {
    {
        auto [adv, best] = improvement_advantage(-4.0, -5.0);
        CHECK(adv == 1.0);
        CHECK(best == -4.0);
    }
    {
        auto [adv, best] = improvement_advantage(-6.0, -5.0);
        CHECK(adv == 0.0);
        CHECK(best == -5.0);
    }
    {
        auto [adv, best] = improvement_advantage(-5.0, -5.0);
        CHECK(adv == 0.0);
        CHECK(best == -5.0);
    }
}

TEST_CASE("attempt weight grows logarithmically from log(1 + epsilon)") {
    CHECK(attempt_weight(0, 0.01) == doctest::Approx(std::log(1.01)).epsilon(1e-15));
    CHECK(attempt_weight(4, 0.01) == doctest::Approx(std::log(5.01)).epsilon(1e-15));
    CHECK(attempt_weight(0, 0.5) == doctest::Approx(std::log(1.5)).epsilon(1e-15));
    CHECK(attempt_weight(3, 0.01) > attempt_weight(2, 0.01));
}

TEST_CASE("attempt ledger telescopes exactly") {
    AttemptLedger led;
    CHECK(led.total_advantage() == 0.0);
    const std::vector<double> rets = {-5.0, -4.5, -6.0, -4.25, -4.25, -3.0};
    double sum = 0.0;
    for (double r : rets) sum += led.advance(r);
    CHECK(led.first_return() == -5.0);
    CHECK(led.best_return() == -3.0);
    // Bitwise identity, not approximate: the closed form is best - first.
    CHECK(led.total_advantage() == led.best_return() - led.first_return());
    CHECK(sum == doctest::Approx(led.total_advantage()).epsilon(1e-12));
    CHECK(led.count() == 6);
    // The seed trajectory, the regression to -6, and the tied -4.25 carry
    // zero advantage.
    CHECK(led.zero_count() == 3);
}

TEST_CASE("batch stats merge pools means by their counts") {
    BatchStats a;
    a.loss = 1.0;
    a.mean_cost = 4.0;
    a.mean_best_cost = 3.5;
    a.mean_advantage = 0.2;
    a.zero_advantage_fraction = 0.5;
    a.best_return = -3.5;
    a.trajectories = 10;
    a.instances = 2;
    BatchStats b;
    b.loss = 0.5;
    b.mean_cost = 6.0;
    b.mean_best_cost = 5.0;
    b.mean_advantage = 0.4;
    b.zero_advantage_fraction = 0.7;
    b.best_return = -5.0;
    b.trajectories = 30;
    b.instances = 6;
    a.merge(b);
    CHECK(a.loss == doctest::Approx(1.5));
    CHECK(a.mean_cost == doctest::Approx((4.0 * 10 + 6.0 * 30) / 40));
    CHECK(a.mean_best_cost == doctest::Approx((3.5 * 2 + 5.0 * 6) / 8));
    CHECK(a.mean_advantage == doctest::Approx((0.2 * 10 + 0.4 * 30) / 40));
    CHECK(a.zero_advantage_fraction == doctest::Approx((0.5 * 10 + 0.7 * 30) / 40));
    CHECK(a.best_return == -3.5);
    CHECK(a.trajectories == 40);
    CHECK(a.instances == 8);
}

TEST_CASE("train config validation") {
    TrainConfig tc;
    tc.validate();
    tc.budget = 0;
    CHECK_THROWS_AS(tc.validate(), ValidationError);
    tc = TrainConfig{};
    tc.accumulation = 0;
    CHECK_THROWS_AS(tc.validate(), ValidationError);
    tc = TrainConfig{};
    tc.epsilon = 0.0;
    CHECK_THROWS_AS(tc.validate(), ValidationError);
    // Refine mode freezes the base policy, so base rates must be zero.
    tc = TrainConfig{};
    tc.refine_mode = true;
    CHECK_THROWS_AS(tc.validate(), ValidationError);
    tc.lr_encoder = 0.0;
    tc.lr_decoder = 0.0;
    tc.validate();
    CHECK(tc.effective_lr_memory() == doctest::Approx(0.1 * tc.lr_memory));
    tc.refine_mode = false;
    CHECK(tc.effective_lr_memory() == tc.lr_memory);
}

TEST_CASE("optimizer step matches a hand-rolled adam update per group") {
    TensorMap params;
    params.emplace("enc.w", 1, 2);
    params.emplace("dec.w", 1, 1);
    params.emplace("mem.w1", 1, 1);
    params.at("enc.w")(0, 0) = 1.0;
    params.at("enc.w")(0, 1) = -2.0;
    params.at("dec.w")(0, 0) = 0.5;
    params.at("mem.w1")(0, 0) = 0.25;

    TensorMap grads = params.zeros_like();
    grads.at("enc.w")(0, 0) = 0.3;
    grads.at("enc.w")(0, 1) = -0.1;
    grads.at("dec.w")(0, 0) = 0.2;
    grads.at("mem.w1")(0, 0) = -0.4;

    AdamState state;
    const uint64_t v0 = params.version;
    optimizer_step(params, grads, state, 0.004, 0.001, 0.002);
    CHECK(state.t == 1);
    CHECK(params.version == v0 + 1);

    // First step: m_hat = g, v_hat = g^2, update = lr * g / (|g| + eps).
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const auto first_step = [&](double x, double g, double lr) {
        const double m = (1 - b1) * g / (1 - b1);
        const double v = (1 - b2) * g * g / (1 - b2);
        return x - lr * m / (std::sqrt(v) + eps);
    };
    CHECK(params.at("enc.w")(0, 0) == doctest::Approx(first_step(1.0, 0.3, 0.001)).epsilon(1e-12));
    CHECK(params.at("enc.w")(0, 1) == doctest::Approx(first_step(-2.0, -0.1, 0.001)).epsilon(1e-12));
    CHECK(params.at("dec.w")(0, 0) == doctest::Approx(first_step(0.5, 0.2, 0.002)).epsilon(1e-12));
    CHECK(params.at("mem.w1")(0, 0) == doctest::Approx(first_step(0.25, -0.4, 0.004)).epsilon(1e-12));

    // Second step exercises the moment accumulation.
    TensorMap g2 = params.zeros_like();
    g2.at("enc.w")(0, 0) = -0.2;
    const double x1 = params.at("enc.w")(0, 0);
    optimizer_step(params, g2, state, 0.004, 0.001, 0.002);
    const double m2 = b1 * (1 - b1) * 0.3 + (1 - b1) * -0.2;
    const double v2 = b2 * (1 - b2) * 0.3 * 0.3 + (1 - b2) * 0.2 * 0.2;
    const double mh = m2 / (1 - b1 * b1), vh = v2 / (1 - b2 * b2);
    CHECK(params.at("enc.w")(0, 0) ==
          doctest::Approx(x1 - 0.001 * mh / (std::sqrt(vh) + eps)).epsilon(1e-12));

    TensorMap wrong;
    wrong.emplace("enc.w", 1, 2);
    CHECK_THROWS_AS(optimizer_step(params, wrong, state, 1e-3, 1e-3, 1e-3), ContractError);
}

TEST_CASE("memento loss gradient matches finite differences jointly") {
    const Dataset data = generate_dataset(ProblemKind::Tsp, 5, 2, 314, 1);
    const PolicyConfig cfg = testutil::micro_policy(ProblemKind::Tsp);
    TensorMap params = init_policy_params(cfg, 55);
    MemoryNetConfig nc;
    nc.hidden = 3;
    MemoryNet net(nc, 56);
    // Perturb the net away from its near-zero init so corrections and their
    // gradients are both visibly nonzero.
    RngStream rng = RngStream::derive(57, RngDomain::Test);
    for (auto& [name, m] : net.params().items()) {
        (void)name;
        for (double& v : m.a) v += rng.uniform(-0.25, 0.25);
    }

    TrainConfig tc;
    tc.budget = 3;
    tc.batch_instances = 2;
    tc.starting_points = 2;
    tc.seed = 400;
    tc.temperature = 1.0;
    tc.instance_size = 5;
    tc.memory_capacity = 8;

    TensorMap pg = params.zeros_like();
    TensorMap ng = net.params().zeros_like();
    const BatchStats stats = memento_loss_grad(data.instances, params, cfg, net, tc, pg, ng);
    CHECK(stats.trajectories == 2 * 3 * 2);
    CHECK(stats.instances == 2);

    // The scalar objective the implementation differentiates. Re-rolling
    // with perturbed parameters changes the sampled actions themselves, so
    // the surrogate fixes the trajectories and memory contents: replay the
    // exact rollouts, recompute logps and corrections under the current
    // parameter values, and weight by the frozen advantages.
    struct Replayed {
        Instance inst;
        std::vector<Trajectory> trajs;
        std::vector<double> weights;
        std::vector<std::vector<StepRetrieval>> captures;
    };
    std::vector<Replayed> replays;
    for (const Instance& inst : data.instances) {
        Replayed rp;
        rp.inst = inst;
        Memory mem(cfg.kind, inst.size(), tc.memory_capacity);
        AttemptLedger ledger;
        for (int attempt = 0; attempt < tc.budget; ++attempt) {
            std::vector<Trajectory> wrote;
            for (int si = 0; si < tc.starting_points; ++si) {
                MementoHook hook(mem, net, 1.0 - double(attempt) / tc.budget, true);
                RngStream rr =
                    RngStream::derive(tc.seed, RngDomain::Rollout, inst.id, attempt, si);
                Trajectory t = rollout(inst, start_point_of(inst, si), params, cfg,
                                       tc.temperature, rr, &hook);
                t.attempt_index = attempt;
                const double adv = ledger.advance(t.ret);
                rp.trajs.push_back(t);
                rp.weights.push_back(-attempt_weight(attempt, tc.epsilon) * adv /
                                     (tc.budget * double(data.count())));
                rp.captures.push_back(hook.take_captures());
                wrote.push_back(std::move(t));
            }
            for (const Trajectory& t : wrote) mem.write_trajectory(t, attempt, tc.budget);
        }
        replays.push_back(std::move(rp));
    }

    const auto objective = [&]() {
        double total = 0.0;
        for (const Replayed& rp : replays) {
            for (size_t i = 0; i < rp.trajs.size(); ++i) {
                const Trajectory& t = rp.trajs[i];
                Mat corr(static_cast<int>(t.actions.size()), rp.inst.size());
                for (const StepRetrieval& cap : rp.captures[i]) {
                    std::vector<double> lm =
                        correction_logits(cap.actions, cap.feats, net, rp.inst.size());
                    for (int j = 0; j < rp.inst.size(); ++j) corr(cap.step, j) = lm[j];
                }
                total += rp.weights[i] *
                         testutil::replay_logp(rp.inst, t, params, cfg, &corr);
            }
        }
        return total;
    };

    const TensorMap fd_policy = testutil::fd_grad(params, objective);
    CHECK(testutil::max_rel_err(pg, fd_policy) < 1e-4);
    const TensorMap fd_net = testutil::fd_grad(net.params(), objective);
    CHECK(testutil::max_rel_err(ng, fd_net) < 1e-4);
}

TEST_CASE("loss gradients accumulate across calls") {
    const Dataset data = generate_dataset(ProblemKind::Tsp, 5, 1, 315, 1);
    const PolicyConfig cfg = testutil::micro_policy(ProblemKind::Tsp);
    TensorMap params = init_policy_params(cfg, 58);
    MemoryNet net(MemoryNetConfig{}, 59);
    TrainConfig tc;
    tc.budget = 2;
    tc.batch_instances = 1;
    tc.starting_points = 2;
    tc.seed = 401;
    tc.instance_size = 5;

    TensorMap pg1 = params.zeros_like(), ng1 = net.params().zeros_like();
    memento_loss_grad(data.instances, params, cfg, net, tc, pg1, ng1);
    TensorMap pg2 = params.zeros_like(), ng2 = net.params().zeros_like();
    memento_loss_grad(data.instances, params, cfg, net, tc, pg2, ng2);
    memento_loss_grad(data.instances, params, cfg, net, tc, pg2, ng2);
    for (size_t i = 0; i < pg1.items().size(); ++i) {
        const Mat& one = pg1.items()[i].second;
        const Mat& two = pg2.items()[i].second;
        for (size_t j = 0; j < one.a.size(); ++j)
            CHECK(two.a[j] == doctest::Approx(2.0 * one.a[j]).epsilon(1e-9));
    }
}

TEST_CASE("loss gradient is invariant to worker thread count") {
    const Dataset data = generate_dataset(ProblemKind::Cvrp, 6, 3, 316, 1);
    const PolicyConfig cfg = testutil::micro_policy(ProblemKind::Cvrp);
    TensorMap params = init_policy_params(cfg, 60);
    MemoryNet net(MemoryNetConfig{}, 61);
    TrainConfig tc;
    tc.budget = 2;
    tc.batch_instances = 3;
    tc.starting_points = 2;
    tc.seed = 402;
    tc.instance_size = 6;

    TensorMap pa = params.zeros_like(), na = net.params().zeros_like();
    const BatchStats sa = memento_loss_grad(data.instances, params, cfg, net, tc, pa, na, 1);
    TensorMap pb = params.zeros_like(), nb = net.params().zeros_like();
    const BatchStats sb = memento_loss_grad(data.instances, params, cfg, net, tc, pb, nb, 4);
    CHECK(sa.loss == sb.loss);
    CHECK(sa.mean_cost == sb.mean_cost);
    for (size_t i = 0; i < pa.items().size(); ++i) {
        CHECK(pa.items()[i].second.a == pb.items()[i].second.a);
    }
    for (size_t i = 0; i < na.items().size(); ++i) {
        CHECK(na.items()[i].second.a == nb.items()[i].second.a);
    }
}

TEST_CASE("pretrain runs a couple of steps and reports its log") {
    TrainConfig tc;
    tc.steps = 2;
    tc.batch_instances = 2;
    tc.starting_points = 3;
    tc.accumulation = 1;
    tc.lr_encoder = 1e-3;
    tc.lr_decoder = 1e-3;
    tc.seed = 500;
    tc.instance_size = 6;
    const PolicyConfig cfg = testutil::micro_policy(ProblemKind::Tsp);

    int sink_calls = 0;
    const PretrainResult r = pretrain(tc, cfg, 1, [&](int step, const TensorMap& p, const MemoryNet* net) {
        ++sink_calls;
        CHECK(step >= 1);
        CHECK(p.param_count() > 0);
        CHECK(net == nullptr);
    }, 1);
    CHECK(sink_calls == 2);
    REQUIRE(r.log.size() == 2);
    CHECK(r.log[0].step == 1);
    CHECK(r.log[1].step == 2);
    CHECK(r.log[0].mean_cost > 0.0);
    CHECK(r.log[0].grad_norm > 0.0);

    const std::string csv = training_log_csv(r.log);
    CHECK(csv.rfind("step,mean_cost,best_of_K,grad_norm,wall_ms\n", 0) == 0);

    // Same config, same result: training is deterministic end to end.
    const PretrainResult r2 = pretrain(tc, cfg, 1);
    for (size_t i = 0; i < r.params.items().size(); ++i) {
        CHECK(r.params.items()[i].second.a == r2.params.items()[i].second.a);
    }
}

TEST_CASE("memory training moves the net and keeps the base reproducible") {
    TrainConfig tc;
    tc.steps = 2;
    tc.budget = 3;
    tc.batch_instances = 2;
    tc.starting_points = 2;
    tc.accumulation = 1;
    tc.seed = 501;
    tc.instance_size = 6;
    tc.memory_capacity = 8;
    const PolicyConfig cfg = testutil::micro_policy(ProblemKind::Tsp);
    const TensorMap base = init_policy_params(cfg, 62);

    const TrainResult a = train(tc, cfg, base, MemoryNetConfig{}, 1);
    REQUIRE(a.log.size() == 2);
    // The optimizer touched both parameter sets.
    CHECK(a.net.params().l2_norm() > 0.0);
    bool policy_moved = false;
    for (size_t i = 0; i < base.items().size(); ++i) {
        if (base.items()[i].second.a != a.params.items()[i].second.a) policy_moved = true;
    }
    CHECK(policy_moved);

    const TrainResult b = train(tc, cfg, base, MemoryNetConfig{}, 4);
    for (size_t i = 0; i < a.params.items().size(); ++i) {
        CHECK(a.params.items()[i].second.a == b.params.items()[i].second.a);
    }
    for (size_t i = 0; i < a.net.params().items().size(); ++i) {
        CHECK(a.net.params().items()[i].second.a == b.net.params().items()[i].second.a);
    }
}
