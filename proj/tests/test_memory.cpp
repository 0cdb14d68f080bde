#include <cmath>
#include <cstdio>
#include <vector>

#include "doctest.h"
#include "memento/memory.hpp"
#include "test_support.hpp"

using namespace memento;

namespace {

MemoryEntry entry(int action, double logp, double ret) {
    MemoryEntry e;
    e.action = action;
    e.action_logp = logp;
    e.ret = ret;
    return e;
}

Trajectory fake_traj(int start, std::vector<int> actions, std::vector<double> logps, double ret) {
    Trajectory t;
    t.start_point = start;
    t.actions = std::move(actions);
    t.action_logps = std::move(logps);
    t.memory_logits_taken.assign(t.actions.size(), 0.0);
    t.ret = ret;
    return t;
}

}  // namespace

TEST_CASE("feature subsets select nested column sets") {
    CHECK(subset_dim(FeatureSubset::ReturnLogp) == 2);
    CHECK(subset_dim(FeatureSubset::PlusRemainingBudget) == 3);
    CHECK(subset_dim(FeatureSubset::PlusWriteBudget) == 4);
    CHECK(subset_dim(FeatureSubset::Full) == 7);
    CHECK(subset_columns(FeatureSubset::ReturnLogp) == std::vector<int>{0, 1});
    CHECK(subset_columns(FeatureSubset::PlusRemainingBudget) == std::vector<int>{0, 1, 6});
    CHECK(subset_columns(FeatureSubset::PlusWriteBudget) == std::vector<int>{0, 1, 2, 6});
    CHECK(subset_columns(FeatureSubset::Full) == std::vector<int>{0, 1, 2, 3, 4, 5, 6});
    for (FeatureSubset s : {FeatureSubset::ReturnLogp, FeatureSubset::PlusRemainingBudget,
                            FeatureSubset::PlusWriteBudget, FeatureSubset::Full}) {
        CHECK(subset_from_name(subset_name(s)) == s);
    }
    CHECK_THROWS_AS(subset_from_name("E"), ValidationError);
}

TEST_CASE("memory slots keep the newest capacity entries in write order") {
    Memory mem(ProblemKind::Tsp, 4, 3);
    CHECK(mem.num_start_rows() == 4);

    // Write 5 entries into the (start 1, node 2) slot through trajectories
    // whose step 1 acts from node 2.
    for (int i = 0; i < 5; ++i) {
        Trajectory t = fake_traj(1, {2, 3, 0}, {-0.1, -0.2, -0.3}, -double(i));
        mem.write_trajectory(t, i, 10);
    }
    std::vector<MemoryEntry> got;
    mem.retrieve(1, 2, got);
    REQUIRE(got.size() == 3);
    // Oldest-first among the survivors: writes 2, 3, 4.
    CHECK(got[0].ret == -2.0);
    CHECK(got[1].ret == -3.0);
    CHECK(got[2].ret == -4.0);
    CHECK(got[0].action == 3);
    CHECK(got[0].budget_at_write == doctest::Approx(0.2));
    CHECK(got[2].budget_at_write == doctest::Approx(0.4));

    // Other slots of the same trajectory saw one write each per attempt.
    got.clear();
    mem.retrieve(1, 1, got);
    REQUIRE(got.size() == 3);
    CHECK(got[0].action == 2);
    // A different starting point's row is untouched.
    got.clear();
    mem.retrieve(2, 2, got);
    CHECK(got.empty());
}

TEST_CASE("stored entries carry the logp decomposition") {
    Memory mem(ProblemKind::Tsp, 4, 8);
    Trajectory t = fake_traj(0, {1, 3, 2}, {-0.5, -0.25, -0.125}, -7.0);
    mem.write_trajectory(t, 4, 16);

    std::vector<MemoryEntry> got;
    mem.retrieve(0, 1, got);  // slot of the node acted FROM at step 1
    REQUIRE(got.size() == 1);
    CHECK(got[0].action == 3);
    CHECK(got[0].action_logp == -0.25);
    CHECK(got[0].traj_logp == doctest::Approx(-0.875));
    CHECK(got[0].tail_logp == doctest::Approx(-0.375));
    CHECK(got[0].ret == -7.0);
    CHECK(got[0].budget_at_write == doctest::Approx(0.25));

    CHECK(mem.total_entries() == 3);
}

TEST_CASE("cvrp memory rows are per starting customer, slots per from-node") {
    Memory mem(ProblemKind::Cvrp, 5, 4);
    // Starting customer 3: the vehicle acts from the depot first.
    Trajectory t = fake_traj(3, {3, 1, 0, 2, 4, 0}, {0, -1, -1, -1, -1, -1}, -9.0);
    mem.write_trajectory(t, 0, 10);
    std::vector<MemoryEntry> got;
    mem.retrieve(3, 0, got);
    REQUIRE(got.size() == 2);  // depot is acted-from twice (steps 0 and 3)
    CHECK(got[0].action == 3);
    CHECK(got[1].action == 2);
    got.clear();
    mem.retrieve(3, 1, got);
    REQUIRE(got.size() == 1);
    CHECK(got[0].action == 0);
}

TEST_CASE("shared memory collapses all starting points into one row") {
    Memory mem(ProblemKind::Tsp, 4, 8, true);
    CHECK(mem.num_start_rows() == 1);
    mem.write_trajectory(fake_traj(0, {1, 2, 3}, {-1, -1, -1}, -1.0), 0, 4);
    mem.write_trajectory(fake_traj(2, {1, 3, 0}, {-1, -1, -1}, -2.0), 1, 4);
    std::vector<MemoryEntry> got;
    mem.retrieve(3, 2, got);  // any start point reads the shared row
    REQUIRE(got.size() == 2);
    CHECK(got[0].action == 3);
    CHECK(got[1].action == 1);
}

TEST_CASE("build_features z-scores returns and broadcasts remaining budget") {
    std::vector<MemoryEntry> es = {entry(1, -0.5, -4.0), entry(2, -0.25, -6.0)};
    es[0].budget_at_write = 0.125;
    es[0].memory_logit_at_write = 0.75;
    es[0].traj_logp = -3.0;
    es[0].tail_logp = -1.5;
    const FeatureBatch fb = build_features(es, 0.4375);
    REQUIRE(fb.feats.rows == 2);
    REQUIRE(fb.feats.cols == kMemoryFeatures);
    CHECK(fb.actions == std::vector<int>{1, 2});
    CHECK(fb.feats(0, 0) == -0.5);
    // Population z-score of {-4, -6}: mean -5, std 1.
    CHECK(fb.feats(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fb.feats(1, 1) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(fb.feats(0, 2) == 0.125);
    CHECK(fb.feats(0, 3) == 0.75);
    CHECK(fb.feats(0, 4) == -3.0);
    CHECK(fb.feats(0, 5) == -1.5);
    CHECK(fb.feats(0, 6) == 0.4375);
    CHECK(fb.feats(1, 6) == 0.4375);

    // Identical returns carry no ranking signal and must map to exactly 0.
    std::vector<MemoryEntry> same = {entry(0, -1.0, -2.0), entry(1, -1.0, -2.0)};
    const FeatureBatch fs = build_features(same, 0.0);
    CHECK(fs.feats(0, 1) == 0.0);
    CHECK(fs.feats(1, 1) == 0.0);
}

TEST_CASE("memory net forward matches a hand-computed two-layer mlp") {
    MemoryNetConfig cfg;
    cfg.subset = FeatureSubset::ReturnLogp;
    cfg.hidden = 2;
    MemoryNet net(cfg, 3);
    // Overwrite with tiny fixed weights; layout is rows x cols with
    // row-vector inputs, x @ W + b.
    TensorMap& p = net.params();
    Mat& w1 = p.at("mem.w1");
    REQUIRE(w1.rows == 2);
    REQUIRE(w1.cols == 2);
    w1(0, 0) = 0.5;
    w1(0, 1) = -0.25;
    w1(1, 0) = 1.0;
    w1(1, 1) = 0.125;
    p.at("mem.b1")(0, 0) = 0.1;
    p.at("mem.b1")(0, 1) = -0.1;
    Mat& w2 = p.at("mem.w2");
    w2(0, 0) = 0.3;
    w2(0, 1) = -0.6;
    w2(1, 0) = 0.2;
    w2(1, 1) = 0.4;
    p.at("mem.b2")(0, 0) = 0.05;
    p.at("mem.b2")(0, 1) = -0.05;
    Mat& w3 = p.at("mem.w3");
    w3(0, 0) = 0.7;
    w3(1, 0) = -0.3;
    p.at("mem.b3")(0, 0) = 0.01;

    const double feat[kMemoryFeatures] = {-0.5, 1.5, 0, 0, 0, 0, 0};
    double h0[2] = {gelu(-0.5 * 0.5 + 1.5 * 1.0 + 0.1), gelu(-0.5 * -0.25 + 1.5 * 0.125 - 0.1)};
    double h1[2] = {gelu(h0[0] * 0.3 + h0[1] * 0.2 + 0.05), gelu(h0[0] * -0.6 + h0[1] * 0.4 - 0.05)};
    const double want = h1[0] * 0.7 + h1[1] * -0.3 + 0.01;
    CHECK(net.forward_one(feat) == doctest::Approx(want).epsilon(1e-14));

    // forward() is the row-wise batch of forward_one.
    Mat feats(1, kMemoryFeatures);
    for (int j = 0; j < kMemoryFeatures; ++j) feats(0, j) = feat[j];
    std::vector<double> out;
    net.forward(feats, out);
    REQUIRE(out.size() == 1);
    CHECK(out[0] == doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("a fresh net outputs near zero for any input") {
    MemoryNet net(MemoryNetConfig{}, 123);
    double feat[kMemoryFeatures] = {-2.0, 1.0, 0.5, 0.3, -8.0, -4.0, 0.9};
    CHECK(std::fabs(net.forward_one(feat)) < 1e-3);
}

TEST_CASE("correction logits aggregate per action and skip absent actions") {
    MemoryNet net(MemoryNetConfig{}, 5);
    // Give the net visible outputs so aggregation is observable.
    for (auto& [name, m] : net.params().items()) {
        (void)name;
        for (double& v : m.a) v = 0.3;
    }
    std::vector<int> actions = {2, 0, 2, 3};
    Mat feats(4, kMemoryFeatures);
    RngStream rng = RngStream::derive(51, RngDomain::Test);
    for (double& v : feats.a) v = rng.uniform(-1.0, 1.0);

    const std::vector<double> lm = correction_logits(actions, feats, net, 5);
    REQUIRE(lm.size() == 5);
    std::vector<double> want(5, 0.0);
    for (int i = 0; i < 4; ++i) want[actions[i]] += net.forward_one(&feats(i, 0));
    for (int j = 0; j < 5; ++j) CHECK(lm[j] == doctest::Approx(want[j]).epsilon(1e-12));
    CHECK(lm[1] == 0.0);
    CHECK(lm[4] == 0.0);

    // The generic-weight variant agrees when handed the net itself.
    const std::vector<double> lw = correction_logits_with(
        actions, feats, [&](const double* f) { return net.forward_one(f); }, 5);
    CHECK(lw == lm);
}

TEST_CASE("memory net gradient matches finite differences") {
    MemoryNetConfig cfg;
    cfg.hidden = 4;
    MemoryNet net(cfg, 7);
    // Move away from the near-zero init so the objective is not degenerate.
    RngStream rng = RngStream::derive(52, RngDomain::Test);
    for (auto& [name, m] : net.params().items()) {
        (void)name;
        for (double& v : m.a) v += rng.uniform(-0.3, 0.3);
    }

    RetrievalRecord rec;
    rec.actions = {1, 3, 1};
    rec.feats = Mat(3, kMemoryFeatures);
    for (double& v : rec.feats.a) v = rng.uniform(-1.0, 1.0);
    rec.dlm = {0.4, -1.2, 0.0, 0.7};
    rec.params_version = net.params().version;

    // Objective: sum_j dlm[j] * lm[j] with lm from correction_logits.
    const auto objective = [&]() {
        const std::vector<double> lm = correction_logits(rec.actions, rec.feats, net, 4);
        double s = 0.0;
        for (int j = 0; j < 4; ++j) s += rec.dlm[j] * lm[j];
        return s;
    };
    const TensorMap analytic = memory_net_grad({rec}, net);
    const TensorMap fd = testutil::fd_grad(net.params(), objective);
    CHECK(testutil::max_rel_err(analytic, fd) < 1e-4);
}

TEST_CASE("stale capture versions are refused") {
    MemoryNet net(MemoryNetConfig{}, 9);
    RetrievalRecord rec;
    rec.actions = {0};
    rec.feats = Mat(1, kMemoryFeatures);
    rec.dlm = {1.0};
    rec.params_version = net.params().version + 1;
    TensorMap grads = net.params().zeros_like();
    CHECK_THROWS_AS(memory_net_grad_acc(rec, net, grads), ContractError);
}

TEST_CASE("hook aggregates over live retrieval and captures replay exactly") {
    RngStream rng = RngStream::derive(53, RngDomain::Test);
    const Instance inst = random_instance(ProblemKind::Tsp, 6, 11, rng);
    const PolicyConfig pcfg = testutil::micro_policy(ProblemKind::Tsp);
    const TensorMap params = init_policy_params(pcfg, 3);

    Memory mem(ProblemKind::Tsp, 6, 8);
    for (int i = 0; i < 4; ++i) {
        RngStream rr = RngStream::derive(8, RngDomain::Rollout, inst.id, i, 2);
        Trajectory t = rollout(inst, 2, params, pcfg, 1.0, rr);
        t.attempt_index = i;
        mem.write_trajectory(t, i, 8);
    }

    MemoryNet net(MemoryNetConfig{}, 15);
    for (auto& [name, m] : net.params().items()) {
        (void)name;
        for (double& v : m.a) v += 0.2;
    }

    MementoHook hook(mem, net, 0.5, true);
    RngStream rr = RngStream::derive(8, RngDomain::Rollout, inst.id, 4, 2);
    const Trajectory t = rollout(inst, 2, params, pcfg, 1.0, rr, &hook);
    std::vector<StepRetrieval> caps = hook.take_captures();
    CHECK_FALSE(caps.empty());
    CHECK(hook.take_captures().empty());  // handed over exactly once

    // Each captured step reproduces the correction the rollout actually saw.
    for (const StepRetrieval& cap : caps) {
        const std::vector<double> lm = correction_logits(cap.actions, cap.feats, net, 6);
        const int taken = t.actions[cap.step];
        CHECK(lm[taken] == doctest::Approx(t.memory_logits_taken[cap.step]).epsilon(1e-12));
    }

    // The oracle recomputation: retrieve + build_features at the same
    // remaining budget, aggregated by hand, equals the hook's captures.
    const StepRetrieval& first = caps.front();
    std::vector<MemoryEntry> es;
    mem.retrieve(2, node_at_step(t, ProblemKind::Tsp, first.step), es);
    const FeatureBatch fb = build_features(es, 0.5);
    CHECK(fb.actions == first.actions);
    CHECK(fb.feats.a == first.feats.a);
}

TEST_CASE("capture replay feeds logit gradients into net parameters") {
    MemoryNet net(MemoryNetConfig{}, 21);
    RngStream rng = RngStream::derive(54, RngDomain::Test);
    for (auto& [name, m] : net.params().items()) {
        (void)name;
        for (double& v : m.a) v += rng.uniform(-0.2, 0.2);
    }

    StepRetrieval cap;
    cap.step = 1;
    cap.actions = {0, 2};
    cap.feats = Mat(2, kMemoryFeatures);
    for (double& v : cap.feats.a) v = rng.uniform(-1.0, 1.0);

    TensorMap grads = net.params().zeros_like();
    CaptureReplay replay({cap}, net, grads);
    std::vector<double> lm(3, 0.0);
    CHECK_FALSE(replay.corrections(0, lm));  // step 0 had no retrieval
    REQUIRE(replay.corrections(1, lm));
    const std::vector<double> want = correction_logits(cap.actions, cap.feats, net, 3);
    CHECK(lm == want);

    std::vector<double> dlm = {0.5, 0.0, -1.0};
    replay.backprop(1, dlm);
    RetrievalRecord rec;
    rec.actions = cap.actions;
    rec.feats = cap.feats;
    rec.dlm = dlm;
    rec.params_version = net.params().version;
    const TensorMap want_g = memory_net_grad({rec}, net);
    for (size_t i = 0; i < grads.items().size(); ++i) {
        const Mat& a = grads.items()[i].second;
        const Mat& b = want_g.items()[i].second;
        for (size_t j = 0; j < a.a.size(); ++j) CHECK(a.a[j] == doctest::Approx(b.a[j]).epsilon(1e-12));
    }
}

TEST_CASE("fresh net corrections keep per-step kl below the neutrality bound") {
    RngStream rng = RngStream::derive(55, RngDomain::Test);
    const Instance inst = random_instance(ProblemKind::Tsp, 20, 13, rng);
    const PolicyConfig pcfg = testutil::micro_policy(ProblemKind::Tsp);
    const TensorMap params = init_policy_params(pcfg, 33);

    // Saturate every slot a 40-capacity memory can hold along one start row.
    Memory mem(ProblemKind::Tsp, 20, 40);
    for (int i = 0; i < 40; ++i) {
        RngStream rr = RngStream::derive(10, RngDomain::Rollout, inst.id, i, 5);
        Trajectory t = rollout(inst, 5, params, pcfg, 1.0, rr);
        t.attempt_index = i;
        mem.write_trajectory(t, i, 40);
    }

    MemoryNet net(MemoryNetConfig{}, 77);
    MementoHook hook(mem, net, 0.5);
    const Mat h = encode(inst, params, pcfg);
    State s = reset(inst, 5);
    double worst_kl = 0.0;
    while (!is_terminal(s)) {
        std::vector<double> base = policy_logits(s, h, params, pcfg);
        std::vector<double> lm(20, 0.0);
        hook.corrections(s, lm);
        std::vector<double> corrected = base;
        for (int j = 0; j < 20; ++j) {
            if (corrected[j] > kMaskedThreshold) corrected[j] += lm[j];
        }
        // KL(base || corrected) over the feasible support.
        const double lse_b = log_sum_exp(base.data(), 20);
        const double lse_c = log_sum_exp(corrected.data(), 20);
        double kl = 0.0;
        for (int j = 0; j < 20; ++j) {
            if (base[j] <= kMaskedThreshold) continue;
            const double pb = std::exp(base[j] - lse_b);
            kl += pb * ((base[j] - lse_b) - (corrected[j] - lse_c));
        }
        worst_kl = std::max(worst_kl, kl);
        int pick = 0;
        for (int j = 0; j < 20; ++j) {
            if (base[j] > base[pick]) pick = j;
        }
        step_inplace(s, pick);
    }
    CHECK(worst_kl < 1e-3);
}

TEST_CASE("dump and restore round-trip the memory bitwise") {
    RngStream rng = RngStream::derive(56, RngDomain::Test);
    Memory mem(ProblemKind::Cvrp, 6, 3);
    const Instance inst = random_instance(ProblemKind::Cvrp, 6, 17, rng);
    const PolicyConfig pcfg = testutil::micro_policy(ProblemKind::Cvrp);
    const TensorMap params = init_policy_params(pcfg, 41);
    for (int i = 0; i < 6; ++i) {
        RngStream rr = RngStream::derive(11, RngDomain::Rollout, inst.id, i, 1 + i % 5);
        Trajectory t = rollout(inst, 1 + i % 5, params, pcfg, 1.0, rr);
        t.attempt_index = i;
        mem.write_trajectory(t, i, 6);
    }

    const std::string path = "memory_roundtrip.bin";
    mem.dump(path);
    const Memory back = Memory::restore(path);
    std::remove(path.c_str());

    REQUIRE(back.kind() == mem.kind());
    REQUIRE(back.capacity() == mem.capacity());
    REQUIRE(back.num_nodes() == mem.num_nodes());
    CHECK(back.total_entries() == mem.total_entries());
    std::vector<MemoryEntry> a, b;
    for (int start = 1; start < 6; ++start) {
        for (int node = 0; node < 6; ++node) {
            a.clear();
            b.clear();
            mem.retrieve(start, node, a);
            back.retrieve(start, node, b);
            REQUIRE(a.size() == b.size());
            for (size_t i = 0; i < a.size(); ++i) {
                CHECK(a[i].action == b[i].action);
                CHECK(a[i].action_logp == b[i].action_logp);
                CHECK(a[i].ret == b[i].ret);
                CHECK(a[i].budget_at_write == b[i].budget_at_write);
                CHECK(a[i].memory_logit_at_write == b[i].memory_logit_at_write);
                CHECK(a[i].traj_logp == b[i].traj_logp);
                CHECK(a[i].tail_logp == b[i].tail_logp);
            }
        }
    }
}
