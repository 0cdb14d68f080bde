#include <cmath>
#include <vector>

#include "doctest.h"
#include "memento/policy.hpp"
#include "test_support.hpp"

using namespace memento;

TEST_CASE("policy config validation") {
    PolicyConfig cfg = testutil::micro_policy(ProblemKind::Tsp);
    cfg.validate();
    cfg.heads = 3;  // dim 8 not divisible
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = testutil::micro_policy(ProblemKind::Tsp);
    cfg.clip = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("parameter init is a pure function of config and seed") {
    const PolicyConfig cfg = testutil::micro_policy(ProblemKind::Cvrp);
    const TensorMap a = init_policy_params(cfg, 99);
    const TensorMap b = init_policy_params(cfg, 99);
    REQUIRE(a.congruent(b));
    for (size_t i = 0; i < a.items().size(); ++i) {
        CHECK(a.items()[i].second.a == b.items()[i].second.a);
    }
    const TensorMap c = init_policy_params(cfg, 100);
    CHECK(a.items()[0].second.a != c.items()[0].second.a);
}

TEST_CASE("node features carry demand fraction and the depot flag") {
    RngStream rng = RngStream::derive(41, RngDomain::Test);
    const Instance inst = random_instance(ProblemKind::Cvrp, 5, 0, rng);
    const PolicyConfig cfg = testutil::micro_policy(ProblemKind::Cvrp);
    const Mat f = node_features(inst, cfg);
    REQUIRE(f.rows == 5);
    REQUIRE(f.cols == 4);
    CHECK(f(0, 2) == 0.0);
    CHECK(f(0, 3) == 1.0);
    for (int i = 1; i < 5; ++i) {
        CHECK(f(i, 0) == inst.coords[i].x);
        CHECK(f(i, 2) == doctest::Approx(double(inst.demands[i]) / inst.capacity));
        CHECK(f(i, 3) == 0.0);
    }
}

TEST_CASE("encoding is deterministic and offsets shift it additively") {
    RngStream rng = RngStream::derive(42, RngDomain::Test);
    const Instance inst = random_instance(ProblemKind::Tsp, 6, 0, rng);
    const PolicyConfig cfg = testutil::micro_policy(ProblemKind::Tsp);
    const TensorMap params = init_policy_params(cfg, 7);
    const Mat h1 = encode(inst, params, cfg);
    const Mat h2 = encode(inst, params, cfg);
    CHECK(h1.a == h2.a);
    REQUIRE(h1.rows == 6);
    REQUIRE(h1.cols == cfg.dim);

    Mat offset(6, cfg.dim);
    for (double& v : offset.a) v = rng.uniform(-0.1, 0.1);
    const EncodeCache with = encode_cached(inst, params, cfg, &offset);
    for (size_t i = 0; i < h1.a.size(); ++i) {
        CHECK(with.h.a[i] == doctest::Approx(h1.a[i] + offset.a[i]).epsilon(1e-12));
    }
}

TEST_CASE("logits are clipped, and masked entries sit at the sentinel") {
    RngStream rng = RngStream::derive(43, RngDomain::Test);
    const Instance inst = random_instance(ProblemKind::Tsp, 6, 0, rng);
    const PolicyConfig cfg = testutil::micro_policy(ProblemKind::Tsp);
    const TensorMap params = init_policy_params(cfg, 8);
    const Mat h = encode(inst, params, cfg);

    State s = reset(inst, 2);
    step_inplace(s, 4);
    const std::vector<double> logits = policy_logits(s, h, params, cfg);
    REQUIRE(logits.size() == 6);
    CHECK(logits[2] == kMaskedLogit);
    CHECK(logits[4] == kMaskedLogit);
    for (int a : {0, 1, 3, 5}) {
        CHECK(logits[a] > kMaskedThreshold);
        CHECK(std::fabs(logits[a]) <= cfg.clip);
    }
}

TEST_CASE("sample_action covers the tempered distribution contract") {
    RngStream rng = RngStream::derive(44, RngDomain::Test);
    std::vector<double> logits = {0.2, kMaskedLogit, 1.4, -0.7};

    SUBCASE("greedy picks the argmax and reports temperature-1 logp") {
        auto [a, logp] = sample_action(logits, 0.0, rng);
        CHECK(a == 2);
        std::vector<double> t1 = logits;
        const double lse = log_sum_exp(t1.data(), 4);
        CHECK(logp == doctest::Approx(logits[2] - lse).epsilon(1e-12));
    }

    SUBCASE("greedy breaks ties toward the lowest index") {
        std::vector<double> tie = {1.4, 1.4, 1.4};
        auto [a, logp] = sample_action(tie, 0.0, rng);
        CHECK(a == 0);
        CHECK(logp == doctest::Approx(-std::log(3.0)).epsilon(1e-12));
    }

    SUBCASE("sampling never returns a masked action and reports its own logp") {
        int hist[4] = {0};
        for (int i = 0; i < 4000; ++i) {
            auto [a, logp] = sample_action(logits, 0.5, rng);
            CHECK(a != 1);
            ++hist[a];
            std::vector<double> t(4);
            for (int j = 0; j < 4; ++j) t[j] = logits[j] / 0.5;
            CHECK(logp == doctest::Approx(t[a] - log_sum_exp(t.data(), 4)).epsilon(1e-12));
        }
        // Tempered probabilities: p2 dominates, p3 is rare but present.
        CHECK(hist[2] > hist[0]);
        CHECK(hist[0] > hist[3]);
        CHECK(hist[3] > 0);
    }
}

TEST_CASE("rollouts are feasible and their logps replay exactly") {
    RngStream rng = RngStream::derive(45, RngDomain::Test);
    for (ProblemKind kind : {ProblemKind::Tsp, ProblemKind::Cvrp}) {
        const Instance inst = random_instance(kind, 7, 3, rng);
        const PolicyConfig cfg = testutil::micro_policy(kind);
        const TensorMap params = init_policy_params(cfg, 17);
        for (int rep = 0; rep < 5; ++rep) {
            RngStream rr = RngStream::derive(9, RngDomain::Rollout, inst.id, rep);
            const Trajectory t = rollout(inst, 1 + rep % 5, params, cfg, 1.0, rr);
            CHECK(t.ret == doctest::Approx(-solution_cost(inst, t.solution(kind))).epsilon(1e-12));
            const double replayed = testutil::replay_logp(inst, t, params, cfg);
            CHECK(replayed == doctest::Approx(t.total_logp()).epsilon(1e-10));
        }
    }
}

TEST_CASE("instance roller matches the one-shot rollout stream for stream") {
    RngStream rng = RngStream::derive(46, RngDomain::Test);
    const Instance inst = random_instance(ProblemKind::Tsp, 8, 5, rng);
    const PolicyConfig cfg = testutil::micro_policy(ProblemKind::Tsp);
    const TensorMap params = init_policy_params(cfg, 21);
    const InstanceRoller roller(inst, params, cfg);
    for (int start = 0; start < 8; ++start) {
        RngStream r1 = RngStream::derive(4, RngDomain::Rollout, inst.id, 0, start);
        RngStream r2 = RngStream::derive(4, RngDomain::Rollout, inst.id, 0, start);
        const Trajectory a = roller.roll(start, 1.0, r1);
        const Trajectory b = rollout(inst, start, params, cfg, 1.0, r2);
        CHECK(a.actions == b.actions);
        CHECK(a.action_logps == b.action_logps);
        CHECK(a.ret == b.ret);
    }
}

namespace {

// Hook that adds a fixed correction for one node and records what it saw.
struct FixedHook : MemoryHook {
    int node;
    double bump;
    std::vector<double> taken_mem_logits;
    void corrections(const State& state, std::vector<double>& lm) override {
        (void)state;
        lm[node] += bump;
    }
    void observe(const State&, int, double, double mem_logit) override {
        taken_mem_logits.push_back(mem_logit);
    }
};

}  // namespace

TEST_CASE("hook corrections shift sampling and are reported per taken action") {
    RngStream rng = RngStream::derive(47, RngDomain::Test);
    const Instance inst = random_instance(ProblemKind::Tsp, 6, 9, rng);
    const PolicyConfig cfg = testutil::micro_policy(ProblemKind::Tsp);
    const TensorMap params = init_policy_params(cfg, 31);

    // A huge bump on node 3 forces it to be the first move from any start.
    FixedHook hook;
    hook.node = 3;
    hook.bump = 50.0;
    RngStream rr = RngStream::derive(5, RngDomain::Rollout, inst.id, 0, 0);
    const Trajectory t = rollout(inst, 0, params, cfg, 1.0, rr, &hook);
    CHECK(t.actions[0] == 3);
    CHECK(t.memory_logits_taken.size() == t.actions.size());
    CHECK(t.memory_logits_taken[0] == 50.0);
    // Once node 3 is visited the bump lands on a masked entry and must not
    // resurrect it; the remaining steps carry zero correction.
    for (size_t i = 1; i < t.memory_logits_taken.size(); ++i) {
        CHECK(t.memory_logits_taken[i] == 0.0);
        CHECK(t.actions[i] != 3);
    }
    CHECK(hook.taken_mem_logits == t.memory_logits_taken);

    // The recorded logps replay exactly once the corrections are added back.
    Mat corr(static_cast<int>(t.actions.size()), 6);
    corr(0, 3) = 50.0;
    const double replayed = testutil::replay_logp(inst, t, params, cfg, &corr);
    CHECK(replayed == doctest::Approx(t.total_logp()).epsilon(1e-10));
}

TEST_CASE("weighted logp gradient matches finite differences") {
    RngStream rng = RngStream::derive(48, RngDomain::Test);
    for (ProblemKind kind : {ProblemKind::Tsp, ProblemKind::Cvrp}) {
        const Instance inst = random_instance(kind, 5, 1, rng);
        const PolicyConfig cfg = testutil::micro_policy(kind);
        TensorMap params = init_policy_params(cfg, 13);

        std::vector<Trajectory> trajs;
        const std::vector<double> weights = {0.7, -0.3, 1.1};
        for (int k = 0; k < 3; ++k) {
            RngStream rr = RngStream::derive(6, RngDomain::Rollout, inst.id, k, 1);
            trajs.push_back(rollout(inst, 1, params, cfg, 1.0, rr));
        }

        const TensorMap analytic = weighted_logp_grad(inst, trajs, weights, params, cfg);
        const TensorMap fd = testutil::fd_grad(params, [&]() {
            double s = 0.0;
            for (int k = 0; k < 3; ++k)
                s += weights[k] * testutil::replay_logp(inst, trajs[k], params, cfg);
            return s;
        });
        CHECK(testutil::max_rel_err(analytic, fd) < 1e-4);
    }
}

TEST_CASE("offset gradient matches finite differences") {
    RngStream rng = RngStream::derive(49, RngDomain::Test);
    const Instance inst = random_instance(ProblemKind::Tsp, 5, 2, rng);
    const PolicyConfig cfg = testutil::micro_policy(ProblemKind::Tsp);
    const TensorMap params = init_policy_params(cfg, 19);
    Mat offset(5, cfg.dim);
    for (double& v : offset.a) v = rng.uniform(-0.05, 0.05);

    std::vector<Trajectory> trajs;
    const std::vector<double> weights = {1.0, -0.4};
    for (int k = 0; k < 2; ++k) {
        RngStream rr = RngStream::derive(7, RngDomain::Rollout, inst.id, k, 2);
        InstanceRoller roller(inst, params, cfg, &offset);
        trajs.push_back(roller.roll(2, 1.0, rr));
    }

    const auto objective = [&]() {
        InstanceRoller roller(inst, params, cfg, &offset);
        double s = 0.0;
        for (int k = 0; k < 2; ++k) {
            double lp = 0.0;
            State st = reset(inst, trajs[k].start_point);
            for (int a : trajs[k].actions) {
                const std::vector<double> logits =
                    policy_logits(st, roller.embeddings(), params, cfg);
                lp += logits[a] - log_sum_exp(logits.data(), static_cast<int>(logits.size()));
                step_inplace(st, a);
            }
            s += weights[k] * lp;
        }
        return s;
    };

    InstanceGradienter g(inst, params, cfg, &offset);
    for (int k = 0; k < 2; ++k) g.add(trajs[k], weights[k]);
    Mat doffset(5, cfg.dim);
    g.finish_offsets(doffset);

    const double h = 1e-5;
    double worst = 0.0;
    for (size_t i = 0; i < offset.a.size(); ++i) {
        const double keep = offset.a[i];
        offset.a[i] = keep + h;
        const double up = objective();
        offset.a[i] = keep - h;
        const double dn = objective();
        offset.a[i] = keep;
        const double fd = (up - dn) / (2 * h);
        const double mag = std::max(std::fabs(fd), std::fabs(doffset.a[i]));
        if (mag < 1e-7) {
            CHECK(std::fabs(fd - doffset.a[i]) < 1e-9);
        } else {
            worst = std::max(worst, std::fabs(fd - doffset.a[i]) / mag);
        }
    }
    CHECK(worst < 1e-4);
}
