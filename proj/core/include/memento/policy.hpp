#pragma once

#include <utility>
#include <vector>

#include "memento/env.hpp"
#include "memento/linalg.hpp"
#include "memento/rng.hpp"

namespace memento {

// Logit value assigned to infeasible actions. Finite so arithmetic never
// produces NaN, yet large enough that exp underflows to exactly 0 after the
// max-subtraction in softmax.
constexpr double kMaskedLogit = -1e9;
constexpr double kMaskedThreshold = -5e8;

struct PolicyConfig {
    ProblemKind kind = ProblemKind::Tsp;
    int dim = 64;
    int blocks = 2;
    int heads = 4;
    int ff = 128;
    double clip = 10.0;

    int feature_dim() const { return kind == ProblemKind::Tsp ? 2 : 4; }
    int context_dim() const { return kind == ProblemKind::Tsp ? 3 * dim : 2 * dim + 1; }
    int head_dim() const { return dim / heads; }
    void validate() const;
    bool operator==(const PolicyConfig&) const = default;
};

// Fresh parameters: linear layers uniform in +-1/sqrt(fan_in), normalization
// gains 1 / biases 0. Each tensor draws from its own name-keyed stream, so
// the result is independent of initialization order.
TensorMap init_policy_params(const PolicyConfig& cfg, uint64_t seed);

// Per-node input features: TSP (x, y); CVRP (x, y, demand/capacity, is_depot).
Mat node_features(const Instance& instance, const PolicyConfig& cfg);

struct EncBlockCache {
    Mat h_in, q, k, v;
    std::vector<Mat> att;  // per-head attention weights, each n x n
    Mat concat, s1;
    LnCache ln1;
    Mat h_mid, f1_pre, f1, s2;
    LnCache ln2;
    Mat h_out;
};

struct EncodeCache {
    Mat x;
    Mat h0;
    std::vector<EncBlockCache> blocks;
    Mat h;  // final embeddings, n x d, additive offset already applied
};

// h_offset, when given, is added to the encoder output (per-instance
// fine-tuning hook); it must be n x d.
EncodeCache encode_cached(const Instance& instance, const TensorMap& params,
                          const PolicyConfig& cfg, const Mat* h_offset = nullptr);
Mat encode(const Instance& instance, const TensorMap& params, const PolicyConfig& cfg);

// Single-layer pointer decoder: context = (graph mean, current node, start
// node) for TSP or (graph mean, current node, load fraction) for CVRP;
// logits are clip * tanh(q . key / sqrt(d)) with masked entries at
// kMaskedLogit.
std::vector<double> policy_logits(const State& state, const Mat& embeddings,
                                  const TensorMap& params, const PolicyConfig& cfg);

// Samples from softmax(logits / temperature) and returns the log-probability
// under that tempered distribution. temperature == 0 selects greedily
// (lowest-index tie-break) and reports the temperature-1 log-probability.
std::pair<int, double> sample_action(const std::vector<double>& logits, double temperature,
                                     RngStream& rng);

// Supplies memory corrections during a live rollout and observes what was
// taken, for writing back later.
struct MemoryHook {
    // Add the correction logits for this state into lm (length n, zeroed by
    // the caller).
    virtual void corrections(const State& state, std::vector<double>& lm) = 0;
    virtual void observe(const State& state, int action, double logp, double mem_logit) {
        (void)state, (void)action, (void)logp, (void)mem_logit;
    }
    virtual ~MemoryHook() = default;
};

// Per-instance decoder constants: pointer keys, the embedding mean, and the
// mean's query contribution.
struct DecoderPre {
    Mat keys;
    std::vector<double> mean;
    std::vector<double> q_mean;
};

// Precomputes the encoder pass and decoder keys for one instance, then rolls
// trajectories cheaply. Parameters must stay unchanged while the roller is
// alive.
class InstanceRoller {
  public:
    InstanceRoller(const Instance& instance, const TensorMap& params, const PolicyConfig& cfg,
                   const Mat* h_offset = nullptr);

    Trajectory roll(int start_point, double temperature, RngStream& rng,
                    MemoryHook* hook = nullptr) const;

    const Mat& embeddings() const { return enc_.h; }
    const EncodeCache& cache() const { return enc_; }

  private:
    const Instance* inst_;
    const TensorMap* params_;
    PolicyConfig cfg_;
    EncodeCache enc_;
    DecoderPre pre_;
};

Trajectory rollout(const Instance& instance, int start_point, const TensorMap& params,
                   const PolicyConfig& cfg, double temperature, RngStream& rng,
                   MemoryHook* hook = nullptr);

// Replay-time memory corrections: the gradient engine asks for the exact
// correction logits a trajectory saw at each step and hands back the logit
// gradient so the supplier can push it into its own parameters.
struct ReplayCorrections {
    // Fill lm (length n, pre-zeroed) for step t; return false when the step
    // had no correction.
    virtual bool corrections(int t, std::vector<double>& lm) = 0;
    virtual void backprop(int t, const std::vector<double>& dlm) = 0;
    virtual ~ReplayCorrections() = default;
};

// Accumulates d/d_theta of sum_k w_k * sum_t log pi(a_t | s_t) over added
// trajectories by replaying them against the current parameters. One encoder
// backward pass serves all added trajectories, so add as many as share the
// instance before calling finish.
class InstanceGradienter {
  public:
    InstanceGradienter(const Instance& instance, const TensorMap& params, const PolicyConfig& cfg,
                       const Mat* h_offset = nullptr);

    void add(const Trajectory& traj, double weight, ReplayCorrections* corr = nullptr);
    // Back-propagates through the encoder and adds parameter gradients into
    // grads (must be congruent with the params).
    void finish(TensorMap& grads);
    // Offset-only mode: gradient with respect to the additive embedding
    // offsets; parameters are left untouched.
    void finish_offsets(Mat& doffset);

    const EncodeCache& cache() const { return enc_; }

  private:
    void fold_embedding_grad();

    const Instance* inst_;
    const TensorMap* params_;
    PolicyConfig cfg_;
    EncodeCache enc_;
    DecoderPre pre_;
    Mat dh_;
    Mat dkeys_;
    std::vector<double> dmean_;
    Mat dw_ctx_;
    Mat dw_key_;
    bool finished_ = false;
};

// Convenience wrapper: gradient of sum_k w_k * sum_t log pi for trajectories
// of a single instance.
TensorMap weighted_logp_grad(const Instance& instance, const std::vector<Trajectory>& trajs,
                             const std::vector<double>& weights, const TensorMap& params,
                             const PolicyConfig& cfg);

}  // namespace memento
