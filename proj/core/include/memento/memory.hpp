#pragma once

#include <functional>
#include <string>
#include <vector>

#include "memento/policy.hpp"

namespace memento {

// One stored transition. ret is the whole trajectory's return (negative
// cost); tail_logp sums the action log-probabilities from this step to the
// trajectory's end.
struct MemoryEntry {
    int action = 0;
    double action_logp = 0.0;
    double ret = 0.0;
    double budget_at_write = 0.0;
    double memory_logit_at_write = 0.0;
    double traj_logp = 0.0;
    double tail_logp = 0.0;
};

// Fixed feature column order: action_logp, ret, budget_at_write,
// memory_logit_at_write, traj_logp, tail_logp, remaining_budget.
constexpr int kMemoryFeatures = 7;

// Nested feature subsets for the ablation study; each selects columns of the
// full matrix while keeping their relative order.
enum class FeatureSubset : uint8_t {
    ReturnLogp = 0,          // action_logp, ret
    PlusRemainingBudget = 1,
    PlusWriteBudget = 2,
    Full = 3,
};
int subset_dim(FeatureSubset s);
const std::vector<int>& subset_columns(FeatureSubset s);
// Subsets are named A..D on the command line and in result files.
std::string subset_name(FeatureSubset s);
FeatureSubset subset_from_name(const std::string& name);

// Per-(starting point, node) ring buffers of entries, FIFO-evicted at
// capacity. The shared mode collapses all starting points into one row.
class Memory {
  public:
    Memory(ProblemKind kind, int num_nodes, int capacity, bool shared_starts = false);

    int capacity() const { return cap_; }
    int num_nodes() const { return nodes_; }
    int num_start_rows() const { return starts_; }
    bool shared_starts() const { return shared_; }
    ProblemKind kind() const { return kind_; }

    // Appends the slot's contents in write order (oldest first). start_point
    // uses the environment convention: a node for TSP, a customer for CVRP.
    void retrieve(int start_point, int node, std::vector<MemoryEntry>& out) const;

    // One entry per construction step, written to the slot of the node the
    // agent acted from. budget_at_write = attempt_index / total_budget.
    void write_trajectory(const Trajectory& traj, int attempt_index, int total_budget);

    size_t total_entries() const;

    // Debugging dump; restore round-trips exactly.
    void dump(const std::string& path) const;
    static Memory restore(const std::string& path);

  private:
    struct Slot {
        std::vector<MemoryEntry> buf;
        int head = 0;
    };
    int start_row(int start_point) const;
    Slot& slot(int row, int node) { return slots_[static_cast<size_t>(row) * nodes_ + node]; }
    const Slot& slot(int row, int node) const {
        return slots_[static_cast<size_t>(row) * nodes_ + node];
    }

    ProblemKind kind_;
    int nodes_;
    int starts_;
    int cap_;
    bool shared_;
    std::vector<Slot> slots_;
};

struct FeatureBatch {
    std::vector<int> actions;
    Mat feats;  // k x kMemoryFeatures
};

// Feature matrix for a retrieved set. The ret column is z-scored across the
// set (population std; zero variance maps to 0), the rest pass through raw,
// and remaining_budget is broadcast to every row.
FeatureBatch build_features(const std::vector<MemoryEntry>& entries, double remaining_budget);

struct MemoryNetConfig {
    FeatureSubset subset = FeatureSubset::Full;
    int hidden = 8;

    int input_dim() const { return subset_dim(subset); }
    bool operator==(const MemoryNetConfig&) const = default;
};

// Scalar-output MLP weighting one retrieved entry: input_dim -> hidden ->
// hidden -> 1 with GELU activations. The final layer initializes near zero
// so a fresh net leaves the policy essentially unchanged.
class MemoryNet {
  public:
    MemoryNet() = default;
    MemoryNet(const MemoryNetConfig& cfg, uint64_t seed);

    const MemoryNetConfig& config() const { return cfg_; }
    TensorMap& params() { return params_; }
    const TensorMap& params() const { return params_; }

    // Both take full 7-column features and select the configured columns.
    double forward_one(const double* feat) const;
    void forward(const Mat& feats, std::vector<double>& out) const;

  private:
    MemoryNetConfig cfg_;
    TensorMap params_;
};

// l_m[j] = sum of weights of retrieved entries whose action is j; actions
// never retrieved get exactly 0.
std::vector<double> correction_logits(const std::vector<int>& actions, const Mat& feats,
                                      const MemoryNet& net, int n_actions);
// Generic-weight variant used by analytic surrogates and test oracles.
std::vector<double> correction_logits_with(const std::vector<int>& actions, const Mat& feats,
                                           const std::function<double(const double*)>& weight_fn,
                                           int n_actions);

// A retrieval with the loss gradient of its correction logits, captured at
// params_version; gradients of stale captures are refused.
struct RetrievalRecord {
    std::vector<int> actions;
    Mat feats;
    std::vector<double> dlm;
    uint64_t params_version = 0;
};

void memory_net_grad_acc(const RetrievalRecord& record, const MemoryNet& net, TensorMap& grads);
TensorMap memory_net_grad(const std::vector<RetrievalRecord>& records, const MemoryNet& net);

// What one rollout retrieved at one step; enough to replay the correction
// and its gradient exactly.
struct StepRetrieval {
    int step = 0;
    std::vector<int> actions;
    Mat feats;
};

// Live rollout hook: retrieve, weight, aggregate. With capture enabled it
// keeps per-step retrievals for gradient replay; take_captures() hands them
// over and resets for the next trajectory.
class MementoHook : public MemoryHook {
  public:
    MementoHook(const Memory& memory, const MemoryNet& net, double remaining_budget,
                bool capture = false);

    void corrections(const State& state, std::vector<double>& lm) override;
    std::vector<StepRetrieval> take_captures();

  private:
    const Memory* memory_;
    const MemoryNet* net_;
    double remaining_budget_;
    bool capture_;
    int step_ = 0;
    std::vector<MemoryEntry> scratch_;
    std::vector<double> weights_;
    std::vector<StepRetrieval> captures_;
};

// Replays captured retrievals for the gradient engine: recomputes each
// step's corrections against the current net and routes the returned logit
// gradients into the net's parameter gradients.
class CaptureReplay : public ReplayCorrections {
  public:
    CaptureReplay(std::vector<StepRetrieval> captures, const MemoryNet& net, TensorMap& grads_out);

    bool corrections(int t, std::vector<double>& lm) override;
    void backprop(int t, const std::vector<double>& dlm) override;

  private:
    std::vector<StepRetrieval> captures_;
    const MemoryNet* net_;
    TensorMap* grads_;
    // Net version at construction; a net updated mid-replay trips the stale
    // guard instead of producing silently wrong gradients.
    uint64_t version_ = 0;
    size_t cursor_ = 0;
};

}  // namespace memento
