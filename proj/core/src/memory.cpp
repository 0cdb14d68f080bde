#include "memento/memory.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "memento/errors.hpp"

namespace memento {

namespace {

const std::vector<int> kColsA = {0, 1};
const std::vector<int> kColsB = {0, 1, 6};
const std::vector<int> kColsC = {0, 1, 2, 6};
const std::vector<int> kColsD = {0, 1, 2, 3, 4, 5, 6};

uint64_t fnv1a64(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

int subset_dim(FeatureSubset s) { return static_cast<int>(subset_columns(s).size()); }

const std::vector<int>& subset_columns(FeatureSubset s) {
    switch (s) {
        case FeatureSubset::ReturnLogp: return kColsA;
        case FeatureSubset::PlusRemainingBudget: return kColsB;
        case FeatureSubset::PlusWriteBudget: return kColsC;
        case FeatureSubset::Full: return kColsD;
    }
    throw ContractError("subset_columns: bad subset");
}

std::string subset_name(FeatureSubset s) {
    switch (s) {
        case FeatureSubset::ReturnLogp: return "A";
        case FeatureSubset::PlusRemainingBudget: return "B";
        case FeatureSubset::PlusWriteBudget: return "C";
        case FeatureSubset::Full: return "D";
    }
    throw ContractError("subset_name: bad subset");
}

FeatureSubset subset_from_name(const std::string& name) {
    if (name == "A") return FeatureSubset::ReturnLogp;
    if (name == "B") return FeatureSubset::PlusRemainingBudget;
    if (name == "C") return FeatureSubset::PlusWriteBudget;
    if (name == "D") return FeatureSubset::Full;
    throw ValidationError("unknown feature subset: " + name + " (expected A, B, C, or D)");
}

Memory::Memory(ProblemKind kind, int num_nodes, int capacity, bool shared_starts)
    : kind_(kind), nodes_(num_nodes), cap_(capacity), shared_(shared_starts) {
    if (num_nodes < 2 || capacity < 1) throw ValidationError("memory: bad dimensions");
    starts_ = shared_ ? 1 : (kind == ProblemKind::Tsp ? num_nodes : num_nodes - 1);
    slots_.resize(static_cast<size_t>(starts_) * nodes_);
}

int Memory::start_row(int start_point) const {
    if (shared_) return 0;
    int row = kind_ == ProblemKind::Tsp ? start_point : start_point - 1;
    if (row < 0 || row >= starts_) throw ContractError("memory: start point out of range");
    return row;
}

void Memory::retrieve(int start_point, int node, std::vector<MemoryEntry>& out) const {
    if (node < 0 || node >= nodes_) throw ContractError("memory: node out of range");
    const Slot& s = slot(start_row(start_point), node);
    const int k = static_cast<int>(s.buf.size());
    if (k < cap_) {
        out.insert(out.end(), s.buf.begin(), s.buf.end());
        return;
    }
    for (int i = 0; i < k; ++i) out.push_back(s.buf[(s.head + i) % k]);
}

void Memory::write_trajectory(const Trajectory& traj, int attempt_index, int total_budget) {
    const size_t steps = traj.actions.size();
    if (steps == 0 || traj.action_logps.size() != steps || traj.memory_logits_taken.size() != steps)
        throw ContractError("memory: incomplete trajectory");
    if (attempt_index < 0 || attempt_index >= total_budget)
        throw ContractError("memory: attempt index outside the budget");

    std::vector<double> tail(steps + 1, 0.0);
    for (size_t t = steps; t-- > 0;) tail[t] = tail[t + 1] + traj.action_logps[t];
    const double budget_frac = static_cast<double>(attempt_index) / total_budget;
    const int row = start_row(traj.start_point);

    for (size_t t = 0; t < steps; ++t) {
        int node = node_at_step(traj, kind_, static_cast<int>(t));
        MemoryEntry e;
        e.action = traj.actions[t];
        e.action_logp = traj.action_logps[t];
        e.ret = traj.ret;
        e.budget_at_write = budget_frac;
        e.memory_logit_at_write = traj.memory_logits_taken[t];
        e.traj_logp = tail[0];
        e.tail_logp = tail[t];
        Slot& s = slot(row, node);
        if (static_cast<int>(s.buf.size()) < cap_) {
            s.buf.push_back(e);
        } else {
            s.buf[s.head] = e;
            s.head = (s.head + 1) % cap_;
        }
    }
}

size_t Memory::total_entries() const {
    size_t n = 0;
    for (const Slot& s : slots_) n += s.buf.size();
    return n;
}

void Memory::dump(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("memory dump: cannot open " + path + " for writing");
    const char magic[4] = {'M', 'M', 'E', 'M'};
    uint32_t version = 1;
    uint8_t kind = static_cast<uint8_t>(kind_);
    uint8_t shared = shared_ ? 1 : 0;
    int32_t nodes = nodes_, cap = cap_;
    out.write(magic, 4);
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&kind), 1);
    out.write(reinterpret_cast<const char*>(&shared), 1);
    out.write(reinterpret_cast<const char*>(&nodes), 4);
    out.write(reinterpret_cast<const char*>(&cap), 4);
    for (const Slot& s : slots_) {
        int32_t count = static_cast<int32_t>(s.buf.size()), head = s.head;
        out.write(reinterpret_cast<const char*>(&count), 4);
        out.write(reinterpret_cast<const char*>(&head), 4);
        for (const MemoryEntry& e : s.buf) {
            int32_t action = e.action;
            double d[6] = {e.action_logp,          e.ret,       e.budget_at_write,
                           e.memory_logit_at_write, e.traj_logp, e.tail_logp};
            out.write(reinterpret_cast<const char*>(&action), 4);
            out.write(reinterpret_cast<const char*>(d), sizeof(d));
        }
    }
    if (!out) throw IoError("memory dump: write failed for " + path);
}

Memory Memory::restore(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("memory restore: cannot open " + path);
    char magic[4];
    uint32_t version = 0;
    uint8_t kind = 0, shared = 0;
    int32_t nodes = 0, cap = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&version), 4);
    if (!in || std::memcmp(magic, "MMEM", 4) != 0)
        throw IoError("memory restore: not a memory dump: " + path);
    if (version != 1) throw IoError("memory restore: unsupported version");
    in.read(reinterpret_cast<char*>(&kind), 1);
    in.read(reinterpret_cast<char*>(&shared), 1);
    in.read(reinterpret_cast<char*>(&nodes), 4);
    in.read(reinterpret_cast<char*>(&cap), 4);
    if (!in) throw IoError("memory restore: truncated header");
    Memory m(static_cast<ProblemKind>(kind), nodes, cap, shared != 0);
    for (Slot& s : m.slots_) {
        int32_t count = 0, head = 0;
        in.read(reinterpret_cast<char*>(&count), 4);
        in.read(reinterpret_cast<char*>(&head), 4);
        if (!in || count < 0 || count > cap) throw IoError("memory restore: corrupt slot");
        s.head = head;
        s.buf.resize(count);
        for (MemoryEntry& e : s.buf) {
            int32_t action = 0;
            double d[6];
            in.read(reinterpret_cast<char*>(&action), 4);
            in.read(reinterpret_cast<char*>(d), sizeof(d));
            e.action = action;
            e.action_logp = d[0];
            e.ret = d[1];
            e.budget_at_write = d[2];
            e.memory_logit_at_write = d[3];
            e.traj_logp = d[4];
            e.tail_logp = d[5];
        }
        if (!in) throw IoError("memory restore: truncated entries");
    }
    return m;
}

FeatureBatch build_features(const std::vector<MemoryEntry>& entries, double remaining_budget) {
    const int k = static_cast<int>(entries.size());
    if (k == 0) throw ContractError("build_features: empty retrieval");
    if (!(remaining_budget >= 0.0 && remaining_budget <= 1.0))
        throw ContractError("build_features: remaining budget outside [0,1]");
    FeatureBatch fb;
    fb.actions.resize(k);
    fb.feats = Mat(k, kMemoryFeatures);

    double mean = 0.0;
    for (const MemoryEntry& e : entries) mean += e.ret;
    mean /= k;
    double var = 0.0;
    for (const MemoryEntry& e : entries) {
        double c = e.ret - mean;
        var += c * c;
    }
    var /= k;
    double inv_std = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;

    for (int i = 0; i < k; ++i) {
        const MemoryEntry& e = entries[i];
        fb.actions[i] = e.action;
        double* r = fb.feats.row(i);
        r[0] = e.action_logp;
        r[1] = (e.ret - mean) * inv_std;
        r[2] = e.budget_at_write;
        r[3] = e.memory_logit_at_write;
        r[4] = e.traj_logp;
        r[5] = e.tail_logp;
        r[6] = remaining_budget;
    }
    return fb;
}

MemoryNet::MemoryNet(const MemoryNetConfig& cfg, uint64_t seed) : cfg_(cfg) {
    if (cfg.hidden < 1 || cfg.hidden > 64)
        throw ValidationError("memory net: hidden width must be in [1, 64]");
    const int f = cfg.input_dim(), h = cfg.hidden;
    params_.emplace("mem.w1", f, h);
    params_.emplace("mem.b1", 1, h);
    params_.emplace("mem.w2", h, h);
    params_.emplace("mem.b2", 1, h);
    params_.emplace("mem.w3", h, 1);
    params_.emplace("mem.b3", 1, 1);
    for (auto& [name, mat] : params_.items()) {
        RngStream rng = RngStream::derive(seed, RngDomain::ParamInit, fnv1a64(name));
        double bound;
        if (name == "mem.w3" || name == "mem.b3") {
            // Near-zero head keeps a fresh net's corrections tiny even when
            // many same-action entries pile onto one logit.
            bound = 1e-4;
        } else {
            int fan_in = name == "mem.w1" || name == "mem.b1" ? f : h;
            bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        }
        for (double& x : mat.a) x = rng.uniform(-bound, bound);
    }
}

double MemoryNet::forward_one(const double* feat) const {
    const auto& cols = subset_columns(cfg_.subset);
    const int f = cfg_.input_dim(), h = cfg_.hidden;
    const Mat& w1 = params_.at("mem.w1");
    const Mat& w2 = params_.at("mem.w2");
    const Mat& w3 = params_.at("mem.w3");
    const double* b1 = params_.at("mem.b1").row(0);
    const double* b2 = params_.at("mem.b2").row(0);
    double h1[64], h2[64];
    for (int j = 0; j < h; ++j) {
        double z = b1[j];
        for (int i = 0; i < f; ++i) z += feat[cols[i]] * w1(i, j);
        h1[j] = gelu(z);
    }
    for (int j = 0; j < h; ++j) {
        double z = b2[j];
        for (int i = 0; i < h; ++i) z += h1[i] * w2(i, j);
        h2[j] = gelu(z);
    }
    double y = params_.at("mem.b3")(0, 0);
    for (int i = 0; i < h; ++i) y += h2[i] * w3(i, 0);
    return y;
}

void MemoryNet::forward(const Mat& feats, std::vector<double>& out) const {
    out.resize(feats.rows);
    for (int r = 0; r < feats.rows; ++r) out[r] = forward_one(feats.row(r));
}

std::vector<double> correction_logits_with(const std::vector<int>& actions, const Mat& feats,
                                           const std::function<double(const double*)>& weight_fn,
                                           int n_actions) {
    if (static_cast<int>(actions.size()) != feats.rows)
        throw ContractError("correction_logits: actions misaligned with features");
    std::vector<double> lm(n_actions, 0.0);
    for (size_t i = 0; i < actions.size(); ++i) {
        int a = actions[i];
        if (a < 0 || a >= n_actions) throw ContractError("correction_logits: action out of range");
        lm[a] += weight_fn(feats.row(static_cast<int>(i)));
    }
    return lm;
}

std::vector<double> correction_logits(const std::vector<int>& actions, const Mat& feats,
                                      const MemoryNet& net, int n_actions) {
    if (static_cast<int>(actions.size()) != feats.rows)
        throw ContractError("correction_logits: actions misaligned with features");
    std::vector<double> lm(n_actions, 0.0);
    std::vector<double> w;
    net.forward(feats, w);
    for (size_t i = 0; i < actions.size(); ++i) {
        int a = actions[i];
        if (a < 0 || a >= n_actions) throw ContractError("correction_logits: action out of range");
        lm[a] += w[i];
    }
    return lm;
}

void memory_net_grad_acc(const RetrievalRecord& record, const MemoryNet& net, TensorMap& grads) {
    if (record.params_version != net.params().version)
        throw ContractError("memory_net_grad: stale record (parameters changed since capture)");
    const auto& cols = subset_columns(net.config().subset);
    const int f = net.config().input_dim(), h = net.config().hidden;
    const TensorMap& p = net.params();
    const Mat& w1 = p.at("mem.w1");
    const Mat& w2 = p.at("mem.w2");
    const Mat& w3 = p.at("mem.w3");
    const double* b1 = p.at("mem.b1").row(0);
    const double* b2 = p.at("mem.b2").row(0);
    Mat& gw1 = grads.at("mem.w1");
    Mat& gw2 = grads.at("mem.w2");
    Mat& gw3 = grads.at("mem.w3");
    double* gb1 = grads.at("mem.b1").row(0);
    double* gb2 = grads.at("mem.b2").row(0);
    double* gb3 = grads.at("mem.b3").row(0);

    std::vector<double> z1(h), h1(h), z2(h), h2(h), dh2(h), dh1(h);
    for (int r = 0; r < record.feats.rows; ++r) {
        int a = record.actions[r];
        if (a < 0 || a >= static_cast<int>(record.dlm.size()))
            throw ContractError("memory_net_grad: action outside gradient vector");
        double dy = record.dlm[a];
        if (dy == 0.0) continue;
        const double* x = record.feats.row(r);
        for (int j = 0; j < h; ++j) {
            double z = b1[j];
            for (int i = 0; i < f; ++i) z += x[cols[i]] * w1(i, j);
            z1[j] = z;
            h1[j] = gelu(z);
        }
        for (int j = 0; j < h; ++j) {
            double z = b2[j];
            for (int i = 0; i < h; ++i) z += h1[i] * w2(i, j);
            z2[j] = z;
            h2[j] = gelu(z);
        }
        gb3[0] += dy;
        for (int i = 0; i < h; ++i) {
            gw3(i, 0) += dy * h2[i];
            dh2[i] = dy * w3(i, 0) * gelu_grad(z2[i]);
        }
        for (int j = 0; j < h; ++j) gb2[j] += dh2[j];
        for (int i = 0; i < h; ++i) {
            double s = 0.0;
            for (int j = 0; j < h; ++j) {
                gw2(i, j) += h1[i] * dh2[j];
                s += w2(i, j) * dh2[j];
            }
            dh1[i] = s * gelu_grad(z1[i]);
        }
        for (int j = 0; j < h; ++j) gb1[j] += dh1[j];
        for (int i = 0; i < f; ++i)
            for (int j = 0; j < h; ++j) gw1(i, j) += x[cols[i]] * dh1[j];
    }
}

TensorMap memory_net_grad(const std::vector<RetrievalRecord>& records, const MemoryNet& net) {
    TensorMap grads = net.params().zeros_like();
    for (const RetrievalRecord& r : records) memory_net_grad_acc(r, net, grads);
    grads.version = net.params().version;
    return grads;
}

MementoHook::MementoHook(const Memory& memory, const MemoryNet& net, double remaining_budget,
                         bool capture)
    : memory_(&memory), net_(&net), remaining_budget_(remaining_budget), capture_(capture) {}

void MementoHook::corrections(const State& state, std::vector<double>& lm) {
    const int t = step_++;
    scratch_.clear();
    memory_->retrieve(state.start_point, state.position, scratch_);
    if (scratch_.empty()) return;
    FeatureBatch fb = build_features(scratch_, remaining_budget_);
    net_->forward(fb.feats, weights_);
    for (size_t i = 0; i < fb.actions.size(); ++i) lm[fb.actions[i]] += weights_[i];
    if (capture_) {
        StepRetrieval sr;
        sr.step = t;
        sr.actions = std::move(fb.actions);
        sr.feats = std::move(fb.feats);
        captures_.push_back(std::move(sr));
    }
}

std::vector<StepRetrieval> MementoHook::take_captures() {
    step_ = 0;
    return std::move(captures_);
}

CaptureReplay::CaptureReplay(std::vector<StepRetrieval> captures, const MemoryNet& net,
                             TensorMap& grads_out)
    : captures_(std::move(captures)),
      net_(&net),
      grads_(&grads_out),
      version_(net.params().version) {}

bool CaptureReplay::corrections(int t, std::vector<double>& lm) {
    while (cursor_ < captures_.size() && captures_[cursor_].step < t) ++cursor_;
    if (cursor_ >= captures_.size() || captures_[cursor_].step != t) return false;
    const StepRetrieval& sr = captures_[cursor_];
    std::vector<double> w;
    net_->forward(sr.feats, w);
    for (size_t i = 0; i < sr.actions.size(); ++i) lm[sr.actions[i]] += w[i];
    return true;
}

void CaptureReplay::backprop(int t, const std::vector<double>& dlm) {
    if (cursor_ >= captures_.size() || captures_[cursor_].step != t) return;
    RetrievalRecord rec;
    rec.actions = captures_[cursor_].actions;
    rec.feats = captures_[cursor_].feats;
    rec.dlm = dlm;
    rec.params_version = version_;
    memory_net_grad_acc(rec, *net_, *grads_);
}

}  // namespace memento
