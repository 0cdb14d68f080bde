#include "memento/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "memento/errors.hpp"

namespace memento {

namespace {

uint64_t fnv1a64(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

void fill_uniform(Mat& m, double bound, RngStream& rng) {
    for (double& x : m.a) x = rng.uniform(-bound, bound);
}

void add_colsum(Mat& bias_grad, const Mat& m) {
    double* b = bias_grad.row(0);
    for (int i = 0; i < m.rows; ++i) {
        const double* r = m.row(i);
        for (int j = 0; j < m.cols; ++j) b[j] += r[j];
    }
}

// Decoder precomputation shared by the sampling and replay paths. The graph
// mean's contribution to the query is constant per instance, the start
// node's per trajectory; only the current-node part changes per step. All
// call sites use exactly this split so logits agree bitwise everywhere.
DecoderPre make_decoder_pre(const Mat& h, const TensorMap& params, const PolicyConfig& cfg) {
    const int n = h.rows, d = cfg.dim;
    DecoderPre pre;
    pre.keys = matmul(h, params.at("dec.w_key"));
    pre.mean.assign(d, 0.0);
    for (int i = 0; i < n; ++i) {
        const double* r = h.row(i);
        for (int c = 0; c < d; ++c) pre.mean[c] += r[c];
    }
    for (int c = 0; c < d; ++c) pre.mean[c] /= n;
    const Mat& wctx = params.at("dec.w_ctx");
    pre.q_mean.assign(d, 0.0);
    for (int e = 0; e < d; ++e) {
        double v = pre.mean[e];
        const double* w = wctx.row(e);
        for (int c = 0; c < d; ++c) pre.q_mean[c] += v * w[c];
    }
    return pre;
}

// TSP only: the start node's query contribution.
void start_query(const Mat& h, int start, const TensorMap& params, const PolicyConfig& cfg,
                 std::vector<double>& q_start) {
    const int d = cfg.dim;
    const Mat& wctx = params.at("dec.w_ctx");
    q_start.assign(d, 0.0);
    const double* hs = h.row(start);
    for (int e = 0; e < d; ++e) {
        double v = hs[e];
        const double* w = wctx.row(2 * d + e);
        for (int c = 0; c < d; ++c) q_start[c] += v * w[c];
    }
}

void decoder_step(const State& s, const Mat& h, const DecoderPre& pre, const double* q_start,
                  const TensorMap& params, const PolicyConfig& cfg,
                  const std::vector<char>& mask, std::vector<double>& logits,
                  std::vector<double>* u_out, std::vector<double>* q_out) {
    const int n = h.rows, d = cfg.dim;
    const Mat& wctx = params.at("dec.w_ctx");
    std::vector<double> q(pre.q_mean);
    const double* hp = h.row(s.position);
    for (int e = 0; e < d; ++e) {
        double v = hp[e];
        const double* w = wctx.row(d + e);
        for (int c = 0; c < d; ++c) q[c] += v * w[c];
    }
    if (cfg.kind == ProblemKind::Tsp) {
        for (int c = 0; c < d; ++c) q[c] += q_start[c];
    } else {
        double frac = static_cast<double>(s.remaining_capacity) / s.instance->capacity;
        const double* w = wctx.row(2 * d);
        for (int c = 0; c < d; ++c) q[c] += frac * w[c];
    }
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    logits.resize(n);
    if (u_out) u_out->resize(n);
    for (int j = 0; j < n; ++j) {
        const double* kj = pre.keys.row(j);
        double u = 0.0;
        for (int c = 0; c < d; ++c) u += q[c] * kj[c];
        u *= inv_sqrt_d;
        if (u_out) (*u_out)[j] = u;
        logits[j] = mask[j] ? cfg.clip * std::tanh(u) : kMaskedLogit;
    }
    if (q_out) *q_out = std::move(q);
}

void encoder_backward(const EncodeCache& ec, const TensorMap& params, const PolicyConfig& cfg,
                      Mat dh, TensorMap& grads) {
    const int n = ec.h.rows, d = cfg.dim, hd = cfg.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    for (int b = cfg.blocks - 1; b >= 0; --b) {
        const EncBlockCache& bc = ec.blocks[b];
        const std::string p = "enc" + std::to_string(b) + ".";

        Mat ds2;
        layernorm_bwd(dh, bc.ln2, params.at(p + "ln2.g").row(0), ds2,
                      grads.at(p + "ln2.g").row(0), grads.at(p + "ln2.b").row(0));
        Mat dh_mid = ds2;
        add_colsum(grads.at(p + "ff.b2"), ds2);
        matmul_tn_acc(grads.at(p + "ff.w2"), bc.f1, ds2);
        Mat df1(n, cfg.ff);
        matmul_nt_acc(df1, ds2, params.at(p + "ff.w2"));
        for (size_t i = 0; i < df1.a.size(); ++i)
            if (bc.f1_pre.a[i] <= 0.0) df1.a[i] = 0.0;
        add_colsum(grads.at(p + "ff.b1"), df1);
        matmul_tn_acc(grads.at(p + "ff.w1"), bc.h_mid, df1);
        matmul_nt_acc(dh_mid, df1, params.at(p + "ff.w1"));

        Mat ds1;
        layernorm_bwd(dh_mid, bc.ln1, params.at(p + "ln1.g").row(0), ds1,
                      grads.at(p + "ln1.g").row(0), grads.at(p + "ln1.b").row(0));
        Mat dh_in = ds1;
        matmul_tn_acc(grads.at(p + "wo"), bc.concat, ds1);
        Mat dconcat(n, d);
        matmul_nt_acc(dconcat, ds1, params.at(p + "wo"));

        Mat dq(n, d), dk(n, d), dv(n, d);
        Mat da(n, n), ds(n, n);
        for (int head = 0; head < cfg.heads; ++head) {
            const int off = head * hd;
            const Mat& att = bc.att[head];
            da.zero();
            for (int i = 0; i < n; ++i) {
                const double* dci = dconcat.row(i) + off;
                double* dai = da.row(i);
                const double* ai = att.row(i);
                for (int j = 0; j < n; ++j) {
                    const double* vj = bc.v.row(j) + off;
                    double s = 0.0;
                    for (int c = 0; c < hd; ++c) s += dci[c] * vj[c];
                    dai[j] = s;
                    double aij = ai[j];
                    if (aij != 0.0) {
                        double* dvj = dv.row(j) + off;
                        for (int c = 0; c < hd; ++c) dvj[c] += aij * dci[c];
                    }
                }
            }
            for (int i = 0; i < n; ++i) {
                const double* ai = att.row(i);
                const double* dai = da.row(i);
                double dot = 0.0;
                for (int j = 0; j < n; ++j) dot += ai[j] * dai[j];
                double* dsi = ds.row(i);
                for (int j = 0; j < n; ++j) dsi[j] = ai[j] * (dai[j] - dot);
            }
            for (int i = 0; i < n; ++i) {
                const double* dsi = ds.row(i);
                double* dqi = dq.row(i) + off;
                const double* qi = bc.q.row(i) + off;
                for (int j = 0; j < n; ++j) {
                    double v = dsi[j] * scale;
                    if (v == 0.0) continue;
                    const double* kj = bc.k.row(j) + off;
                    double* dkj = dk.row(j) + off;
                    for (int c = 0; c < hd; ++c) {
                        dqi[c] += v * kj[c];
                        dkj[c] += v * qi[c];
                    }
                }
            }
        }
        matmul_tn_acc(grads.at(p + "wq"), bc.h_in, dq);
        matmul_tn_acc(grads.at(p + "wk"), bc.h_in, dk);
        matmul_tn_acc(grads.at(p + "wv"), bc.h_in, dv);
        matmul_nt_acc(dh_in, dq, params.at(p + "wq"));
        matmul_nt_acc(dh_in, dk, params.at(p + "wk"));
        matmul_nt_acc(dh_in, dv, params.at(p + "wv"));
        dh = std::move(dh_in);
    }
    add_colsum(grads.at("embed.b"), dh);
    matmul_tn_acc(grads.at("embed.w"), ec.x, dh);
}

}  // namespace

void PolicyConfig::validate() const {
    if (dim < 1 || blocks < 1 || heads < 1 || ff < 1)
        throw ValidationError("policy config: sizes must be positive");
    if (dim % heads != 0) throw ValidationError("policy config: dim must divide into heads");
    if (!(clip > 0.0)) throw ValidationError("policy config: clip must be positive");
}

TensorMap init_policy_params(const PolicyConfig& cfg, uint64_t seed) {
    cfg.validate();
    const int d = cfg.dim, f = cfg.feature_dim(), c = cfg.context_dim();
    TensorMap p;
    auto lin = [&](const std::string& name, int in, int out) { p.emplace(name, in, out); };
    lin("embed.w", f, d);
    lin("embed.b", 1, d);
    for (int b = 0; b < cfg.blocks; ++b) {
        const std::string pre = "enc" + std::to_string(b) + ".";
        lin(pre + "wq", d, d);
        lin(pre + "wk", d, d);
        lin(pre + "wv", d, d);
        lin(pre + "wo", d, d);
        lin(pre + "ln1.g", 1, d);
        lin(pre + "ln1.b", 1, d);
        lin(pre + "ff.w1", d, cfg.ff);
        lin(pre + "ff.b1", 1, cfg.ff);
        lin(pre + "ff.w2", cfg.ff, d);
        lin(pre + "ff.b2", 1, d);
        lin(pre + "ln2.g", 1, d);
        lin(pre + "ln2.b", 1, d);
    }
    lin("dec.w_ctx", c, d);
    lin("dec.w_key", d, d);

    // fan_in of the linear layer each tensor belongs to; normalization params
    // are constant-initialized instead.
    for (auto& [name, mat] : p.items()) {
        RngStream rng = RngStream::derive(seed, RngDomain::ParamInit, fnv1a64(name));
        if (name.find("ln") != std::string::npos) {
            double v = name.back() == 'g' ? 1.0 : 0.0;
            std::fill(mat.a.begin(), mat.a.end(), v);
            continue;
        }
        int fan_in = mat.rows;
        if (name == "embed.b") fan_in = f;
        if (name.find("ff.b1") != std::string::npos) fan_in = d;
        if (name.find("ff.b2") != std::string::npos) fan_in = cfg.ff;
        fill_uniform(mat, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
    }
    return p;
}

Mat node_features(const Instance& instance, const PolicyConfig& cfg) {
    if (instance.kind != cfg.kind)
        throw ContractError("node_features: instance kind does not match the policy");
    const int n = instance.size();
    Mat x(n, cfg.feature_dim());
    for (int i = 0; i < n; ++i) {
        double* r = x.row(i);
        r[0] = instance.coords[i].x;
        r[1] = instance.coords[i].y;
        if (cfg.kind == ProblemKind::Cvrp) {
            r[2] = static_cast<double>(instance.demands[i]) / instance.capacity;
            r[3] = i == 0 ? 1.0 : 0.0;
        }
    }
    return x;
}

EncodeCache encode_cached(const Instance& instance, const TensorMap& params,
                          const PolicyConfig& cfg, const Mat* h_offset) {
    cfg.validate();
    const int n = instance.size(), d = cfg.dim, hd = cfg.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    EncodeCache ec;
    ec.x = node_features(instance, cfg);
    ec.h0 = matmul(ec.x, params.at("embed.w"));
    add_row_inplace(ec.h0, params.at("embed.b").row(0));
    Mat h = ec.h0;
    ec.blocks.resize(cfg.blocks);
    for (int b = 0; b < cfg.blocks; ++b) {
        EncBlockCache& bc = ec.blocks[b];
        const std::string p = "enc" + std::to_string(b) + ".";
        bc.h_in = h;
        bc.q = matmul(h, params.at(p + "wq"));
        bc.k = matmul(h, params.at(p + "wk"));
        bc.v = matmul(h, params.at(p + "wv"));
        bc.att.assign(cfg.heads, Mat());
        bc.concat = Mat(n, d);
        for (int head = 0; head < cfg.heads; ++head) {
            const int off = head * hd;
            Mat& att = bc.att[head];
            att = Mat(n, n);
            for (int i = 0; i < n; ++i) {
                const double* qi = bc.q.row(i) + off;
                double* ri = att.row(i);
                for (int j = 0; j < n; ++j) {
                    const double* kj = bc.k.row(j) + off;
                    double s = 0.0;
                    for (int c = 0; c < hd; ++c) s += qi[c] * kj[c];
                    ri[j] = s * scale;
                }
                softmax_row(ri, n);
                double* ci = bc.concat.row(i) + off;
                for (int j = 0; j < n; ++j) {
                    double aij = ri[j];
                    if (aij == 0.0) continue;
                    const double* vj = bc.v.row(j) + off;
                    for (int c = 0; c < hd; ++c) ci[c] += aij * vj[c];
                }
            }
        }
        Mat o = matmul(bc.concat, params.at(p + "wo"));
        bc.s1 = Mat(n, d);
        for (size_t i = 0; i < bc.s1.a.size(); ++i) bc.s1.a[i] = bc.h_in.a[i] + o.a[i];
        layernorm_fwd(bc.s1, params.at(p + "ln1.g").row(0), params.at(p + "ln1.b").row(0),
                      bc.h_mid, bc.ln1);
        bc.f1_pre = matmul(bc.h_mid, params.at(p + "ff.w1"));
        add_row_inplace(bc.f1_pre, params.at(p + "ff.b1").row(0));
        bc.f1 = bc.f1_pre;
        for (double& v : bc.f1.a) v = std::max(v, 0.0);
        Mat f2 = matmul(bc.f1, params.at(p + "ff.w2"));
        add_row_inplace(f2, params.at(p + "ff.b2").row(0));
        bc.s2 = Mat(n, d);
        for (size_t i = 0; i < bc.s2.a.size(); ++i) bc.s2.a[i] = bc.h_mid.a[i] + f2.a[i];
        layernorm_fwd(bc.s2, params.at(p + "ln2.g").row(0), params.at(p + "ln2.b").row(0),
                      bc.h_out, bc.ln2);
        h = bc.h_out;
    }
    if (h_offset) {
        if (!h.same_shape(*h_offset)) throw ContractError("encode: offset shape mismatch");
        for (size_t i = 0; i < h.a.size(); ++i) h.a[i] += h_offset->a[i];
    }
    ec.h = std::move(h);
    return ec;
}

Mat encode(const Instance& instance, const TensorMap& params, const PolicyConfig& cfg) {
    return encode_cached(instance, params, cfg).h;
}

std::vector<double> policy_logits(const State& state, const Mat& embeddings,
                                  const TensorMap& params, const PolicyConfig& cfg) {
    DecoderPre pre = make_decoder_pre(embeddings, params, cfg);
    std::vector<double> q_start;
    if (cfg.kind == ProblemKind::Tsp)
        start_query(embeddings, state.start_point, params, cfg, q_start);
    std::vector<double> logits;
    auto mask = action_mask(state);
    decoder_step(state, embeddings, pre, q_start.data(), params, cfg, mask, logits, nullptr,
                 nullptr);
    return logits;
}

std::pair<int, double> sample_action(const std::vector<double>& logits, double temperature,
                                     RngStream& rng) {
    const int n = static_cast<int>(logits.size());
    double lmax = logits[0];
    int amax = 0;
    for (int j = 1; j < n; ++j) {
        if (logits[j] > lmax) {
            lmax = logits[j];
            amax = j;
        }
    }
    if (lmax <= kMaskedThreshold) throw ContractError("sample_action: all actions masked");
    if (temperature < 0.0) throw ContractError("sample_action: negative temperature");
    if (temperature == 0.0)
        return {amax, logits[amax] - log_sum_exp(logits.data(), n)};

    const double inv_t = 1.0 / temperature;
    std::vector<double> w(n);
    double total = 0.0;
    for (int j = 0; j < n; ++j) {
        w[j] = std::exp((logits[j] - lmax) * inv_t);
        total += w[j];
    }
    double thr = rng.uniform() * total;
    double cum = 0.0;
    int pick = -1;
    for (int j = 0; j < n; ++j) {
        cum += w[j];
        if (cum > thr) {
            pick = j;
            break;
        }
    }
    if (pick < 0) pick = amax;
    return {pick, (logits[pick] - lmax) * inv_t - std::log(total)};
}

InstanceRoller::InstanceRoller(const Instance& instance, const TensorMap& params,
                               const PolicyConfig& cfg, const Mat* h_offset)
    : inst_(&instance), params_(&params), cfg_(cfg) {
    enc_ = encode_cached(instance, params, cfg, h_offset);
    pre_ = make_decoder_pre(enc_.h, params, cfg);
}

Trajectory InstanceRoller::roll(int start_point, double temperature, RngStream& rng,
                                MemoryHook* hook) const {
    const int n = inst_->size();
    std::vector<double> q_start;
    State s = reset(*inst_, start_point);
    if (cfg_.kind == ProblemKind::Tsp) start_query(enc_.h, start_point, *params_, cfg_, q_start);

    Trajectory t;
    t.instance_id = inst_->id;
    t.start_point = start_point;
    std::vector<double> logits, lm;
    std::vector<char> mask;
    while (!is_terminal(s)) {
        action_mask_into(s, mask);
        decoder_step(s, enc_.h, pre_, q_start.data(), *params_, cfg_, mask, logits, nullptr,
                     nullptr);
        double mem_logit = 0.0;
        if (hook) {
            lm.assign(n, 0.0);
            hook->corrections(s, lm);
            for (int j = 0; j < n; ++j)
                if (mask[j]) logits[j] += lm[j];
        }
        auto [a, logp] = sample_action(logits, temperature, rng);
        if (hook) {
            mem_logit = lm[a];
            hook->observe(s, a, logp, mem_logit);
        }
        t.actions.push_back(a);
        t.action_logps.push_back(logp);
        t.memory_logits_taken.push_back(mem_logit);
        step_inplace(s, a);
    }
    t.ret = -terminal_cost(s);
    return t;
}

Trajectory rollout(const Instance& instance, int start_point, const TensorMap& params,
                   const PolicyConfig& cfg, double temperature, RngStream& rng,
                   MemoryHook* hook) {
    InstanceRoller roller(instance, params, cfg);
    return roller.roll(start_point, temperature, rng, hook);
}

InstanceGradienter::InstanceGradienter(const Instance& instance, const TensorMap& params,
                                       const PolicyConfig& cfg, const Mat* h_offset)
    : inst_(&instance), params_(&params), cfg_(cfg) {
    enc_ = encode_cached(instance, params, cfg, h_offset);
    pre_ = make_decoder_pre(enc_.h, params, cfg);
    const int n = instance.size(), d = cfg.dim;
    dh_ = Mat(n, d);
    dkeys_ = Mat(n, d);
    dmean_.assign(d, 0.0);
    dw_ctx_ = Mat(cfg.context_dim(), d);
    dw_key_ = Mat(d, d);
}

void InstanceGradienter::add(const Trajectory& traj, double weight, ReplayCorrections* corr) {
    if (finished_) throw ContractError("InstanceGradienter: add after finish");
    if (weight == 0.0) return;
    const int n = inst_->size(), d = cfg_.dim;
    std::vector<double> q_start;
    if (cfg_.kind == ProblemKind::Tsp)
        start_query(enc_.h, traj.start_point, *params_, cfg_, q_start);

    State s = reset(*inst_, traj.start_point);
    std::vector<double> logits, u, q, lm, p, dlogits(n), du(n), dq(d);
    std::vector<char> mask;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    const Mat& wctx = params_->at("dec.w_ctx");

    for (size_t t = 0; t < traj.actions.size(); ++t) {
        action_mask_into(s, mask);
        decoder_step(s, enc_.h, pre_, q_start.data(), *params_, cfg_, mask, logits, &u, &q);
        if (corr) {
            lm.assign(n, 0.0);
            if (corr->corrections(static_cast<int>(t), lm))
                for (int j = 0; j < n; ++j)
                    if (mask[j]) logits[j] += lm[j];
        }
        p = logits;
        softmax_row(p.data(), n);
        const int a = traj.actions[t];
        if (a < 0 || a >= n || !mask[a])
            throw ContractError("InstanceGradienter: trajectory action is masked");
        for (int j = 0; j < n; ++j) dlogits[j] = weight * ((j == a ? 1.0 : 0.0) - p[j]);

        // Policy branch: through the tanh clip into query and keys.
        std::fill(dq.begin(), dq.end(), 0.0);
        for (int j = 0; j < n; ++j) {
            if (dlogits[j] == 0.0) {
                du[j] = 0.0;
                continue;
            }
            double th = std::tanh(u[j]);
            du[j] = dlogits[j] * cfg_.clip * (1.0 - th * th);
            const double* kj = pre_.keys.row(j);
            double* dkj = dkeys_.row(j);
            double v = du[j] * inv_sqrt_d;
            for (int c = 0; c < d; ++c) {
                dq[c] += v * kj[c];
                dkj[c] += v * q[c];
            }
        }
        // Query built from (mean, current, start-or-load) segments.
        const double* hp = enc_.h.row(s.position);
        double* dhp = dh_.row(s.position);
        for (int e = 0; e < d; ++e) {
            const double* wm = wctx.row(e);
            const double* wc = wctx.row(d + e);
            double dm = 0.0, dc = 0.0;
            for (int c = 0; c < d; ++c) {
                dm += wm[c] * dq[c];
                dc += wc[c] * dq[c];
            }
            dmean_[e] += dm;
            dhp[e] += dc;
        }
        for (int e = 0; e < d; ++e) {
            double* gm = dw_ctx_.row(e);
            double* gc = dw_ctx_.row(d + e);
            double hm = pre_.mean[e], hc = hp[e];
            for (int c = 0; c < d; ++c) {
                gm[c] += hm * dq[c];
                gc[c] += hc * dq[c];
            }
        }
        if (cfg_.kind == ProblemKind::Tsp) {
            const double* hs = enc_.h.row(traj.start_point);
            double* dhs = dh_.row(traj.start_point);
            for (int e = 0; e < d; ++e) {
                const double* ws = wctx.row(2 * d + e);
                double* gs = dw_ctx_.row(2 * d + e);
                double ds = 0.0;
                for (int c = 0; c < d; ++c) {
                    ds += ws[c] * dq[c];
                    gs[c] += hs[e] * dq[c];
                }
                dhs[e] += ds;
            }
        } else {
            double frac = static_cast<double>(s.remaining_capacity) / inst_->capacity;
            double* gl = dw_ctx_.row(2 * d);
            for (int c = 0; c < d; ++c) gl[c] += frac * dq[c];
        }

        if (corr) corr->backprop(static_cast<int>(t), dlogits);
        step_inplace(s, a);
    }
}

void InstanceGradienter::fold_embedding_grad() {
    const int n = inst_->size(), d = cfg_.dim;
    for (int i = 0; i < n; ++i) {
        double* r = dh_.row(i);
        for (int c = 0; c < d; ++c) r[c] += dmean_[c] / n;
    }
    matmul_nt_acc(dh_, dkeys_, params_->at("dec.w_key"));
}

void InstanceGradienter::finish(TensorMap& grads) {
    if (finished_) throw ContractError("InstanceGradienter: finish called twice");
    finished_ = true;
    fold_embedding_grad();
    matmul_tn_acc(dw_key_, enc_.h, dkeys_);
    Mat& gctx = grads.at("dec.w_ctx");
    Mat& gkey = grads.at("dec.w_key");
    for (size_t i = 0; i < gctx.a.size(); ++i) gctx.a[i] += dw_ctx_.a[i];
    for (size_t i = 0; i < gkey.a.size(); ++i) gkey.a[i] += dw_key_.a[i];
    encoder_backward(enc_, *params_, cfg_, dh_, grads);
}

void InstanceGradienter::finish_offsets(Mat& doffset) {
    if (finished_) throw ContractError("InstanceGradienter: finish called twice");
    finished_ = true;
    fold_embedding_grad();
    if (!doffset.same_shape(dh_)) doffset = Mat(dh_.rows, dh_.cols);
    for (size_t i = 0; i < dh_.a.size(); ++i) doffset.a[i] += dh_.a[i];
}

TensorMap weighted_logp_grad(const Instance& instance, const std::vector<Trajectory>& trajs,
                             const std::vector<double>& weights, const TensorMap& params,
                             const PolicyConfig& cfg) {
    if (trajs.size() != weights.size())
        throw ContractError("weighted_logp_grad: weight/trajectory count mismatch");
    TensorMap grads = params.zeros_like();
    InstanceGradienter ig(instance, params, cfg);
    for (size_t i = 0; i < trajs.size(); ++i) ig.add(trajs[i], weights[i]);
    ig.finish(grads);
    grads.version = params.version;
    return grads;
}

}  // namespace memento
