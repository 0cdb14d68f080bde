#include "memento/linalg.hpp"

#include <algorithm>
#include <cmath>

#include "memento/errors.hpp"

namespace memento {

namespace {
constexpr double kLnEps = 1e-6;
}

Mat matmul(const Mat& x, const Mat& y) {
    Mat out(x.rows, y.cols);
    matmul_acc(out, x, y);
    return out;
}

void matmul_acc(Mat& out, const Mat& x, const Mat& y) {
    if (x.cols != y.rows || out.rows != x.rows || out.cols != y.cols)
        throw ContractError("matmul_acc: shape mismatch");
    for (int i = 0; i < x.rows; ++i) {
        const double* xi = x.row(i);
        double* oi = out.row(i);
        for (int k = 0; k < x.cols; ++k) {
            double v = xi[k];
            if (v == 0.0) continue;
            const double* yk = y.row(k);
            for (int j = 0; j < y.cols; ++j) oi[j] += v * yk[j];
        }
    }
}

void matmul_tn_acc(Mat& out, const Mat& x, const Mat& y) {
    if (x.rows != y.rows || out.rows != x.cols || out.cols != y.cols)
        throw ContractError("matmul_tn_acc: shape mismatch");
    for (int k = 0; k < x.rows; ++k) {
        const double* xk = x.row(k);
        const double* yk = y.row(k);
        for (int i = 0; i < x.cols; ++i) {
            double v = xk[i];
            if (v == 0.0) continue;
            double* oi = out.row(i);
            for (int j = 0; j < y.cols; ++j) oi[j] += v * yk[j];
        }
    }
}

void matmul_nt_acc(Mat& out, const Mat& x, const Mat& y) {
    if (x.cols != y.cols || out.rows != x.rows || out.cols != y.rows)
        throw ContractError("matmul_nt_acc: shape mismatch");
    for (int i = 0; i < x.rows; ++i) {
        const double* xi = x.row(i);
        double* oi = out.row(i);
        for (int j = 0; j < y.rows; ++j) {
            const double* yj = y.row(j);
            double s = 0.0;
            for (int k = 0; k < x.cols; ++k) s += xi[k] * yj[k];
            oi[j] += s;
        }
    }
}

void add_row_inplace(Mat& m, const double* bias) {
    for (int i = 0; i < m.rows; ++i) {
        double* r = m.row(i);
        for (int j = 0; j < m.cols; ++j) r[j] += bias[j];
    }
}

void softmax_row(double* x, int n) {
    double m = x[0];
    for (int j = 1; j < n; ++j) m = std::max(m, x[j]);
    double z = 0.0;
    for (int j = 0; j < n; ++j) {
        x[j] = std::exp(x[j] - m);
        z += x[j];
    }
    double inv = 1.0 / z;
    for (int j = 0; j < n; ++j) x[j] *= inv;
}

double log_sum_exp(const double* x, int n) {
    double m = x[0];
    for (int j = 1; j < n; ++j) m = std::max(m, x[j]);
    double z = 0.0;
    for (int j = 0; j < n; ++j) z += std::exp(x[j] - m);
    return m + std::log(z);
}

void layernorm_fwd(const Mat& x, const double* gain, const double* bias, Mat& y, LnCache& cache) {
    const int n = x.rows, d = x.cols;
    y = Mat(n, d);
    cache.xhat = Mat(n, d);
    cache.rstd.assign(n, 0.0);
    for (int i = 0; i < n; ++i) {
        const double* xi = x.row(i);
        double mean = 0.0;
        for (int j = 0; j < d; ++j) mean += xi[j];
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            double c = xi[j] - mean;
            var += c * c;
        }
        var /= d;
        double rstd = 1.0 / std::sqrt(var + kLnEps);
        cache.rstd[i] = rstd;
        double* xh = cache.xhat.row(i);
        double* yi = y.row(i);
        for (int j = 0; j < d; ++j) {
            xh[j] = (xi[j] - mean) * rstd;
            yi[j] = gain[j] * xh[j] + bias[j];
        }
    }
}

void layernorm_bwd(const Mat& dy, const LnCache& cache, const double* gain, Mat& dx,
                   double* dgain, double* dbias) {
    const int n = dy.rows, d = dy.cols;
    dx = Mat(n, d);
    for (int i = 0; i < n; ++i) {
        const double* dyi = dy.row(i);
        const double* xh = cache.xhat.row(i);
        double sum_dxh = 0.0, sum_dxh_xh = 0.0;
        for (int j = 0; j < d; ++j) {
            double dxh = dyi[j] * gain[j];
            sum_dxh += dxh;
            sum_dxh_xh += dxh * xh[j];
            dgain[j] += dyi[j] * xh[j];
            dbias[j] += dyi[j];
        }
        double m1 = sum_dxh / d, m2 = sum_dxh_xh / d;
        double rstd = cache.rstd[i];
        double* dxi = dx.row(i);
        for (int j = 0; j < d; ++j) {
            double dxh = dyi[j] * gain[j];
            dxi[j] = rstd * (dxh - m1 - xh[j] * m2);
        }
    }
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad(double x) {
    double phi_big = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
    double phi_small = std::exp(-0.5 * x * x) * 0.39894228040143267793994605993438;
    return phi_big + x * phi_small;
}

Mat& TensorMap::emplace(const std::string& name, int rows, int cols) {
    if (find(name)) throw ContractError("TensorMap: duplicate tensor " + name);
    items_.emplace_back(name, Mat(rows, cols));
    return items_.back().second;
}

Mat& TensorMap::at(const std::string& name) {
    for (auto& [k, v] : items_)
        if (k == name) return v;
    throw ContractError("TensorMap: missing tensor " + name);
}

const Mat& TensorMap::at(const std::string& name) const {
    for (auto& [k, v] : items_)
        if (k == name) return v;
    throw ContractError("TensorMap: missing tensor " + name);
}

const Mat* TensorMap::find(const std::string& name) const {
    for (auto& [k, v] : items_)
        if (k == name) return &v;
    return nullptr;
}

bool TensorMap::congruent(const TensorMap& o) const {
    if (items_.size() != o.items_.size()) return false;
    for (size_t i = 0; i < items_.size(); ++i) {
        if (items_[i].first != o.items_[i].first) return false;
        if (!items_[i].second.same_shape(o.items_[i].second)) return false;
    }
    return true;
}

TensorMap TensorMap::zeros_like() const {
    TensorMap out;
    for (const auto& [k, v] : items_) out.emplace(k, v.rows, v.cols);
    return out;
}

void TensorMap::zero() {
    for (auto& [k, v] : items_) v.zero();
}

void TensorMap::add_scaled(const TensorMap& g, double s) {
    if (!congruent(g)) throw ContractError("TensorMap::add_scaled: incongruent maps");
    for (size_t i = 0; i < items_.size(); ++i) {
        auto& dst = items_[i].second.a;
        const auto& src = g.items_[i].second.a;
        for (size_t j = 0; j < dst.size(); ++j) dst[j] += s * src[j];
    }
}

double TensorMap::l2_norm() const {
    double s = 0.0;
    for (const auto& [k, v] : items_)
        for (double x : v.a) s += x * x;
    return std::sqrt(s);
}

size_t TensorMap::param_count() const {
    size_t s = 0;
    for (const auto& [k, v] : items_) s += v.count();
    return s;
}

}  // namespace memento
