#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace memento {

// Dense row-major matrix of doubles. Everything in this project is small
// enough (n <= ~100, d <= 128) that plain triple loops are fine.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

    double* row(int r) { return a.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return a.data() + static_cast<size_t>(r) * cols; }
    double& operator()(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
    size_t count() const { return a.size(); }
    void zero() { std::fill(a.begin(), a.end(), 0.0); }
};

Mat matmul(const Mat& x, const Mat& y);
// out += x . y / xT . y / x . yT. Shapes must already agree.
void matmul_acc(Mat& out, const Mat& x, const Mat& y);
void matmul_tn_acc(Mat& out, const Mat& x, const Mat& y);
void matmul_nt_acc(Mat& out, const Mat& x, const Mat& y);

// Adds a length-cols bias row to every row of m.
void add_row_inplace(Mat& m, const double* bias);

// In-place softmax of one row; max-subtracted, so -1e9 entries underflow to
// exactly 0.
void softmax_row(double* x, int n);
double log_sum_exp(const double* x, int n);

// Row-wise layer normalization with affine gain/bias over the column dim.
struct LnCache {
    Mat xhat;
    std::vector<double> rstd;
};
void layernorm_fwd(const Mat& x, const double* gain, const double* bias, Mat& y, LnCache& cache);
void layernorm_bwd(const Mat& dy, const LnCache& cache, const double* gain, Mat& dx,
                   double* dgain, double* dbias);

// Exact (erf-based) GELU.
double gelu(double x);
double gelu_grad(double x);

// Named parameter/gradient tensors in a fixed insertion order. The order is
// part of file-format and reduction determinism, so lookups keep it stable.
class TensorMap {
  public:
    Mat& emplace(const std::string& name, int rows, int cols);
    Mat& at(const std::string& name);
    const Mat& at(const std::string& name) const;
    const Mat* find(const std::string& name) const;

    std::vector<std::pair<std::string, Mat>>& items() { return items_; }
    const std::vector<std::pair<std::string, Mat>>& items() const { return items_; }

    // Same tensor names, shapes, and order.
    bool congruent(const TensorMap& o) const;
    TensorMap zeros_like() const;
    void zero();
    void add_scaled(const TensorMap& g, double s);
    double l2_norm() const;
    size_t param_count() const;

    // Bumped on every optimizer step; lets captured records detect staleness.
    uint64_t version = 0;

  private:
    std::vector<std::pair<std::string, Mat>> items_;
};

}  // namespace memento
