#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "atlas/counters.hpp"
#include "atlas/errors.hpp"

namespace atlas {

// Row-major dense matrix of 64-bit reals. All reductions accumulate
// left-to-right in index order so results are bit-reproducible and the
// optimized and oracle code paths can be compared with exact equality.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    Matrix(std::size_t r, std::size_t c, std::vector<double> d);

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
    double* row(std::size_t i) { return data.data() + i * cols; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }
    std::size_t size() const { return data.size(); }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
    void ensure_finite(const char* what) const;
};

// Dense rank-4 feature map (batch, rows, cols, channels), row-major.
// Carrier of every per-scale feature map in the model.
struct TensorMap {
    std::size_t batch = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t channels = 0;
    std::vector<double> data;

    TensorMap() = default;
    TensorMap(std::size_t b, std::size_t r, std::size_t c, std::size_t ch)
        : batch(b), rows(r), cols(c), channels(ch), data(b * r * c * ch, 0.0) {}

    // Checked construction: rejects length mismatches and non-finite values.
    static TensorMap checked(std::size_t b, std::size_t r, std::size_t c, std::size_t ch,
                             std::vector<double> d);

    std::size_t size() const { return data.size(); }
    std::size_t tokens() const { return rows * cols; }
    std::size_t index(std::size_t b, std::size_t r, std::size_t c, std::size_t ch) const {
        return ((b * rows + r) * cols + c) * channels + ch;
    }
    double& at(std::size_t b, std::size_t r, std::size_t c, std::size_t ch) {
        return data[index(b, r, c, ch)];
    }
    double at(std::size_t b, std::size_t r, std::size_t c, std::size_t ch) const {
        return data[index(b, r, c, ch)];
    }
    // Token-major view: token t of batch b is the channel vector at (r, c) with t = r*cols + c.
    double* token(std::size_t b, std::size_t t) {
        return data.data() + (b * tokens() + t) * channels;
    }
    const double* token(std::size_t b, std::size_t t) const {
        return data.data() + (b * tokens() + t) * channels;
    }

    bool same_shape(const TensorMap& o) const {
        return batch == o.batch && rows == o.rows && cols == o.cols && channels == o.channels;
    }
    void ensure_finite(const char* what) const;
};

// Affine map in_dim -> out_dim. weight is (out_dim x in_dim); y = W x + b.
struct LinearWeights {
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    Matrix weight;
    std::vector<double> bias;

    LinearWeights() = default;
    LinearWeights(std::size_t in, std::size_t out)
        : in_dim(in), out_dim(out), weight(out, in), bias(out, 0.0) {}
};

struct LinearGrads {
    Matrix d_input;       // same shape as the token matrix fed in
    Matrix d_weight;      // (out_dim x in_dim)
    std::vector<double> d_bias;
};

// Per-channel affine normalization parameters.
struct LayerNormParams {
    std::vector<double> gain;
    std::vector<double> bias;

    LayerNormParams() = default;
    explicit LayerNormParams(std::size_t channels) : gain(channels, 1.0), bias(channels, 0.0) {}
};

// Saved forward state for layer_norm_bwd: the input plus per-row statistics.
struct LayerNormCtx {
    Matrix input;
    std::vector<double> mean;      // per row
    std::vector<double> inv_std;   // per row, 1/sqrt(var + eps)
};

inline constexpr double kLayerNormEps = 1e-6;

// ---------------------------------------------------------------------------
// forward ops

Matrix matmul(const Matrix& a, const Matrix& b);

// y = x · Wᵀ + b for a matrix of row-vectors x (tokens x in_dim).
// Counts out*in MACs per token when a counter is attached.
Matrix linear(const LinearWeights& w, const Matrix& x, OpCounter* counter = nullptr);

Matrix softmax_rows(const Matrix& x);

// Normalizes each row of x to zero mean / unit variance over channels, then
// applies the per-channel affine. ctx (optional) captures what backward needs.
Matrix layer_norm(const Matrix& x, const LayerNormParams& p, double eps = kLayerNormEps,
                  LayerNormCtx* ctx = nullptr);
TensorMap layer_norm(const TensorMap& x, const LayerNormParams& p, double eps = kLayerNormEps,
                     LayerNormCtx* ctx = nullptr);

double gelu_scalar(double x);
Matrix gelu(const Matrix& x);

Matrix add(const Matrix& a, const Matrix& b);
TensorMap add(const TensorMap& a, const TensorMap& b);
void add_in_place(TensorMap& a, const TensorMap& b);

// ---------------------------------------------------------------------------
// backward ops (contexts are the saved forward inputs)

void matmul_bwd(const Matrix& a, const Matrix& b, const Matrix& d_out, Matrix& d_a, Matrix& d_b);

// Accumulates into d_weight/d_bias so one grads struct can serve many calls.
Matrix linear_bwd(const LinearWeights& w, const Matrix& x, const Matrix& d_out,
                  Matrix& d_weight, std::vector<double>& d_bias);

// probs is the forward output; d_out the upstream gradient.
Matrix softmax_rows_bwd(const Matrix& probs, const Matrix& d_out);

Matrix layer_norm_bwd(const LayerNormCtx& ctx, const LayerNormParams& p, const Matrix& d_out,
                      std::vector<double>& d_gain, std::vector<double>& d_bias);

double gelu_bwd_scalar(double x);
Matrix gelu_bwd(const Matrix& x, const Matrix& d_out);

// ---------------------------------------------------------------------------
// parameter enumeration
//
// Flat named view over a parameter struct's storage. Gradient structs reuse
// the parameter types, so views over a parameter set and its gradient line up
// index for index.

struct ParamView {
    std::string name;
    double* data = nullptr;
    std::size_t count = 0;                // product of shape
    std::vector<std::size_t> shape;       // logical extents, e.g. {out, in}
};

void append_views(std::vector<ParamView>& out, const std::string& prefix, LinearWeights& w);
void append_views(std::vector<ParamView>& out, const std::string& prefix, LayerNormParams& p);
void zero_views(const std::vector<ParamView>& views);
std::size_t total_count(const std::vector<ParamView>& views);

// Fills weights with uniform(-1/sqrt(in_dim), 1/sqrt(in_dim)) and zeroes the bias.
void init_linear(LinearWeights& w, std::mt19937_64& rng);

}  // namespace atlas
