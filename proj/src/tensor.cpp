#include "atlas/tensor.hpp"

#include <cmath>
#include <string>

namespace atlas {

namespace {

void check_finite(const std::vector<double>& v, const char* what) {
    for (double x : v) {
        if (!std::isfinite(x)) throw UsageError(std::string(what) + ": non-finite value");
    }
}

}  // namespace

Matrix::Matrix(std::size_t r, std::size_t c, std::vector<double> d) : rows(r), cols(c), data(std::move(d)) {
    usage_check(data.size() == r * c, "Matrix: data length does not match extents");
}

void Matrix::ensure_finite(const char* what) const { check_finite(data, what); }

TensorMap TensorMap::checked(std::size_t b, std::size_t r, std::size_t c, std::size_t ch,
                             std::vector<double> d) {
    usage_check(d.size() == b * r * c * ch, "TensorMap: data length does not match extents");
    TensorMap t;
    t.batch = b;
    t.rows = r;
    t.cols = c;
    t.channels = ch;
    t.data = std::move(d);
    t.ensure_finite("TensorMap");
    return t;
}

void TensorMap::ensure_finite(const char* what) const { check_finite(data, what); }

Matrix matmul(const Matrix& a, const Matrix& b) {
    config_check(a.cols == b.rows, "matmul: inner extents disagree (" + std::to_string(a.cols) +
                                       " vs " + std::to_string(b.rows) + ")");
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < b.cols; ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < a.cols; ++t) acc += a.at(i, t) * b.at(t, j);
            out.at(i, j) = acc;
        }
    }
    return out;
}

Matrix linear(const LinearWeights& w, const Matrix& x, OpCounter* counter) {
    usage_check(x.cols == w.in_dim, "linear: input channel extent mismatch");
    Matrix out(x.rows, w.out_dim);
    for (std::size_t i = 0; i < x.rows; ++i) {
        const double* xi = x.row(i);
        for (std::size_t o = 0; o < w.out_dim; ++o) {
            const double* wo = w.weight.row(o);
            double acc = 0.0;
            for (std::size_t t = 0; t < w.in_dim; ++t) acc += xi[t] * wo[t];
            out.at(i, o) = acc + w.bias[o];
        }
    }
    if (counter) {
        counter->macs += x.rows * w.out_dim * w.in_dim;
        ++counter->proj_calls;
    }
    return out;
}

Matrix softmax_rows(const Matrix& x) {
    Matrix out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        const double* xi = x.row(i);
        double m = xi[0];
        for (std::size_t j = 1; j < x.cols; ++j) {
            if (xi[j] > m) m = xi[j];
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < x.cols; ++j) {
            const double e = std::exp(xi[j] - m);
            out.at(i, j) = e;
            sum += e;
        }
        for (std::size_t j = 0; j < x.cols; ++j) out.at(i, j) /= sum;
    }
    return out;
}

namespace {

Matrix layer_norm_rows(const Matrix& x, const LayerNormParams& p, double eps, LayerNormCtx* ctx) {
    const std::size_t c = x.cols;
    usage_check(p.gain.size() == c && p.bias.size() == c, "layer_norm: channel extent mismatch");
    Matrix out(x.rows, c);
    if (ctx) {
        ctx->input = x;
        ctx->mean.assign(x.rows, 0.0);
        ctx->inv_std.assign(x.rows, 0.0);
    }
    for (std::size_t i = 0; i < x.rows; ++i) {
        const double* xi = x.row(i);
        double mean = 0.0;
        for (std::size_t j = 0; j < c; ++j) mean += xi[j];
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            const double d = xi[j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(c);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < c; ++j) {
            out.at(i, j) = (xi[j] - mean) * inv * p.gain[j] + p.bias[j];
        }
        if (ctx) {
            ctx->mean[i] = mean;
            ctx->inv_std[i] = inv;
        }
    }
    return out;
}

}  // namespace

Matrix layer_norm(const Matrix& x, const LayerNormParams& p, double eps, LayerNormCtx* ctx) {
    return layer_norm_rows(x, p, eps, ctx);
}

TensorMap layer_norm(const TensorMap& x, const LayerNormParams& p, double eps, LayerNormCtx* ctx) {
    Matrix flat(x.batch * x.tokens(), x.channels, x.data);
    Matrix normed = layer_norm_rows(flat, p, eps, ctx);
    TensorMap out(x.batch, x.rows, x.cols, x.channels);
    out.data = std::move(normed.data);
    return out;
}

double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

Matrix gelu(const Matrix& x) {
    Matrix out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.data.size(); ++i) out.data[i] = gelu_scalar(x.data[i]);
    return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
    usage_check(a.same_shape(b), "add: shape mismatch");
    Matrix out(a.rows, a.cols);
    for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] + b.data[i];
    return out;
}

TensorMap add(const TensorMap& a, const TensorMap& b) {
    usage_check(a.same_shape(b), "add: shape mismatch");
    TensorMap out(a.batch, a.rows, a.cols, a.channels);
    for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] + b.data[i];
    return out;
}

void add_in_place(TensorMap& a, const TensorMap& b) {
    usage_check(a.same_shape(b), "add_in_place: shape mismatch");
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

void matmul_bwd(const Matrix& a, const Matrix& b, const Matrix& d_out, Matrix& d_a, Matrix& d_b) {
    usage_check(d_out.rows == a.rows && d_out.cols == b.cols, "matmul_bwd: upstream shape mismatch");
    d_a = Matrix(a.rows, a.cols);
    d_b = Matrix(b.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t t = 0; t < a.cols; ++t) {
            double acc = 0.0;
            for (std::size_t j = 0; j < b.cols; ++j) acc += d_out.at(i, j) * b.at(t, j);
            d_a.at(i, t) = acc;
        }
    }
    for (std::size_t t = 0; t < b.rows; ++t) {
        for (std::size_t j = 0; j < b.cols; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < a.rows; ++i) acc += a.at(i, t) * d_out.at(i, j);
            d_b.at(t, j) = acc;
        }
    }
}

Matrix linear_bwd(const LinearWeights& w, const Matrix& x, const Matrix& d_out,
                  Matrix& d_weight, std::vector<double>& d_bias) {
    usage_check(x.cols == w.in_dim && d_out.cols == w.out_dim && d_out.rows == x.rows,
                "linear_bwd: shape mismatch");
    usage_check(d_weight.rows == w.out_dim && d_weight.cols == w.in_dim &&
                    d_bias.size() == w.out_dim,
                "linear_bwd: gradient accumulator shape mismatch");
    Matrix d_x(x.rows, x.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        const double* gi = d_out.row(i);
        for (std::size_t t = 0; t < w.in_dim; ++t) {
            double acc = 0.0;
            for (std::size_t o = 0; o < w.out_dim; ++o) acc += gi[o] * w.weight.at(o, t);
            d_x.at(i, t) = acc;
        }
        for (std::size_t o = 0; o < w.out_dim; ++o) {
            d_bias[o] += gi[o];
            const double* xi = x.row(i);
            double* dwo = d_weight.row(o);
            for (std::size_t t = 0; t < w.in_dim; ++t) dwo[t] += gi[o] * xi[t];
        }
    }
    return d_x;
}

Matrix softmax_rows_bwd(const Matrix& probs, const Matrix& d_out) {
    usage_check(probs.same_shape(d_out), "softmax_rows_bwd: shape mismatch");
    Matrix d_x(probs.rows, probs.cols);
    for (std::size_t i = 0; i < probs.rows; ++i) {
        const double* pi = probs.row(i);
        const double* gi = d_out.row(i);
        double dot = 0.0;
        for (std::size_t j = 0; j < probs.cols; ++j) dot += pi[j] * gi[j];
        for (std::size_t j = 0; j < probs.cols; ++j) d_x.at(i, j) = pi[j] * (gi[j] - dot);
    }
    return d_x;
}

Matrix layer_norm_bwd(const LayerNormCtx& ctx, const LayerNormParams& p, const Matrix& d_out,
                      std::vector<double>& d_gain, std::vector<double>& d_bias) {
    const Matrix& x = ctx.input;
    const std::size_t c = x.cols;
    usage_check(d_out.same_shape(x), "layer_norm_bwd: upstream shape mismatch");
    usage_check(d_gain.size() == c && d_bias.size() == c,
                "layer_norm_bwd: gradient accumulator shape mismatch");
    usage_check(ctx.mean.size() == x.rows, "layer_norm_bwd: missing forward context");
    Matrix d_x(x.rows, c);
    const double inv_c = 1.0 / static_cast<double>(c);
    for (std::size_t i = 0; i < x.rows; ++i) {
        const double* xi = x.row(i);
        const double* gi = d_out.row(i);
        const double mean = ctx.mean[i];
        const double inv = ctx.inv_std[i];
        // d_hat is upstream scaled by gain; xhat the normalized input.
        double sum_dhat = 0.0;
        double sum_dhat_xhat = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            const double xhat = (xi[j] - mean) * inv;
            const double dhat = gi[j] * p.gain[j];
            sum_dhat += dhat;
            sum_dhat_xhat += dhat * xhat;
            d_gain[j] += gi[j] * xhat;
            d_bias[j] += gi[j];
        }
        for (std::size_t j = 0; j < c; ++j) {
            const double xhat = (xi[j] - mean) * inv;
            const double dhat = gi[j] * p.gain[j];
            d_x.at(i, j) = inv * (dhat - inv_c * sum_dhat - xhat * inv_c * sum_dhat_xhat);
        }
    }
    return d_x;
}

double gelu_bwd_scalar(double x) {
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * 3.14159265358979323846);
    return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * inv_sqrt2pi * std::exp(-0.5 * x * x);
}

Matrix gelu_bwd(const Matrix& x, const Matrix& d_out) {
    usage_check(x.same_shape(d_out), "gelu_bwd: shape mismatch");
    Matrix d_x(x.rows, x.cols);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        d_x.data[i] = d_out.data[i] * gelu_bwd_scalar(x.data[i]);
    }
    return d_x;
}

void append_views(std::vector<ParamView>& out, const std::string& prefix, LinearWeights& w) {
    out.push_back({prefix + ".weight", w.weight.data.data(), w.weight.data.size(),
                   {w.weight.rows, w.weight.cols}});
    out.push_back({prefix + ".bias", w.bias.data(), w.bias.size(), {w.bias.size()}});
}

void append_views(std::vector<ParamView>& out, const std::string& prefix, LayerNormParams& p) {
    out.push_back({prefix + ".gain", p.gain.data(), p.gain.size(), {p.gain.size()}});
    out.push_back({prefix + ".bias", p.bias.data(), p.bias.size(), {p.bias.size()}});
}

void zero_views(const std::vector<ParamView>& views) {
    for (const ParamView& v : views)
        for (std::size_t i = 0; i < v.count; ++i) v.data[i] = 0.0;
}

std::size_t total_count(const std::vector<ParamView>& views) {
    std::size_t n = 0;
    for (const ParamView& v : views) n += v.count;
    return n;
}

void init_linear(LinearWeights& w, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(w.in_dim > 0 ? w.in_dim : 1));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : w.weight.data) v = dist(rng);
    for (double& v : w.bias) v = 0.0;
}

}  // namespace atlas
