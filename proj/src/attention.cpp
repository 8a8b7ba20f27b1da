#include "atlas/attention.hpp"

#include <cmath>

#include "atlas/errors.hpp"

namespace atlas {

Matrix attention_core(const Matrix& q, const Matrix& k, const Matrix& v, std::size_t heads,
                      AttnCoreCtx* ctx, OpCounter* counter) {
    internal_check(heads >= 1 && q.cols == k.cols && k.cols == v.cols && k.rows == v.rows,
                   "attention_core: shape mismatch");
    internal_check(q.cols % heads == 0, "attention_core: channels not divisible by heads");
    const std::size_t dk = q.cols / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

    if (counter) {
        counter->attn_pairs += static_cast<std::uint64_t>(q.rows) * k.rows;
        counter->attn_queries += q.rows;
        counter->macs += 2ull * heads * q.rows * k.rows * dk;
    }
    if (ctx) {
        ctx->heads = heads;
        ctx->q = q;
        ctx->k = k;
        ctx->v = v;
        ctx->probs.clear();
        ctx->probs.reserve(heads);
    }

    Matrix out(q.rows, q.cols);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t c0 = h * dk;
        Matrix scores(q.rows, k.rows);
        for (std::size_t i = 0; i < q.rows; ++i) {
            const double* qi = q.row(i) + c0;
            for (std::size_t j = 0; j < k.rows; ++j) {
                const double* kj = k.row(j) + c0;
                double acc = 0.0;
                for (std::size_t t = 0; t < dk; ++t) acc += qi[t] * kj[t];
                scores.at(i, j) = acc * scale;
            }
        }
        Matrix probs = softmax_rows(scores);
        for (std::size_t i = 0; i < q.rows; ++i) {
            const double* pi = probs.row(i);
            double* oi = out.row(i) + c0;
            for (std::size_t c = 0; c < dk; ++c) {
                double acc = 0.0;
                for (std::size_t j = 0; j < k.rows; ++j) acc += pi[j] * v.row(j)[c0 + c];
                oi[c] = acc;
            }
        }
        if (ctx) ctx->probs.push_back(std::move(probs));
    }
    return out;
}

void attention_core_bwd(const AttnCoreCtx& ctx, const Matrix& d_out, Matrix& d_q, Matrix& d_k,
                        Matrix& d_v) {
    const Matrix &q = ctx.q, &k = ctx.k, &v = ctx.v;
    internal_check(d_out.rows == q.rows && d_out.cols == q.cols,
                   "attention_core_bwd: gradient shape mismatch");
    if (d_q.rows != q.rows || d_q.cols != q.cols) d_q = Matrix(q.rows, q.cols);
    if (d_k.rows != k.rows || d_k.cols != k.cols) d_k = Matrix(k.rows, k.cols);
    if (d_v.rows != v.rows || d_v.cols != v.cols) d_v = Matrix(v.rows, v.cols);

    const std::size_t dk = q.cols / ctx.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

    for (std::size_t h = 0; h < ctx.heads; ++h) {
        const std::size_t c0 = h * dk;
        const Matrix& probs = ctx.probs[h];

        // d_v[j] += probs^T . d_out ; d_probs = d_out . v^T (head slice)
        Matrix d_probs(q.rows, k.rows);
        for (std::size_t i = 0; i < q.rows; ++i) {
            const double* doi = d_out.row(i) + c0;
            const double* pi = probs.row(i);
            for (std::size_t j = 0; j < k.rows; ++j) {
                const double* vj = v.row(j) + c0;
                double* dvj = d_v.row(j) + c0;
                double acc = 0.0;
                for (std::size_t c = 0; c < dk; ++c) {
                    acc += doi[c] * vj[c];
                    dvj[c] += pi[j] * doi[c];
                }
                d_probs.at(i, j) = acc;
            }
        }

        Matrix d_scores = softmax_rows_bwd(probs, d_probs);
        // scores were scaled by 1/sqrt(dk) before softmax
        for (std::size_t i = 0; i < q.rows; ++i) {
            const double* dsi = d_scores.row(i);
            double* dqi = d_q.row(i) + c0;
            const double* qi = q.row(i) + c0;
            for (std::size_t j = 0; j < k.rows; ++j) {
                const double g = dsi[j] * scale;
                const double* kj = k.row(j) + c0;
                double* dkj = d_k.row(j) + c0;
                for (std::size_t t = 0; t < dk; ++t) {
                    dqi[t] += g * kj[t];
                    dkj[t] += g * qi[t];
                }
            }
        }
    }
}

}  // namespace atlas
