#include "atlas/summarize.hpp"

#include "atlas/errors.hpp"

namespace atlas {

TensorMap summarize(const TensorMap& x, std::size_t stride, PoolContext* ctx) {
    internal_check(stride >= 1 && x.rows % stride == 0 && x.cols % stride == 0,
                   "summarize: grid not divisible by the stride");
    const std::size_t orows = x.rows / stride, ocols = x.cols / stride;
    TensorMap out(x.batch, orows, ocols, x.channels);
    if (ctx) {
        ctx->batch = x.batch;
        ctx->in_rows = x.rows;
        ctx->in_cols = x.cols;
        ctx->channels = x.channels;
        ctx->stride = stride;
        ctx->argmax.assign(out.size(), 0);
    }
    std::size_t slot = 0;
    for (std::size_t b = 0; b < x.batch; ++b) {
        for (std::size_t orr = 0; orr < orows; ++orr) {
            for (std::size_t oc = 0; oc < ocols; ++oc) {
                for (std::size_t ch = 0; ch < x.channels; ++ch) {
                    double best = x.at(b, orr * stride, oc * stride, ch);
                    std::size_t best_idx = orr * stride * x.cols + oc * stride;
                    for (std::size_t i = 0; i < stride; ++i) {
                        for (std::size_t j = 0; j < stride; ++j) {
                            const std::size_t r = orr * stride + i, c = oc * stride + j;
                            const double v = x.at(b, r, c, ch);
                            // strict > keeps the smallest row-major index on ties
                            if (v > best) {
                                best = v;
                                best_idx = r * x.cols + c;
                            }
                        }
                    }
                    out.at(b, orr, oc, ch) = best;
                    if (ctx) ctx->argmax[slot] = static_cast<std::uint32_t>(best_idx);
                    ++slot;
                }
            }
        }
    }
    return out;
}

TensorMap summarize_bwd(const PoolContext& ctx, const TensorMap& d_out) {
    internal_check(d_out.batch == ctx.batch && d_out.rows == ctx.in_rows / ctx.stride &&
                       d_out.cols == ctx.in_cols / ctx.stride && d_out.channels == ctx.channels,
                   "summarize_bwd: gradient shape mismatch");
    TensorMap d_in(ctx.batch, ctx.in_rows, ctx.in_cols, ctx.channels);
    std::size_t slot = 0;
    for (std::size_t b = 0; b < ctx.batch; ++b) {
        for (std::size_t orr = 0; orr < d_out.rows; ++orr) {
            for (std::size_t oc = 0; oc < d_out.cols; ++oc) {
                for (std::size_t ch = 0; ch < ctx.channels; ++ch) {
                    const std::size_t idx = ctx.argmax[slot++];
                    d_in.at(b, idx / ctx.in_cols, idx % ctx.in_cols, ch) +=
                        d_out.at(b, orr, oc, ch);
                }
            }
        }
    }
    return d_in;
}

}  // namespace atlas
