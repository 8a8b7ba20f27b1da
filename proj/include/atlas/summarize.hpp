#pragma once

#include <cstdint>
#include <vector>

#include "atlas/tensor.hpp"

namespace atlas {

// Bookkeeping saved by summarize() so the backward pass can route gradients
// to the winning input tokens.
struct PoolContext {
    std::size_t batch = 0, in_rows = 0, in_cols = 0, channels = 0, stride = 0;
    // Flat input token index (row * in_cols + col) of the max for each
    // (batch, out_row, out_col, channel), in that iteration order.
    std::vector<std::uint32_t> argmax;
};

// Strided max-pool over non-overlapping stride x stride neighborhoods, applied
// per channel. Ties go to the smallest row-major input index so the result is
// independent of evaluation order.
TensorMap summarize(const TensorMap& x, std::size_t stride, PoolContext* ctx = nullptr);

// Scatters each output gradient back to the input token that won the pool.
TensorMap summarize_bwd(const PoolContext& ctx, const TensorMap& d_out);

}  // namespace atlas
