#pragma once

#include <cstddef>
#include <vector>

#include "atlas/counters.hpp"
#include "atlas/tensor.hpp"

namespace atlas {

// Projection set for one attention sublayer; all four maps are channels x channels.
struct AttnProj {
    LinearWeights w_q, w_k, w_v, w_o;
    explicit AttnProj(std::size_t channels = 0)
        : w_q(channels, channels),
          w_k(channels, channels),
          w_v(channels, channels),
          w_o(channels, channels) {}
};

// Everything attention_core() saves for its backward pass.
struct AttnCoreCtx {
    std::size_t heads = 0;
    Matrix q, k, v;             // projected inputs, full channel width
    std::vector<Matrix> probs;  // per-head softmax rows, each n_q x n_k
};

// Scaled dot-product attention over already-projected q/k/v. Channels are
// split into `heads` contiguous column blocks; each block attends
// independently and the outputs land back in the same columns. Returns the
// concatenated head outputs (the caller applies the output projection).
//
// Counters: attn_pairs counts token pairs n_q * n_k once per call (not per
// head); attn_queries counts n_q; macs counts real multiplies.
Matrix attention_core(const Matrix& q, const Matrix& k, const Matrix& v, std::size_t heads,
                      AttnCoreCtx* ctx = nullptr, OpCounter* counter = nullptr);

// Accumulates gradients for the three projected inputs.
void attention_core_bwd(const AttnCoreCtx& ctx, const Matrix& d_out, Matrix& d_q, Matrix& d_k,
                        Matrix& d_v);

}  // namespace atlas
