#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "atlas/attention.hpp"
#include "atlas/layout.hpp"
#include "atlas/qkv_cache.hpp"
#include "atlas/summarize.hpp"

namespace atlas {

// Which of the three cross-scale pathways run. The per-scale attention
// sublayer and FFN always run; with everything off the block degrades to an
// independent windowed transformer block per scale.
struct CommunicationMode {
    bool summarize_on = true;   // phase 1: coarse maps absorb pooled fine maps
    bool top_down_on = true;    // phase 2 keys include ancestor windows
    bool bottom_up_on = true;   // phase 3: coarse groups re-read their parent window
};

// Per-scale parameter groups. The top-down norm+projections of a scale produce
// both its own queries and the k/v served to every finer scale, which is what
// lets the cache share one projection per coarse window.
struct TopDownScaleParams {
    LayerNormParams norm;
    AttnProj proj;
};

struct FfnScaleParams {
    LayerNormParams norm;
    LinearWeights fc1, fc2;
};

// Owned by the reading (coarse) scale; norm_kv applies to the parent-window
// tokens one scale finer.
struct BottomUpScaleParams {
    LayerNormParams norm_q, norm_kv;
    AttnProj proj;
};

struct MsaBlockParams {
    std::size_t channels = 0, heads = 1, ffn_hidden = 0;
    std::vector<TopDownScaleParams> top_down;    // one per scale
    std::vector<FfnScaleParams> ffn;             // one per scale
    std::vector<BottomUpScaleParams> bottom_up;  // [si-1] reads scale si-1 into scale si
};

// Allocates (zeroed weights, unit norms) for a block over `num_scales` scales.
MsaBlockParams make_msa_block_params(std::size_t num_scales, std::size_t channels,
                                     std::size_t heads, std::size_t ffn_hidden);
void init_msa_block_params(MsaBlockParams& params, std::mt19937_64& rng);
std::vector<ParamView> param_views(MsaBlockParams& params, const std::string& prefix = "");

// ---------------------------------------------------------------------------
// saved forward state

struct SelfProjCtx {  // pre-update norm feeding one window's own q/k/v
    LayerNormCtx norm;
    Matrix normed;
};

struct CrossKvCtx {  // post-update k/v fill of one coarse window, shared by readers
    bool ln_done = false;
    LayerNormCtx norm;
    Matrix normed;
    Matrix d_k, d_v;  // reader gradients, accumulated during backward
};

struct WindowAttnCtx {
    AttnCoreCtx core;
    Matrix core_out;  // input to the output projection
};

struct TdStepCtx {
    std::vector<SelfProjCtx> self;    // batch-major over windows
    std::vector<WindowAttnCtx> attn;  // batch-major over windows
    LayerNormCtx ffn_norm;
    Matrix ffn_normed, ffn_pre, ffn_act;
};

struct BuKvCtx {
    LayerNormCtx norm;
    Matrix normed;
    Matrix d_k, d_v;
};

struct BuAttnCtx {
    LayerNormCtx norm_q;
    Matrix normed_q;
    AttnCoreCtx core;
    Matrix core_out;
};

struct BuStepCtx {
    std::vector<BuKvCtx> kv;     // batch-major over parent windows (scale si-1)
    std::vector<BuAttnCtx> attn; // batch-major over groups (scale si); same indexing
};

struct MsaBlockCtx {
    CommunicationMode mode;
    std::size_t batch = 0;
    std::vector<PoolContext> pools;            // [si-1]: summarize si-1 -> si
    std::vector<TdStepCtx> td;                 // [si]
    std::vector<std::vector<CrossKvCtx>> cross;  // [si][b * windows + w]
    std::vector<BuStepCtx> bu;                 // [si-1]
};

// ---------------------------------------------------------------------------

// One block pass over the per-scale maps, updated in place:
//   phase 1 (fine to coarse): maps[si] += summarize(maps[si-1])
//   phase 2 (coarse to fine): per window, pre-norm attention over the window's
//     own tokens plus (top_down_on) its ancestor windows, then a per-scale FFN
//   phase 3 (fine to coarse): each coarse group attends back into the parent
//     window it summarizes
// Concatenated keys are stacked own-window first, then ancestors finest to
// coarsest. The cache starts the block empty and serves every k/v read; a
// scale is invalidated once per step that mutates it (after its phase-2
// attention+FFN step, and after each phase-3 step that wrote into it). Pass
// ctx to enable msa_block_backward.
void msa_block_forward(const LayoutSpec& layout, const MsaBlockParams& params,
                       const CommunicationMode& mode, std::vector<TensorMap>& maps,
                       QkvCache& cache, MsaBlockCtx* ctx = nullptr, OpCounter* counter = nullptr);

// Consumes ctx. d_maps carries gradients with respect to the block outputs in
// and with respect to the block inputs out; parameter gradients accumulate
// into `grads` (same layout as the parameters).
void msa_block_backward(const LayoutSpec& layout, const MsaBlockParams& params, MsaBlockCtx& ctx,
                        std::vector<TensorMap>& d_maps, MsaBlockParams& grads);

// Predicts the exact counter deltas of msa_block_forward for one block pass
// without doing any arithmetic, by walking the same structure (including the
// cache hit/fill pattern). Used to size runs too large to execute.
void msa_block_count(const LayoutSpec& layout, const CommunicationMode& mode, std::size_t batch,
                     std::size_t channels, std::size_t heads, std::size_t ffn_hidden,
                     OpCounter& counter);

}  // namespace atlas
