#pragma once

#include "atlas/atlas_model.hpp"
#include "atlas/msa_block.hpp"

namespace atlas {
namespace oracle {

// Reference implementation of one block pass written as straight per-token
// loops: no cache, no saved state, every normalization and projection
// recomputed at each use. Deliberately independent of the optimized code path;
// the two must agree bit for bit.
void naive_msa_forward(const LayoutSpec& layout, const MsaBlockParams& params,
                       const CommunicationMode& mode, std::vector<TensorMap>& maps);

// Plain pre-norm windowed transformer block (per-window self-attention, then
// a per-token FFN), written directly from the textbook definition.
void naive_windowed_block(TensorMap& map, std::size_t window_side,
                          const TopDownScaleParams& attn, const FfnScaleParams& ffn,
                          std::size_t heads);

// Full-grid self-attention block organized matrix-style (explicit score
// matrix per head), the opposite structure of the per-token loops above.
// Exists so single-window fixtures have two reference answers to agree on.
// Requires the map to be a single attention window.
void full_attention_block_reference(TensorMap& map, const TopDownScaleParams& attn,
                                    const FfnScaleParams& ffn, std::size_t heads);

// Straight-line transformer classifier (patchify + positions, full
// self-attention blocks, mean-pool readout) over the same parameter struct,
// for configs whose whole grid fits one window. The one-scale model must
// reproduce it bit for bit.
Matrix naive_vit_forward(const AtlasParams& params, const TensorMap& images);

}  // namespace oracle
}  // namespace atlas
