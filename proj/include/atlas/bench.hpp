#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "atlas/atlas_model.hpp"

namespace atlas {

// Closed-form count of attention (query, key) token pairs for one block pass:
// every scale-l token against its top-down key stack, plus every coarse token
// against its parent window when the bottom-up pathway runs. Window sizes are
// capped by the grid at each scale, so the count is exact even when the
// coarsest grid is smaller than a window.
std::uint64_t analytic_attention_pairs(const LayoutSpec& layout, const CommunicationMode& mode);

struct BenchRow {
    std::size_t grid = 0;
    std::size_t tokens = 0;      // finest-scale tokens (N)
    std::size_t scales = 0;      // L
    std::uint64_t analytic_pairs = 0;
    std::uint64_t counted_pairs = 0;  // from the structural counter walk
    std::uint64_t macs = 0;
    std::uint64_t proj_calls = 0;
    std::uint64_t cache_hits = 0;
    std::uint64_t cache_misses = 0;
    bool ran_forward = false;    // wall time is only meaningful when true
    double wall_seconds = 0.0;   // best of `reps` timed forwards
};

// One block pass at the given geometry. When run_forward is set the block is
// actually executed (seeded random weights and inputs, batch 1) and timed;
// either way the structural counters are filled in.
BenchRow bench_block(std::size_t grid, std::size_t window_side, std::size_t stride,
                     std::size_t channels, std::size_t heads, std::size_t ffn_mult,
                     const CommunicationMode& mode, bool run_forward, std::size_t reps,
                     std::uint64_t seed);

// Header + one row per grid; forwards only run up to max_forward_grid.
std::vector<BenchRow> bench_sweep(const std::vector<std::size_t>& grids, std::size_t window_side,
                                  std::size_t stride, std::size_t channels, std::size_t heads,
                                  std::size_t ffn_mult, const CommunicationMode& mode,
                                  std::size_t max_forward_grid, std::size_t reps,
                                  std::uint64_t seed);

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows);

// Query tokens attended over one full model forward (batch 1). With
// drop_scales the stage ladder freezes one scale per stage; without it every
// block runs over all scales (the stacked composition).
std::uint64_t atlas_query_tokens(const AtlasConfig& cfg, bool drop_scales);

}  // namespace atlas
