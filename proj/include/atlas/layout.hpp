#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "atlas/tensor.hpp"

namespace atlas {

struct WindowId {
    std::size_t row = 0;
    std::size_t col = 0;
    bool operator==(const WindowId&) const = default;
};

// Complete multi-scale geometry for a square token grid. Scale index 0 is the
// finest grid; each coarser scale divides the side by `stride` until the grid
// is no larger than the window. Construction validates every divisibility
// constraint and precomputes the window ancestor / parent-group maps.
//
// Immutable after construction; safe to share across threads.
struct LayoutSpec {
    std::size_t window_side = 0;  // k; a window holds up to k*k tokens
    std::size_t stride = 0;       // s; one summarize step merges s*s tokens
    std::size_t num_scales = 0;   // L

    std::vector<std::size_t> grid_side;         // per scale
    std::vector<std::size_t> windows_per_side;  // per scale; 1 when grid_side <= k

    // ancestor_window[si][w][m - si - 1]: for window w (row-major) at scale si,
    // the unique containing window at coarser scale m.
    std::vector<std::vector<std::vector<WindowId>>> ancestor_window;

    // parent_window[si - 1][g]: for coarse-token group g (row-major) at scale
    // si >= 1, the window at scale si-1 whose summary that group is.
    std::vector<std::vector<WindowId>> parent_window;

    std::size_t window_side_at(std::size_t si) const {
        return grid_side[si] > window_side ? window_side : grid_side[si];
    }
    std::size_t window_tokens_at(std::size_t si) const {
        const std::size_t w = window_side_at(si);
        return w * w;
    }
    std::size_t tokens_at(std::size_t si) const { return grid_side[si] * grid_side[si]; }
    std::size_t windows_at(std::size_t si) const {
        return windows_per_side[si] * windows_per_side[si];
    }
    std::size_t window_index(std::size_t si, WindowId w) const {
        return w.row * windows_per_side[si] + w.col;
    }

    // Side length of a coarse-token group at scale si >= 1 (= window_side / stride).
    std::size_t group_side_at(std::size_t si) const;
    std::size_t groups_per_side(std::size_t si) const;

    // Number of key tokens one scale-si query sees in top-down attention
    // (own window plus every coarser ancestor window).
    std::size_t top_down_key_tokens(std::size_t si) const;
};

// Validates grid/window/stride divisibility and builds the full layout.
// grid_side_1 is the finest grid's side in tokens.
LayoutSpec build_layout(std::size_t grid_side_1, std::size_t window_side, std::size_t stride);

// One-scale layout over the same grid: windowed attention with no coarser
// scales (the windowed-only ablation). Requires grid % window_side == 0 when
// the grid is larger than a window.
LayoutSpec single_scale_layout(std::size_t grid_side_1, std::size_t window_side,
                               std::size_t stride);

// ---------------------------------------------------------------------------
// window partition / merge

// Tokens of one window as rows (row-major within the window), for batch b.
Matrix window_tokens(const TensorMap& x, std::size_t b, WindowId w, std::size_t win_side);
void write_window_tokens(TensorMap& x, std::size_t b, WindowId w, std::size_t win_side,
                         const Matrix& tokens);
void add_window_tokens(TensorMap& x, std::size_t b, WindowId w, std::size_t win_side,
                       const Matrix& tokens);

// All windows of a map, batch-major then row-major over windows.
std::vector<Matrix> window_partition(const TensorMap& x, std::size_t win_side);
TensorMap window_merge(const std::vector<Matrix>& windows, std::size_t batch, std::size_t grid,
                       std::size_t channels, std::size_t win_side);

// Tokens of one coarse group (the summary of one parent window) as rows.
Matrix group_tokens(const TensorMap& x, std::size_t b, const LayoutSpec& layout, std::size_t si,
                    WindowId g);
void add_group_tokens(TensorMap& x, std::size_t b, const LayoutSpec& layout, std::size_t si,
                      WindowId g, const Matrix& tokens);

// ---------------------------------------------------------------------------
// single-block communication graph

// Nodes are (scale, row, col) tokens; edges follow information flow within one
// block: fine token -> its pooled coarse token (summarize), every token of a
// window -> every other token of that window (intra-window attention), coarse
// token -> each fine token whose ancestor window contains it (top-down read),
// fine token -> each coarse token of the group over its window (bottom-up read).
struct CommEdge {
    std::uint8_t kind = 0;  // 0 intra, 1 summarize, 2 top-down read, 3 bottom-up read
    std::size_t from_scale = 0, from_row = 0, from_col = 0;
    std::size_t to_scale = 0, to_row = 0, to_col = 0;
};

std::vector<CommEdge> communication_edges(const LayoutSpec& layout);

// BFS distances from one scale-0 token to every token at every scale.
// Uses window-granular frontier expansion; equivalent to BFS over
// communication_edges (cross-checked in tests). -1 marks unreachable.
std::vector<std::vector<int>> communication_distances(const LayoutSpec& layout,
                                                      std::size_t src_row, std::size_t src_col);

// Max over all ordered pairs of scale-0 tokens of their BFS distance.
int max_fine_pair_distance(const LayoutSpec& layout);

// Edge-list dump, one `scale,row,col -> scale,row,col` line per edge
// (scales numbered from 1, finest first).
std::string dump_edges(const LayoutSpec& layout);

}  // namespace atlas
