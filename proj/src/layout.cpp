#include "atlas/layout.hpp"

#include <deque>
#include <sstream>

#include "atlas/errors.hpp"

namespace atlas {

std::size_t LayoutSpec::group_side_at(std::size_t si) const {
    internal_check(si >= 1 && si < num_scales, "group_side_at: scale out of range");
    // A parent window at scale si-1 always has the full k*k shape (coarser
    // scales would not exist otherwise), so its summary is k/stride on a side.
    return window_side / stride;
}

std::size_t LayoutSpec::groups_per_side(std::size_t si) const {
    internal_check(si >= 1 && si < num_scales, "groups_per_side: scale out of range");
    return windows_per_side[si - 1];
}

std::size_t LayoutSpec::top_down_key_tokens(std::size_t si) const {
    std::size_t total = 0;
    for (std::size_t m = si; m < num_scales; ++m) total += window_tokens_at(m);
    return total;
}

LayoutSpec build_layout(std::size_t grid_side_1, std::size_t window_side, std::size_t stride) {
    config_check(grid_side_1 >= 1, "grid side must be at least 1");
    config_check(window_side >= 1, "window side must be at least 1");
    config_check(stride >= 2, "summarize stride must be at least 2");
    config_check(window_side % stride == 0, "window side must be divisible by the stride");

    LayoutSpec layout;
    layout.window_side = window_side;
    layout.stride = stride;

    std::size_t side = grid_side_1;
    layout.grid_side.push_back(side);
    while (side > window_side) {
        config_check(side % window_side == 0,
                     "grid side " + std::to_string(side) +
                         " is not divisible by the window side");
        config_check(side % stride == 0,
                     "grid side " + std::to_string(side) + " is not divisible by the stride");
        side /= stride;
        layout.grid_side.push_back(side);
    }
    layout.num_scales = layout.grid_side.size();

    for (std::size_t si = 0; si < layout.num_scales; ++si) {
        const std::size_t g = layout.grid_side[si];
        layout.windows_per_side.push_back(g > window_side ? g / window_side : 1);
    }

    const std::size_t L = layout.num_scales;
    layout.ancestor_window.resize(L);
    for (std::size_t si = 0; si < L; ++si) {
        const std::size_t wps = layout.windows_per_side[si];
        layout.ancestor_window[si].resize(wps * wps);
        for (std::size_t a = 0; a < wps; ++a) {
            for (std::size_t b = 0; b < wps; ++b) {
                auto& chain = layout.ancestor_window[si][a * wps + b];
                std::size_t r = a, c = b;
                for (std::size_t m = si + 1; m < L; ++m) {
                    // Window (r, c) pools into window (r/s, c/s) one scale up,
                    // clamped to the window count (coarsest grids hold a
                    // single window covering everything).
                    r /= layout.stride;
                    c /= layout.stride;
                    const std::size_t wps_m = layout.windows_per_side[m];
                    if (r >= wps_m) r = wps_m - 1;
                    if (c >= wps_m) c = wps_m - 1;
                    chain.push_back(WindowId{r, c});
                }
            }
        }
    }

    layout.parent_window.resize(L >= 1 ? L - 1 : 0);
    for (std::size_t si = 1; si < L; ++si) {
        const std::size_t gps = layout.groups_per_side(si);
        auto& parents = layout.parent_window[si - 1];
        parents.resize(gps * gps);
        for (std::size_t a = 0; a < gps; ++a)
            for (std::size_t b = 0; b < gps; ++b) parents[a * gps + b] = WindowId{a, b};
    }
    return layout;
}

LayoutSpec single_scale_layout(std::size_t grid_side_1, std::size_t window_side,
                               std::size_t stride) {
    config_check(grid_side_1 >= 1, "grid side must be at least 1");
    config_check(window_side >= 1, "window side must be at least 1");
    config_check(grid_side_1 <= window_side || grid_side_1 % window_side == 0,
                 "grid side " + std::to_string(grid_side_1) +
                     " is not divisible by the window side");

    LayoutSpec layout;
    layout.window_side = window_side;
    layout.stride = stride;
    layout.num_scales = 1;
    layout.grid_side.push_back(grid_side_1);
    layout.windows_per_side.push_back(grid_side_1 > window_side ? grid_side_1 / window_side : 1);
    layout.ancestor_window.resize(1);
    layout.ancestor_window[0].assign(layout.windows_at(0), {});
    return layout;
}

// ---------------------------------------------------------------------------

Matrix window_tokens(const TensorMap& x, std::size_t b, WindowId w, std::size_t win_side) {
    internal_check((w.row + 1) * win_side <= x.rows && (w.col + 1) * win_side <= x.cols,
                   "window_tokens: window outside the grid");
    Matrix out(win_side * win_side, x.channels);
    for (std::size_t i = 0; i < win_side; ++i) {
        for (std::size_t j = 0; j < win_side; ++j) {
            const double* src = x.token(b, (w.row * win_side + i) * x.cols + (w.col * win_side + j));
            double* dst = out.row(i * win_side + j);
            for (std::size_t ch = 0; ch < x.channels; ++ch) dst[ch] = src[ch];
        }
    }
    return out;
}

void write_window_tokens(TensorMap& x, std::size_t b, WindowId w, std::size_t win_side,
                         const Matrix& tokens) {
    internal_check(tokens.rows == win_side * win_side && tokens.cols == x.channels,
                   "write_window_tokens: shape mismatch");
    for (std::size_t i = 0; i < win_side; ++i) {
        for (std::size_t j = 0; j < win_side; ++j) {
            const double* src = tokens.row(i * win_side + j);
            double* dst = &x.at(b, w.row * win_side + i, w.col * win_side + j, 0);
            for (std::size_t ch = 0; ch < x.channels; ++ch) dst[ch] = src[ch];
        }
    }
}

void add_window_tokens(TensorMap& x, std::size_t b, WindowId w, std::size_t win_side,
                       const Matrix& tokens) {
    internal_check(tokens.rows == win_side * win_side && tokens.cols == x.channels,
                   "add_window_tokens: shape mismatch");
    for (std::size_t i = 0; i < win_side; ++i) {
        for (std::size_t j = 0; j < win_side; ++j) {
            const double* src = tokens.row(i * win_side + j);
            double* dst = &x.at(b, w.row * win_side + i, w.col * win_side + j, 0);
            for (std::size_t ch = 0; ch < x.channels; ++ch) dst[ch] += src[ch];
        }
    }
}

std::vector<Matrix> window_partition(const TensorMap& x, std::size_t win_side) {
    internal_check(win_side >= 1 && x.rows % win_side == 0 && x.cols % win_side == 0,
                   "window_partition: grid not divisible by window side");
    const std::size_t wr = x.rows / win_side, wc = x.cols / win_side;
    std::vector<Matrix> out;
    out.reserve(x.batch * wr * wc);
    for (std::size_t b = 0; b < x.batch; ++b)
        for (std::size_t a = 0; a < wr; ++a)
            for (std::size_t c = 0; c < wc; ++c)
                out.push_back(window_tokens(x, b, WindowId{a, c}, win_side));
    return out;
}

TensorMap window_merge(const std::vector<Matrix>& windows, std::size_t batch, std::size_t grid,
                       std::size_t channels, std::size_t win_side) {
    internal_check(grid % win_side == 0, "window_merge: grid not divisible by window side");
    const std::size_t wps = grid / win_side;
    internal_check(windows.size() == batch * wps * wps, "window_merge: window count mismatch");
    TensorMap out(batch, grid, grid, channels);
    std::size_t idx = 0;
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t a = 0; a < wps; ++a)
            for (std::size_t c = 0; c < wps; ++c)
                write_window_tokens(out, b, WindowId{a, c}, win_side, windows[idx++]);
    return out;
}

Matrix group_tokens(const TensorMap& x, std::size_t b, const LayoutSpec& layout, std::size_t si,
                    WindowId g) {
    const std::size_t gs = layout.group_side_at(si);
    internal_check(x.rows == layout.grid_side[si] && x.cols == layout.grid_side[si],
                   "group_tokens: map does not match the scale grid");
    Matrix out(gs * gs, x.channels);
    for (std::size_t i = 0; i < gs; ++i) {
        for (std::size_t j = 0; j < gs; ++j) {
            const double* src = x.token(b, (g.row * gs + i) * x.cols + (g.col * gs + j));
            double* dst = out.row(i * gs + j);
            for (std::size_t ch = 0; ch < x.channels; ++ch) dst[ch] = src[ch];
        }
    }
    return out;
}

void add_group_tokens(TensorMap& x, std::size_t b, const LayoutSpec& layout, std::size_t si,
                      WindowId g, const Matrix& tokens) {
    const std::size_t gs = layout.group_side_at(si);
    internal_check(tokens.rows == gs * gs && tokens.cols == x.channels,
                   "add_group_tokens: shape mismatch");
    for (std::size_t i = 0; i < gs; ++i) {
        for (std::size_t j = 0; j < gs; ++j) {
            const double* src = tokens.row(i * gs + j);
            double* dst = &x.at(b, g.row * gs + i, g.col * gs + j, 0);
            for (std::size_t ch = 0; ch < x.channels; ++ch) dst[ch] += src[ch];
        }
    }
}

// ---------------------------------------------------------------------------
// communication graph

std::vector<CommEdge> communication_edges(const LayoutSpec& layout) {
    std::vector<CommEdge> edges;
    const std::size_t L = layout.num_scales;
    const std::size_t s = layout.stride;

    auto push = [&](std::uint8_t kind, std::size_t fs, std::size_t fr, std::size_t fc,
                    std::size_t ts, std::size_t tr, std::size_t tc) {
        edges.push_back(CommEdge{kind, fs, fr, fc, ts, tr, tc});
    };

    for (std::size_t si = 0; si < L; ++si) {
        const std::size_t ws = layout.window_side_at(si);
        const std::size_t wps = layout.windows_per_side[si];
        // intra-window attention: every ordered token pair inside a window
        for (std::size_t wa = 0; wa < wps; ++wa) {
            for (std::size_t wb = 0; wb < wps; ++wb) {
                for (std::size_t i = 0; i < ws * ws; ++i) {
                    for (std::size_t j = 0; j < ws * ws; ++j) {
                        if (i == j) continue;
                        push(0, si, wa * ws + i / ws, wb * ws + i % ws,  //
                             si, wa * ws + j / ws, wb * ws + j % ws);
                    }
                }
            }
        }
        if (si + 1 < L) {
            const std::size_t g = layout.grid_side[si];
            // summarize: each fine token feeds its pooled coarse token
            for (std::size_t r = 0; r < g; ++r)
                for (std::size_t c = 0; c < g; ++c) push(1, si, r, c, si + 1, r / s, c / s);
            // bottom-up read: each token of a parent window feeds every coarse
            // token of the group summarizing that window
            const std::size_t gs = layout.group_side_at(si + 1);
            for (std::size_t wa = 0; wa < wps; ++wa) {
                for (std::size_t wb = 0; wb < wps; ++wb) {
                    for (std::size_t i = 0; i < ws; ++i)
                        for (std::size_t j = 0; j < ws; ++j)
                            for (std::size_t gi = 0; gi < gs; ++gi)
                                for (std::size_t gj = 0; gj < gs; ++gj)
                                    push(3, si, wa * ws + i, wb * ws + j,  //
                                         si + 1, wa * gs + gi, wb * gs + gj);
                }
            }
        }
        // top-down read: every token of an ancestor window feeds each token of
        // the reading window
        for (std::size_t wa = 0; wa < wps; ++wa) {
            for (std::size_t wb = 0; wb < wps; ++wb) {
                const auto& chain = layout.ancestor_window[si][wa * wps + wb];
                for (std::size_t m = si + 1; m < L; ++m) {
                    const WindowId anc = chain[m - si - 1];
                    const std::size_t aws = layout.window_side_at(m);
                    for (std::size_t ai = 0; ai < aws; ++ai)
                        for (std::size_t aj = 0; aj < aws; ++aj)
                            for (std::size_t i = 0; i < ws; ++i)
                                for (std::size_t j = 0; j < ws; ++j)
                                    push(2, m, anc.row * aws + ai, anc.col * aws + aj,  //
                                         si, wa * ws + i, wb * ws + j);
                }
            }
        }
    }
    return edges;
}

namespace {

// Window-granular BFS state shared across sources when sweeping all pairs.
struct DescendantIndex {
    // For window w at scale si, every (finer scale, window index) whose
    // ancestor chain passes through w.
    std::vector<std::vector<std::vector<std::pair<std::size_t, std::size_t>>>> at;

    explicit DescendantIndex(const LayoutSpec& layout) {
        const std::size_t L = layout.num_scales;
        at.resize(L);
        for (std::size_t si = 0; si < L; ++si) at[si].resize(layout.windows_at(si));
        for (std::size_t si = 0; si < L; ++si) {
            for (std::size_t w = 0; w < layout.windows_at(si); ++w) {
                const auto& chain = layout.ancestor_window[si][w];
                for (std::size_t m = si + 1; m < L; ++m) {
                    const WindowId anc = chain[m - si - 1];
                    at[m][layout.window_index(m, anc)].push_back({si, w});
                }
            }
        }
    }
};

std::vector<std::vector<int>> bfs_from(const LayoutSpec& layout, const DescendantIndex& desc,
                                       std::size_t src_row, std::size_t src_col) {
    const std::size_t L = layout.num_scales;
    const std::size_t s = layout.stride;
    std::vector<std::vector<int>> dist(L);
    std::vector<std::vector<char>> window_seen(L);
    for (std::size_t si = 0; si < L; ++si) {
        dist[si].assign(layout.tokens_at(si), -1);
        window_seen[si].assign(layout.windows_at(si), 0);
    }

    std::deque<std::pair<std::size_t, std::size_t>> queue;  // (scale, token index)
    auto relax = [&](std::size_t si, std::size_t r, std::size_t c, int d) {
        const std::size_t idx = r * layout.grid_side[si] + c;
        if (dist[si][idx] == -1) {
            dist[si][idx] = d;
            queue.push_back({si, idx});
        }
    };

    relax(0, src_row, src_col, 0);
    while (!queue.empty()) {
        const auto [si, idx] = queue.front();
        queue.pop_front();
        const int d = dist[si][idx];
        const std::size_t g = layout.grid_side[si];
        const std::size_t r = idx / g, c = idx % g;

        // summarize edge (the only token-granular edge class)
        if (si + 1 < L) relax(si + 1, r / s, c / s, d + 1);

        // Remaining edge classes connect *every* token of this window to fixed
        // target sets, so the first visit to any token of the window settles
        // them all at distance d+1.
        const std::size_t ws = layout.window_side_at(si);
        const WindowId w{r / ws, c / ws};
        const std::size_t widx = layout.window_index(si, w);
        if (window_seen[si][widx]) continue;
        window_seen[si][widx] = 1;

        // intra-window attention
        for (std::size_t i = 0; i < ws; ++i)
            for (std::size_t j = 0; j < ws; ++j) relax(si, w.row * ws + i, w.col * ws + j, d + 1);
        // bottom-up read: the group summarizing this window
        if (si + 1 < L) {
            const std::size_t gs = layout.group_side_at(si + 1);
            for (std::size_t gi = 0; gi < gs; ++gi)
                for (std::size_t gj = 0; gj < gs; ++gj)
                    relax(si + 1, w.row * gs + gi, w.col * gs + gj, d + 1);
        }
        // top-down read: every window whose ancestor chain passes through this one
        for (const auto& [fsi, fw] : desc.at[si][widx]) {
            const std::size_t fws = layout.window_side_at(fsi);
            const std::size_t fwps = layout.windows_per_side[fsi];
            const std::size_t fa = fw / fwps, fb = fw % fwps;
            for (std::size_t i = 0; i < fws; ++i)
                for (std::size_t j = 0; j < fws; ++j)
                    relax(fsi, fa * fws + i, fb * fws + j, d + 1);
        }
    }
    return dist;
}

}  // namespace

std::vector<std::vector<int>> communication_distances(const LayoutSpec& layout,
                                                      std::size_t src_row, std::size_t src_col) {
    const DescendantIndex desc(layout);
    return bfs_from(layout, desc, src_row, src_col);
}

int max_fine_pair_distance(const LayoutSpec& layout) {
    const DescendantIndex desc(layout);
    const std::size_t g = layout.grid_side[0];
    int best = 0;
    for (std::size_t r = 0; r < g; ++r) {
        for (std::size_t c = 0; c < g; ++c) {
            const auto dist = bfs_from(layout, desc, r, c);
            for (int d : dist[0]) {
                internal_check(d >= 0, "communication graph is not connected");
                if (d > best) best = d;
            }
        }
    }
    return best;
}

std::string dump_edges(const LayoutSpec& layout) {
    std::ostringstream out;
    for (const CommEdge& e : communication_edges(layout)) {
        out << e.from_scale + 1 << ',' << e.from_row << ',' << e.from_col << " -> "
            << e.to_scale + 1 << ',' << e.to_row << ',' << e.to_col << '\n';
    }
    return out.str();
}

}  // namespace atlas
