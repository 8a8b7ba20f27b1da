#include <map>
#include <queue>
#include <random>
#include <tuple>

#include "atlas/errors.hpp"
#include "atlas/layout.hpp"
#include "doctest.h"

using namespace atlas;

TEST_CASE("scale ladder for the reference geometries") {
    const LayoutSpec two = build_layout(64, 16, 4);
    CHECK(two.num_scales == 2);
    CHECK(two.grid_side == std::vector<std::size_t>{64, 16});
    CHECK(two.windows_per_side == std::vector<std::size_t>{4, 1});
    CHECK(two.window_tokens_at(0) == 256);
    CHECK(two.window_tokens_at(1) == 256);

    const LayoutSpec one = build_layout(16, 16, 4);
    CHECK(one.num_scales == 1);
    CHECK(one.windows_per_side == std::vector<std::size_t>{1});

    const LayoutSpec three = build_layout(256, 16, 4);
    CHECK(three.num_scales == 3);
    CHECK(three.grid_side == std::vector<std::size_t>{256, 64, 16});

    // a grid smaller than the window is itself the only window
    const LayoutSpec tiny = build_layout(8, 16, 4);
    CHECK(tiny.num_scales == 1);
    CHECK(tiny.window_tokens_at(0) == 64);
}

TEST_CASE("stride smaller than window keeps intermediate scales window-aligned") {
    const LayoutSpec l = build_layout(16, 4, 2);
    CHECK(l.num_scales == 3);  // 16 -> 8 -> 4
    CHECK(l.grid_side == std::vector<std::size_t>{16, 8, 4});
    CHECK(l.windows_per_side == std::vector<std::size_t>{4, 2, 1});
    CHECK(l.group_side_at(1) == 2);
    CHECK(l.groups_per_side(1) == 4);
    // top-down keys: own window + one window per coarser scale
    CHECK(l.top_down_key_tokens(0) == 16 * 3);
    CHECK(l.top_down_key_tokens(2) == 16);
}

TEST_CASE("layout construction rejects invalid geometry") {
    CHECK_THROWS_AS(build_layout(60, 16, 4), ConfigError);  // grid not window-divisible
    CHECK_THROWS_AS(build_layout(64, 16, 3), ConfigError);  // window not stride-divisible
    CHECK_THROWS_AS(build_layout(64, 16, 1), ConfigError);  // stride must shrink
    CHECK_THROWS_AS(build_layout(0, 16, 4), ConfigError);
    CHECK_THROWS_AS(single_scale_layout(30, 16, 4), ConfigError);
}

TEST_CASE("ancestor chains nest windows by containment") {
    const LayoutSpec l = build_layout(64, 8, 2);  // grids 64, 32, 16, 8
    CHECK(l.num_scales == 4);
    for (std::size_t si = 0; si < l.num_scales; ++si) {
        for (std::size_t wr = 0; wr < l.windows_per_side[si]; ++wr) {
            for (std::size_t wc = 0; wc < l.windows_per_side[si]; ++wc) {
                const auto& chain = l.ancestor_window[si][l.window_index(si, {wr, wc})];
                CHECK(chain.size() == l.num_scales - si - 1);
                // window centers must stay inside each ancestor's region
                for (std::size_t a = 0; a < chain.size(); ++a) {
                    const std::size_t m = si + 1 + a;
                    const double shrink = double(l.grid_side[m]) / double(l.grid_side[si]);
                    const std::size_t mapped_row =
                        std::size_t(double(wr * l.window_side_at(si)) * shrink) /
                        l.window_side_at(m);
                    CHECK(chain[a].row == mapped_row);
                }
            }
        }
    }
}

TEST_CASE("parent window of a coarse group is the window it summarizes") {
    const LayoutSpec l = build_layout(16, 4, 2);
    // scale 1 (8x8): groups of side 2; group (g_r, g_c) summarizes fine window (g_r, g_c)
    for (std::size_t gr = 0; gr < l.groups_per_side(1); ++gr)
        for (std::size_t gc = 0; gc < l.groups_per_side(1); ++gc)
            CHECK(l.parent_window[0][gr * l.groups_per_side(1) + gc] == WindowId{gr, gc});
}

TEST_CASE("window partition and merge round-trip") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> dist;
    TensorMap x(2, 8, 8, 3);
    for (double& v : x.data) v = dist(rng);
    const auto windows = window_partition(x, 4);
    CHECK(windows.size() == 2 * 4);
    const TensorMap back = window_merge(windows, 2, 8, 3, 4);
    CHECK(back.data == x.data);
}

TEST_CASE("window token write and add target exactly one window") {
    TensorMap x(1, 8, 8, 1);
    Matrix block(16, 1);
    for (std::size_t i = 0; i < 16; ++i) block.at(i, 0) = double(i + 1);
    write_window_tokens(x, 0, {1, 0}, 4, block);
    CHECK(x.at(0, 4, 0, 0) == 1.0);
    CHECK(x.at(0, 7, 3, 0) == 16.0);
    CHECK(x.at(0, 0, 0, 0) == 0.0);
    add_window_tokens(x, 0, {1, 0}, 4, block);
    CHECK(x.at(0, 4, 0, 0) == 2.0);
    const Matrix out = window_tokens(x, 0, {1, 0}, 4);
    CHECK(out.at(0, 0) == 2.0);
    CHECK(out.at(15, 0) == 32.0);
}

TEST_CASE("group tokens address the stride-aligned coarse block") {
    const LayoutSpec l = build_layout(16, 4, 2);
    TensorMap coarse(1, 8, 8, 1);
    for (std::size_t r = 0; r < 8; ++r)
        for (std::size_t c = 0; c < 8; ++c) coarse.at(0, r, c, 0) = double(r * 8 + c);
    const Matrix g = group_tokens(coarse, 0, l, 1, {2, 1});
    CHECK(g.rows == 4);
    CHECK(g.at(0, 0) == double(4 * 8 + 2));
    CHECK(g.at(3, 0) == double(5 * 8 + 3));
}

namespace {

// independent shortest-path check: plain BFS over the explicit edge list
int edge_list_distance(const LayoutSpec& layout, std::size_t from_row, std::size_t from_col,
                       std::size_t to_row, std::size_t to_col) {
    using Node = std::tuple<std::size_t, std::size_t, std::size_t>;
    std::multimap<Node, Node> adj;
    for (const CommEdge& e : communication_edges(layout))
        adj.insert({{e.from_scale, e.from_row, e.from_col}, {e.to_scale, e.to_row, e.to_col}});
    std::map<Node, int> dist;
    std::queue<Node> frontier;
    const Node src{0, from_row, from_col};
    dist[src] = 0;
    frontier.push(src);
    while (!frontier.empty()) {
        const Node cur = frontier.front();
        frontier.pop();
        const auto [lo, hi] = adj.equal_range(cur);
        for (auto it = lo; it != hi; ++it) {
            if (dist.count(it->second)) continue;
            dist[it->second] = dist[cur] + 1;
            frontier.push(it->second);
        }
    }
    const auto it = dist.find(Node{0, to_row, to_col});
    return it == dist.end() ? -1 : it->second;
}

}  // namespace

TEST_CASE("window-granular BFS equals BFS over the explicit edge list") {
    const LayoutSpec l = build_layout(16, 4, 2);
    const auto dists = communication_distances(l, 0, 0);
    for (std::size_t r = 0; r < 16; r += 5)
        for (std::size_t c = 0; c < 16; c += 7)
            CHECK(dists[0][r * 16 + c] == edge_list_distance(l, 0, 0, r, c));
    // and from an off-corner source
    const auto d2 = communication_distances(l, 9, 14);
    CHECK(d2[0][0] == edge_list_distance(l, 9, 14, 0, 0));
    CHECK(d2[0][3 * 16 + 12] == edge_list_distance(l, 9, 14, 3, 12));
}

TEST_CASE("single-scale layout disconnects distinct windows") {
    const LayoutSpec l = single_scale_layout(8, 4, 2);
    CHECK(l.num_scales == 1);
    CHECK(l.windows_per_side[0] == 2);
    const auto dists = communication_distances(l, 0, 0);
    CHECK(dists[0][1] == 1);             // same window, one attention hop
    CHECK(dists[0][0 * 8 + 5] == -1);    // different window, unreachable
    CHECK(dists[0][7 * 8 + 7] == -1);
}

TEST_CASE("max fine-pair distance stays within one round trip through the top scale") {
    for (auto [grid, k, s] : {std::tuple<std::size_t, std::size_t, std::size_t>{64, 16, 4},
                              {16, 4, 2},
                              {32, 4, 2},
                              {64, 8, 2}}) {
        const LayoutSpec l = build_layout(grid, k, s);
        const int bound = int(2 * l.num_scales - 1);
        const int measured = max_fine_pair_distance(l);
        CHECK(measured >= 1);
        CHECK(measured <= bound);
    }
}

TEST_CASE("edge dump lines carry both endpoints in scale,row,col form") {
    const LayoutSpec l = build_layout(8, 4, 2);
    const std::string dump = dump_edges(l);
    CHECK(dump.find("1,0,0 -> 1,0,1") != std::string::npos);  // intra-window pair
    CHECK(dump.find("1,0,0 -> 2,0,0") != std::string::npos);  // summarize up
    CHECK(dump.find("2,0,0 -> 1,0,0") != std::string::npos);  // top-down read
}
