#include <random>

#include "atlas/layout.hpp"
#include "atlas/msa_block.hpp"
#include "atlas/oracle.hpp"
#include "atlas/qkv_cache.hpp"
#include "doctest.h"

using namespace atlas;

namespace {

MsaBlockParams seeded_params(std::size_t scales, std::size_t channels, std::size_t heads,
                             std::uint64_t seed) {
    MsaBlockParams p = make_msa_block_params(scales, channels, heads, 2 * channels);
    std::mt19937_64 rng(seed);
    init_msa_block_params(p, rng);
    return p;
}

std::vector<TensorMap> seeded_maps(const LayoutSpec& layout, std::size_t batch,
                                   std::size_t channels, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist;
    std::vector<TensorMap> maps;
    for (std::size_t si = 0; si < layout.num_scales; ++si) {
        TensorMap m(batch, layout.grid_side[si], layout.grid_side[si], channels);
        for (double& v : m.data) v = dist(rng);
        maps.push_back(std::move(m));
    }
    return maps;
}

}  // namespace

TEST_CASE("forward is deterministic: same inputs, same bits") {
    const LayoutSpec layout = build_layout(8, 4, 2);
    const MsaBlockParams params = seeded_params(2, 8, 2, 9);
    const CommunicationMode mode{true, true, true};
    auto a = seeded_maps(layout, 2, 8, 21);
    auto b = a;
    QkvCache ca, cb;
    msa_block_forward(layout, params, mode, a, ca);
    msa_block_forward(layout, params, mode, b, cb);
    for (std::size_t si = 0; si < a.size(); ++si) CHECK(a[si].data == b[si].data);
}

TEST_CASE("structural counter walk matches the executed forward") {
    for (const CommunicationMode mode :
         {CommunicationMode{true, true, true}, CommunicationMode{true, true, false},
          CommunicationMode{true, false, true}, CommunicationMode{true, false, false}}) {
        for (auto [grid, k, s] : {std::tuple<std::size_t, std::size_t, std::size_t>{8, 4, 2},
                                  {16, 4, 2},
                                  {16, 8, 2}}) {
            const LayoutSpec layout = build_layout(grid, k, s);
            const std::size_t channels = 6, heads = 2, batch = 2;
            const MsaBlockParams params =
                seeded_params(layout.num_scales, channels, heads, grid + k);
            auto maps = seeded_maps(layout, batch, channels, grid * 31 + k);

            OpCounter measured;
            QkvCache cache;
            msa_block_forward(layout, params, mode, maps, cache, nullptr, &measured);

            OpCounter predicted;
            msa_block_count(layout, mode, batch, channels, heads, 2 * channels, predicted);

            CHECK(measured.attn_pairs == predicted.attn_pairs);
            CHECK(measured.attn_queries == predicted.attn_queries);
            CHECK(measured.macs == predicted.macs);
            CHECK(measured.proj_calls == predicted.proj_calls);
            CHECK(measured.cache_hits == predicted.cache_hits);
            CHECK(measured.cache_misses == predicted.cache_misses);
        }
    }
}

TEST_CASE("turning a pathway off changes the output") {
    const LayoutSpec layout = build_layout(8, 4, 2);
    const MsaBlockParams params = seeded_params(2, 8, 2, 40);
    auto base = seeded_maps(layout, 1, 8, 41);

    auto full = base;
    auto no_td = base;
    auto no_bu = base;
    QkvCache c1, c2, c3;
    msa_block_forward(layout, params, {true, true, true}, full, c1);
    msa_block_forward(layout, params, {true, false, true}, no_td, c2);
    msa_block_forward(layout, params, {true, true, false}, no_bu, c3);
    CHECK(full[0].data != no_td[0].data);  // fine scale loses ancestor keys
    CHECK(full[1].data != no_bu[1].data);  // coarse scale loses the write-back
}

TEST_CASE("without summarize or top-down, coarse maps cannot see fine content") {
    const LayoutSpec layout = build_layout(8, 4, 2);
    const MsaBlockParams params = seeded_params(2, 8, 2, 50);
    auto a = seeded_maps(layout, 1, 8, 51);
    auto b = a;
    // perturb only the fine map of b
    b[0].at(0, 3, 5, 2) += 1.5;
    const CommunicationMode isolated{false, false, false};
    QkvCache ca, cb;
    msa_block_forward(layout, params, isolated, a, ca);
    msa_block_forward(layout, params, isolated, b, cb);
    CHECK(a[1].data == b[1].data);   // coarse identical
    CHECK(a[0].data != b[0].data);   // fine felt its own perturbation
}

TEST_CASE("optimized block agrees with the token-loop reference bitwise") {
    for (auto [grid, k] : {std::pair<std::size_t, std::size_t>{8, 4}, {16, 8}}) {
        const LayoutSpec layout = build_layout(grid, k, 2);
        const MsaBlockParams params = seeded_params(layout.num_scales, 4, 2, grid * 7 + k);
        auto fast = seeded_maps(layout, 1, 4, grid * 11 + k);
        auto slow = fast;
        const CommunicationMode mode{true, true, true};
        QkvCache cache;
        msa_block_forward(layout, params, mode, fast, cache);
        oracle::naive_msa_forward(layout, params, mode, slow);
        for (std::size_t si = 0; si < fast.size(); ++si) CHECK(fast[si].data == slow[si].data);
    }
}
