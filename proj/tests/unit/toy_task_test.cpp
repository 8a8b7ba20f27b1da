#include "atlas/toy_task.hpp"

#include <map>
#include <utility>
#include <vector>

#include "doctest.h"

using namespace atlas;

TEST_CASE("every sample carries two 2x2 marker patches in distinct windows") {
    const ToyTaskSpec spec{8, 4, 64, 123};
    const ToyBatch batch = make_toy_batch(spec);
    REQUIRE(batch.images.batch == 64);
    REQUIRE(batch.labels.size() == 64);
    const std::size_t wps = spec.image_side / spec.window_side;

    for (std::size_t n = 0; n < 64; ++n) {
        std::vector<std::pair<std::size_t, std::size_t>> marked;
        for (std::size_t r = 0; r < 8; ++r) {
            for (std::size_t c = 0; c < 8; ++c) {
                const double flag = batch.images.at(n, r, c, 0);
                const double t0 = batch.images.at(n, r, c, 1);
                const double t1 = batch.images.at(n, r, c, 2);
                if (flag == 0.0) {
                    CHECK(t0 == 0.0);
                    CHECK(t1 == 0.0);
                    continue;
                }
                CHECK(flag == 1.0);
                CHECK(t0 + t1 == 1.0);  // exactly one type channel set
                marked.push_back({r, c});
            }
        }
        // two patches of four tokens each
        REQUIRE(marked.size() == 8);

        // group the marked tokens by window: exactly two windows, and inside
        // each one a full 2x2 block on even offsets with a uniform type
        const auto win = [&](std::size_t r, std::size_t c) {
            return (r / spec.window_side) * wps + c / spec.window_side;
        };
        std::map<std::size_t, std::vector<std::pair<std::size_t, std::size_t>>> by_window;
        for (const auto& m : marked) by_window[win(m.first, m.second)].push_back(m);
        REQUIRE(by_window.size() == 2);

        std::vector<double> patch_types;
        for (const auto& [w, cells] : by_window) {
            REQUIRE(cells.size() == 4);
            const std::size_t r0 = cells[0].first, c0 = cells[0].second;
            CHECK(r0 % 2 == 0);
            CHECK(c0 % 2 == 0);
            for (std::size_t dr = 0; dr < 2; ++dr)
                for (std::size_t dc = 0; dc < 2; ++dc)
                    CHECK(batch.images.at(n, r0 + dr, c0 + dc, 0) == 1.0);
            const double type = batch.images.at(n, r0, c0, 2);
            for (const auto& [r, c] : cells) CHECK(batch.images.at(n, r, c, 2) == type);
            patch_types.push_back(type);
        }

        // label = 1 when the two patch types match
        const std::size_t expect = patch_types[0] == patch_types[1] ? 1 : 0;
        CHECK(batch.labels[n] == expect);
    }
}

TEST_CASE("generation is deterministic per seed and varies across seeds") {
    const ToyBatch a = make_toy_batch({8, 4, 32, 9});
    const ToyBatch b = make_toy_batch({8, 4, 32, 9});
    const ToyBatch c = make_toy_batch({8, 4, 32, 10});
    CHECK(a.images.data == b.images.data);
    CHECK(a.labels == b.labels);
    CHECK(a.images.data != c.images.data);
}

TEST_CASE("both labels occur") {
    const ToyBatch batch = make_toy_batch({8, 4, 128, 3});
    std::size_t ones = 0;
    for (std::size_t v : batch.labels) ones += v;
    CHECK(ones > 10);
    CHECK(ones < 118);
}

TEST_CASE("toy model config mirrors the task geometry") {
    const AtlasConfig cfg = toy_model_config("msa", 5);
    CHECK(cfg.image_side == 8);
    CHECK(cfg.patch_side == 1);
    CHECK(cfg.in_channels == 3);
    CHECK(cfg.num_classes == 2);
    CHECK(cfg.seed == 5);
    CHECK(mode_name(cfg) == "msa");
    const AtlasConfig win = toy_model_config("window", 5);
    CHECK(win.single_scale);
    // same total block budget as the two-scale stack
    std::size_t stack = 0, flat = 0;
    for (std::size_t d : cfg.depths) stack += d;
    for (std::size_t d : win.depths) flat += d;
    CHECK(stack == flat);
}
