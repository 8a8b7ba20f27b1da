// Acceptance gate: nine independently runnable checks, one pass/fail line
// each. `--criterion N` selects a single check; the default runs them all.
// Exit code 0 only if every selected check passes.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "CLI11.hpp"
#include "atlas/atlas_model.hpp"
#include "atlas/bench.hpp"
#include "atlas/equiv_suite.hpp"
#include "atlas/gradcheck.hpp"
#include "atlas/gradcheck_suite.hpp"
#include "atlas/layout.hpp"
#include "atlas/msa_block.hpp"
#include "atlas/oracle.hpp"
#include "atlas/qkv_cache.hpp"
#include "atlas/summarize.hpp"
#include "atlas/toy_task.hpp"

namespace {

using namespace atlas;
using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

// ---------------------------------------------------------------------------
// 1. optimized block vs token-loop reference, bitwise, full fixture family

Outcome criterion_equivalence() {
    const auto start = Clock::now();
    const std::vector<EquivCase> cases = run_equiv_suite(2024);
    const double elapsed = seconds_since(start);
    std::size_t mismatched = 0;
    for (const auto& c : cases)
        if (!c.identical) ++mismatched;
    Outcome out;
    out.pass = cases.size() >= 50 && mismatched == 0 && elapsed < 60.0;
    out.detail = std::to_string(cases.size()) + " fixtures, " + std::to_string(mismatched) +
                 " mismatched, " + fmt(elapsed) + "s (budget 60s)";
    return out;
}

// ---------------------------------------------------------------------------
// 2. degeneracies: coarsest-scale attention is windowed self-attention; the
//    one-scale full-window model is a plain transformer classifier

Outcome criterion_degeneracy() {
    std::size_t checked = 0, exact = 0;

    // (a) in a two-scale block without the upward pathway, the coarse map's
    // final value is exactly a windowed transformer block applied to the
    // post-summarize coarse map: the top scale has no ancestors to read.
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        const LayoutSpec layout = build_layout(8, 4, 2);
        std::mt19937_64 rng(seed);
        const MsaBlockParams params = random_block_params(layout, 8, 2, rng);
        auto maps = random_maps(layout, 2, 8, rng);

        TensorMap expected = maps[1];
        add_in_place(expected, summarize(maps[0], layout.stride));
        oracle::naive_windowed_block(expected, layout.window_side_at(1), params.top_down[1],
                                     params.ffn[1], params.heads);

        QkvCache cache;
        msa_block_forward(layout, params, {true, true, false}, maps, cache);
        ++checked;
        if (maps[1].data == expected.data) ++exact;
    }

    // ...and a one-scale grid the size of its window is exactly that block.
    for (std::uint64_t seed : {21u, 22u}) {
        const LayoutSpec layout = build_layout(4, 4, 2);
        std::mt19937_64 rng(seed);
        const MsaBlockParams params = random_block_params(layout, 6, 2, rng);
        auto maps = random_maps(layout, 1, 6, rng);
        TensorMap expected = maps[0];
        oracle::naive_windowed_block(expected, 4, params.top_down[0], params.ffn[0], params.heads);
        QkvCache cache;
        msa_block_forward(layout, params, {true, true, true}, maps, cache);
        ++checked;
        if (maps[0].data == expected.data) ++exact;
    }

    // (b) one scale, window as wide as the token grid: the whole model matches
    // an independently written full-attention classifier bit for bit.
    for (std::uint64_t seed : {31u, 32u, 33u}) {
        AtlasConfig cfg;
        cfg.image_side = 16;
        cfg.patch_side = 2;
        cfg.in_channels = 3;
        cfg.window_side = 8;  // grid is 16/2 = 8... window 8 = whole grid
        cfg.stride = 2;
        cfg.channels = 8;
        cfg.heads = 2;
        cfg.ffn_mult = 2;
        cfg.depths = {2};
        cfg.num_classes = 3;
        cfg.seed = seed;
        AtlasParams params = make_atlas_params(cfg);
        init_atlas_params(params);

        std::mt19937_64 rng(seed * 7 + 1);
        std::normal_distribution<double> dist;
        TensorMap images(2, cfg.image_side, cfg.image_side, cfg.in_channels);
        for (double& v : images.data) v = dist(rng);

        QkvCache cache;
        const Matrix fast = atlas_forward(params, images, cache);
        const Matrix slow = oracle::naive_vit_forward(params, images);
        ++checked;
        if (fast.data == slow.data) ++exact;
    }

    Outcome out;
    out.pass = checked == exact;
    out.detail = std::to_string(exact) + "/" + std::to_string(checked) +
                 " degeneracy fixtures bitwise equal";
    return out;
}

// ---------------------------------------------------------------------------
// 3. finite-difference gradient verification, ops + end-to-end model

Outcome criterion_gradients() {
    const auto start = Clock::now();
    const GradCheckReport report = run_gradcheck_suite(2024);
    const double elapsed = seconds_since(start);
    std::size_t failing = 0;
    for (const auto& e : report.entries)
        if (!e.failing.empty()) ++failing;
    // the headline rel-err excludes coordinates whose absolute difference sits
    // under the step-noise floor: structurally-zero gradients (a bias shared
    // by every key) compare ~1e-10 of central-difference noise against exact
    // zero, which is agreement, not error
    double worst_rel = 0.0;
    for (const auto& e : report.entries)
        if (e.max_abs_err > report.abs_floor) worst_rel = std::max(worst_rel, e.max_rel_err);
    Outcome out;
    out.pass = report.passed() && elapsed < 300.0;
    out.detail = std::to_string(report.entries.size()) + " groups, " + std::to_string(failing) +
                 " failing, max_rel=" + fmt(worst_rel) + " above the noise floor, " + fmt(elapsed) +
                 "s (budget 300s)";
    return out;
}

// ---------------------------------------------------------------------------
// 4. complexity: counters equal the closed form; wall time scales sub-8x per
//    token quadrupling

Outcome criterion_complexity() {
    const std::size_t k = 16, s = 4;
    const CommunicationMode mode{true, true, true};
    std::ostringstream detail;
    bool pass = true;

    // the scale count comes from repeatedly dividing the grid side by the
    // stride until it fits one window
    const auto ladder_scales = [&](std::size_t side) {
        std::size_t scales = 1;
        while (side > k) {
            side /= s;
            ++scales;
        }
        return scales;
    };

    std::vector<double> wall;  // one entry per grid that ran a real forward
    for (const std::size_t grid : {64u, 128u, 256u, 512u}) {
        const LayoutSpec layout = build_layout(grid, k, s);
        const std::size_t expect_scales = ladder_scales(grid);
        if (layout.num_scales != expect_scales) {
            pass = false;
            detail << "grid " << grid << ": scale ladder mismatch; ";
            continue;
        }

        // closed form: sum over scales of N_l * (own + ancestor window tokens),
        // plus the bottom-up re-read of each parent window
        std::uint64_t closed = 0;
        for (std::size_t si = 0; si < layout.num_scales; ++si) {
            std::uint64_t keys = 0;
            for (std::size_t m = si; m < layout.num_scales; ++m)
                keys += layout.window_tokens_at(m);
            closed += std::uint64_t(layout.tokens_at(si)) * keys;
        }
        for (std::size_t si = 1; si < layout.num_scales; ++si)
            closed += std::uint64_t(layout.tokens_at(si)) * layout.window_tokens_at(si - 1);

        OpCounter counted;
        msa_block_count(layout, mode, 1, 64, 4, 256, counted);
        const bool equal = counted.attn_pairs == closed;
        pass = pass && equal;
        detail << "grid " << grid << ": L=" << layout.num_scales << " pairs=" << counted.attn_pairs
               << (equal ? " == closed form" : " != closed form") << "; ";

        // when every scale still fills a full window, the uniform form
        // N_l*K*(L-l+1) + N_l*K from the complexity claim applies verbatim
        bool uniform_windows = true;
        for (std::size_t si = 0; si < layout.num_scales; ++si)
            uniform_windows = uniform_windows && layout.window_side_at(si) == k;
        if (uniform_windows) {
            const std::uint64_t K = k * k;
            std::uint64_t literal = 0;
            for (std::size_t si = 0; si < layout.num_scales; ++si)
                literal += std::uint64_t(layout.tokens_at(si)) * K * (layout.num_scales - si);
            for (std::size_t si = 1; si < layout.num_scales; ++si)
                literal += std::uint64_t(layout.tokens_at(si)) * K;
            if (literal != counted.attn_pairs) {
                pass = false;
                detail << "grid " << grid << ": uniform-window form broke; ";
            }
        }

        if (grid <= 256) {
            const BenchRow row = bench_block(grid, k, s, 64, 4, 4, mode, true, 2, 2024);
            wall.push_back(row.wall_seconds);
        }
    }

    for (std::size_t i = 1; i < wall.size(); ++i) {
        const double ratio = wall[i] / wall[i - 1];
        const bool ok = ratio < 8.0;
        pass = pass && ok;
        detail << "t(4N)/t(N)=" << fmt(ratio) << (ok ? " < 8" : " >= 8") << "; ";
    }

    Outcome out;
    out.pass = pass;
    out.detail = detail.str();
    return out;
}

// ---------------------------------------------------------------------------
// 5. receptive field: every fine-token pair communicates through one block;
//    the windowed ablation never crosses a window boundary

Outcome criterion_receptive_field() {
    const auto start = Clock::now();
    // 64 channels keep the max-pool route generic: an infinitesimal probe only
    // passes through the pooling edge on channels where the source token holds
    // the cell argmax, and with 64 independent channels every token wins some
    const std::size_t grid = 16, k = 8, channels = 64, heads = 2;
    bool pass = true;
    std::ostringstream detail;
    double weakest = 1e300;

    for (std::uint64_t seed : {1u, 2u, 3u}) {
        // multi-scale block: bump every fine token in turn, expect every fine
        // token of both scales to move
        const LayoutSpec layout = build_layout(grid, k, 2);
        std::mt19937_64 rng(seed);
        const MsaBlockParams params = random_block_params(layout, channels, heads, rng);
        const auto maps = random_maps(layout, 1, channels, rng);
        const auto forward = [&](const std::vector<TensorMap>& input) {
            std::vector<TensorMap> work = input;
            QkvCache cache;
            msa_block_forward(layout, params, {true, true, true}, work, cache);
            return work;
        };
        std::size_t dead_pairs = 0;
        for (std::size_t r = 0; r < grid && dead_pairs == 0; ++r) {
            for (std::size_t c = 0; c < grid && dead_pairs == 0; ++c) {
                const auto sens = receptive_field_probe(forward, maps, r, c);
                for (std::size_t rr = 0; rr < grid; ++rr)
                    for (std::size_t cc = 0; cc < grid; ++cc) {
                        const double v = sens[0].at(rr, cc);
                        weakest = std::min(weakest, v);
                        if (v <= 1e-12) ++dead_pairs;
                    }
            }
        }
        if (dead_pairs != 0) {
            pass = false;
            detail << "seed " << seed << ": " << dead_pairs << " unreachable fine pairs; ";
        }

        // windowed ablation: sensitivity is exactly zero outside the source
        // window, positive inside it
        const LayoutSpec flat = single_scale_layout(grid, k, 2);
        std::mt19937_64 flat_rng(seed + 9);
        const MsaBlockParams flat_params = random_block_params(flat, channels, heads, flat_rng);
        const auto flat_maps = random_maps(flat, 1, channels, flat_rng);
        const auto flat_forward = [&](const std::vector<TensorMap>& input) {
            std::vector<TensorMap> work = input;
            QkvCache cache;
            msa_block_forward(flat, flat_params, {true, false, false}, work, cache);
            return work;
        };
        std::size_t leaks = 0, dead_in_window = 0;
        for (const auto [sr, sc] : {std::pair<std::size_t, std::size_t>{0, 0}, {3, 11}, {12, 6}}) {
            const auto sens = receptive_field_probe(flat_forward, flat_maps, sr, sc);
            for (std::size_t rr = 0; rr < grid; ++rr)
                for (std::size_t cc = 0; cc < grid; ++cc) {
                    const bool same_window = (rr / k == sr / k) && (cc / k == sc / k);
                    const double v = sens[0].at(rr, cc);
                    if (!same_window && v != 0.0) ++leaks;
                    if (same_window && v <= 1e-12) ++dead_in_window;
                }
        }
        if (leaks != 0 || dead_in_window != 0) {
            pass = false;
            detail << "seed " << seed << ": " << leaks << " cross-window leaks, " << dead_in_window
                   << " dead in-window pairs; ";
        }
    }

    const double elapsed = seconds_since(start);
    pass = pass && elapsed < 120.0;
    detail << "weakest fine-pair sensitivity " << fmt(weakest) << " (threshold 1e-12), "
           << fmt(elapsed) << "s (budget 120s)";
    Outcome out;
    out.pass = pass;
    out.detail = detail.str();
    return out;
}

// ---------------------------------------------------------------------------
// 6. cache: bitwise-transparent, strictly saves projections, fills coarse
//    windows at most once per top-down pass

Outcome criterion_cache() {
    bool pass = true;
    std::ostringstream detail;
    std::size_t fixtures = 0, bitwise = 0, savings = 0, multi_scale = 0;

    for (const std::size_t grid : {8u, 16u, 32u}) {
        for (const std::size_t k : {4u, 8u}) {
            if (grid < k) continue;
            for (const CommunicationMode mode :
                 {CommunicationMode{true, true, true}, CommunicationMode{true, true, false},
                  CommunicationMode{true, false, true}}) {
                const LayoutSpec layout = build_layout(grid, k, 2);
                std::mt19937_64 rng(grid * 131 + k * 17);
                const MsaBlockParams params = random_block_params(layout, 8, 2, rng);
                const auto maps = random_maps(layout, 2, 8, rng);
                ++fixtures;

                auto cached_maps = maps;
                QkvCache cache;
                OpCounter cached_counter;
                msa_block_forward(layout, params, mode, cached_maps, cache, nullptr,
                                  &cached_counter);

                auto bypass_maps = maps;
                QkvCache bypass;
                bypass.set_bypass(true);
                OpCounter bypass_counter;
                msa_block_forward(layout, params, mode, bypass_maps, bypass, nullptr,
                                  &bypass_counter);

                bool same = true;
                for (std::size_t si = 0; si < maps.size(); ++si)
                    same = same && cached_maps[si].data == bypass_maps[si].data;
                if (same) ++bitwise;

                // reuse only exists where the top-down phase runs: ancestor
                // windows serve several finer readers there, while the
                // bottom-up pass reads each parent window exactly once
                if (layout.num_scales >= 2 && mode.top_down_on) {
                    ++multi_scale;
                    if (cached_counter.proj_calls < bypass_counter.proj_calls) ++savings;
                }

                // cross-scale coarse K/V: at most one fill per (scale, batch,
                // window, role) serving a finer reader during the whole
                // top-down pass
                std::map<std::tuple<std::size_t, std::size_t, std::size_t, int>, int> cross_fills;
                for (const CacheEvent& e : cache.events()) {
                    if (e.kind != CacheEvent::Fill) continue;
                    if (e.reader >= e.scale) continue;  // own-scale or upward use
                    ++cross_fills[{e.scale, e.batch, e.window, int(e.role)}];
                }
                for (const auto& [key, count] : cross_fills) {
                    if (count > 1) {
                        pass = false;
                        detail << "grid " << grid << " k " << k << ": coarse window re-projected "
                               << count << "x; ";
                    }
                }
            }
        }
    }

    pass = pass && fixtures == bitwise && savings == multi_scale;
    detail << bitwise << "/" << fixtures << " bitwise (all modes), " << savings << "/"
           << multi_scale << " top-down-bearing multi-scale fixtures with strictly fewer "
           << "projections";
    Outcome out;
    out.pass = pass;
    out.detail = detail.str();
    return out;
}

// ---------------------------------------------------------------------------
// 7. communication distance bound over the fixture layouts

Outcome criterion_distance() {
    bool pass = true;
    std::ostringstream detail;
    for (auto [grid, k, s] : {std::tuple<std::size_t, std::size_t, std::size_t>{64, 16, 4},
                              {16, 4, 2},
                              {32, 4, 2},
                              {32, 8, 2},
                              {64, 8, 2},
                              {256, 16, 4}}) {
        const LayoutSpec layout = build_layout(grid, k, s);
        const int bound = int(2 * layout.num_scales - 1);
        const int measured = max_fine_pair_distance(layout);
        const bool ok = measured >= 0 && measured <= bound;
        pass = pass && ok;
        detail << grid << "/" << k << "/" << s << ": d=" << measured << (ok ? " <= " : " > ")
               << bound << "; ";
    }
    Outcome out;
    out.pass = pass;
    out.detail = detail.str();
    return out;
}

// ---------------------------------------------------------------------------
// 8. toy-task ablation ordering + gap

Outcome criterion_ablation() {
    const auto start = Clock::now();
    // hyperparameters pinned after a manual sweep (see README): this recipe
    // reaches full validation accuracy on every communicating variant across
    // the three seeds below while the windowed model stays near chance
    const std::size_t epochs = 80, batch_size = 16, samples = 1024, val_samples = 256;
    const SgdConfig sgd{0.002, 0.9, 0.0};
    const std::vector<std::uint64_t> seeds{1, 2, 3};
    const std::vector<std::string> modes{"msa", "topdown", "bottomup", "none", "window"};

    std::map<std::string, double> mean_acc;
    std::ostringstream detail;
    for (const std::string& mode : modes) {
        double total = 0.0;
        for (const std::uint64_t seed : seeds) {
            const AtlasConfig cfg = toy_model_config(mode, seed);
            const ToyTaskSpec train_spec{cfg.image_side, cfg.window_side, samples, seed};
            const ToyTaskSpec val_spec{cfg.image_side, cfg.window_side, val_samples, seed + 1};
            const ToyTrainResult res =
                toy_train(cfg, train_spec, val_spec, epochs, batch_size, sgd);
            total += res.final_val_accuracy;
        }
        mean_acc[mode] = total / double(seeds.size());
        detail << mode << "=" << fmt(mean_acc[mode]) << " ";
    }

    const double both = mean_acc["msa"];
    const double single = std::min(mean_acc["topdown"], mean_acc["bottomup"]);
    const double none = mean_acc["none"];
    const double window = mean_acc["window"];
    const bool ordered = both >= single && single >= none && none >= window;
    const bool gap = (both - window) >= 0.15;
    const double elapsed = seconds_since(start);

    Outcome out;
    out.pass = ordered && gap && elapsed < 3600.0;
    detail << "(means over 3 seeds); ordering " << (ordered ? "holds" : "violated") << ", gap "
           << fmt((both - window) * 100.0) << " pts (needs >= 15), " << fmt(elapsed)
           << "s (budget 3600s)";
    out.detail = detail.str();
    return out;
}

// ---------------------------------------------------------------------------
// 9. scale-dropping attends strictly fewer query tokens than stacking

Outcome criterion_composition() {
    bool pass = true;
    std::ostringstream detail;
    for (auto [image, k, depths] :
         {std::tuple<std::size_t, std::size_t, std::vector<std::size_t>>{8, 4, {2, 2}},
          {16, 4, {1, 2, 2}},
          {32, 8, {2, 2, 1}}}) {
        AtlasConfig cfg;
        cfg.image_side = image;
        cfg.patch_side = 1;
        cfg.in_channels = 3;
        cfg.window_side = k;
        cfg.stride = 2;
        cfg.channels = 8;
        cfg.heads = 2;
        cfg.depths = depths;
        const std::uint64_t drop = atlas_query_tokens(cfg, true);
        const std::uint64_t stack = atlas_query_tokens(cfg, false);
        const bool ok = drop < stack;
        pass = pass && ok;
        detail << "grid " << image << ": drop=" << drop << (ok ? " < " : " >= ")
               << "stack=" << stack << "; ";
    }
    Outcome out;
    out.pass = pass;
    out.detail = detail.str();
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance checks"};
    int criterion = 0;  // 0 = all
    app.add_option("--criterion", criterion, "run a single criterion (1-9)")
        ->check(CLI::Range(0, 9));
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<int, std::function<Outcome()>>> checks{
        {1, criterion_equivalence}, {2, criterion_degeneracy},     {3, criterion_gradients},
        {4, criterion_complexity},  {5, criterion_receptive_field}, {6, criterion_cache},
        {7, criterion_distance},    {8, criterion_ablation},       {9, criterion_composition},
    };

    bool all_pass = true;
    for (const auto& [num, run] : checks) {
        if (criterion != 0 && criterion != num) continue;
        Outcome out;
        try {
            out = run();
        } catch (const std::exception& e) {
            out.pass = false;
            out.detail = std::string("threw: ") + e.what();
        }
        all_pass = all_pass && out.pass;
        std::cout << "criterion " << num << ": " << (out.pass ? "PASS" : "FAIL") << " — "
                  << out.detail << std::endl;
    }
    return all_pass ? 0 : 1;
}
