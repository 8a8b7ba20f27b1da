#include "atlas/bench.hpp"

#include <chrono>
#include <ostream>
#include <random>

#include "atlas/errors.hpp"
#include "atlas/msa_block.hpp"

namespace atlas {

std::uint64_t analytic_attention_pairs(const LayoutSpec& layout, const CommunicationMode& mode) {
    const std::size_t L = layout.num_scales;
    std::uint64_t pairs = 0;
    for (std::size_t si = 0; si < L; ++si) {
        const std::uint64_t keys =
            mode.top_down_on ? layout.top_down_key_tokens(si) : layout.window_tokens_at(si);
        pairs += static_cast<std::uint64_t>(layout.tokens_at(si)) * keys;
    }
    if (mode.bottom_up_on)
        for (std::size_t si = 1; si < L; ++si)
            pairs += static_cast<std::uint64_t>(layout.tokens_at(si)) *
                     layout.window_tokens_at(si - 1);
    return pairs;
}

BenchRow bench_block(std::size_t grid, std::size_t window_side, std::size_t stride,
                     std::size_t channels, std::size_t heads, std::size_t ffn_mult,
                     const CommunicationMode& mode, bool run_forward, std::size_t reps,
                     std::uint64_t seed) {
    const LayoutSpec layout = build_layout(grid, window_side, stride);
    BenchRow row;
    row.grid = grid;
    row.tokens = layout.tokens_at(0);
    row.scales = layout.num_scales;
    row.analytic_pairs = analytic_attention_pairs(layout, mode);

    OpCounter predicted;
    msa_block_count(layout, mode, 1, channels, heads, ffn_mult * channels, predicted);
    row.counted_pairs = predicted.attn_pairs;
    row.macs = predicted.macs;
    row.proj_calls = predicted.proj_calls;
    row.cache_hits = predicted.cache_hits;
    row.cache_misses = predicted.cache_misses;

    if (run_forward) {
        MsaBlockParams params = make_msa_block_params(layout.num_scales, channels, heads,
                                                      ffn_mult * channels);
        std::mt19937_64 rng(seed);
        init_msa_block_params(params, rng);
        std::normal_distribution<double> dist(0.0, 1.0);
        std::vector<TensorMap> maps;
        for (std::size_t si = 0; si < layout.num_scales; ++si) {
            const std::size_t g = layout.grid_side[si];
            TensorMap m(1, g, g, channels);
            for (double& v : m.data) v = dist(rng);
            maps.push_back(std::move(m));
        }

        double best = 0.0;
        OpCounter measured;
        for (std::size_t rep = 0; rep < (reps ? reps : 1); ++rep) {
            std::vector<TensorMap> work = maps;  // same input every repetition
            QkvCache cache;
            OpCounter counter;
            const auto t0 = std::chrono::steady_clock::now();
            msa_block_forward(layout, params, mode, work, cache, nullptr, &counter);
            const auto t1 = std::chrono::steady_clock::now();
            const double secs = std::chrono::duration<double>(t1 - t0).count();
            if (rep == 0 || secs < best) best = secs;
            measured = counter;
        }
        internal_check(measured.attn_pairs == predicted.attn_pairs &&
                           measured.macs == predicted.macs &&
                           measured.proj_calls == predicted.proj_calls &&
                           measured.cache_hits == predicted.cache_hits &&
                           measured.cache_misses == predicted.cache_misses,
                       "bench: structural counter walk disagrees with the executed forward");
        row.ran_forward = true;
        row.wall_seconds = best;
    }
    return row;
}

std::vector<BenchRow> bench_sweep(const std::vector<std::size_t>& grids, std::size_t window_side,
                                  std::size_t stride, std::size_t channels, std::size_t heads,
                                  std::size_t ffn_mult, const CommunicationMode& mode,
                                  std::size_t max_forward_grid, std::size_t reps,
                                  std::uint64_t seed) {
    std::vector<BenchRow> rows;
    rows.reserve(grids.size());
    for (std::size_t grid : grids)
        rows.push_back(bench_block(grid, window_side, stride, channels, heads, ffn_mult, mode,
                                   grid <= max_forward_grid, reps, seed));
    return rows;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
    out << "grid,tokens,scales,analytic_pairs,counted_pairs,macs,proj_calls,cache_hits,"
           "cache_misses,ran_forward,wall_seconds\n";
    for (const BenchRow& r : rows) {
        out << r.grid << ',' << r.tokens << ',' << r.scales << ',' << r.analytic_pairs << ','
            << r.counted_pairs << ',' << r.macs << ',' << r.proj_calls << ',' << r.cache_hits
            << ',' << r.cache_misses << ',' << (r.ran_forward ? 1 : 0) << ',' << r.wall_seconds
            << '\n';
    }
}

std::uint64_t atlas_query_tokens(const AtlasConfig& cfg, bool drop_scales) {
    AtlasParams shape = make_atlas_params(cfg);  // validates and sizes the stage ladder
    const std::size_t L = shape.layout.num_scales;
    std::uint64_t queries = 0;
    for (std::size_t s = 0; s < L; ++s) {
        const LayoutSpec ls = drop_scales ? atlas_stage_layout(shape, s) : shape.layout;
        OpCounter counter;
        msa_block_count(ls, cfg.mode, 1, cfg.channels, cfg.heads, cfg.ffn_mult * cfg.channels,
                        counter);
        queries += counter.attn_queries * cfg.depths[s];
    }
    return queries;
}

}  // namespace atlas
