#include "atlas/equiv_suite.hpp"

#include <cmath>
#include <ostream>
#include <random>

#include "atlas/errors.hpp"
#include "atlas/oracle.hpp"

namespace atlas {

MsaBlockParams random_block_params(const LayoutSpec& layout, std::size_t channels,
                                   std::size_t heads, std::mt19937_64& rng) {
    MsaBlockParams params =
        make_msa_block_params(layout.num_scales, channels, heads, 2 * channels);
    init_msa_block_params(params, rng);
    return params;
}

std::vector<TensorMap> random_maps(const LayoutSpec& layout, std::size_t batch,
                                   std::size_t channels, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<TensorMap> maps;
    maps.reserve(layout.num_scales);
    for (std::size_t si = 0; si < layout.num_scales; ++si) {
        const std::size_t g = layout.grid_side[si];
        TensorMap m(batch, g, g, channels);
        for (double& v : m.data) v = dist(rng);
        maps.push_back(std::move(m));
    }
    return maps;
}

CommunicationMode mode_by_name(const std::string& name) {
    if (name == "msa") return {true, true, true};
    if (name == "topdown") return {true, true, false};
    if (name == "bottomup") return {true, false, true};
    if (name == "none") return {true, false, false};
    throw ConfigError("unknown communication preset '" + name + "'");
}

std::vector<EquivCase> run_equiv_suite(std::uint64_t seed) {
    const std::size_t grids[] = {8, 16, 32};
    const std::size_t windows[] = {4, 8};
    const std::size_t channel_counts[] = {4, 8};
    const std::size_t head_counts[] = {1, 2};
    const char* modes[] = {"msa", "topdown", "bottomup", "none"};

    std::vector<EquivCase> cases;
    std::uint64_t fixture = 0;
    for (std::size_t grid : grids) {
        for (std::size_t ws : windows) {
            for (std::size_t ch : channel_counts) {
                for (std::size_t h : head_counts) {
                    const LayoutSpec layout = build_layout(grid, ws, 2);
                    // smallest grids also exercise batching
                    const std::size_t batch = grid == 8 ? 2 : 1;
                    std::mt19937_64 rng(seed + fixture++);
                    const MsaBlockParams params = random_block_params(layout, ch, h, rng);
                    const std::vector<TensorMap> maps = random_maps(layout, batch, ch, rng);
                    for (const char* mode_name : modes) {
                        const CommunicationMode mode = mode_by_name(mode_name);
                        std::vector<TensorMap> fast = maps;
                        QkvCache cache;
                        msa_block_forward(layout, params, mode, fast, cache);
                        std::vector<TensorMap> slow = maps;
                        oracle::naive_msa_forward(layout, params, mode, slow);

                        EquivCase c;
                        c.grid = grid;
                        c.window_side = ws;
                        c.stride = 2;
                        c.channels = ch;
                        c.heads = h;
                        c.batch = batch;
                        c.mode = mode_name;
                        c.identical = true;
                        for (std::size_t si = 0; si < layout.num_scales; ++si) {
                            for (std::size_t i = 0; i < fast[si].data.size(); ++i) {
                                const double a = fast[si].data[i];
                                const double b = slow[si].data[i];
                                if (a != b) c.identical = false;
                                const double d = std::abs(a - b);
                                if (d > c.max_abs_diff) c.max_abs_diff = d;
                            }
                        }
                        cases.push_back(std::move(c));
                    }
                }
            }
        }
    }
    return cases;
}

bool equiv_all_identical(const std::vector<EquivCase>& cases) {
    for (const EquivCase& c : cases)
        if (!c.identical) return false;
    return !cases.empty();
}

void write_equiv_csv(std::ostream& out, const std::vector<EquivCase>& cases) {
    out << "grid,window_side,stride,channels,heads,batch,mode,identical,max_abs_diff\n";
    for (const EquivCase& c : cases)
        out << c.grid << ',' << c.window_side << ',' << c.stride << ',' << c.channels << ','
            << c.heads << ',' << c.batch << ',' << c.mode << ',' << (c.identical ? 1 : 0) << ','
            << c.max_abs_diff << '\n';
}

}  // namespace atlas
