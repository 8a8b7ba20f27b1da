#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "atlas/msa_block.hpp"

namespace atlas {

// One fixture of the oracle-equivalence family: a seeded random block run
// through both the optimized forward and the naive reference, compared
// element for element.
struct EquivCase {
    std::size_t grid = 0;
    std::size_t window_side = 0;
    std::size_t stride = 0;
    std::size_t channels = 0;
    std::size_t heads = 0;
    std::size_t batch = 0;
    std::string mode;
    bool identical = false;
    double max_abs_diff = 0.0;
};

// The full micro-config family: grids {8,16,32} x windows {4,8} x channels
// {4,8} x heads {1,2}, stride 2, each under the four communication presets.
std::vector<EquivCase> run_equiv_suite(std::uint64_t seed);

bool equiv_all_identical(const std::vector<EquivCase>& cases);
void write_equiv_csv(std::ostream& out, const std::vector<EquivCase>& cases);

// Helpers reused by tests: a seeded random block + maps for a geometry.
MsaBlockParams random_block_params(const LayoutSpec& layout, std::size_t channels,
                                   std::size_t heads, std::mt19937_64& rng);
std::vector<TensorMap> random_maps(const LayoutSpec& layout, std::size_t batch,
                                   std::size_t channels, std::mt19937_64& rng);
CommunicationMode mode_by_name(const std::string& name);

}  // namespace atlas
