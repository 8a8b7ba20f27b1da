#pragma once

#include <cstdint>

#include "atlas/gradcheck.hpp"

namespace atlas {

// Finite-difference verification of every backward routine: each tensor op,
// the block backward on multi-scale fixtures (parameters and inputs), and the
// end-to-end micro model (parameters, input pixels, and the optimizer loss).
GradCheckReport run_gradcheck_suite(std::uint64_t seed);

}  // namespace atlas
