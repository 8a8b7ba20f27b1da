#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "atlas/tensor.hpp"

namespace atlas {

// One parameter group's comparison against central finite differences.
// Relative error is |a-n| / max(1e-8, |a|+|n|).
struct GradCheckEntry {
    std::string group;
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    std::vector<std::size_t> failing;  // coordinates exceeding the tolerance
    std::size_t count = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double tolerance = 1e-4;
    double abs_floor = 1e-8;  // differences below this are indistinguishable from step noise

    bool passed() const;
    double max_rel_err() const;
    std::string to_text() const;
    std::string to_csv() const;
};

double relative_error(double analytic, double numeric);

// Central differences of a scalar loss with respect to the values behind
// `params`, perturbing in place. Step is 1e-5 * (1 + |x|) per coordinate.
// Throws UsageError if the loss comes back non-finite.
std::vector<double> finite_difference_grad(const std::function<double()>& loss, double* params,
                                           std::size_t count);

// Compares an analytic gradient against finite differences of `loss` over the
// same coordinates and appends the result to the report.
void gradcheck_group(GradCheckReport& report, const std::string& group,
                     const std::function<double()>& loss, double* params, std::size_t count,
                     const std::vector<double>& analytic);

// Sensitivity of every output token to a bump at one input token: bumps
// channel ch of input token (src_row, src_col) at the finest scale of batch 0
// by (ch+1)*step — staggered so the direction is not annihilated by
// mean-subtracting norms — reruns `forward`, and reports per token the largest
// absolute output change divided by the step. A token the source cannot reach
// reports exactly zero, because the recomputed forward is bitwise unchanged
// there.
std::vector<Matrix> receptive_field_probe(
    const std::function<std::vector<TensorMap>(const std::vector<TensorMap>&)>& forward,
    const std::vector<TensorMap>& input, std::size_t src_row, std::size_t src_col,
    double step = 1e-4);

}  // namespace atlas
