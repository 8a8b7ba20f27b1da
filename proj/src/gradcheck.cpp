#include "atlas/gradcheck.hpp"

#include <cmath>
#include <sstream>

#include "atlas/errors.hpp"

namespace atlas {

bool GradCheckReport::passed() const {
    for (const auto& e : entries) {
        if (!e.failing.empty()) return false;
    }
    return true;
}

double GradCheckReport::max_rel_err() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.max_rel_err);
    return m;
}

std::string GradCheckReport::to_text() const {
    std::ostringstream os;
    for (const auto& e : entries) {
        os << (e.failing.empty() ? "pass  " : "FAIL  ") << e.group << "  coords=" << e.count
           << "  max_rel=" << e.max_rel_err << "  max_abs=" << e.max_abs_err;
        if (!e.failing.empty()) {
            os << "  failing=[";
            for (std::size_t i = 0; i < e.failing.size() && i < 8; ++i) {
                if (i) os << ",";
                os << e.failing[i];
            }
            if (e.failing.size() > 8) os << ",...";
            os << "]";
        }
        os << "\n";
    }
    return os.str();
}

std::string GradCheckReport::to_csv() const {
    std::ostringstream os;
    os << "group,coords,max_rel_err,max_abs_err,failing\n";
    for (const auto& e : entries) {
        os << e.group << "," << e.count << "," << e.max_rel_err << "," << e.max_abs_err << ","
           << e.failing.size() << "\n";
    }
    return os.str();
}

double relative_error(double analytic, double numeric) {
    const double denom = std::max(1e-8, std::abs(analytic) + std::abs(numeric));
    return std::abs(analytic - numeric) / denom;
}

std::vector<double> finite_difference_grad(const std::function<double()>& loss, double* params,
                                           std::size_t count) {
    std::vector<double> grad(count, 0.0);
    for (std::size_t i = 0; i < count; ++i) {
        const double x0 = params[i];
        const double h = 1e-5 * (1.0 + std::abs(x0));
        params[i] = x0 + h;
        const double up = loss();
        params[i] = x0 - h;
        const double down = loss();
        params[i] = x0;
        usage_check(std::isfinite(up) && std::isfinite(down),
                    "finite_difference_grad: non-finite loss");
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

void gradcheck_group(GradCheckReport& report, const std::string& group,
                     const std::function<double()>& loss, double* params, std::size_t count,
                     const std::vector<double>& analytic) {
    usage_check(analytic.size() == count, "gradcheck_group: analytic gradient length mismatch");
    const std::vector<double> numeric = finite_difference_grad(loss, params, count);
    GradCheckEntry entry;
    entry.group = group;
    entry.count = count;
    for (std::size_t i = 0; i < count; ++i) {
        const double rel = relative_error(analytic[i], numeric[i]);
        const double abs = std::abs(analytic[i] - numeric[i]);
        entry.max_rel_err = std::max(entry.max_rel_err, rel);
        entry.max_abs_err = std::max(entry.max_abs_err, abs);
        // Differences inside the central-difference noise floor pass outright:
        // with step ~1e-5 the numeric side carries ~1e-11 of rounding noise, so
        // structurally-zero gradients (a bias shared by every key, say) would
        // otherwise fail on noise alone.
        if (rel > report.tolerance && abs > report.abs_floor) entry.failing.push_back(i);
    }
    report.entries.push_back(std::move(entry));
}

std::vector<Matrix> receptive_field_probe(
    const std::function<std::vector<TensorMap>(const std::vector<TensorMap>&)>& forward,
    const std::vector<TensorMap>& input, std::size_t src_row, std::size_t src_col, double step) {
    const std::vector<TensorMap> base = forward(input);

    // The bump must differ per channel: a constant shift across channels sits
    // in the null space of every mean-subtracting norm in the block, so a
    // uniform probe would report unreachable tokens that are in fact coupled.
    std::vector<TensorMap> bumped = input;
    for (std::size_t ch = 0; ch < bumped[0].channels; ++ch)
        bumped[0].at(0, src_row, src_col, ch) += step * double(ch + 1);
    const std::vector<TensorMap> shifted = forward(bumped);

    std::vector<Matrix> sensitivity;
    sensitivity.reserve(base.size());
    for (std::size_t si = 0; si < base.size(); ++si) {
        const TensorMap& a = base[si];
        const TensorMap& b = shifted[si];
        Matrix m(a.rows, a.cols);
        for (std::size_t r = 0; r < a.rows; ++r)
            for (std::size_t c = 0; c < a.cols; ++c) {
                double worst = 0.0;
                for (std::size_t ch = 0; ch < a.channels; ++ch) {
                    const double d = std::abs(b.at(0, r, c, ch) - a.at(0, r, c, ch));
                    if (d > worst) worst = d;
                }
                m.at(r, c) = worst / step;
            }
        sensitivity.push_back(std::move(m));
    }
    return sensitivity;
}

}  // namespace atlas
