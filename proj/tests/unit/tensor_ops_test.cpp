#include <cmath>
#include <random>
#include <vector>

#include "atlas/errors.hpp"
#include "atlas/tensor.hpp"
#include "doctest.h"

using namespace atlas;

TEST_CASE("matmul against hand-computed products") {
    Matrix id(3, 3);
    id.at(0, 0) = id.at(1, 1) = id.at(2, 2) = 1.0;
    Matrix a(3, 2, {1, 2, 3, 4, 5, 6});
    const Matrix prod = matmul(id, a);
    for (std::size_t i = 0; i < a.data.size(); ++i) CHECK(prod.data[i] == a.data[i]);

    Matrix b(2, 2, {1, 2, 3, 4});
    Matrix c(2, 2, {5, 6, 7, 8});
    const Matrix bc = matmul(b, c);
    CHECK(bc.at(0, 0) == 19);
    CHECK(bc.at(0, 1) == 22);
    CHECK(bc.at(1, 0) == 43);
    CHECK(bc.at(1, 1) == 50);
}

TEST_CASE("softmax_rows known distribution and row-sum invariant") {
    // softmax of [ln 1, ln 2, ln 3] is exactly the normalized weights
    Matrix x(1, 3, {std::log(1.0), std::log(2.0), std::log(3.0)});
    const Matrix p = softmax_rows(x);
    CHECK(p.at(0, 0) == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
    CHECK(p.at(0, 1) == doctest::Approx(2.0 / 6.0).epsilon(1e-12));
    CHECK(p.at(0, 2) == doctest::Approx(3.0 / 6.0).epsilon(1e-12));

    Matrix y(4, 7);
    std::mt19937_64 rng(11);
    std::normal_distribution<double> dist(0.0, 3.0);
    for (double& v : y.data) v = dist(rng);
    const Matrix q = softmax_rows(y);
    for (std::size_t i = 0; i < q.rows; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < q.cols; ++j) {
            CHECK(q.at(i, j) > 0.0);
            sum += q.at(i, j);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("softmax_rows is shift invariant") {
    Matrix x(1, 3, {1.0, 2.0, 3.0});
    Matrix shifted(1, 3, {101.0, 102.0, 103.0});
    const Matrix p = softmax_rows(x);
    const Matrix q = softmax_rows(shifted);
    for (std::size_t j = 0; j < 3; ++j) CHECK(p.at(0, j) == doctest::Approx(q.at(0, j)));
}

TEST_CASE("layer_norm normalizes a two-value row to +/-1 scaled by gain") {
    Matrix x(1, 2, {1.0, 3.0});
    LayerNormParams params(2);
    LayerNormCtx ctx;
    const Matrix y = layer_norm(x, params, kLayerNormEps, &ctx);
    // mean 2, biased variance 1 -> normalized values +/- 1/sqrt(1+eps)
    const double expect = 1.0 / std::sqrt(1.0 + kLayerNormEps);
    CHECK(y.at(0, 0) == doctest::Approx(-expect).epsilon(1e-12));
    CHECK(y.at(0, 1) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(ctx.mean[0] == 2.0);

    params.gain = {2.0, 2.0};
    params.bias = {10.0, 10.0};
    const Matrix z = layer_norm(x, params, kLayerNormEps, &ctx);
    CHECK(z.at(0, 0) == doctest::Approx(10.0 - 2.0 * expect).epsilon(1e-12));
    CHECK(z.at(0, 1) == doctest::Approx(10.0 + 2.0 * expect).epsilon(1e-12));
}

TEST_CASE("gelu matches the erf formula at reference points") {
    Matrix x(1, 4, {0.0, 1.0, -1.0, 3.0});
    const Matrix y = gelu(x);
    CHECK(y.at(0, 0) == 0.0);
    const double at1 = 0.5 * (1.0 + std::erf(1.0 / std::sqrt(2.0)));
    CHECK(y.at(0, 1) == doctest::Approx(at1).epsilon(1e-15));
    CHECK(y.at(0, 2) == doctest::Approx(-(1.0 - at1)).epsilon(1e-12));
    CHECK(y.at(0, 3) > 2.99);  // deep in the linear regime
}

TEST_CASE("linear applies y = x W^T + b") {
    LinearWeights w(2, 3);
    // weight is stored (out, in)
    w.weight = Matrix(3, 2, {1, 0, 0, 1, 1, 1});
    w.bias = {10.0, 20.0, 30.0};
    Matrix x(1, 2, {2.0, 5.0});
    const Matrix y = linear(w, x);
    CHECK(y.at(0, 0) == 12.0);
    CHECK(y.at(0, 1) == 25.0);
    CHECK(y.at(0, 2) == 37.0);
}

TEST_CASE("linear counts projection calls and multiplies") {
    OpCounter counter;
    LinearWeights w(4, 6);
    Matrix x(5, 4);
    (void)linear(w, x, &counter);
    CHECK(counter.proj_calls == 1);
    CHECK(counter.macs == 5 * 4 * 6);
}

TEST_CASE("param view helpers cover every coordinate exactly once") {
    LinearWeights w(3, 2);
    LayerNormParams n(4);
    std::vector<ParamView> views;
    append_views(views, "w", w);
    append_views(views, "n", n);
    CHECK(views.size() == 4);  // weight, bias, gain, bias
    CHECK(total_count(views) == 3 * 2 + 2 + 4 + 4);
    zero_views(views);
    for (const auto& v : views)
        for (std::size_t i = 0; i < v.count; ++i) CHECK(v.data[i] == 0.0);
}

TEST_CASE("tensor map rejects non-finite payloads") {
    std::vector<double> payload(2 * 2 * 2 * 1, 0.0);
    payload[3] = std::nan("");
    CHECK_THROWS_AS(TensorMap::checked(2, 2, 2, 1, payload), UsageError);
    payload[3] = 0.0;
    payload.push_back(1.0);
    CHECK_THROWS_AS(TensorMap::checked(2, 2, 2, 1, payload), UsageError);
}
