#include <cmath>
#include <random>

#include "atlas/atlas_model.hpp"
#include "doctest.h"

using namespace atlas;

namespace {

// two scalars exposed through the same view machinery the model uses
struct Pair {
    std::vector<double> values{0.0, 0.0};
    std::vector<double> grads{0.0, 0.0};
    std::vector<ParamView> value_views() {
        return {{"a", &values[0], 1, {1}}, {"b", &values[1], 1, {1}}};
    }
    std::vector<ParamView> grad_views() {
        return {{"a", &grads[0], 1, {1}}, {"b", &grads[1], 1, {1}}};
    }
};

}  // namespace

TEST_CASE("zero learning rate leaves parameters bit-identical") {
    Pair p;
    p.values = {1.25, -3.5};
    p.grads = {100.0, -42.0};
    SgdState state;
    sgd_step(p.value_views(), p.grad_views(), state, {0.0, 0.9, 0.1});
    CHECK(p.values[0] == 1.25);
    CHECK(p.values[1] == -3.5);
}

TEST_CASE("one step applies the momentum update exactly") {
    Pair p;
    p.values = {2.0, 0.0};
    p.grads = {0.5, -1.0};
    SgdState state;
    const SgdConfig cfg{0.1, 0.9, 0.01};
    sgd_step(p.value_views(), p.grad_views(), state, cfg);
    // v = g + wd*p; p -= lr*v
    const double v0 = 0.5 + 0.01 * 2.0;
    CHECK(p.values[0] == 2.0 - 0.1 * v0);
    CHECK(p.values[1] == 0.0 - 0.1 * (-1.0));

    // second step folds the velocity in
    p.grads = {0.0, 0.0};
    const double p0 = p.values[0];
    sgd_step(p.value_views(), p.grad_views(), state, cfg);
    const double v0_next = 0.9 * v0 + 0.01 * p0;
    CHECK(p.values[0] == p0 - 0.1 * v0_next);
}

TEST_CASE("momentum SGD solves a tiny least-squares problem") {
    // minimize (a - 3)^2 + (b + 1)^2
    Pair p;
    SgdState state;
    const SgdConfig cfg{0.05, 0.9, 0.0};
    for (int iter = 0; iter < 400; ++iter) {
        p.grads[0] = 2.0 * (p.values[0] - 3.0);
        p.grads[1] = 2.0 * (p.values[1] + 1.0);
        sgd_step(p.value_views(), p.grad_views(), state, cfg);
    }
    CHECK(std::abs(p.values[0] - 3.0) < 1e-6);
    CHECK(std::abs(p.values[1] + 1.0) < 1e-6);
}

TEST_CASE("a full training step lowers the loss on a fixed batch") {
    AtlasConfig cfg;
    cfg.image_side = 8;
    cfg.patch_side = 1;
    cfg.in_channels = 2;
    cfg.window_side = 4;
    cfg.stride = 2;
    cfg.channels = 8;
    cfg.heads = 2;
    cfg.ffn_mult = 2;
    cfg.depths = {1, 1};
    cfg.num_classes = 2;
    cfg.seed = 12;
    AtlasParams params = make_atlas_params(cfg);
    init_atlas_params(params);
    AtlasParams grads = make_atlas_params(cfg);
    SgdState state;

    std::mt19937_64 rng(99);
    std::normal_distribution<double> dist;
    TensorMap images(4, 8, 8, 2);
    for (double& v : images.data) v = dist(rng);
    const std::vector<std::size_t> labels{0, 1, 1, 0};

    QkvCache cache;
    double first = 0.0, last = 0.0;
    for (int step = 0; step < 25; ++step) {
        const double loss =
            atlas_train_step(params, grads, images, labels, cache, state, {0.01, 0.9, 0.0});
        if (step == 0) first = loss;
        last = loss;
    }
    CHECK(last < first);
}
