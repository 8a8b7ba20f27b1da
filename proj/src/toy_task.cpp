#include "atlas/toy_task.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "atlas/errors.hpp"

namespace atlas {

ToyBatch make_toy_batch(const ToyTaskSpec& spec) {
    const std::size_t g = spec.image_side;
    const std::size_t ws = spec.window_side;
    config_check(ws >= 1 && g % ws == 0, "toy task: image side must be a multiple of the window");
    const std::size_t wps = g / ws;
    const std::size_t nwin = wps * wps;
    config_check(nwin >= 2, "toy task: need at least two windows to separate the markers");

    config_check(ws >= 2 && ws % 2 == 0, "toy task: window side must be even to hold a marker");

    ToyBatch batch{TensorMap(spec.samples, g, g, 3), {}};
    batch.labels.resize(spec.samples);
    std::mt19937_64 rng(spec.seed);
    std::uniform_int_distribution<std::size_t> win_a(0, nwin - 1);
    std::uniform_int_distribution<std::size_t> win_b(0, nwin - 2);
    // markers are 2x2 patches on even offsets, so a marker always fills a
    // whole pooling cell and its type survives any channelwise max intact
    std::uniform_int_distribution<std::size_t> offset(0, ws / 2 - 1);
    std::uniform_int_distribution<int> bit(0, 1);

    for (std::size_t n = 0; n < spec.samples; ++n) {
        std::size_t w1 = win_a(rng);
        std::size_t w2 = win_b(rng);
        if (w2 >= w1) ++w2;  // distinct windows, both uniform
        const int t1 = bit(rng);
        const int t2 = bit(rng);
        const std::size_t marks[2] = {w1, w2};
        const int types[2] = {t1, t2};
        for (int i = 0; i < 2; ++i) {
            const std::size_t wr = marks[i] / wps, wc = marks[i] % wps;
            const std::size_t r = wr * ws + 2 * offset(rng);
            const std::size_t c = wc * ws + 2 * offset(rng);
            for (std::size_t dr = 0; dr < 2; ++dr)
                for (std::size_t dc = 0; dc < 2; ++dc) {
                    batch.images.at(n, r + dr, c + dc, 0) = 1.0;
                    batch.images.at(n, r + dr, c + dc, types[i] == 0 ? 1 : 2) = 1.0;
                }
        }
        // matching marker types vs. mismatched ones. Any per-window summary
        // combined additively is blind to this: the decision is a parity of
        // two bits living in different windows, so the pooled feature of one
        // marker alone carries zero label information.
        batch.labels[n] = static_cast<std::size_t>(t1 == t2 ? 1 : 0);
    }
    return batch;
}

AtlasConfig toy_model_config(const std::string& mode, std::uint64_t seed) {
    AtlasConfig cfg;
    cfg.image_side = 8;
    cfg.patch_side = 1;
    cfg.in_channels = 3;
    cfg.window_side = 4;
    cfg.stride = 2;
    cfg.channels = 16;
    cfg.heads = 2;
    cfg.ffn_mult = 2;
    cfg.num_classes = 2;
    cfg.seed = seed;
    apply_mode_name(cfg, mode);
    // one block over both scales, then one over the coarse scale; the
    // one-scale ablation gets the same block budget
    // Two blocks on the shared stage matter: a lone block summarizes before the
    // cross-scale attention runs, so top-down enrichment of the fine map would
    // never reach the coarse readout. The second block's summarize lifts it.
    cfg.depths = cfg.single_scale ? std::vector<std::size_t>{4} : std::vector<std::size_t>{2, 2};
    return cfg;
}

double toy_accuracy(AtlasParams& params, const ToyBatch& batch, std::size_t batch_size,
                    QkvCache& cache) {
    const std::size_t n = batch.images.batch;
    const std::size_t g = batch.images.rows;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t b = std::min(batch_size, n - start);
        TensorMap chunk(b, g, g, batch.images.channels);
        std::copy_n(batch.images.data.begin() +
                        static_cast<std::ptrdiff_t>(start * g * g * batch.images.channels),
                    chunk.data.size(), chunk.data.begin());
        Matrix logits = atlas_forward(params, chunk, cache);
        for (std::size_t i = 0; i < b; ++i)
            if (argmax_row(logits, i) == batch.labels[start + i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

ToyTrainResult toy_train(const AtlasConfig& model_cfg, const ToyTaskSpec& train_spec,
                         const ToyTaskSpec& val_spec, std::size_t epochs, std::size_t batch_size,
                         const SgdConfig& sgd, AtlasParams* trained_out) {
    config_check(batch_size >= 1, "toy training: batch size must be at least 1");
    const ToyBatch train = make_toy_batch(train_spec);
    const ToyBatch val = make_toy_batch(val_spec);
    const std::size_t n = train.images.batch;
    const std::size_t g = train.images.rows;
    const std::size_t ch = train.images.channels;

    AtlasParams params = make_atlas_params(model_cfg);
    init_atlas_params(params);
    AtlasParams grads = make_atlas_params(model_cfg);
    SgdState state;
    QkvCache cache;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(train_spec.seed ^ 0x9e3779b97f4a7c15ull);

    ToyTrainResult result;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < n; start += batch_size) {
            const std::size_t b = std::min(batch_size, n - start);
            TensorMap images(b, g, g, ch);
            std::vector<std::size_t> labels(b);
            for (std::size_t i = 0; i < b; ++i) {
                const std::size_t src = order[start + i];
                std::copy_n(train.images.data.begin() +
                                static_cast<std::ptrdiff_t>(src * g * g * ch),
                            g * g * ch,
                            images.data.begin() + static_cast<std::ptrdiff_t>(i * g * g * ch));
                labels[i] = train.labels[src];
            }
            const double loss = atlas_train_step(params, grads, images, labels, cache, state, sgd);
            usage_check(std::isfinite(loss), "toy training diverged: loss is not finite");
            loss_sum += loss;
            ++steps;
        }
        ToyCurvePoint p;
        p.epoch = epoch + 1;
        p.train_loss = loss_sum / static_cast<double>(steps);
        p.val_accuracy = toy_accuracy(params, val, batch_size, cache);
        result.curve.push_back(p);
        result.final_val_accuracy = p.val_accuracy;
        result.best_val_accuracy = std::max(result.best_val_accuracy, p.val_accuracy);
    }
    if (trained_out) *trained_out = std::move(params);
    return result;
}

}  // namespace atlas
