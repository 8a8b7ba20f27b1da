#pragma once

#include <cstdint>
#include <vector>

#include "atlas/atlas_model.hpp"

namespace atlas {

// Synthetic classification task that cannot be solved one window at a time:
// each image carries two typed 2x2 marker patches in two distinct attention
// windows, and the label says whether the two types match. Either marker
// alone carries zero label information, and because the decision is a parity
// of two bits in different windows, even pooling arbitrary per-window
// features additively cannot express it — the markers' features have to
// interact.
//
// Images are image_side x image_side token grids (patch side 1) with three
// channels: 0 = marker present, 1 = type-0 marker, 2 = type-1 marker. The
// 2x2 patches sit on even offsets so a stride-2 pooling step sees each marker
// as one whole cell.
struct ToyTaskSpec {
    std::size_t image_side = 8;
    std::size_t window_side = 4;  // markers land in distinct windows of this tiling
    std::size_t samples = 1024;
    std::uint64_t seed = 0;
};

struct ToyBatch {
    TensorMap images;
    std::vector<std::size_t> labels;
};

ToyBatch make_toy_batch(const ToyTaskSpec& spec);

// The micro model every toy run uses, sized to the task grid; `mode` is one of
// the named communication presets (window selects the one-scale ablation).
AtlasConfig toy_model_config(const std::string& mode, std::uint64_t seed);

// ---------------------------------------------------------------------------

struct ToyCurvePoint {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_accuracy = 0.0;
};

struct ToyTrainResult {
    std::vector<ToyCurvePoint> curve;
    double final_val_accuracy = 0.0;
    double best_val_accuracy = 0.0;
};

double toy_accuracy(AtlasParams& params, const ToyBatch& batch, std::size_t batch_size,
                    QkvCache& cache);

// Fresh model from model_cfg, SGD over shuffled minibatches, one validation
// pass per epoch. Aborts with UsageError if the loss stops being finite.
// trained_out (optional) receives the final weights.
ToyTrainResult toy_train(const AtlasConfig& model_cfg, const ToyTaskSpec& train_spec,
                         const ToyTaskSpec& val_spec, std::size_t epochs, std::size_t batch_size,
                         const SgdConfig& sgd, AtlasParams* trained_out = nullptr);

}  // namespace atlas
