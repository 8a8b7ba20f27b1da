#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "atlas/layout.hpp"
#include "atlas/msa_block.hpp"

namespace atlas {

// Everything needed to size and seed a model. The token grid is
// image_side/patch_side on a side; the scale count follows from grid, window
// and stride, and depths must list one entry per scale (the last one >= 1):
// stage s runs depths[s] blocks over scales [s..L), then freezes scale s.
struct AtlasConfig {
    std::size_t image_side = 32;
    std::size_t patch_side = 4;
    std::size_t in_channels = 3;
    std::size_t window_side = 8;
    std::size_t stride = 2;
    std::size_t channels = 64;
    std::size_t heads = 4;
    std::size_t ffn_mult = 4;       // FFN hidden width = ffn_mult * channels
    std::vector<std::size_t> depths = {1, 1};
    std::size_t num_classes = 2;
    CommunicationMode mode;
    bool single_scale = false;      // windowed-only ablation: one scale, no pathways
    std::uint64_t seed = 0;
};

// The layout the model was built for (single-scale ablation applied).
LayoutSpec atlas_layout(const AtlasConfig& cfg);

// Named communication presets: msa (all pathways), topdown, bottomup,
// none (summarize only), window (single scale). Unknown name -> ConfigError.
void apply_mode_name(AtlasConfig& cfg, const std::string& name);
std::string mode_name(const AtlasConfig& cfg);

// Flat key=value form, canonical order; shared by config files, checkpoint
// headers and the CLI. Unknown keys and malformed values -> ConfigError.
std::vector<std::pair<std::string, std::string>> config_entries(const AtlasConfig& cfg);
void apply_config_entry(AtlasConfig& cfg, const std::string& key, const std::string& value);
std::map<std::string, std::string> parse_config_file(const std::string& path);

// ---------------------------------------------------------------------------

struct AtlasParams {
    AtlasConfig config;
    LayoutSpec layout;
    LinearWeights patchify;  // patch pixels (P*P*in_channels) -> channels
    Matrix pos;              // learned position per fine token (N1 x channels)
    std::vector<std::vector<MsaBlockParams>> stages;  // [stage][block]
    LayerNormParams final_norm;
    LinearWeights head;      // channels -> classes
};

// Validates the config and allocates zeroed parameters (unit norm gains).
// Gradient accumulators are made the same way.
AtlasParams make_atlas_params(const AtlasConfig& cfg);

// Seeds an rng from config.seed and fills the weights in a fixed order, so
// equal configs give bit-identical parameters.
void init_atlas_params(AtlasParams& params);

std::vector<ParamView> param_views(AtlasParams& params);

// Layout a stage's blocks operate on: the suffix of the base layout starting
// at that stage's scale.
LayoutSpec atlas_stage_layout(const AtlasParams& params, std::size_t stage);

// ---------------------------------------------------------------------------
// forward / backward

struct AtlasFwdCtx {
    std::size_t batch = 0;
    Matrix patch_rows;                  // linear input per fine token
    std::vector<PoolContext> cascade;   // [si-1]: initial summarize si-1 -> si
    std::vector<std::vector<MsaBlockCtx>> blocks;  // [stage][block]
    LayerNormCtx norm_ctx;              // per-token norm over the coarsest map
    Matrix pooled;                      // batch x channels head input
};

// images is (batch, image_side, image_side, in_channels); returns logits
// (batch x classes). Pass ctx to enable atlas_backward. The cache is reset by
// every block; one cache instance serves the whole forward.
Matrix atlas_forward(const AtlasParams& params, const TensorMap& images, QkvCache& cache,
                     AtlasFwdCtx* ctx = nullptr, OpCounter* counter = nullptr);

// Accumulates parameter gradients into `grads` (allocated via
// make_atlas_params with the same config). Scales frozen by earlier stages
// still carry gradient: the backward walks stages in reverse over the full
// per-scale gradient maps. d_images (optional) receives input gradients.
void atlas_backward(const AtlasParams& params, AtlasFwdCtx& ctx, const Matrix& d_logits,
                    AtlasParams& grads, TensorMap* d_images = nullptr);

// ---------------------------------------------------------------------------
// training

// Mean softmax cross-entropy over the batch; d_logits (optional) gets the
// gradient of that mean.
double softmax_xent(const Matrix& logits, const std::vector<std::size_t>& labels,
                    Matrix* d_logits = nullptr);

std::size_t argmax_row(const Matrix& logits, std::size_t row);

struct SgdConfig {
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 0.0;
};

// velocity buffer per parameter, zero-initialized on first use
struct SgdState {
    std::vector<double> velocity;
};

// v = momentum*v + (g + weight_decay*p); p -= lr*v. With lr = 0 the
// parameters are bit-identical afterwards.
void sgd_step(const std::vector<ParamView>& params, const std::vector<ParamView>& grads,
              SgdState& state, const SgdConfig& cfg);

// One optimizer step on a labeled batch; returns the mean loss.
double atlas_train_step(AtlasParams& params, AtlasParams& grads, const TensorMap& images,
                        const std::vector<std::size_t>& labels, QkvCache& cache, SgdState& state,
                        const SgdConfig& sgd);

// ---------------------------------------------------------------------------
// checkpoints
//
// Binary layout: magic "ATLS", u32 format version, u64 config-block length +
// canonical key=value text, u64 tensor count, then per tensor: u32 name
// length, name bytes, u32 rank, u64 extents, and the values as little-endian
// 64-bit reals. Loading into a model built from a different config fails
// naming the first mismatched field; short or corrupt files fail with a
// ConfigError describing the spot.

void save_checkpoint(const std::string& path, AtlasParams& params);
void load_checkpoint(const std::string& path, AtlasParams& params);

// Just the stored config, for constructing a model to load into.
AtlasConfig read_checkpoint_config(const std::string& path);

}  // namespace atlas
