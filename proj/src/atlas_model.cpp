#include "atlas/atlas_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "atlas/errors.hpp"

namespace atlas {

namespace {

std::size_t parse_size(const std::string& key, const std::string& value) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
        // stoull would wrap a leading minus into a huge value; reject it first
        if (value.empty() || value[0] == '-') throw std::invalid_argument(value);
        v = std::stoull(value, &pos);
    } catch (const std::exception&) {
        pos = value.size() + 1;
    }
    config_check(pos == value.size() && !value.empty(),
                 "config value for '" + key + "' is not a non-negative integer: '" + value + "'");
    return static_cast<std::size_t>(v);
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "1" || value == "true") return true;
    if (value == "0" || value == "false") return false;
    throw ConfigError("config value for '" + key + "' is not a boolean (0/1): '" + value + "'");
}

std::vector<std::size_t> parse_depths(const std::string& value) {
    std::vector<std::size_t> out;
    std::string item;
    std::stringstream ss(value);
    while (std::getline(ss, item, ',')) out.push_back(parse_size("depths", item));
    config_check(!out.empty(), "config value for 'depths' is empty");
    return out;
}

std::string depths_text(const std::vector<std::size_t>& depths) {
    std::string out;
    for (std::size_t i = 0; i < depths.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(depths[i]);
    }
    return out;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

}  // namespace

LayoutSpec atlas_layout(const AtlasConfig& cfg) {
    config_check(cfg.patch_side >= 1, "patch side must be at least 1");
    config_check(cfg.image_side >= cfg.patch_side && cfg.image_side % cfg.patch_side == 0,
                 "image side " + std::to_string(cfg.image_side) +
                     " is not divisible by the patch side " + std::to_string(cfg.patch_side));
    const std::size_t grid = cfg.image_side / cfg.patch_side;
    return cfg.single_scale ? single_scale_layout(grid, cfg.window_side, cfg.stride)
                            : build_layout(grid, cfg.window_side, cfg.stride);
}

void apply_mode_name(AtlasConfig& cfg, const std::string& name) {
    cfg.single_scale = false;
    if (name == "msa") {
        cfg.mode = {true, true, true};
    } else if (name == "topdown") {
        cfg.mode = {true, true, false};
    } else if (name == "bottomup") {
        cfg.mode = {true, false, true};
    } else if (name == "none") {
        cfg.mode = {true, false, false};
    } else if (name == "window") {
        cfg.mode = {true, false, false};
        cfg.single_scale = true;
    } else {
        throw ConfigError("unknown mode '" + name +
                          "' (expected msa, topdown, bottomup, window or none)");
    }
}

std::string mode_name(const AtlasConfig& cfg) {
    if (cfg.single_scale) return "window";
    if (cfg.mode.top_down_on && cfg.mode.bottom_up_on) return "msa";
    if (cfg.mode.top_down_on) return "topdown";
    if (cfg.mode.bottom_up_on) return "bottomup";
    return "none";
}

std::vector<std::pair<std::string, std::string>> config_entries(const AtlasConfig& cfg) {
    return {
        {"image_side", std::to_string(cfg.image_side)},
        {"patch_side", std::to_string(cfg.patch_side)},
        {"in_channels", std::to_string(cfg.in_channels)},
        {"window_side", std::to_string(cfg.window_side)},
        {"stride", std::to_string(cfg.stride)},
        {"channels", std::to_string(cfg.channels)},
        {"heads", std::to_string(cfg.heads)},
        {"ffn_mult", std::to_string(cfg.ffn_mult)},
        {"depths", depths_text(cfg.depths)},
        {"classes", std::to_string(cfg.num_classes)},
        {"summarize", cfg.mode.summarize_on ? "1" : "0"},
        {"top_down", cfg.mode.top_down_on ? "1" : "0"},
        {"bottom_up", cfg.mode.bottom_up_on ? "1" : "0"},
        {"single_scale", cfg.single_scale ? "1" : "0"},
        {"seed", std::to_string(cfg.seed)},
    };
}

void apply_config_entry(AtlasConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "image_side") {
        cfg.image_side = parse_size(key, value);
    } else if (key == "patch_side") {
        cfg.patch_side = parse_size(key, value);
    } else if (key == "in_channels") {
        cfg.in_channels = parse_size(key, value);
    } else if (key == "window_side") {
        cfg.window_side = parse_size(key, value);
    } else if (key == "stride") {
        cfg.stride = parse_size(key, value);
    } else if (key == "channels") {
        cfg.channels = parse_size(key, value);
    } else if (key == "heads") {
        cfg.heads = parse_size(key, value);
    } else if (key == "ffn_mult") {
        cfg.ffn_mult = parse_size(key, value);
    } else if (key == "depths") {
        cfg.depths = parse_depths(value);
    } else if (key == "classes") {
        cfg.num_classes = parse_size(key, value);
    } else if (key == "summarize") {
        cfg.mode.summarize_on = parse_bool(key, value);
    } else if (key == "top_down") {
        cfg.mode.top_down_on = parse_bool(key, value);
    } else if (key == "bottom_up") {
        cfg.mode.bottom_up_on = parse_bool(key, value);
    } else if (key == "single_scale") {
        cfg.single_scale = parse_bool(key, value);
    } else if (key == "seed") {
        cfg.seed = parse_size(key, value);
    } else if (key == "mode") {
        apply_mode_name(cfg, value);
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
}

std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::ifstream in(path);
    config_check(in.good(), "cannot open config file '" + path + "'");
    std::map<std::string, std::string> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const std::size_t eq = t.find('=');
        config_check(eq != std::string::npos, "config file " + path + " line " +
                                                  std::to_string(lineno) + ": expected key=value");
        entries[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));  // later lines win
    }
    return entries;
}

// ---------------------------------------------------------------------------

AtlasParams make_atlas_params(const AtlasConfig& cfg) {
    config_check(cfg.in_channels >= 1, "input channel count must be at least 1");
    config_check(cfg.heads >= 1, "head count must be at least 1");
    config_check(cfg.channels >= 1 && cfg.channels % cfg.heads == 0,
                 "channels (" + std::to_string(cfg.channels) +
                     ") must be a positive multiple of heads (" + std::to_string(cfg.heads) + ")");
    config_check(cfg.ffn_mult >= 1, "ffn_mult must be at least 1");
    config_check(cfg.num_classes >= 1, "class count must be at least 1");

    AtlasParams p;
    p.config = cfg;
    p.layout = atlas_layout(cfg);
    const std::size_t L = p.layout.num_scales;
    config_check(cfg.depths.size() == L,
                 "depths lists " + std::to_string(cfg.depths.size()) + " stages but the layout has " +
                     std::to_string(L) + " scales");
    config_check(cfg.depths.back() >= 1, "the final stage needs at least one block");

    const std::size_t grid = p.layout.grid_side[0];
    p.patchify = LinearWeights(cfg.patch_side * cfg.patch_side * cfg.in_channels, cfg.channels);
    p.pos = Matrix(grid * grid, cfg.channels);
    p.stages.resize(L);
    for (std::size_t s = 0; s < L; ++s) {
        p.stages[s].reserve(cfg.depths[s]);
        for (std::size_t b = 0; b < cfg.depths[s]; ++b)
            p.stages[s].push_back(make_msa_block_params(L - s, cfg.channels, cfg.heads,
                                                        cfg.ffn_mult * cfg.channels));
    }
    p.final_norm = LayerNormParams(cfg.channels);
    // Zeroed like the block tensors so a fresh container is a valid
    // gradient accumulator; init_atlas_params restores the unit gain.
    std::fill(p.final_norm.gain.begin(), p.final_norm.gain.end(), 0.0);
    p.head = LinearWeights(cfg.channels, cfg.num_classes);
    return p;
}

void init_atlas_params(AtlasParams& params) {
    std::mt19937_64 rng(params.config.seed);
    init_linear(params.patchify, rng);
    std::uniform_real_distribution<double> pos_dist(-0.02, 0.02);
    for (double& v : params.pos.data) v = pos_dist(rng);
    for (auto& stage : params.stages)
        for (auto& block : stage) init_msa_block_params(block, rng);
    init_linear(params.head, rng);
    std::fill(params.final_norm.gain.begin(), params.final_norm.gain.end(), 1.0);
    std::fill(params.final_norm.bias.begin(), params.final_norm.bias.end(), 0.0);
}

std::vector<ParamView> param_views(AtlasParams& params) {
    std::vector<ParamView> out;
    append_views(out, "patchify", params.patchify);
    out.push_back({"pos", params.pos.data.data(), params.pos.data.size(),
                   {params.pos.rows, params.pos.cols}});
    for (std::size_t s = 0; s < params.stages.size(); ++s) {
        for (std::size_t b = 0; b < params.stages[s].size(); ++b) {
            const std::string prefix =
                "stage" + std::to_string(s) + ".block" + std::to_string(b) + ".";
            auto views = param_views(params.stages[s][b], prefix);
            out.insert(out.end(), views.begin(), views.end());
        }
    }
    append_views(out, "final_norm", params.final_norm);
    append_views(out, "head", params.head);
    return out;
}

LayoutSpec atlas_stage_layout(const AtlasParams& params, std::size_t stage) {
    internal_check(stage < params.layout.num_scales, "stage index out of range");
    if (stage == 0) return params.layout;
    return build_layout(params.layout.grid_side[stage], params.config.window_side,
                        params.config.stride);
}

// ---------------------------------------------------------------------------

Matrix atlas_forward(const AtlasParams& params, const TensorMap& images, QkvCache& cache,
                     AtlasFwdCtx* ctx, OpCounter* counter) {
    const AtlasConfig& cfg = params.config;
    const LayoutSpec& layout = params.layout;
    const std::size_t P = cfg.patch_side;
    const std::size_t G = layout.grid_side[0];
    const std::size_t C = cfg.channels;
    const std::size_t L = layout.num_scales;
    const std::size_t B = images.batch;
    config_check(B >= 1, "empty image batch");
    config_check(images.rows == cfg.image_side && images.cols == cfg.image_side &&
                     images.channels == cfg.in_channels,
                 "image batch shape does not match the config");

    // patchify: each P x P patch becomes one token row (pixel-major, then
    // input channel), projected to the model width and offset by its position
    const std::size_t n1 = G * G;
    Matrix rows(B * n1, P * P * cfg.in_channels);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t pr = 0; pr < G; ++pr) {
            for (std::size_t pc = 0; pc < G; ++pc) {
                double* dst = rows.row(b * n1 + pr * G + pc);
                std::size_t col = 0;
                for (std::size_t i = 0; i < P; ++i)
                    for (std::size_t j = 0; j < P; ++j)
                        for (std::size_t ch = 0; ch < cfg.in_channels; ++ch)
                            dst[col++] = images.at(b, pr * P + i, pc * P + j, ch);
            }
        }
    }
    Matrix tok = linear(params.patchify, rows, counter);

    std::vector<TensorMap> maps;
    maps.reserve(L);
    maps.emplace_back(B, G, G, C);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t r = 0; r < G; ++r)
            for (std::size_t c = 0; c < G; ++c) {
                const double* t = tok.row(b * n1 + r * G + c);
                const double* pp = params.pos.row(r * G + c);
                double* dst = &maps[0].at(b, r, c, 0);
                for (std::size_t ch = 0; ch < C; ++ch) dst[ch] = t[ch] + pp[ch];
            }

    if (ctx) {
        ctx->batch = B;
        ctx->patch_rows = std::move(rows);
        ctx->cascade.assign(L >= 1 ? L - 1 : 0, PoolContext{});
        ctx->blocks.assign(L, {});
        for (std::size_t s = 0; s < L; ++s) ctx->blocks[s].assign(cfg.depths[s], MsaBlockCtx{});
    }

    // coarse scales start as the summarize cascade of the finest map
    for (std::size_t si = 1; si < L; ++si)
        maps.push_back(summarize(maps[si - 1], layout.stride, ctx ? &ctx->cascade[si - 1] : nullptr));

    // stage s refines scales [s..L), then leaves scale s untouched for good
    for (std::size_t s = 0; s < L; ++s) {
        const LayoutSpec ls = atlas_stage_layout(params, s);
        std::vector<TensorMap> active(maps.begin() + s, maps.end());
        for (std::size_t bi = 0; bi < cfg.depths[s]; ++bi)
            msa_block_forward(ls, params.stages[s][bi], cfg.mode, active, cache,
                              ctx ? &ctx->blocks[s][bi] : nullptr, counter);
        for (std::size_t i = 0; i < active.size(); ++i) maps[s + i] = std::move(active[i]);
    }

    // readout: normalize each coarsest-scale token, mean-pool, project.
    // Norming before the pool keeps everything downstream of the pool affine,
    // so the head reads a plain average of per-token descriptors.
    const std::size_t gl = layout.grid_side[L - 1];
    const std::size_t nl = gl * gl;
    Matrix tokens(B * nl, C);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t r = 0; r < gl; ++r)
            for (std::size_t c = 0; c < gl; ++c) {
                const double* t = &maps[L - 1].at(b, r, c, 0);
                double* dst = tokens.row(b * nl + r * gl + c);
                for (std::size_t ch = 0; ch < C; ++ch) dst[ch] = t[ch];
            }
    LayerNormCtx local_norm;
    Matrix normed =
        layer_norm(tokens, params.final_norm, kLayerNormEps, ctx ? &ctx->norm_ctx : &local_norm);
    Matrix pooled(B, C);
    for (std::size_t b = 0; b < B; ++b) {
        double* dst = pooled.row(b);
        for (std::size_t i = 0; i < nl; ++i) {
            const double* t = normed.row(b * nl + i);
            for (std::size_t ch = 0; ch < C; ++ch) dst[ch] += t[ch];
        }
        for (std::size_t ch = 0; ch < C; ++ch) dst[ch] /= static_cast<double>(nl);
    }
    Matrix logits = linear(params.head, pooled, counter);
    if (ctx) ctx->pooled = std::move(pooled);
    return logits;
}

void atlas_backward(const AtlasParams& params, AtlasFwdCtx& ctx, const Matrix& d_logits,
                    AtlasParams& grads, TensorMap* d_images) {
    const AtlasConfig& cfg = params.config;
    const LayoutSpec& layout = params.layout;
    const std::size_t L = layout.num_scales;
    const std::size_t C = cfg.channels;
    const std::size_t G = layout.grid_side[0];
    const std::size_t B = ctx.batch;
    internal_check(d_logits.rows == B && d_logits.cols == cfg.num_classes,
                   "atlas backward: d_logits shape mismatch");

    Matrix d_pooled = linear_bwd(params.head, ctx.pooled, d_logits, grads.head.weight,
                                 grads.head.bias);

    const std::size_t gl = layout.grid_side[L - 1];
    const std::size_t nl = gl * gl;
    Matrix d_normed(B * nl, C);
    for (std::size_t b = 0; b < B; ++b) {
        const double* dp = d_pooled.row(b);
        for (std::size_t i = 0; i < nl; ++i) {
            double* dst = d_normed.row(b * nl + i);
            for (std::size_t ch = 0; ch < C; ++ch)
                dst[ch] = dp[ch] / static_cast<double>(nl);
        }
    }
    Matrix d_tokens = layer_norm_bwd(ctx.norm_ctx, params.final_norm, d_normed,
                                     grads.final_norm.gain, grads.final_norm.bias);

    std::vector<TensorMap> d_maps;
    d_maps.reserve(L);
    for (std::size_t si = 0; si < L; ++si) {
        const std::size_t g = layout.grid_side[si];
        d_maps.emplace_back(B, g, g, C);
    }
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t r = 0; r < gl; ++r)
            for (std::size_t c = 0; c < gl; ++c) {
                double* dst = &d_maps[L - 1].at(b, r, c, 0);
                const double* src = d_tokens.row(b * nl + r * gl + c);
                for (std::size_t ch = 0; ch < C; ++ch) dst[ch] += src[ch];
            }

    // unwind the stages; frozen scales keep accumulating gradient because the
    // full d_maps set rides along
    for (std::size_t s = L; s-- > 0;) {
        const LayoutSpec ls = atlas_stage_layout(params, s);
        std::vector<TensorMap> d_active(d_maps.begin() + s, d_maps.end());
        for (std::size_t bi = cfg.depths[s]; bi-- > 0;)
            msa_block_backward(ls, params.stages[s][bi], ctx.blocks[s][bi], d_active,
                               grads.stages[s][bi]);
        for (std::size_t i = 0; i < d_active.size(); ++i) d_maps[s + i] = std::move(d_active[i]);
    }

    for (std::size_t si = L; si-- > 1;) {
        TensorMap d_in = summarize_bwd(ctx.cascade[si - 1], d_maps[si]);
        add_in_place(d_maps[si - 1], d_in);
    }

    const std::size_t n1 = G * G;
    Matrix d_tok(B * n1, C);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t r = 0; r < G; ++r)
            for (std::size_t c = 0; c < G; ++c) {
                const double* src = &d_maps[0].at(b, r, c, 0);
                double* dst = d_tok.row(b * n1 + r * G + c);
                double* gp = grads.pos.row(r * G + c);
                for (std::size_t ch = 0; ch < C; ++ch) {
                    dst[ch] = src[ch];
                    gp[ch] += src[ch];
                }
            }
    Matrix d_rows = linear_bwd(params.patchify, ctx.patch_rows, d_tok, grads.patchify.weight,
                               grads.patchify.bias);
    if (d_images) {
        internal_check(d_images->batch == B && d_images->rows == cfg.image_side &&
                           d_images->cols == cfg.image_side &&
                           d_images->channels == cfg.in_channels,
                       "atlas backward: d_images shape mismatch");
        std::fill(d_images->data.begin(), d_images->data.end(), 0.0);
        const std::size_t P = cfg.patch_side;
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t pr = 0; pr < G; ++pr)
                for (std::size_t pc = 0; pc < G; ++pc) {
                    const double* src = d_rows.row(b * n1 + pr * G + pc);
                    std::size_t col = 0;
                    for (std::size_t i = 0; i < P; ++i)
                        for (std::size_t j = 0; j < P; ++j)
                            for (std::size_t ch = 0; ch < cfg.in_channels; ++ch)
                                d_images->at(b, pr * P + i, pc * P + j, ch) += src[col++];
                }
    }
}

// ---------------------------------------------------------------------------

double softmax_xent(const Matrix& logits, const std::vector<std::size_t>& labels,
                    Matrix* d_logits) {
    const std::size_t B = logits.rows;
    config_check(labels.size() == B, "label count does not match the batch");
    if (d_logits) *d_logits = Matrix(B, logits.cols);
    double total = 0.0;
    for (std::size_t r = 0; r < B; ++r) {
        config_check(labels[r] < logits.cols, "label out of range");
        const double* x = logits.row(r);
        double m = x[0];
        for (std::size_t c = 1; c < logits.cols; ++c)
            if (x[c] > m) m = x[c];
        double sum = 0.0;
        for (std::size_t c = 0; c < logits.cols; ++c) sum += std::exp(x[c] - m);
        total += (m + std::log(sum)) - x[labels[r]];
        if (d_logits) {
            double* d = d_logits->row(r);
            for (std::size_t c = 0; c < logits.cols; ++c) {
                d[c] = std::exp(x[c] - m) / sum;
                if (c == labels[r]) d[c] -= 1.0;
                d[c] /= static_cast<double>(B);
            }
        }
    }
    return total / static_cast<double>(B);
}

std::size_t argmax_row(const Matrix& logits, std::size_t row) {
    const double* x = logits.row(row);
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols; ++c)
        if (x[c] > x[best]) best = c;
    return best;
}

void sgd_step(const std::vector<ParamView>& params, const std::vector<ParamView>& grads,
              SgdState& state, const SgdConfig& cfg) {
    internal_check(params.size() == grads.size(), "sgd: parameter/gradient view mismatch");
    const std::size_t total = total_count(params);
    if (state.velocity.empty()) state.velocity.assign(total, 0.0);
    internal_check(state.velocity.size() == total, "sgd: velocity buffer size mismatch");
    std::size_t off = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        internal_check(params[i].count == grads[i].count, "sgd: view size mismatch");
        double* p = params[i].data;
        const double* g = grads[i].data;
        double* v = state.velocity.data() + off;
        for (std::size_t j = 0; j < params[i].count; ++j) {
            v[j] = cfg.momentum * v[j] + (g[j] + cfg.weight_decay * p[j]);
            p[j] -= cfg.lr * v[j];
        }
        off += params[i].count;
    }
}

double atlas_train_step(AtlasParams& params, AtlasParams& grads, const TensorMap& images,
                        const std::vector<std::size_t>& labels, QkvCache& cache, SgdState& state,
                        const SgdConfig& sgd) {
    zero_views(param_views(grads));
    AtlasFwdCtx ctx;
    Matrix logits = atlas_forward(params, images, cache, &ctx);
    Matrix d_logits;
    const double loss = softmax_xent(logits, labels, &d_logits);
    atlas_backward(params, ctx, d_logits, grads);
    sgd_step(param_views(params), param_views(grads), state, sgd);
    return loss;
}

// ---------------------------------------------------------------------------

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

constexpr char kMagic[4] = {'A', 'T', 'L', 'S'};
constexpr std::uint32_t kFormatVersion = 1;

void write_bytes(std::ofstream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_bytes(std::ifstream& in, void* p, std::size_t n, const std::string& what) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    config_check(static_cast<std::size_t>(in.gcount()) == n,
                 "checkpoint truncated while reading " + what);
}

template <typename T>
void write_pod(std::ofstream& out, T v) {
    write_bytes(out, &v, sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& what) {
    T v{};
    read_bytes(in, &v, sizeof(T), what);
    return v;
}

std::string config_block_text(const AtlasConfig& cfg) {
    std::string text;
    for (const auto& [k, v] : config_entries(cfg)) text += k + "=" + v + "\n";
    return text;
}

}  // namespace

void save_checkpoint(const std::string& path, AtlasParams& params) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    config_check(out.good(), "cannot open '" + path + "' for writing");
    write_bytes(out, kMagic, sizeof(kMagic));
    write_pod<std::uint32_t>(out, kFormatVersion);

    const std::string cfg_text = config_block_text(params.config);
    write_pod<std::uint64_t>(out, cfg_text.size());
    write_bytes(out, cfg_text.data(), cfg_text.size());

    const auto views = param_views(params);
    write_pod<std::uint64_t>(out, views.size());
    for (const ParamView& v : views) {
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(v.name.size()));
        write_bytes(out, v.name.data(), v.name.size());
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(v.shape.size()));
        for (std::size_t e : v.shape) write_pod<std::uint64_t>(out, e);
        write_bytes(out, v.data, v.count * sizeof(double));
    }
    out.flush();
    config_check(out.good(), "write to '" + path + "' failed");
}

namespace {

// Consumes magic, version and the config block, leaving the stream at the
// tensor table.
std::string read_checkpoint_header(std::ifstream& in, const std::string& path) {
    char magic[4];
    read_bytes(in, magic, sizeof(magic), "magic bytes");
    config_check(std::memcmp(magic, kMagic, sizeof(kMagic)) == 0,
                 "'" + path + "' is not a checkpoint (bad magic bytes)");
    const auto version = read_pod<std::uint32_t>(in, "format version");
    config_check(version == kFormatVersion,
                 "unsupported checkpoint format version " + std::to_string(version));
    const auto cfg_len = read_pod<std::uint64_t>(in, "config block length");
    std::string cfg_text(cfg_len, '\0');
    read_bytes(in, cfg_text.data(), cfg_len, "config block");
    return cfg_text;
}

}  // namespace

AtlasConfig read_checkpoint_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    config_check(in.good(), "cannot open checkpoint '" + path + "'");
    const std::string cfg_text = read_checkpoint_header(in, path);
    AtlasConfig cfg;
    std::stringstream ss(cfg_text);
    std::string line;
    while (std::getline(ss, line)) {
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        config_check(eq != std::string::npos, "checkpoint config block is malformed");
        apply_config_entry(cfg, line.substr(0, eq), line.substr(eq + 1));
    }
    return cfg;
}

void load_checkpoint(const std::string& path, AtlasParams& params) {
    std::ifstream in(path, std::ios::binary);
    config_check(in.good(), "cannot open checkpoint '" + path + "'");
    const std::string cfg_text = read_checkpoint_header(in, path);

    // field-by-field comparison in canonical order, so a mismatch names the
    // first offending field instead of failing later on a tensor shape
    const auto want = config_entries(params.config);
    std::map<std::string, std::string> have;
    {
        std::stringstream ss(cfg_text);
        std::string line;
        while (std::getline(ss, line)) {
            if (line.empty()) continue;
            const std::size_t eq = line.find('=');
            config_check(eq != std::string::npos, "checkpoint config block is malformed");
            have[line.substr(0, eq)] = line.substr(eq + 1);
        }
    }
    for (const auto& [key, value] : want) {
        auto it = have.find(key);
        config_check(it != have.end(), "checkpoint config is missing field '" + key + "'");
        config_check(it->second == value, "checkpoint config mismatch for '" + key +
                                              "': checkpoint has " + it->second +
                                              ", model wants " + value);
        have.erase(it);
    }
    if (!have.empty())
        throw ConfigError("checkpoint config has unknown field '" + have.begin()->first + "'");

    auto views = param_views(params);
    std::map<std::string, ParamView*> by_name;
    for (ParamView& v : views) by_name[v.name] = &v;

    const auto tensor_count = read_pod<std::uint64_t>(in, "tensor count");
    config_check(tensor_count == views.size(),
                 "checkpoint stores " + std::to_string(tensor_count) + " tensors, model has " +
                     std::to_string(views.size()));
    for (std::uint64_t t = 0; t < tensor_count; ++t) {
        const auto name_len = read_pod<std::uint32_t>(in, "tensor name length");
        std::string name(name_len, '\0');
        read_bytes(in, name.data(), name_len, "tensor name");
        auto it = by_name.find(name);
        config_check(it != by_name.end() && it->second != nullptr,
                     "checkpoint tensor '" + name + "' is unknown or repeated");
        ParamView* view = it->second;
        it->second = nullptr;  // each tensor may appear once

        const auto rank = read_pod<std::uint32_t>(in, "tensor rank");
        config_check(rank == view->shape.size(),
                     "checkpoint tensor '" + name + "' has rank " + std::to_string(rank) +
                         ", model wants " + std::to_string(view->shape.size()));
        for (std::uint32_t d = 0; d < rank; ++d) {
            const auto extent = read_pod<std::uint64_t>(in, "tensor extent");
            config_check(extent == view->shape[d],
                         "checkpoint tensor '" + name + "' extent " + std::to_string(d) +
                             " is " + std::to_string(extent) + ", model wants " +
                             std::to_string(view->shape[d]));
        }
        read_bytes(in, view->data, view->count * sizeof(double), "tensor '" + name + "' values");
    }
    in.peek();
    config_check(in.eof(), "checkpoint has trailing data after the last tensor");
}

}  // namespace atlas
