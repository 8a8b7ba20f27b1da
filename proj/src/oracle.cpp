#include "atlas/oracle.hpp"

#include <cmath>
#include <vector>

#include "atlas/errors.hpp"

namespace atlas {
namespace oracle {

namespace {

using Vec = std::vector<double>;

Vec norm_token(const double* x, std::size_t c, const LayerNormParams& p) {
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += x[j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
        const double d = x[j] - mean;
        var += d * d;
    }
    var /= static_cast<double>(c);
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    Vec out(c);
    for (std::size_t j = 0; j < c; ++j) out[j] = (x[j] - mean) * inv * p.gain[j] + p.bias[j];
    return out;
}

Vec project(const LinearWeights& w, const Vec& x) {
    Vec out(w.out_dim);
    for (std::size_t o = 0; o < w.out_dim; ++o) {
        double acc = 0.0;
        for (std::size_t t = 0; t < w.in_dim; ++t) acc += x[t] * w.weight.at(o, t);
        out[o] = acc + w.bias[o];
    }
    return out;
}

// One query against an explicit key/value list, head by head, writing the
// concatenated head outputs.
Vec attend(const Vec& q, const std::vector<Vec>& keys, const std::vector<Vec>& values,
           std::size_t heads) {
    const std::size_t c = q.size();
    const std::size_t dk = c / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    Vec out(c);
    Vec scores(keys.size());
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t c0 = h * dk;
        for (std::size_t j = 0; j < keys.size(); ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < dk; ++t) acc += q[c0 + t] * keys[j][c0 + t];
            scores[j] = acc * scale;
        }
        double m = scores[0];
        for (std::size_t j = 1; j < scores.size(); ++j)
            if (scores[j] > m) m = scores[j];
        double sum = 0.0;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            scores[j] = std::exp(scores[j] - m);
            sum += scores[j];
        }
        for (std::size_t j = 0; j < scores.size(); ++j) scores[j] /= sum;
        for (std::size_t t = 0; t < dk; ++t) {
            double acc = 0.0;
            for (std::size_t j = 0; j < scores.size(); ++j) acc += scores[j] * values[j][c0 + t];
            out[c0 + t] = acc;
        }
    }
    return out;
}

void ffn_token(double* x, std::size_t c, const FfnScaleParams& p) {
    Vec normed = norm_token(x, c, p.norm);
    Vec pre = project(p.fc1, normed);
    for (double& v : pre) v = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
    Vec out = project(p.fc2, pre);
    for (std::size_t j = 0; j < c; ++j) x[j] += out[j];
}

// Attention step at one scale: per window, queries over the window's own
// tokens with keys from the window plus (optionally) its ancestor windows.
// Deltas apply only after every window of the scale is done.
void attention_step(const LayoutSpec& layout, const MsaBlockParams& params, bool with_ancestors,
                    std::vector<TensorMap>& maps, std::size_t si) {
    TensorMap& x = maps[si];
    const std::size_t c = x.channels;
    const std::size_t L = layout.num_scales;
    const std::size_t ws = layout.window_side_at(si);
    const std::size_t wps = layout.windows_per_side[si];
    const auto& own = params.top_down[si];

    TensorMap delta(x.batch, x.rows, x.cols, c);
    for (std::size_t b = 0; b < x.batch; ++b) {
        for (std::size_t wa = 0; wa < wps; ++wa) {
            for (std::size_t wb = 0; wb < wps; ++wb) {
                // key/value list: own window row-major, then each ancestor
                // window finest to coarsest
                std::vector<Vec> keys, values;
                for (std::size_t i = 0; i < ws; ++i) {
                    for (std::size_t j = 0; j < ws; ++j) {
                        Vec n = norm_token(&x.at(b, wa * ws + i, wb * ws + j, 0), c, own.norm);
                        keys.push_back(project(own.proj.w_k, n));
                        values.push_back(project(own.proj.w_v, n));
                    }
                }
                if (with_ancestors) {
                    for (std::size_t m = si + 1; m < L; ++m) {
                        const WindowId anc =
                            layout.ancestor_window[si][wa * wps + wb][m - si - 1];
                        const std::size_t aws = layout.window_side_at(m);
                        const auto& src = params.top_down[m];
                        for (std::size_t i = 0; i < aws; ++i) {
                            for (std::size_t j = 0; j < aws; ++j) {
                                Vec n = norm_token(
                                    &maps[m].at(b, anc.row * aws + i, anc.col * aws + j, 0), c,
                                    src.norm);
                                keys.push_back(project(src.proj.w_k, n));
                                values.push_back(project(src.proj.w_v, n));
                            }
                        }
                    }
                }
                for (std::size_t i = 0; i < ws; ++i) {
                    for (std::size_t j = 0; j < ws; ++j) {
                        const std::size_t r = wa * ws + i, cl = wb * ws + j;
                        Vec q = project(own.proj.w_q, norm_token(&x.at(b, r, cl, 0), c, own.norm));
                        Vec attended = attend(q, keys, values, params.heads);
                        Vec o = project(own.proj.w_o, attended);
                        for (std::size_t t = 0; t < c; ++t) delta.at(b, r, cl, t) = o[t];
                    }
                }
            }
        }
    }
    for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += delta.data[i];
}

}  // namespace

void naive_msa_forward(const LayoutSpec& layout, const MsaBlockParams& params,
                       const CommunicationMode& mode, std::vector<TensorMap>& maps) {
    const std::size_t L = layout.num_scales;
    const std::size_t c = params.channels;
    internal_check(maps.size() == L, "naive forward: one map per scale expected");
    const std::size_t s = layout.stride;

    // phase 1: summarize fine to coarse
    if (mode.summarize_on) {
        for (std::size_t si = 1; si < L; ++si) {
            const TensorMap& src = maps[si - 1];
            TensorMap& dst = maps[si];
            for (std::size_t b = 0; b < src.batch; ++b) {
                for (std::size_t r = 0; r < dst.rows; ++r) {
                    for (std::size_t cl = 0; cl < dst.cols; ++cl) {
                        for (std::size_t ch = 0; ch < c; ++ch) {
                            double best = src.at(b, r * s, cl * s, ch);
                            for (std::size_t i = 0; i < s; ++i)
                                for (std::size_t j = 0; j < s; ++j) {
                                    const double v = src.at(b, r * s + i, cl * s + j, ch);
                                    if (v > best) best = v;
                                }
                            dst.at(b, r, cl, ch) += best;
                        }
                    }
                }
            }
        }
    }

    // phase 2: top-down attention plus FFN, coarsest scale first
    for (std::size_t step = 0; step < L; ++step) {
        const std::size_t si = L - 1 - step;
        attention_step(layout, params, mode.top_down_on, maps, si);
        TensorMap& x = maps[si];
        for (std::size_t b = 0; b < x.batch; ++b)
            for (std::size_t t = 0; t < x.tokens(); ++t) ffn_token(x.token(b, t), c, params.ffn[si]);
    }

    // phase 3: bottom-up re-read, finest reader first
    if (mode.bottom_up_on) {
        for (std::size_t si = 1; si < L; ++si) {
            const auto& bup = params.bottom_up[si - 1];
            TensorMap& x = maps[si];
            const TensorMap& fine = maps[si - 1];
            const std::size_t gps = layout.groups_per_side(si);
            const std::size_t gs = layout.group_side_at(si);
            const std::size_t pws = layout.window_side_at(si - 1);

            TensorMap delta(x.batch, x.rows, x.cols, c);
            for (std::size_t b = 0; b < x.batch; ++b) {
                for (std::size_t ga = 0; ga < gps; ++ga) {
                    for (std::size_t gb = 0; gb < gps; ++gb) {
                        std::vector<Vec> keys, values;
                        for (std::size_t i = 0; i < pws; ++i) {
                            for (std::size_t j = 0; j < pws; ++j) {
                                Vec n = norm_token(
                                    fine.token(b, (ga * pws + i) * fine.cols + (gb * pws + j)), c, bup.norm_kv);
                                keys.push_back(project(bup.proj.w_k, n));
                                values.push_back(project(bup.proj.w_v, n));
                            }
                        }
                        for (std::size_t i = 0; i < gs; ++i) {
                            for (std::size_t j = 0; j < gs; ++j) {
                                const std::size_t r = ga * gs + i, cl = gb * gs + j;
                                Vec q = project(bup.proj.w_q,
                                                norm_token(&x.at(b, r, cl, 0), c, bup.norm_q));
                                Vec attended = attend(q, keys, values, params.heads);
                                Vec o = project(bup.proj.w_o, attended);
                                for (std::size_t t = 0; t < c; ++t) delta.at(b, r, cl, t) = o[t];
                            }
                        }
                    }
                }
            }
            for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += delta.data[i];
        }
    }
}

void naive_windowed_block(TensorMap& map, std::size_t window_side,
                          const TopDownScaleParams& attn, const FfnScaleParams& ffn,
                          std::size_t heads) {
    internal_check(map.rows % window_side == 0 && map.cols % window_side == 0,
                   "naive windowed block: grid not divisible by window side");
    const std::size_t c = map.channels;
    const std::size_t ws = window_side;

    TensorMap delta(map.batch, map.rows, map.cols, c);
    for (std::size_t b = 0; b < map.batch; ++b) {
        for (std::size_t wa = 0; wa < map.rows / ws; ++wa) {
            for (std::size_t wb = 0; wb < map.cols / ws; ++wb) {
                std::vector<Vec> keys, values;
                for (std::size_t i = 0; i < ws; ++i) {
                    for (std::size_t j = 0; j < ws; ++j) {
                        Vec n = norm_token(&map.at(b, wa * ws + i, wb * ws + j, 0), c, attn.norm);
                        keys.push_back(project(attn.proj.w_k, n));
                        values.push_back(project(attn.proj.w_v, n));
                    }
                }
                for (std::size_t i = 0; i < ws; ++i) {
                    for (std::size_t j = 0; j < ws; ++j) {
                        const std::size_t r = wa * ws + i, cl = wb * ws + j;
                        Vec q = project(attn.proj.w_q,
                                        norm_token(&map.at(b, r, cl, 0), c, attn.norm));
                        Vec o = project(attn.proj.w_o, attend(q, keys, values, heads));
                        for (std::size_t t = 0; t < c; ++t) delta.at(b, r, cl, t) = o[t];
                    }
                }
            }
        }
    }
    for (std::size_t i = 0; i < map.data.size(); ++i) map.data[i] += delta.data[i];
    for (std::size_t b = 0; b < map.batch; ++b)
        for (std::size_t t = 0; t < map.tokens(); ++t) ffn_token(map.token(b, t), c, ffn);
}

void full_attention_block_reference(TensorMap& map, const TopDownScaleParams& attn,
                                    const FfnScaleParams& ffn, std::size_t heads) {
    const std::size_t n = map.tokens();
    const std::size_t c = map.channels;
    const std::size_t dk = c / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

    for (std::size_t b = 0; b < map.batch; ++b) {
        // whole-grid token matrices, row-major over the grid
        std::vector<Vec> normed(n), q(n), k(n), v(n);
        for (std::size_t t = 0; t < n; ++t) {
            normed[t] = norm_token(map.token(b, t), c, attn.norm);
            q[t] = project(attn.proj.w_q, normed[t]);
            k[t] = project(attn.proj.w_k, normed[t]);
            v[t] = project(attn.proj.w_v, normed[t]);
        }
        std::vector<Vec> core(n, Vec(c, 0.0));
        std::vector<double> row(n);
        for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t c0 = h * dk;
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    double acc = 0.0;
                    for (std::size_t t = 0; t < dk; ++t) acc += q[i][c0 + t] * k[j][c0 + t];
                    row[j] = acc * scale;
                }
                double m = row[0];
                for (std::size_t j = 1; j < n; ++j)
                    if (row[j] > m) m = row[j];
                double sum = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    row[j] = std::exp(row[j] - m);
                    sum += row[j];
                }
                for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
                for (std::size_t t = 0; t < dk; ++t) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += row[j] * v[j][c0 + t];
                    core[i][c0 + t] = acc;
                }
            }
        }
        std::vector<Vec> out(n);
        for (std::size_t t = 0; t < n; ++t) out[t] = project(attn.proj.w_o, core[t]);
        for (std::size_t t = 0; t < n; ++t) {
            double* x = map.token(b, t);
            for (std::size_t j = 0; j < c; ++j) x[j] += out[t][j];
        }
    }
    for (std::size_t b = 0; b < map.batch; ++b)
        for (std::size_t t = 0; t < map.tokens(); ++t) ffn_token(map.token(b, t), c, ffn);
}

Matrix naive_vit_forward(const AtlasParams& params, const TensorMap& images) {
    const AtlasConfig& cfg = params.config;
    internal_check(params.layout.num_scales == 1 && params.layout.windows_per_side[0] == 1,
                   "naive vit: config must put the whole grid in one window");
    const std::size_t P = cfg.patch_side;
    const std::size_t G = params.layout.grid_side[0];
    const std::size_t C = cfg.channels;
    const std::size_t B = images.batch;
    const std::size_t n = G * G;

    TensorMap map(B, G, G, C);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t pr = 0; pr < G; ++pr) {
            for (std::size_t pc = 0; pc < G; ++pc) {
                Vec patch;
                patch.reserve(P * P * cfg.in_channels);
                for (std::size_t i = 0; i < P; ++i)
                    for (std::size_t j = 0; j < P; ++j)
                        for (std::size_t ch = 0; ch < cfg.in_channels; ++ch)
                            patch.push_back(images.at(b, pr * P + i, pc * P + j, ch));
                Vec tok = project(params.patchify, patch);
                double* dst = &map.at(b, pr, pc, 0);
                const double* pos = params.pos.row(pr * G + pc);
                for (std::size_t ch = 0; ch < C; ++ch) dst[ch] = tok[ch] + pos[ch];
            }
        }
    }

    for (const auto& block : params.stages[0])
        full_attention_block_reference(map, block.top_down[0], block.ffn[0], cfg.heads);

    Matrix logits(B, cfg.num_classes);
    for (std::size_t b = 0; b < B; ++b) {
        Vec acc(C, 0.0);
        for (std::size_t t = 0; t < n; ++t) {
            const double* x = map.token(b, t);
            for (std::size_t ch = 0; ch < C; ++ch) acc[ch] += x[ch];
        }
        for (std::size_t ch = 0; ch < C; ++ch) acc[ch] /= static_cast<double>(n);
        Vec normed = norm_token(acc.data(), C, params.final_norm);
        Vec out = project(params.head, normed);
        for (std::size_t cl = 0; cl < cfg.num_classes; ++cl) logits.at(b, cl) = out[cl];
    }
    return logits;
}

}  // namespace oracle
}  // namespace atlas
