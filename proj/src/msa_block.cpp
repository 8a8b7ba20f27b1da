#include "atlas/msa_block.hpp"

#include <algorithm>

#include <string>

#include "atlas/errors.hpp"

namespace atlas {

MsaBlockParams make_msa_block_params(std::size_t num_scales, std::size_t channels,
                                     std::size_t heads, std::size_t ffn_hidden) {
    config_check(num_scales >= 1, "block needs at least one scale");
    config_check(channels >= 1 && heads >= 1 && channels % heads == 0,
                 "channels must be divisible by heads");
    config_check(ffn_hidden >= 1, "ffn hidden width must be at least 1");
    MsaBlockParams p;
    p.channels = channels;
    p.heads = heads;
    p.ffn_hidden = ffn_hidden;
    for (std::size_t si = 0; si < num_scales; ++si) {
        p.top_down.push_back({LayerNormParams(channels), AttnProj(channels)});
        p.ffn.push_back({LayerNormParams(channels), LinearWeights(channels, ffn_hidden),
                         LinearWeights(ffn_hidden, channels)});
    }
    for (std::size_t si = 1; si < num_scales; ++si) {
        p.bottom_up.push_back(
            {LayerNormParams(channels), LayerNormParams(channels), AttnProj(channels)});
    }
    // A fresh container doubles as a gradient accumulator, so every tensor
    // starts at zero; init_msa_block_params restores the norm gains to one.
    for (ParamView& v : param_views(p)) std::fill(v.data, v.data + v.count, 0.0);
    return p;
}

void init_msa_block_params(MsaBlockParams& params, std::mt19937_64& rng) {
    auto unit_gain = [](LayerNormParams& n) {
        std::fill(n.gain.begin(), n.gain.end(), 1.0);
        std::fill(n.bias.begin(), n.bias.end(), 0.0);
    };
    for (auto& td : params.top_down) unit_gain(td.norm);
    for (auto& f : params.ffn) unit_gain(f.norm);
    for (auto& bu : params.bottom_up) {
        unit_gain(bu.norm_q);
        unit_gain(bu.norm_kv);
    }
    for (auto& td : params.top_down) {
        init_linear(td.proj.w_q, rng);
        init_linear(td.proj.w_k, rng);
        init_linear(td.proj.w_v, rng);
        init_linear(td.proj.w_o, rng);
    }
    for (auto& f : params.ffn) {
        init_linear(f.fc1, rng);
        init_linear(f.fc2, rng);
    }
    for (auto& bu : params.bottom_up) {
        init_linear(bu.proj.w_q, rng);
        init_linear(bu.proj.w_k, rng);
        init_linear(bu.proj.w_v, rng);
        init_linear(bu.proj.w_o, rng);
    }
}

namespace {

void append_proj_views(std::vector<ParamView>& out, const std::string& prefix, AttnProj& p) {
    append_views(out, prefix + ".wq", p.w_q);
    append_views(out, prefix + ".wk", p.w_k);
    append_views(out, prefix + ".wv", p.w_v);
    append_views(out, prefix + ".wo", p.w_o);
}

}  // namespace

std::vector<ParamView> param_views(MsaBlockParams& params, const std::string& prefix) {
    std::vector<ParamView> out;
    for (std::size_t si = 0; si < params.top_down.size(); ++si) {
        const std::string p = prefix + "td" + std::to_string(si);
        append_views(out, p + ".norm", params.top_down[si].norm);
        append_proj_views(out, p, params.top_down[si].proj);
    }
    for (std::size_t si = 0; si < params.ffn.size(); ++si) {
        const std::string p = prefix + "ffn" + std::to_string(si);
        append_views(out, p + ".norm", params.ffn[si].norm);
        append_views(out, p + ".fc1", params.ffn[si].fc1);
        append_views(out, p + ".fc2", params.ffn[si].fc2);
    }
    for (std::size_t si = 0; si < params.bottom_up.size(); ++si) {
        const std::string p = prefix + "bu" + std::to_string(si + 1);
        append_views(out, p + ".normq", params.bottom_up[si].norm_q);
        append_views(out, p + ".normkv", params.bottom_up[si].norm_kv);
        append_proj_views(out, p, params.bottom_up[si].proj);
    }
    return out;
}

namespace {

Matrix flat_of(const TensorMap& x) {
    return Matrix(x.batch * x.tokens(), x.channels, x.data);
}

void add_flat(TensorMap& x, const Matrix& m) {
    internal_check(m.data.size() == x.data.size(), "add_flat: size mismatch");
    for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += m.data[i];
}

void accum(Matrix& dst, const Matrix& src) {
    if (dst.rows == 0) {
        dst = src;
        return;
    }
    internal_check(dst.same_shape(src), "gradient accumulate: shape mismatch");
    for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

// dst (+)= rows [row0, row0+nrows) of src; dst sized on first touch.
void accum_row_slice(Matrix& dst, const Matrix& src, std::size_t row0, std::size_t nrows) {
    if (dst.rows == 0) dst = Matrix(nrows, src.cols);
    internal_check(dst.rows == nrows && dst.cols == src.cols && row0 + nrows <= src.rows,
                   "gradient row slice: shape mismatch");
    for (std::size_t i = 0; i < nrows; ++i) {
        const double* s = src.row(row0 + i);
        double* d = dst.row(i);
        for (std::size_t c = 0; c < src.cols; ++c) d[c] += s[c];
    }
}

Matrix row_slice(const Matrix& src, std::size_t row0, std::size_t nrows) {
    Matrix out(nrows, src.cols);
    for (std::size_t i = 0; i < nrows; ++i) {
        const double* s = src.row(row0 + i);
        double* d = out.row(i);
        for (std::size_t c = 0; c < src.cols; ++c) d[c] = s[c];
    }
    return out;
}

void copy_rows_into(Matrix& dst, std::size_t row0, const Matrix& src) {
    internal_check(row0 + src.rows <= dst.rows && dst.cols == src.cols,
                   "key stack: shape mismatch");
    for (std::size_t i = 0; i < src.rows; ++i) {
        const double* s = src.row(i);
        double* d = dst.row(row0 + i);
        for (std::size_t c = 0; c < src.cols; ++c) d[c] = s[c];
    }
}

std::string td_owner(std::size_t si) { return "td" + std::to_string(si); }
std::string bu_owner(std::size_t si) { return "bu" + std::to_string(si); }

}  // namespace

void msa_block_forward(const LayoutSpec& layout, const MsaBlockParams& params,
                       const CommunicationMode& mode, std::vector<TensorMap>& maps,
                       QkvCache& cache, MsaBlockCtx* ctx, OpCounter* counter) {
    const std::size_t L = layout.num_scales;
    const std::size_t C = params.channels;
    internal_check(maps.size() == L, "msa block: one map per scale expected");
    internal_check(params.top_down.size() == L && params.ffn.size() == L &&
                       params.bottom_up.size() + 1 == L,
                   "msa block: parameter scale count mismatch");
    const std::size_t B = maps[0].batch;
    for (std::size_t si = 0; si < L; ++si) {
        internal_check(maps[si].batch == B && maps[si].rows == layout.grid_side[si] &&
                           maps[si].cols == layout.grid_side[si] && maps[si].channels == C,
                       "msa block: map shape does not match the layout");
    }

    if (ctx) {
        ctx->mode = mode;
        ctx->batch = B;
        ctx->pools.clear();
        ctx->td.assign(L, TdStepCtx{});
        ctx->cross.assign(L, {});
        for (std::size_t si = 0; si < L; ++si)
            ctx->cross[si].assign(B * layout.windows_at(si), CrossKvCtx{});
        ctx->bu.clear();
    }

    // Stale entries from a previous block would serve pre-update features, so
    // the cache starts empty. No invalidations are needed during phase 1:
    // nothing has been projected yet.
    cache.begin_block();

    // phase 1: coarse maps absorb their pooled finer map, finest first so the
    // pooled input already includes the previous step's update
    if (mode.summarize_on && L >= 2) {
        if (ctx) ctx->pools.resize(L - 1);
        for (std::size_t si = 1; si < L; ++si) {
            TensorMap pooled =
                summarize(maps[si - 1], layout.stride, ctx ? &ctx->pools[si - 1] : nullptr);
            add_in_place(maps[si], pooled);
        }
    }

    // phase 2: coarsest scale first; finer scales then read the updated coarse maps
    for (std::size_t step = 0; step < L; ++step) {
        const std::size_t si = L - 1 - step;
        const auto& tdp = params.top_down[si];
        const std::size_t ws = layout.window_side_at(si);
        const std::size_t wps = layout.windows_per_side[si];
        const std::size_t nwin = wps * wps;
        TdStepCtx* st = ctx ? &ctx->td[si] : nullptr;
        if (st) {
            st->self.assign(B * nwin, SelfProjCtx{});
            st->attn.assign(B * nwin, WindowAttnCtx{});
        }

        std::vector<Matrix> deltas(B * nwin);
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t w = 0; w < nwin; ++w) {
                const std::size_t idx = b * nwin + w;
                const WindowId wid{w / wps, w % wps};

                SelfProjCtx local_self;
                SelfProjCtx& sp = st ? st->self[idx] : local_self;
                auto ensure_self_ln = [&] {
                    if (sp.normed.rows == 0) {
                        Matrix tokens = window_tokens(maps[si], b, wid, ws);
                        sp.normed = layer_norm(tokens, tdp.norm, kLayerNormEps, &sp.norm);
                    }
                };
                const Matrix& q = cache.get_or_project(
                    si, b, w, CacheRole::Q, td_owner(si), si,
                    [&] {
                        ensure_self_ln();
                        return linear(tdp.proj.w_q, sp.normed, counter);
                    },
                    counter);
                const Matrix& k_self = cache.get_or_project(
                    si, b, w, CacheRole::K, td_owner(si), si,
                    [&] {
                        ensure_self_ln();
                        return linear(tdp.proj.w_k, sp.normed, counter);
                    },
                    counter);
                const Matrix& v_self = cache.get_or_project(
                    si, b, w, CacheRole::V, td_owner(si), si,
                    [&] {
                        ensure_self_ln();
                        return linear(tdp.proj.w_v, sp.normed, counter);
                    },
                    counter);

                // stack keys/values: own window first, then ancestors finest
                // to coarsest
                std::size_t key_rows = k_self.rows;
                if (mode.top_down_on)
                    for (std::size_t m = si + 1; m < L; ++m) key_rows += layout.window_tokens_at(m);
                Matrix k_cat(key_rows, C), v_cat(key_rows, C);
                copy_rows_into(k_cat, 0, k_self);
                copy_rows_into(v_cat, 0, v_self);
                if (mode.top_down_on) {
                    std::size_t off = k_self.rows;
                    for (std::size_t m = si + 1; m < L; ++m) {
                        const WindowId anc = layout.ancestor_window[si][w][m - si - 1];
                        const std::size_t aidx = layout.window_index(m, anc);
                        const std::size_t aws = layout.window_side_at(m);
                        CrossKvCtx local_cross;
                        CrossKvCtx& cc =
                            ctx ? ctx->cross[m][b * layout.windows_at(m) + aidx] : local_cross;
                        auto ensure_cross_ln = [&] {
                            if (!cc.ln_done) {
                                Matrix tokens = window_tokens(maps[m], b, anc, aws);
                                cc.normed = layer_norm(tokens, params.top_down[m].norm,
                                                       kLayerNormEps, &cc.norm);
                                cc.ln_done = true;
                            }
                        };
                        const Matrix& km = cache.get_or_project(
                            m, b, aidx, CacheRole::K, td_owner(m), si,
                            [&] {
                                ensure_cross_ln();
                                return linear(params.top_down[m].proj.w_k, cc.normed, counter);
                            },
                            counter);
                        const Matrix& vm = cache.get_or_project(
                            m, b, aidx, CacheRole::V, td_owner(m), si,
                            [&] {
                                ensure_cross_ln();
                                return linear(params.top_down[m].proj.w_v, cc.normed, counter);
                            },
                            counter);
                        copy_rows_into(k_cat, off, km);
                        copy_rows_into(v_cat, off, vm);
                        off += km.rows;
                    }
                }

                WindowAttnCtx local_attn;
                WindowAttnCtx& ac = st ? st->attn[idx] : local_attn;
                Matrix core_out = attention_core(q, k_cat, v_cat, params.heads,
                                                 st ? &ac.core : nullptr, counter);
                deltas[idx] = linear(tdp.proj.w_o, core_out, counter);
                if (st) ac.core_out = std::move(core_out);
            }
        }
        // map-wide residual once every window's delta is computed, so all
        // windows of this step saw the pre-update map
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t w = 0; w < nwin; ++w)
                add_window_tokens(maps[si], b, WindowId{w / wps, w % wps}, ws,
                                  deltas[b * nwin + w]);

        // per-scale FFN
        Matrix flat = flat_of(maps[si]);
        LayerNormCtx local_norm;
        Matrix normed =
            layer_norm(flat, params.ffn[si].norm, kLayerNormEps, st ? &st->ffn_norm : &local_norm);
        Matrix pre = linear(params.ffn[si].fc1, normed, counter);
        Matrix act = gelu(pre);
        Matrix out = linear(params.ffn[si].fc2, act, counter);
        add_flat(maps[si], out);
        if (st) {
            st->ffn_normed = std::move(normed);
            st->ffn_pre = std::move(pre);
            st->ffn_act = std::move(act);
        }
        // one invalidation per step: no cache read of this scale can occur
        // between the attention residual and the FFN residual above
        cache.invalidate_scale(si);
    }

    // phase 3: finest reader first; coarser readers then see the refined maps
    if (mode.bottom_up_on && L >= 2) {
        if (ctx) ctx->bu.assign(L - 1, BuStepCtx{});
        for (std::size_t si = 1; si < L; ++si) {
            const auto& bup = params.bottom_up[si - 1];
            const std::size_t gps = layout.groups_per_side(si);
            const std::size_t ngroups = gps * gps;
            const std::size_t pws = layout.window_side_at(si - 1);
            BuStepCtx* st = ctx ? &ctx->bu[si - 1] : nullptr;
            if (st) {
                st->kv.assign(B * ngroups, BuKvCtx{});
                st->attn.assign(B * ngroups, BuAttnCtx{});
            }

            std::vector<Matrix> deltas(B * ngroups);
            for (std::size_t b = 0; b < B; ++b) {
                for (std::size_t g = 0; g < ngroups; ++g) {
                    const std::size_t idx = b * ngroups + g;
                    const WindowId gid{g / gps, g % gps};
                    const WindowId pw = layout.parent_window[si - 1][g];
                    const std::size_t pwidx = layout.window_index(si - 1, pw);

                    BuKvCtx local_kv;
                    BuKvCtx& kvc = st ? st->kv[idx] : local_kv;
                    auto ensure_kv_ln = [&] {
                        if (kvc.normed.rows == 0) {
                            Matrix tokens = window_tokens(maps[si - 1], b, pw, pws);
                            kvc.normed = layer_norm(tokens, bup.norm_kv, kLayerNormEps, &kvc.norm);
                        }
                    };
                    const Matrix& k = cache.get_or_project(
                        si - 1, b, pwidx, CacheRole::K, bu_owner(si), si,
                        [&] {
                            ensure_kv_ln();
                            return linear(bup.proj.w_k, kvc.normed, counter);
                        },
                        counter);
                    const Matrix& v = cache.get_or_project(
                        si - 1, b, pwidx, CacheRole::V, bu_owner(si), si,
                        [&] {
                            ensure_kv_ln();
                            return linear(bup.proj.w_v, kvc.normed, counter);
                        },
                        counter);

                    BuAttnCtx local_attn;
                    BuAttnCtx& ac = st ? st->attn[idx] : local_attn;
                    Matrix gtokens = group_tokens(maps[si], b, layout, si, gid);
                    ac.normed_q = layer_norm(gtokens, bup.norm_q, kLayerNormEps, &ac.norm_q);
                    Matrix q = linear(bup.proj.w_q, ac.normed_q, counter);
                    Matrix core_out =
                        attention_core(q, k, v, params.heads, st ? &ac.core : nullptr, counter);
                    deltas[idx] = linear(bup.proj.w_o, core_out, counter);
                    if (st) ac.core_out = std::move(core_out);
                }
            }
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t g = 0; g < ngroups; ++g)
                    add_group_tokens(maps[si], b, layout, si, WindowId{g / gps, g % gps},
                                     deltas[b * ngroups + g]);
            cache.invalidate_scale(si);
        }
    }
}

void msa_block_backward(const LayoutSpec& layout, const MsaBlockParams& params, MsaBlockCtx& ctx,
                        std::vector<TensorMap>& d_maps, MsaBlockParams& grads) {
    const std::size_t L = layout.num_scales;
    const std::size_t B = ctx.batch;
    const CommunicationMode mode = ctx.mode;
    internal_check(d_maps.size() == L, "msa block backward: one gradient map per scale");

    // reverse phase 3, coarsest reader first
    if (mode.bottom_up_on && L >= 2) {
        for (std::size_t si = L - 1; si >= 1; --si) {
            BuStepCtx& st = ctx.bu[si - 1];
            const auto& bup = params.bottom_up[si - 1];
            auto& bug = grads.bottom_up[si - 1];
            const std::size_t gps = layout.groups_per_side(si);
            const std::size_t ngroups = gps * gps;
            const std::size_t pws = layout.window_side_at(si - 1);

            for (std::size_t b = B; b-- > 0;) {
                for (std::size_t g = ngroups; g-- > 0;) {
                    const std::size_t idx = b * ngroups + g;
                    const WindowId gid{g / gps, g % gps};
                    BuAttnCtx& ac = st.attn[idx];

                    Matrix d_delta = group_tokens(d_maps[si], b, layout, si, gid);
                    Matrix d_core_out = linear_bwd(bup.proj.w_o, ac.core_out, d_delta,
                                                   bug.proj.w_o.weight, bug.proj.w_o.bias);
                    Matrix d_q, d_k, d_v;
                    attention_core_bwd(ac.core, d_core_out, d_q, d_k, d_v);

                    Matrix d_normed_q = linear_bwd(bup.proj.w_q, ac.normed_q, d_q,
                                                   bug.proj.w_q.weight, bug.proj.w_q.bias);
                    Matrix d_gtokens = layer_norm_bwd(ac.norm_q, bup.norm_q, d_normed_q,
                                                      bug.norm_q.gain, bug.norm_q.bias);
                    add_group_tokens(d_maps[si], b, layout, si, gid, d_gtokens);

                    BuKvCtx& kvc = st.kv[idx];
                    accum(kvc.d_k, d_k);
                    accum(kvc.d_v, d_v);
                }
            }
            for (std::size_t b = B; b-- > 0;) {
                for (std::size_t g = ngroups; g-- > 0;) {
                    const std::size_t idx = b * ngroups + g;
                    BuKvCtx& kvc = st.kv[idx];
                    internal_check(kvc.d_k.rows > 0, "bottom-up k/v fill never read back");
                    Matrix d_normed = linear_bwd(bup.proj.w_k, kvc.normed, kvc.d_k,
                                                 bug.proj.w_k.weight, bug.proj.w_k.bias);
                    accum(d_normed, linear_bwd(bup.proj.w_v, kvc.normed, kvc.d_v,
                                               bug.proj.w_v.weight, bug.proj.w_v.bias));
                    Matrix d_tokens = layer_norm_bwd(kvc.norm, bup.norm_kv, d_normed,
                                                     bug.norm_kv.gain, bug.norm_kv.bias);
                    add_window_tokens(d_maps[si - 1], b, layout.parent_window[si - 1][g], pws,
                                      d_tokens);
                }
            }
        }
    }

    // reverse phase 2 in increasing scale order: when scale si unwinds, every
    // finer reader has already pushed its key/value gradients into the cross
    // contexts owned by si
    for (std::size_t si = 0; si < L; ++si) {
        TdStepCtx& st = ctx.td[si];
        const auto& tdp = params.top_down[si];
        auto& tdg = grads.top_down[si];
        const std::size_t ws = layout.window_side_at(si);
        const std::size_t wps = layout.windows_per_side[si];
        const std::size_t nwin = wps * wps;
        const std::size_t own_rows = ws * ws;

        // (a) cross k/v fills owned by this scale (projected from the
        // post-step map, so they unwind before the FFN and attention step)
        if (mode.top_down_on) {
            for (std::size_t b = 0; b < B; ++b) {
                for (std::size_t w = 0; w < nwin; ++w) {
                    CrossKvCtx& cc = ctx.cross[si][b * nwin + w];
                    if (!cc.ln_done) continue;
                    internal_check(cc.d_k.rows > 0, "cross k/v fill never read back");
                    Matrix d_normed = linear_bwd(tdp.proj.w_k, cc.normed, cc.d_k,
                                                 tdg.proj.w_k.weight, tdg.proj.w_k.bias);
                    accum(d_normed, linear_bwd(tdp.proj.w_v, cc.normed, cc.d_v,
                                               tdg.proj.w_v.weight, tdg.proj.w_v.bias));
                    Matrix d_tokens = layer_norm_bwd(cc.norm, tdp.norm, d_normed, tdg.norm.gain,
                                                     tdg.norm.bias);
                    add_window_tokens(d_maps[si], b, WindowId{w / wps, w % wps}, ws, d_tokens);
                }
            }
        }

        // (b) FFN
        {
            Matrix d_flat = flat_of(d_maps[si]);
            Matrix d_act = linear_bwd(params.ffn[si].fc2, st.ffn_act, d_flat,
                                      grads.ffn[si].fc2.weight, grads.ffn[si].fc2.bias);
            Matrix d_pre = gelu_bwd(st.ffn_pre, d_act);
            Matrix d_normed = linear_bwd(params.ffn[si].fc1, st.ffn_normed, d_pre,
                                         grads.ffn[si].fc1.weight, grads.ffn[si].fc1.bias);
            Matrix d_in = layer_norm_bwd(st.ffn_norm, params.ffn[si].norm, d_normed,
                                         grads.ffn[si].norm.gain, grads.ffn[si].norm.bias);
            add_flat(d_maps[si], d_in);
        }

        // (c) the attention step itself
        for (std::size_t b = B; b-- > 0;) {
            for (std::size_t w = nwin; w-- > 0;) {
                const std::size_t idx = b * nwin + w;
                const WindowId wid{w / wps, w % wps};
                WindowAttnCtx& ac = st.attn[idx];

                Matrix d_delta = window_tokens(d_maps[si], b, wid, ws);
                Matrix d_core_out = linear_bwd(tdp.proj.w_o, ac.core_out, d_delta,
                                               tdg.proj.w_o.weight, tdg.proj.w_o.bias);
                Matrix d_q, d_kcat, d_vcat;
                attention_core_bwd(ac.core, d_core_out, d_q, d_kcat, d_vcat);

                SelfProjCtx& sp = st.self[idx];
                Matrix d_normed = linear_bwd(tdp.proj.w_q, sp.normed, d_q, tdg.proj.w_q.weight,
                                             tdg.proj.w_q.bias);
                accum(d_normed,
                      linear_bwd(tdp.proj.w_k, sp.normed, row_slice(d_kcat, 0, own_rows),
                                 tdg.proj.w_k.weight, tdg.proj.w_k.bias));
                accum(d_normed,
                      linear_bwd(tdp.proj.w_v, sp.normed, row_slice(d_vcat, 0, own_rows),
                                 tdg.proj.w_v.weight, tdg.proj.w_v.bias));
                Matrix d_tokens =
                    layer_norm_bwd(sp.norm, tdp.norm, d_normed, tdg.norm.gain, tdg.norm.bias);
                add_window_tokens(d_maps[si], b, wid, ws, d_tokens);

                if (mode.top_down_on) {
                    std::size_t off = own_rows;
                    for (std::size_t m = si + 1; m < L; ++m) {
                        const WindowId anc = layout.ancestor_window[si][w][m - si - 1];
                        const std::size_t aidx = layout.window_index(m, anc);
                        const std::size_t rows = layout.window_tokens_at(m);
                        CrossKvCtx& cc = ctx.cross[m][b * layout.windows_at(m) + aidx];
                        accum_row_slice(cc.d_k, d_kcat, off, rows);
                        accum_row_slice(cc.d_v, d_vcat, off, rows);
                        off += rows;
                    }
                }
            }
        }
    }

    // reverse phase 1
    if (mode.summarize_on && L >= 2) {
        for (std::size_t si = L - 1; si >= 1; --si) {
            TensorMap d_src = summarize_bwd(ctx.pools[si - 1], d_maps[si]);
            add_in_place(d_maps[si - 1], d_src);
        }
    }
}

void msa_block_count(const LayoutSpec& layout, const CommunicationMode& mode, std::size_t batch,
                     std::size_t channels, std::size_t heads, std::size_t ffn_hidden,
                     OpCounter& counter) {
    const std::size_t L = layout.num_scales;
    const std::size_t C = channels;
    const std::uint64_t cc = static_cast<std::uint64_t>(C) * C;
    const std::size_t dk = C / heads;

    // mirrors every counter site of msa_block_forward, including which cache
    // lookups fill and which hit
    for (std::size_t step = 0; step < L; ++step) {
        const std::size_t si = L - 1 - step;
        const std::size_t nwin = layout.windows_at(si);
        const std::size_t own = layout.window_tokens_at(si);
        std::size_t key_rows = own;
        if (mode.top_down_on)
            for (std::size_t m = si + 1; m < L; ++m) key_rows += layout.window_tokens_at(m);

        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t w = 0; w < nwin; ++w) {
                // q/k/v fills for the window itself
                counter.cache_misses += 3;
                counter.proj_calls += 3;
                counter.macs += 3ull * own * cc;
                if (mode.top_down_on) {
                    for (std::size_t m = si + 1; m < L; ++m) {
                        const std::size_t rows = layout.window_tokens_at(m);
                        // one fill per coarse window per phase: the first
                        // reader window whose ancestor it is fills, everyone
                        // after that hits. With readers running fine-ward,
                        // that first reader sits at scale m-1; within that
                        // step it is the first of the stride*stride reader
                        // windows sharing the ancestor (or the only reader
                        // window if scale m-1 has fewer).
                        const WindowId anc = layout.ancestor_window[si][w][m - si - 1];
                        bool fills = false;
                        if (si == m - 1) {
                            const std::size_t first = layout.window_index(
                                si,
                                WindowId{anc.row * layout.stride, anc.col * layout.stride});
                            fills = (w == first);
                        }
                        if (fills) {
                            counter.cache_misses += 2;
                            counter.proj_calls += 2;
                            counter.macs += 2ull * rows * cc;
                        } else {
                            counter.cache_hits += 2;
                        }
                    }
                }
                // attention core
                counter.attn_pairs += static_cast<std::uint64_t>(own) * key_rows;
                counter.attn_queries += own;
                counter.macs += 2ull * heads * own * key_rows * dk;
                // output projection
                counter.proj_calls += 1;
                counter.macs += static_cast<std::uint64_t>(own) * cc;
            }
        }
        // FFN over the whole flattened map
        const std::uint64_t n = static_cast<std::uint64_t>(batch) * layout.tokens_at(si);
        counter.proj_calls += 2;
        counter.macs += n * ffn_hidden * C + n * C * ffn_hidden;
    }

    if (mode.bottom_up_on && L >= 2) {
        for (std::size_t si = 1; si < L; ++si) {
            const std::size_t gps = layout.groups_per_side(si);
            const std::size_t ngroups = gps * gps;
            const std::size_t gtok = layout.group_side_at(si) * layout.group_side_at(si);
            const std::size_t ptok = layout.window_tokens_at(si - 1);
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t g = 0; g < ngroups; ++g) {
                    counter.cache_misses += 2;  // k/v of the parent window
                    counter.proj_calls += 2;
                    counter.macs += 2ull * ptok * cc;
                    counter.proj_calls += 1;  // queries, not cached
                    counter.macs += static_cast<std::uint64_t>(gtok) * cc;
                    counter.attn_pairs += static_cast<std::uint64_t>(gtok) * ptok;
                    counter.attn_queries += gtok;
                    counter.macs += 2ull * heads * gtok * ptok * dk;
                    counter.proj_calls += 1;  // output projection
                    counter.macs += static_cast<std::uint64_t>(gtok) * cc;
                }
            }
        }
    }
}

}  // namespace atlas
