#include "atlas/gradcheck_suite.hpp"

#include <random>

#include "atlas/atlas_model.hpp"
#include "atlas/attention.hpp"
#include "atlas/equiv_suite.hpp"
#include "atlas/errors.hpp"
#include "atlas/msa_block.hpp"
#include "atlas/summarize.hpp"

namespace atlas {

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Matrix m(r, c);
    for (double& v : m.data) v = dist(rng);
    return m;
}

double wsum(const Matrix& m, const Matrix& w) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m.data.size(); ++i) acc += m.data[i] * w.data[i];
    return acc;
}

double wsum_maps(const std::vector<TensorMap>& maps, const std::vector<TensorMap>& w) {
    double acc = 0.0;
    for (std::size_t si = 0; si < maps.size(); ++si)
        for (std::size_t i = 0; i < maps[si].data.size(); ++i)
            acc += maps[si].data[i] * w[si].data[i];
    return acc;
}

void check_matmul(GradCheckReport& report, std::mt19937_64& rng) {
    Matrix a = random_matrix(3, 4, rng);
    Matrix b = random_matrix(4, 5, rng);
    const Matrix w = random_matrix(3, 5, rng);
    const auto loss = [&] { return wsum(matmul(a, b), w); };
    Matrix d_a(3, 4), d_b(4, 5);
    matmul_bwd(a, b, w, d_a, d_b);
    gradcheck_group(report, "matmul.a", loss, a.data.data(), a.data.size(), d_a.data);
    gradcheck_group(report, "matmul.b", loss, b.data.data(), b.data.size(), d_b.data);
}

void check_linear(GradCheckReport& report, std::mt19937_64& rng) {
    LinearWeights lw(4, 3);
    init_linear(lw, rng);
    Matrix x = random_matrix(5, 4, rng);
    const Matrix w = random_matrix(5, 3, rng);
    const auto loss = [&] { return wsum(linear(lw, x), w); };
    LinearWeights grads(4, 3);
    Matrix d_x = linear_bwd(lw, x, w, grads.weight, grads.bias);
    gradcheck_group(report, "linear.x", loss, x.data.data(), x.data.size(), d_x.data);
    gradcheck_group(report, "linear.weight", loss, lw.weight.data.data(), lw.weight.data.size(),
                    grads.weight.data);
    gradcheck_group(report, "linear.bias", loss, lw.bias.data(), lw.bias.size(), grads.bias);
}

void check_softmax(GradCheckReport& report, std::mt19937_64& rng) {
    Matrix x = random_matrix(4, 6, rng);
    const Matrix w = random_matrix(4, 6, rng);
    const auto loss = [&] { return wsum(softmax_rows(x), w); };
    const Matrix d_x = softmax_rows_bwd(softmax_rows(x), w);
    gradcheck_group(report, "softmax.x", loss, x.data.data(), x.data.size(), d_x.data);
}

void check_layer_norm(GradCheckReport& report, std::mt19937_64& rng) {
    LayerNormParams p(8);
    std::normal_distribution<double> dist(0.0, 0.5);
    for (double& v : p.gain) v = 1.0 + dist(rng);
    for (double& v : p.bias) v = dist(rng);
    Matrix x = random_matrix(5, 8, rng);
    const Matrix w = random_matrix(5, 8, rng);
    const auto loss = [&] { return wsum(layer_norm(x, p), w); };
    LayerNormCtx ctx;
    layer_norm(x, p, kLayerNormEps, &ctx);
    LayerNormParams grads(8);
    for (double& v : grads.gain) v = 0.0;
    const Matrix d_x = layer_norm_bwd(ctx, p, w, grads.gain, grads.bias);
    gradcheck_group(report, "layer_norm.x", loss, x.data.data(), x.data.size(), d_x.data);
    gradcheck_group(report, "layer_norm.gain", loss, p.gain.data(), p.gain.size(), grads.gain);
    gradcheck_group(report, "layer_norm.bias", loss, p.bias.data(), p.bias.size(), grads.bias);
}

void check_gelu(GradCheckReport& report, std::mt19937_64& rng) {
    Matrix x = random_matrix(4, 7, rng);
    const Matrix w = random_matrix(4, 7, rng);
    const auto loss = [&] { return wsum(gelu(x), w); };
    const Matrix d_x = gelu_bwd(x, w);
    gradcheck_group(report, "gelu.x", loss, x.data.data(), x.data.size(), d_x.data);
}

void check_attention_core(GradCheckReport& report, std::mt19937_64& rng) {
    const std::size_t heads = 2, c = 6;
    Matrix q = random_matrix(5, c, rng);
    Matrix k = random_matrix(9, c, rng);
    Matrix v = random_matrix(9, c, rng);
    const Matrix w = random_matrix(5, c, rng);
    const auto loss = [&] { return wsum(attention_core(q, k, v, heads), w); };
    AttnCoreCtx ctx;
    attention_core(q, k, v, heads, &ctx);
    Matrix d_q, d_k, d_v;
    attention_core_bwd(ctx, w, d_q, d_k, d_v);
    gradcheck_group(report, "attention.q", loss, q.data.data(), q.data.size(), d_q.data);
    gradcheck_group(report, "attention.k", loss, k.data.data(), k.data.size(), d_k.data);
    gradcheck_group(report, "attention.v", loss, v.data.data(), v.data.size(), d_v.data);
}

void check_summarize(GradCheckReport& report, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    TensorMap x(2, 4, 4, 3);
    for (double& v : x.data) v = dist(rng);
    TensorMap w(2, 2, 2, 3);
    for (double& v : w.data) v = dist(rng);
    const auto loss = [&] {
        const TensorMap out = summarize(x, 2);
        double acc = 0.0;
        for (std::size_t i = 0; i < out.data.size(); ++i) acc += out.data[i] * w.data[i];
        return acc;
    };
    PoolContext ctx;
    summarize(x, 2, &ctx);
    const TensorMap d_x = summarize_bwd(ctx, w);
    gradcheck_group(report, "summarize.x", loss, x.data.data(), x.data.size(), d_x.data);
}

void check_block(GradCheckReport& report, const std::string& label, std::size_t grid,
                 std::size_t window_side, std::size_t channels, std::size_t heads,
                 const CommunicationMode& mode, std::mt19937_64& rng) {
    const LayoutSpec layout = build_layout(grid, window_side, 2);
    MsaBlockParams params = random_block_params(layout, channels, heads, rng);
    std::vector<TensorMap> maps = random_maps(layout, 1, channels, rng);
    std::vector<TensorMap> weights;
    std::normal_distribution<double> dist(0.0, 1.0);
    for (const TensorMap& m : maps) {
        TensorMap w(m.batch, m.rows, m.cols, m.channels);
        for (double& v : w.data) v = dist(rng);
        weights.push_back(std::move(w));
    }

    const auto loss = [&] {
        std::vector<TensorMap> work = maps;
        QkvCache cache;
        msa_block_forward(layout, params, mode, work, cache);
        return wsum_maps(work, weights);
    };

    std::vector<TensorMap> work = maps;
    QkvCache cache;
    MsaBlockCtx ctx;
    msa_block_forward(layout, params, mode, work, cache, &ctx);
    std::vector<TensorMap> d_maps = weights;  // d(loss)/d(outputs)
    MsaBlockParams grads =
        make_msa_block_params(layout.num_scales, channels, heads, 2 * channels);
    msa_block_backward(layout, params, ctx, d_maps, grads);

    const auto param_list = param_views(params, label + ".");
    const auto grad_list = param_views(grads, label + ".");
    for (std::size_t i = 0; i < param_list.size(); ++i) {
        const std::vector<double> analytic(grad_list[i].data,
                                           grad_list[i].data + grad_list[i].count);
        gradcheck_group(report, param_list[i].name, loss, param_list[i].data,
                        param_list[i].count, analytic);
    }
    for (std::size_t si = 0; si < maps.size(); ++si)
        gradcheck_group(report, label + ".input" + std::to_string(si), loss,
                        maps[si].data.data(), maps[si].data.size(), d_maps[si].data);
}

void check_atlas(GradCheckReport& report, std::mt19937_64& rng) {
    AtlasConfig cfg;
    cfg.image_side = 32;
    cfg.patch_side = 4;
    cfg.in_channels = 1;
    cfg.window_side = 4;
    cfg.stride = 2;
    cfg.channels = 8;
    cfg.heads = 2;
    cfg.ffn_mult = 2;
    cfg.depths = {1, 1};
    cfg.num_classes = 2;
    cfg.seed = rng();

    AtlasParams params = make_atlas_params(cfg);
    init_atlas_params(params);
    std::normal_distribution<double> dist(0.0, 1.0);
    TensorMap images(2, cfg.image_side, cfg.image_side, cfg.in_channels);
    for (double& v : images.data) v = dist(rng);
    const std::vector<std::size_t> labels = {1, 0};

    QkvCache cache;
    const auto loss = [&] {
        const Matrix logits = atlas_forward(params, images, cache);
        return softmax_xent(logits, labels);
    };

    AtlasFwdCtx ctx;
    const Matrix logits = atlas_forward(params, images, cache, &ctx);
    Matrix d_logits;
    softmax_xent(logits, labels, &d_logits);
    AtlasParams grads = make_atlas_params(cfg);
    TensorMap d_images(2, cfg.image_side, cfg.image_side, cfg.in_channels);
    atlas_backward(params, ctx, d_logits, grads, &d_images);

    const auto param_list = param_views(params);
    const auto grad_list = param_views(grads);
    for (std::size_t i = 0; i < param_list.size(); ++i) {
        const std::vector<double> analytic(grad_list[i].data,
                                           grad_list[i].data + grad_list[i].count);
        gradcheck_group(report, "atlas." + param_list[i].name, loss, param_list[i].data,
                        param_list[i].count, analytic);
    }
    // input pixels: a prefix is enough to exercise the patchify scatter
    const std::size_t probe = 128;
    const std::vector<double> d_img_prefix(d_images.data.begin(),
                                           d_images.data.begin() + probe);
    gradcheck_group(report, "atlas.images", loss, images.data.data(), probe, d_img_prefix);
}

}  // namespace

GradCheckReport run_gradcheck_suite(std::uint64_t seed) {
    GradCheckReport report;
    std::mt19937_64 rng(seed);
    check_matmul(report, rng);
    check_linear(report, rng);
    check_softmax(report, rng);
    check_layer_norm(report, rng);
    check_gelu(report, rng);
    check_attention_core(report, rng);
    check_summarize(report, rng);
    check_block(report, "block_l2", 8, 4, 4, 2, mode_by_name("msa"), rng);
    check_block(report, "block_l2_td", 8, 4, 4, 1, mode_by_name("topdown"), rng);
    check_block(report, "block_l2_bu", 8, 4, 4, 2, mode_by_name("bottomup"), rng);
    check_block(report, "block_l3", 16, 4, 4, 2, mode_by_name("msa"), rng);
    check_atlas(report, rng);
    return report;
}

}  // namespace atlas
