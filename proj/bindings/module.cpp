// Python bindings for the core operations: scale layouts, the pooling and
// block primitives, the full classifier, and the toy data generator. Feature
// maps cross the boundary as (batch, rows, cols, channels) float64 arrays.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <random>
#include <string>
#include <vector>

#include "atlas/atlas_model.hpp"
#include "atlas/bench.hpp"
#include "atlas/equiv_suite.hpp"
#include "atlas/errors.hpp"
#include "atlas/layout.hpp"
#include "atlas/msa_block.hpp"
#include "atlas/qkv_cache.hpp"
#include "atlas/summarize.hpp"
#include "atlas/toy_task.hpp"

namespace py = pybind11;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

atlas::TensorMap map_from_array(const DoubleArray& arr) {
    if (arr.ndim() != 4)
        throw atlas::UsageError("expected a (batch, rows, cols, channels) array, got " +
                                std::to_string(arr.ndim()) + " dimensions");
    atlas::TensorMap map(static_cast<std::size_t>(arr.shape(0)),
                         static_cast<std::size_t>(arr.shape(1)),
                         static_cast<std::size_t>(arr.shape(2)),
                         static_cast<std::size_t>(arr.shape(3)));
    std::memcpy(map.data.data(), arr.data(), map.data.size() * sizeof(double));
    return map;
}

py::array_t<double> array_from_map(const atlas::TensorMap& map) {
    py::array_t<double> arr({map.batch, map.rows, map.cols, map.channels});
    std::memcpy(arr.mutable_data(), map.data.data(), map.data.size() * sizeof(double));
    return arr;
}

py::array_t<double> array_from_matrix(const atlas::Matrix& m) {
    py::array_t<double> arr({m.rows, m.cols});
    std::memcpy(arr.mutable_data(), m.data.data(), m.data.size() * sizeof(double));
    return arr;
}

atlas::LayoutSpec layout_for(std::size_t grid, std::size_t window_side, std::size_t stride,
                             const std::string& mode) {
    return mode == "window" ? atlas::single_scale_layout(grid, window_side, stride)
                            : atlas::build_layout(grid, window_side, stride);
}

// A trained or freshly seeded classifier plus the cache its forwards use.
struct Model {
    atlas::AtlasParams params;
    atlas::QkvCache cache;

    explicit Model(const atlas::AtlasConfig& cfg) : params(atlas::make_atlas_params(cfg)) {
        atlas::init_atlas_params(params);
    }
    explicit Model(atlas::AtlasParams p) : params(std::move(p)) {}
};

atlas::AtlasConfig config_from_kwargs(std::size_t image_side, std::size_t patch_side,
                                      std::size_t in_channels, std::size_t window_side,
                                      std::size_t stride, std::size_t channels, std::size_t heads,
                                      std::size_t ffn_mult, std::vector<std::size_t> depths,
                                      std::size_t num_classes, const std::string& mode,
                                      std::uint64_t seed) {
    atlas::AtlasConfig cfg;
    cfg.image_side = image_side;
    cfg.patch_side = patch_side;
    cfg.in_channels = in_channels;
    cfg.window_side = window_side;
    cfg.stride = stride;
    cfg.channels = channels;
    cfg.heads = heads;
    cfg.ffn_mult = ffn_mult;
    cfg.depths = std::move(depths);
    cfg.num_classes = num_classes;
    cfg.seed = seed;
    atlas::apply_mode_name(cfg, mode);
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "multi-scale windowed attention: layouts, blocks, classifier, toy task";

    py::register_exception<atlas::ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<atlas::UsageError>(m, "UsageError", PyExc_RuntimeError);

    py::class_<atlas::LayoutSpec>(m, "Layout")
        .def_readonly("num_scales", &atlas::LayoutSpec::num_scales)
        .def_readonly("stride", &atlas::LayoutSpec::stride)
        .def_readonly("grid_sides", &atlas::LayoutSpec::grid_side)
        .def_readonly("windows_per_side", &atlas::LayoutSpec::windows_per_side)
        .def_property_readonly("window_sides",
                               [](const atlas::LayoutSpec& l) {
                                   std::vector<std::size_t> out;
                                   for (std::size_t si = 0; si < l.num_scales; ++si)
                                       out.push_back(l.window_side_at(si));
                                   return out;
                               })
        .def_property_readonly("tokens",
                               [](const atlas::LayoutSpec& l) {
                                   std::vector<std::size_t> out;
                                   for (std::size_t si = 0; si < l.num_scales; ++si)
                                       out.push_back(l.tokens_at(si));
                                   return out;
                               })
        .def("__repr__", [](const atlas::LayoutSpec& l) {
            std::string r = "Layout(scales=[";
            for (std::size_t si = 0; si < l.num_scales; ++si) {
                if (si) r += ", ";
                r += std::to_string(l.grid_side[si]);
            }
            return r + "], stride=" + std::to_string(l.stride) + ")";
        });

    m.def(
        "build_layout",
        [](std::size_t grid, std::size_t window_side, std::size_t stride) {
            return atlas::build_layout(grid, window_side, stride);
        },
        py::arg("grid"), py::arg("window_side"), py::arg("stride"),
        "Scale ladder for a token grid: divide the side by the stride until one window covers "
        "it.");

    m.def(
        "summarize",
        [](const DoubleArray& x, std::size_t stride) {
            return array_from_map(atlas::summarize(map_from_array(x), stride));
        },
        py::arg("x"), py::arg("stride"),
        "Channelwise stride x stride max-pool of a (batch, rows, cols, channels) map.");

    m.def(
        "attention_pairs",
        [](std::size_t grid, std::size_t window_side, std::size_t stride,
           const std::string& mode) {
            return atlas::analytic_attention_pairs(layout_for(grid, window_side, stride, mode),
                                                   atlas::mode_by_name(mode));
        },
        py::arg("grid"), py::arg("window_side"), py::arg("stride"), py::arg("mode") = "msa",
        "Closed-form query-key pair count for one block pass.");

    m.def(
        "max_fine_pair_distance",
        [](std::size_t grid, std::size_t window_side, std::size_t stride) {
            return atlas::max_fine_pair_distance(atlas::build_layout(grid, window_side, stride));
        },
        py::arg("grid"), py::arg("window_side"), py::arg("stride"),
        "Largest BFS hop count between two finest-scale tokens on the communication graph.");

    m.def(
        "block_forward",
        [](const std::vector<DoubleArray>& maps, std::size_t window_side, std::size_t stride,
           std::size_t heads, const std::string& mode, std::uint64_t seed) {
            if (maps.empty()) throw atlas::UsageError("block_forward: need at least one map");
            std::vector<atlas::TensorMap> work;
            work.reserve(maps.size());
            for (const auto& arr : maps) work.push_back(map_from_array(arr));
            const atlas::LayoutSpec layout =
                layout_for(work[0].rows, window_side, stride, mode);
            if (layout.num_scales != work.size())
                throw atlas::UsageError("block_forward: layout has " +
                                        std::to_string(layout.num_scales) + " scales but " +
                                        std::to_string(work.size()) + " maps were passed");
            std::mt19937_64 rng(seed);
            const atlas::MsaBlockParams params =
                atlas::random_block_params(layout, work[0].channels, heads, rng);
            atlas::QkvCache cache;
            atlas::msa_block_forward(layout, params, atlas::mode_by_name(mode), work, cache);
            std::vector<py::array_t<double>> out;
            out.reserve(work.size());
            for (const auto& w : work) out.push_back(array_from_map(w));
            return out;
        },
        py::arg("maps"), py::arg("window_side"), py::arg("stride"), py::arg("heads") = 2,
        py::arg("mode") = "msa", py::arg("seed") = 0,
        "One seeded-random block pass over per-scale maps; returns the refined maps.");

    m.def(
        "toy_batch",
        [](std::size_t image_side, std::size_t window_side, std::size_t samples,
           std::uint64_t seed) {
            const atlas::ToyBatch batch =
                atlas::make_toy_batch({image_side, window_side, samples, seed});
            py::array_t<std::int64_t> labels(batch.labels.size());
            auto* dst = labels.mutable_data();
            for (std::size_t i = 0; i < batch.labels.size(); ++i)
                dst[i] = static_cast<std::int64_t>(batch.labels[i]);
            return py::make_tuple(array_from_map(batch.images), labels);
        },
        py::arg("image_side") = 8, py::arg("window_side") = 4, py::arg("samples") = 1024,
        py::arg("seed") = 0,
        "Two typed markers in distinct windows; label 1 when the types match.");

    py::class_<Model>(m, "Model")
        .def(py::init([](std::size_t image_side, std::size_t patch_side, std::size_t in_channels,
                         std::size_t window_side, std::size_t stride, std::size_t channels,
                         std::size_t heads, std::size_t ffn_mult, std::vector<std::size_t> depths,
                         std::size_t num_classes, const std::string& mode, std::uint64_t seed) {
                 return Model(config_from_kwargs(image_side, patch_side, in_channels, window_side,
                                                 stride, channels, heads, ffn_mult,
                                                 std::move(depths), num_classes, mode, seed));
             }),
             py::arg("image_side") = 32, py::arg("patch_side") = 4, py::arg("in_channels") = 3,
             py::arg("window_side") = 8, py::arg("stride") = 2, py::arg("channels") = 64,
             py::arg("heads") = 4, py::arg("ffn_mult") = 4,
             py::arg("depths") = std::vector<std::size_t>{1, 1}, py::arg("num_classes") = 2,
             py::arg("mode") = "msa", py::arg("seed") = 0)
        .def(
            "forward",
            [](Model& self, const DoubleArray& images) {
                return array_from_matrix(
                    atlas::atlas_forward(self.params, map_from_array(images), self.cache));
            },
            py::arg("images"),
            "Logits (batch x classes) for (batch, side, side, in_channels) images.")
        .def_property_readonly("config",
                               [](const Model& self) {
                                   py::dict d;
                                   for (const auto& [k, v] :
                                        atlas::config_entries(self.params.config))
                                       d[py::str(k)] = v;
                                   return d;
                               })
        .def_property_readonly("mode",
                               [](const Model& self) {
                                   return atlas::mode_name(self.params.config);
                               })
        .def_property_readonly("layout", [](const Model& self) { return self.params.layout; })
        .def_property_readonly("parameter_count",
                               [](Model& self) {
                                   return atlas::total_count(atlas::param_views(self.params));
                               })
        .def(
            "save", [](Model& self, const std::string& path) {
                atlas::save_checkpoint(path, self.params);
            },
            py::arg("path"))
        .def_static(
            "load",
            [](const std::string& path) {
                const atlas::AtlasConfig cfg = atlas::read_checkpoint_config(path);
                atlas::AtlasParams params = atlas::make_atlas_params(cfg);
                atlas::load_checkpoint(path, params);
                return Model(std::move(params));
            },
            py::arg("path"));
}
