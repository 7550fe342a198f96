#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fundus/config.hpp"
#include "fundus/synthetic.hpp"
#include "fundus/workflow.hpp"

namespace py = pybind11;
using namespace fundus;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

template <typename P>
P plane_from(const py::array& a) {
    using T = typename P::value_type;
    const auto arr = py::array_t<T, py::array::c_style | py::array::forcecast>::ensure(a);
    if (!arr || arr.ndim() != 2) throw Error("expected a 2-D array");
    const int h = static_cast<int>(arr.shape(0)), w = static_cast<int>(arr.shape(1));
    return P(w, h, std::vector<T>(arr.data(), arr.data() + arr.size()));
}

template <typename P>
py::array_t<typename P::value_type> to_array(const P& p) {
    py::array_t<typename P::value_type> out({p.height(), p.width()});
    std::copy(p.data().begin(), p.data().end(), out.mutable_data());
    return out;
}

RgbRaster rgb_from(const U8Array& a) {
    if (a.ndim() != 3 || a.shape(2) != 3) throw Error("expected an H x W x 3 uint8 array");
    const int h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
    RgbRaster img(w, h);
    const std::uint8_t* src = a.data();
    for (std::size_t i = 0; i < img.g.size(); ++i) {
        img.r.data()[i] = src[3 * i];
        img.g.data()[i] = src[3 * i + 1];
        img.b.data()[i] = src[3 * i + 2];
    }
    return img;
}

py::array_t<std::uint8_t> rgb_to_array(const RgbRaster& img) {
    py::array_t<std::uint8_t> out({img.height(), img.width(), 3});
    std::uint8_t* dst = out.mutable_data();
    for (std::size_t i = 0; i < img.g.size(); ++i) {
        dst[3 * i] = img.r.data()[i];
        dst[3 * i + 1] = img.g.data()[i];
        dst[3 * i + 2] = img.b.data()[i];
    }
    return out;
}

py::tuple bbox_tuple(const BBox& b) { return py::make_tuple(b.left, b.top, b.right, b.bottom); }

py::dict otsu_dict(const OtsuResult& r) {
    py::dict d;
    d["thresholds"] = r.thresholds;
    d["sigma_b2"] = r.sigma_b2;
    d["sigma_t2"] = r.sigma_t2;
    d["eta"] = r.eta;
    d["regions"] = r.regions;
    return d;
}

PipelineConfig config_from(const std::vector<std::string>& overrides) {
    PipelineConfig cfg;
    for (const auto& o : overrides) apply_override(cfg, o);
    validate_config(cfg);
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Retinal hemorrhage detection core";
    py::register_exception<Error>(m, "FundusError", PyExc_ValueError);

    m.def("config_keys", &config_keys);
    m.def(
        "default_config", [] { return config_to_ini(PipelineConfig{}); },
        "Default configuration as INI text.");

    m.def(
        "preprocess", [](const U8Array& rgb) { return to_array(preprocess(rgb_from(rgb))); }, py::arg("rgb"),
        "Enhanced green channel of an H x W x 3 uint8 image.");

    m.def(
        "matched_filter",
        [](const F64Array& img, double sigma, double support) {
            return to_array(matched_filter(plane_from<RealRaster>(img), MatchedFilterConfig{sigma, support}));
        },
        py::arg("image"), py::arg("sigma") = 4.0, py::arg("support") = 3.0);

    m.def(
        "multilevel_otsu",
        [](std::vector<double> counts, int regions) { return otsu_dict(multilevel_otsu(Histogram(std::move(counts)), regions)); },
        py::arg("counts"), py::arg("regions"));
    m.def(
        "adaptive_thresholds",
        [](std::vector<double> counts) { return otsu_dict(adaptive_thresholds(Histogram(std::move(counts)))); },
        py::arg("counts"));

    m.def(
        "make_synthetic",
        [](std::uint64_t seed) {
            const SyntheticImage s = make_synthetic(seed);
            py::list lesions;
            for (const auto& l : s.lesions) lesions.append(py::make_tuple(l.cx, l.cy, l.radius));
            return py::make_tuple(rgb_to_array(s.rgb), to_array(s.ground_truth), lesions);
        },
        py::arg("seed"), "(rgb, ground_truth, [(cx, cy, radius)]) for a procedural fundus image.");

    m.def(
        "analyze",
        [](const U8Array& rgb, const std::vector<std::string>& overrides) {
            const PipelineConfig cfg = config_from(overrides);
            const ImageAnalysis a = analyze_image(downscale(rgb_from(rgb), cfg.downscale), cfg);
            py::list segments;
            for (const auto& s : a.segmentation.segments) {
                py::dict d;
                d["seed_id"] = s.seed_id;
                d["window"] = bbox_tuple(s.window);
                d["bbox"] = bbox_tuple(s.object.bbox);
                d["area"] = s.object.pixels.size();
                d["status"] = to_string(s.status);
                d["iterations"] = s.iterations;
                d["mask"] = to_array(component_mask(s.object, a.rgb.width(), a.rgb.height()));
                segments.append(d);
            }
            py::dict out;
            out["enhanced"] = to_array(a.enhanced);
            out["calibrated"] = to_array(a.calibration.calibrated);
            out["search_space"] = to_array(a.calibration.search_space);
            out["seed_threshold"] = a.seeds.threshold;
            out["segments"] = segments;
            return out;
        },
        py::arg("rgb"), py::arg("overrides") = std::vector<std::string>{},
        "Every pipeline stage for one image; overrides are section.key=value strings.");

    m.def("feature_dim", [](const std::string& tag) { return feature_dim(extractor_from_string(tag)); });
    m.def("conventional_feature_names", [] {
        const auto& n = conventional_feature_names();
        return std::vector<std::string>(n.begin(), n.end());
    });
    m.def(
        "validate_features",
        [](const std::string& path, std::optional<std::string> extractor) {
            std::optional<Extractor> e;
            if (extractor) e = extractor_from_string(*extractor);
            const ValidationReport r = validate_feature_file(path, e);
            return py::make_tuple(r.records, r.violations);
        },
        py::arg("path"), py::arg("extractor") = py::none(), "(record count, violations) for a FeatureRecord JSONL file.");

    m.def(
        "sensitivity", [](long long tp, long long fp, long long tn, long long fn) { return sensitivity({tp, fp, tn, fn}); },
        py::arg("tp"), py::arg("fp"), py::arg("tn"), py::arg("fn"));
    m.def(
        "specificity", [](long long tp, long long fp, long long tn, long long fn) { return specificity({tp, fp, tn, fn}); },
        py::arg("tp"), py::arg("fp"), py::arg("tn"), py::arg("fn"));

    m.def("write_synthetic_dataset", &write_synthetic_dataset, py::arg("root"), py::arg("count"),
          py::arg("first_seed") = 1);
}
