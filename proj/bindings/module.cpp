#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "sfa/adain.hpp"
#include "sfa/attention.hpp"
#include "sfa/metrics.hpp"
#include "sfa/synth.hpp"
#include "sfa/tensor.hpp"
#include "sfa/train.hpp"

namespace py = pybind11;
using namespace sfa;

namespace {

FeatureMap to_feature_map(const py::array_t<double>& arr) {
    if (arr.ndim() != 5) {
        throw ShapeError("expected a 5-d array (s, n, h, w, c)");
    }
    Shape5 sh{static_cast<std::size_t>(arr.shape(0)),
              static_cast<std::size_t>(arr.shape(1)),
              static_cast<std::size_t>(arr.shape(2)),
              static_cast<std::size_t>(arr.shape(3)),
              static_cast<std::size_t>(arr.shape(4))};
    auto contig = py::array_t<double, py::array::c_style | py::array::forcecast>(arr);
    std::vector<double> data(contig.data(), contig.data() + sh.numel());
    return FeatureMap(sh, std::move(data));
}

py::array_t<double> from_feature_map(const FeatureMap& f) {
    const Shape5& sh = f.shape();
    py::array_t<double> out({sh.s, sh.n, sh.h, sh.w, sh.c});
    std::copy(f.data().begin(), f.data().end(), out.mutable_data());
    return out;
}

Matrix to_matrix(const py::array_t<double>& arr) {
    if (arr.ndim() != 2) throw ShapeError("expected a 2-d array");
    auto contig = py::array_t<double, py::array::c_style | py::array::forcecast>(arr);
    const std::size_t r = static_cast<std::size_t>(arr.shape(0));
    const std::size_t c = static_cast<std::size_t>(arr.shape(1));
    std::vector<double> data(contig.data(), contig.data() + r * c);
    return Matrix(r, c, std::move(data));
}

py::array_t<double> from_matrix(const Matrix& m) {
    py::array_t<double> out({m.rows(), m.cols()});
    std::copy(m.data().begin(), m.data().end(), out.mutable_data());
    return out;
}

FusionConfig make_config(double tau, std::optional<double> alpha,
                         const std::string& mask_mode,
                         const std::string& pairing_mode, double eps) {
    FusionConfig cfg;
    cfg.tau = tau;
    cfg.alpha = alpha;
    cfg.eps = eps;
    if (mask_mode == "paper_literal") {
        cfg.mask_mode = MaskMode::paper_literal;
    } else if (mask_mode == "exclusion") {
        cfg.mask_mode = MaskMode::exclusion;
    } else {
        throw DomainError("unknown mask mode: " + mask_mode);
    }
    if (pairing_mode == "as_written") {
        cfg.pairing_mode = PairingMode::as_written;
    } else if (pairing_mode == "aligned") {
        cfg.pairing_mode = PairingMode::aligned;
    } else {
        throw DomainError("unknown pairing mode: " + pairing_mode);
    }
    cfg.validate();
    return cfg;
}

ProjectionSet make_projection(const py::array_t<double>& w_q,
                              const py::array_t<double>& w_k,
                              const py::array_t<double>& w_v,
                              std::size_t heads) {
    ProjectionSet proj{to_matrix(w_q), to_matrix(w_k), to_matrix(w_v), heads};
    proj.validate();
    return proj;
}

py::dict metric_to_dict(const MetricReport& rep) {
    py::dict d;
    d["name"] = rep.name;
    d["aggregate"] = rep.aggregate;
    d["per_view"] = rep.per_view;
    return d;
}

}  // namespace

PYBIND11_MODULE(_sfa, m) {
    m.doc() = "Style fusion attention core";

    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);

    m.def(
        "seeded_normal",
        [](std::size_t s, std::size_t n, std::size_t h, std::size_t w,
           std::size_t c, std::uint64_t seed) {
            return from_feature_map(seeded_normal(Shape5{s, n, h, w, c}, seed));
        },
        py::arg("s"), py::arg("n"), py::arg("h"), py::arg("w"), py::arg("c"),
        py::arg("seed"));

    m.def(
        "adain",
        [](const py::array_t<double>& content, const py::array_t<double>& style,
           double eps) {
            return from_matrix(adain(to_matrix(content), to_matrix(style), eps));
        },
        py::arg("content"), py::arg("style"), py::arg("eps") = 1e-5);

    m.def(
        "random_projection",
        [](std::size_t channels, std::size_t heads, std::uint64_t seed) {
            ProjectionSet p = ProjectionSet::random(channels, heads, seed);
            return py::make_tuple(from_matrix(p.w_q), from_matrix(p.w_k),
                                  from_matrix(p.w_v));
        },
        py::arg("channels"), py::arg("heads"), py::arg("seed"));

    m.def(
        "fused_attention",
        [](const py::array_t<double>& f_l, const py::array_t<double>& f_c,
           const py::array_t<double>& f_s, const py::array_t<double>& w_q,
           const py::array_t<double>& w_k, const py::array_t<double>& w_v,
           std::size_t heads, double tau, const std::string& pairing_mode,
           double eps) {
            ProjectionSet proj = make_projection(w_q, w_k, w_v, heads);
            FusionConfig cfg =
                make_config(tau, std::nullopt, "exclusion", pairing_mode, eps);
            FusedOutput out = fused_attention(to_feature_map(f_l),
                                              to_feature_map(f_c),
                                              to_feature_map(f_s), proj, cfg);
            py::dict d;
            d["features"] = from_feature_map(out.features);
            d["block_mass"] = from_matrix(out.block_mass);
            d["mean_mass"] = py::make_tuple(out.mean_mass[0], out.mean_mass[1],
                                            out.mean_mass[2]);
            return d;
        },
        py::arg("f_l"), py::arg("f_c"), py::arg("f_s"), py::arg("w_q"),
        py::arg("w_k"), py::arg("w_v"), py::arg("heads") = 1,
        py::arg("tau") = 1.05, py::arg("pairing_mode") = "as_written",
        py::arg("eps") = 1e-5);

    m.def(
        "interpolate_style",
        [](const py::array_t<double>& f_s1, const py::array_t<double>& f_s2,
           double alpha, const py::array_t<double>& w_k,
           const py::array_t<double>& w_v) {
            auto [k, v] = interpolate_style(to_feature_map(f_s1),
                                            to_feature_map(f_s2), alpha,
                                            to_matrix(w_k), to_matrix(w_v));
            return py::make_tuple(from_matrix(k), from_matrix(v));
        },
        py::arg("f_s1"), py::arg("f_s2"), py::arg("alpha"), py::arg("w_k"),
        py::arg("w_v"));

    m.def(
        "cfg_combine",
        [](const py::array_t<double>& uncond, const py::array_t<double>& cond,
           double w) {
            return from_feature_map(
                cfg_combine(to_feature_map(uncond), to_feature_map(cond), w));
        },
        py::arg("uncond"), py::arg("cond"), py::arg("weight") = 3.0);

    m.def(
        "cycle_consistency",
        [](const py::array_t<double>& views) {
            return metric_to_dict(cycle_consistency(to_feature_map(views)));
        },
        py::arg("views"));

    m.def(
        "depth_delta",
        [](const py::array_t<double>& generated,
           const py::array_t<double>& reference) {
            return metric_to_dict(
                depth_delta(to_feature_map(generated), to_feature_map(reference)));
        },
        py::arg("generated"), py::arg("reference"));

    m.def(
        "style_alignment",
        [](const py::array_t<double>& output, const py::array_t<double>& style_ref) {
            return metric_to_dict(
                style_alignment(to_feature_map(output), to_feature_map(style_ref)));
        },
        py::arg("output"), py::arg("style_ref"));

    m.def(
        "save_feature_map",
        [](const py::array_t<double>& f, const std::string& path) {
            save_feature_map(to_feature_map(f), path);
        },
        py::arg("array"), py::arg("path"));

    m.def(
        "load_feature_map",
        [](const std::string& path) { return from_feature_map(load_feature_map(path)); },
        py::arg("path"));
}
