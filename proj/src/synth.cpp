#include "sfa/synth.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>

#include <json.hpp>

namespace sfa {

namespace fs = std::filesystem;
using nlohmann::json;

// Overall amplitude of the rendered feature fields. Chosen so attention
// logits at the default channel width land in a regime where gradients are
// informative (neither uniform nor saturated).
static constexpr double kFeatureScale = 4.0;

IdentityParams IdentityParams::random(std::uint64_t seed, std::size_t dims) {
    IdentityParams id;
    id.latent.resize(dims);
    SeededRng rng(seed);
    for (double& v : id.latent) v = rng.next_normal();
    return id;
}

StyleParams StyleParams::random(std::size_t channels, std::uint64_t seed) {
    StyleParams st;
    st.gain.resize(channels);
    st.bias.resize(channels);
    SeededRng rng(seed);
    // Bias spread dominates the per-domain signature; the fixed-step
    // trainer needs this much contrast between domains to make headway.
    for (double& g : st.gain) g = std::exp(0.4 * rng.next_normal());
    for (double& b : st.bias) b = 48.0 * rng.next_normal();
    st.strength = 0.9 * rng.next_uniform();
    return st;
}

namespace {

struct FieldBasis {
    // Phases per (latent component, channel) and per component, drawn once
    // per (seed); the field itself is then analytic in angle and pixel.
    std::vector<double> phase;   // dims * channels
    std::vector<double> spatial; // dims
};

FieldBasis make_basis(std::size_t dims, std::size_t channels, std::uint64_t seed) {
    FieldBasis b;
    b.phase.resize(dims * channels);
    b.spatial.resize(dims);
    SeededRng rng(SeededRng::derive(seed, 0x5EEDF1E1DULL));
    for (double& p : b.phase) p = 2.0 * std::numbers::pi * rng.next_uniform();
    for (double& p : b.spatial) p = 2.0 * std::numbers::pi * rng.next_uniform();
    return b;
}

double field_value(const IdentityParams& id, const FieldBasis& basis,
                   std::size_t channels, double angle, double u, double w,
                   std::size_t c) {
    const std::size_t dims = id.latent.size();
    const double norm = 1.0 / std::sqrt(static_cast<double>(dims));
    double acc = 0.0;
    for (std::size_t j = 0; j < dims; ++j) {
        const double fy = 1.0 + static_cast<double>(j % 3);
        const double fx = 1.0 + static_cast<double>((j + 1) % 3);
        acc += id.latent[j] * std::sin(angle + basis.phase[j * channels + c]) *
               std::cos(2.0 * std::numbers::pi * (fy * u + fx * w) +
                        basis.spatial[j]);
    }
    return kFeatureScale * norm * acc;
}

}  // namespace

RenderResult render_views(const IdentityParams& id, const RenderSpec& spec,
                          std::uint64_t seed) {
    if (spec.n_views < 2) {
        throw DomainError("render_views: need at least 2 views");
    }
    const FieldBasis basis = make_basis(id.latent.size(), spec.channels, seed);

    RenderResult out;
    out.angles.resize(spec.n_views);
    for (std::size_t v = 0; v < spec.n_views; ++v) {
        out.angles[v] = 2.0 * std::numbers::pi * static_cast<double>(v) /
                        static_cast<double>(spec.n_views);
    }

    out.features = FeatureMap({2, spec.n_views, spec.height, spec.width,
                               spec.channels});
    out.depths = FeatureMap({1, spec.n_views, spec.height, spec.width, 1});
    const double lat0 = id.latent.empty() ? 0.0 : id.latent[0];
    for (std::size_t s = 0; s < 2; ++s) {
        for (std::size_t v = 0; v < spec.n_views; ++v) {
            const double angle =
                out.angles[v] + (s == 1 ? std::numbers::pi : 0.0);
            for (std::size_t y = 0; y < spec.height; ++y) {
                const double u = (static_cast<double>(y) + 0.5) /
                                 static_cast<double>(spec.height);
                for (std::size_t x = 0; x < spec.width; ++x) {
                    const double w = (static_cast<double>(x) + 0.5) /
                                     static_cast<double>(spec.width);
                    for (std::size_t c = 0; c < spec.channels; ++c) {
                        out.features.at(s, v, y, x, c) = field_value(
                            id, basis, spec.channels, angle, u, w, c);
                    }
                    if (s == 0) {
                        out.depths.at(0, v, y, x, 0) =
                            1.5 +
                            0.5 * std::sin(angle + 2.0 * std::numbers::pi * u) *
                                std::cos(2.0 * std::numbers::pi * w) +
                            0.25 * std::tanh(lat0) * std::cos(angle);
                    }
                }
            }
        }
    }
    return out;
}

FeatureMap apply_style_operator(const FeatureMap& views, const StyleParams& style) {
    if (style.gain.size() != views.shape().c ||
        style.bias.size() != views.shape().c) {
        throw ShapeError("apply_style_operator: channel count mismatch");
    }
    FeatureMap out = views;
    const std::size_t c = views.shape().c;
    const double s = style.strength;
    for (std::size_t i = 0; i < out.data().size(); ++i) {
        const std::size_t ch = i % c;
        const double x = out.data()[i];
        out.data()[i] =
            style.gain[ch] * ((1.0 - s) * x + s * std::tanh(x)) + style.bias[ch];
    }
    return out;
}

Dataset make_dataset(const DatasetConfig& cfg) {
    if (cfg.n_identities < 2) {
        throw DomainError("make_dataset: need at least 2 identities");
    }
    if (cfg.n_styles == 0 || cfg.samples_per_style == 0) {
        throw DomainError("make_dataset: need at least one style and sample");
    }
    Dataset ds;
    ds.config = cfg;

    std::vector<IdentityParams> identities(cfg.n_identities);
    for (std::size_t i = 0; i < cfg.n_identities; ++i) {
        identities[i] =
            IdentityParams::random(SeededRng::derive(cfg.seed, 1000000 + i));
    }
    ds.styles.resize(cfg.n_styles);
    for (std::size_t k = 0; k < cfg.n_styles; ++k) {
        ds.styles[k] = StyleParams::random(
            cfg.channels, SeededRng::derive(cfg.seed, 2000000 + k));
    }

    const RenderSpec spec{cfg.n_views, cfg.height, cfg.width, cfg.channels};
    std::map<std::size_t, RenderResult> render_cache;
    auto render = [&](std::size_t id_index) -> const RenderResult& {
        auto it = render_cache.find(id_index);
        if (it == render_cache.end()) {
            it = render_cache
                     .emplace(id_index,
                              render_views(identities[id_index], spec, cfg.seed))
                     .first;
        }
        return it->second;
    };

    const std::size_t n = cfg.n_samples();
    ds.samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        StylePairSample sample;
        sample.content_identity = i % cfg.n_identities;
        sample.style_identity = (i + 1) % cfg.n_identities;
        sample.style_domain = i % cfg.n_styles;

        const RenderResult& content = render(sample.content_identity);
        const RenderResult& style_src = render(sample.style_identity);
        const StyleParams& domain = ds.styles[sample.style_domain];

        sample.content_views = content.features;
        sample.style_views = apply_style_operator(style_src.features, domain);
        sample.target_views = apply_style_operator(content.features, domain);
        sample.depth_views = content.depths;
        sample.view_angles = content.angles;
        ds.samples.push_back(std::move(sample));
    }
    return ds;
}

static std::string sample_path(const std::string& dir, const char* role,
                               std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s_%04zu.sfa", role, i);
    return (fs::path(dir) / buf).string();
}

void save_dataset(const Dataset& ds, const std::string& dir) {
    fs::create_directories(dir);
    json manifest;
    manifest["seed"] = ds.config.seed;
    manifest["n_identities"] = ds.config.n_identities;
    manifest["n_styles"] = ds.config.n_styles;
    manifest["samples_per_style"] = ds.config.samples_per_style;
    manifest["n_views"] = ds.config.n_views;
    manifest["height"] = ds.config.height;
    manifest["width"] = ds.config.width;
    manifest["channels"] = ds.config.channels;
    manifest["styles"] = json::array();
    for (const StyleParams& st : ds.styles) {
        manifest["styles"].push_back({{"gain", st.gain},
                                      {"bias", st.bias},
                                      {"strength", st.strength}});
    }
    manifest["samples"] = json::array();
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const StylePairSample& s = ds.samples[i];
        save_feature_map(s.content_views, sample_path(dir, "content", i));
        save_feature_map(s.style_views, sample_path(dir, "style", i));
        save_feature_map(s.target_views, sample_path(dir, "target", i));
        save_feature_map(s.depth_views, sample_path(dir, "depth", i));
        manifest["samples"].push_back({{"content_identity", s.content_identity},
                                       {"style_identity", s.style_identity},
                                       {"style_domain", s.style_domain},
                                       {"view_angles", s.view_angles}});
    }
    std::ofstream os(fs::path(dir) / "manifest.json");
    if (!os) throw IoError("cannot write manifest in " + dir);
    os << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir) {
    std::ifstream is(fs::path(dir) / "manifest.json");
    if (!is) throw IoError("cannot open manifest in " + dir);
    json manifest;
    is >> manifest;

    Dataset ds;
    ds.config.seed = manifest.at("seed").get<std::uint64_t>();
    ds.config.n_identities = manifest.at("n_identities").get<std::size_t>();
    ds.config.n_styles = manifest.at("n_styles").get<std::size_t>();
    ds.config.samples_per_style = manifest.at("samples_per_style").get<std::size_t>();
    ds.config.n_views = manifest.at("n_views").get<std::size_t>();
    ds.config.height = manifest.at("height").get<std::size_t>();
    ds.config.width = manifest.at("width").get<std::size_t>();
    ds.config.channels = manifest.at("channels").get<std::size_t>();
    for (const json& st : manifest.at("styles")) {
        StyleParams sp;
        sp.gain = st.at("gain").get<std::vector<double>>();
        sp.bias = st.at("bias").get<std::vector<double>>();
        sp.strength = st.at("strength").get<double>();
        ds.styles.push_back(std::move(sp));
    }
    const json& samples = manifest.at("samples");
    for (std::size_t i = 0; i < samples.size(); ++i) {
        StylePairSample s;
        s.content_views = load_feature_map(sample_path(dir, "content", i));
        s.style_views = load_feature_map(sample_path(dir, "style", i));
        s.target_views = load_feature_map(sample_path(dir, "target", i));
        s.depth_views = load_feature_map(sample_path(dir, "depth", i));
        s.content_identity = samples[i].at("content_identity").get<std::size_t>();
        s.style_identity = samples[i].at("style_identity").get<std::size_t>();
        s.style_domain = samples[i].at("style_domain").get<std::size_t>();
        s.view_angles = samples[i].at("view_angles").get<std::vector<double>>();
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

}  // namespace sfa
