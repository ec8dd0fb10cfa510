#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sfa/tensor.hpp"

namespace sfa {

// Latent code behind one synthetic identity. The rendered views are a
// deterministic smooth function of (latent, angle, pixel).
struct IdentityParams {
    std::vector<double> latent;

    static IdentityParams random(std::uint64_t seed, std::size_t dims = 8);
};

// One style domain: per-channel affine gain/bias around a bounded warp.
struct StyleParams {
    std::vector<double> gain;  // > 0
    std::vector<double> bias;
    double strength = 0.0;  // in [0, 1)

    static StyleParams random(std::size_t channels, std::uint64_t seed);
};

struct RenderSpec {
    std::size_t n_views = 16;
    std::size_t height = 8;
    std::size_t width = 8;
    std::size_t channels = 8;
};

struct RenderResult {
    FeatureMap features;  // S=2: stream 0 front, stream 1 rendered at angle+pi
    FeatureMap depths;    // S=1, C=1, front views; strictly positive
    std::vector<double> angles;
};

// Renders n_views uniformly spaced around the circle. Adjacent views differ
// by at most kAngleLipschitz * |latent|_1 * angle_step in any single entry.
RenderResult render_views(const IdentityParams& id, const RenderSpec& spec,
                          std::uint64_t seed);

// out = gain[c] * ((1 - strength) * x + strength * tanh(x)) + bias[c],
// applied identically at every view. Invertible for strength < 1.
FeatureMap apply_style_operator(const FeatureMap& views, const StyleParams& style);

struct StylePairSample {
    FeatureMap content_views;  // S=2
    FeatureMap style_views;    // S=2, different identity, stylized
    FeatureMap target_views;   // S=2, style operator applied to content
    FeatureMap depth_views;    // S=1, C=1
    std::vector<double> view_angles;
    std::size_t content_identity = 0;
    std::size_t style_identity = 0;
    std::size_t style_domain = 0;
};

struct DatasetConfig {
    std::size_t n_identities = 25;
    std::size_t n_styles = 6;
    std::size_t samples_per_style = 150;
    std::size_t n_views = 16;
    std::size_t height = 8;
    std::size_t width = 8;
    std::size_t channels = 8;
    std::uint64_t seed = 0;

    std::size_t n_samples() const { return n_styles * samples_per_style; }
};

struct Dataset {
    DatasetConfig config;
    std::vector<StyleParams> styles;
    std::vector<StylePairSample> samples;
};

// Cross-identity pairs with round-robin style assignment. The style
// reference identity always differs from the content identity.
Dataset make_dataset(const DatasetConfig& cfg);

// Directory layout: content_NNNN.sfa / style_NNNN.sfa / target_NNNN.sfa /
// depth_NNNN.sfa plus manifest.json.
void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

}  // namespace sfa
