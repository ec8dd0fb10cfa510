#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "sfa/adain.hpp"
#include "sfa/tensor.hpp"

namespace sfa {

// Query/key/value projections with head partitioning. All three matrices are
// C x C and heads must divide C.
struct ProjectionSet {
    Matrix w_q, w_k, w_v;
    std::size_t heads = 1;

    std::size_t dim() const { return w_q.rows(); }
    std::size_t head_dim() const { return dim() / heads; }

    void validate() const;
    static ProjectionSet random(std::size_t channels, std::size_t heads,
                                std::uint64_t seed);
};

// Spatial style mask: 1 marks regions to stylize, 0 leaves content alone.
// Resized to the feature grid with nearest neighbor, thresholded at 0.5.
struct StyleMask {
    std::size_t height = 0, width = 0;
    std::vector<double> grid;  // row-major, values in [0, 1]

    // Binary mask at the target resolution.
    std::vector<std::uint8_t> resize_to(std::size_t h, std::size_t w) const;

    static StyleMask load_pgm(const std::string& path);
    void save_pgm(const std::string& path) const;
};

// Union of per-region masks; throws DomainError when two regions overlap.
StyleMask merge_disjoint_masks(const std::vector<StyleMask>& regions,
                               std::size_t h, std::size_t w);

enum class MaskMode { paper_literal, exclusion };
enum class PairingMode { as_written, aligned };

// Inference-time controls for the fusion layer.
struct FusionConfig {
    double tau = 1.05;
    std::optional<double> alpha;
    std::optional<StyleMask> mask;
    MaskMode mask_mode = MaskMode::exclusion;
    PairingMode pairing_mode = PairingMode::as_written;
    double eps = 1e-5;

    void validate() const;
};

// Fused features plus, per query, the attention mass landing on each key
// block (latent, normalized-style, scaled-style), averaged over heads.
struct FusedOutput {
    FeatureMap features;
    Matrix block_mass;                 // queries x 3
    std::array<double, 3> mean_mass{}; // column means of block_mass
};

// tokens * w, split channel-wise into `heads` blocks of width C/heads.
std::vector<Matrix> project(const Matrix& tokens, const Matrix& w,
                            std::size_t heads);

// Multiplies every key entry by tau. tau must be positive.
Matrix key_scale(const Matrix& keys, double tau);

// Expands a mask over the (h, w) grid of a token layout to one flag per
// token, streams and views sharing the same spatial mask.
std::vector<std::uint8_t> mask_to_tokens(const StyleMask& mask, Shape5 tokens);

// Per token: flag 1 takes the AdaIN-transformed row, flag 0 the raw content
// row.
Matrix selective_style_keys(const Matrix& k_c, const Matrix& k_hat_s,
                            const std::vector<std::uint8_t>& mask_tokens);

// paper_literal: keys multiplied row-wise by the mask, zero bias.
// exclusion: keys unchanged, logit bias of -1e9 on masked-out tokens.
std::pair<Matrix, std::vector<double>> apply_style_mask(
    const Matrix& k_s, const std::vector<std::uint8_t>& mask_tokens,
    MaskMode mode);

// Projects two style feature sets and blends keys/values linearly:
// (1 - alpha) * (F_s1 W) + alpha * (F_s2 W). Full channel width.
std::pair<Matrix, Matrix> interpolate_style(const FeatureMap& f_s1,
                                            const FeatureMap& f_s2,
                                            double alpha, const Matrix& w_k,
                                            const Matrix& w_v);

// Per-head intermediates kept for the backward pass.
struct FusionHeadCache {
    Matrix q;           // T_l x d
    Matrix k_s_raw;     // style keys before mask/tau, T_s x d
    Matrix v;           // stacked values
    Matrix attn;        // T_l x (T_l + T_c + T_s)
    ChannelStats style_stats;
    Matrix content_norm;  // (K_c - mu_c) / sigma_c, T_c x d
};

struct FusionCache {
    Matrix style_tokens_eff;  // effective style token matrix (post blend)
    std::vector<FusionHeadCache> heads;
    std::vector<std::uint8_t> mask_tokens;  // empty when no mask
    std::size_t t_l = 0, t_c = 0, t_s = 0;
};

// The Style Fusion Attention layer. Latent queries attend over
// [K_l, adain(K_c, K_s), tau * K_s]; values pair per cfg.pairing_mode.
// content_proj drives the latent and content paths, style_proj the style
// path. f_s2 enables style interpolation when cfg.alpha is set.
FusedOutput fused_attention(const FeatureMap& f_l, const FeatureMap& f_c,
                            const FeatureMap& f_s,
                            const ProjectionSet& content_proj,
                            const ProjectionSet& style_proj,
                            const FusionConfig& cfg,
                            const FeatureMap* f_s2 = nullptr,
                            FusionCache* cache = nullptr);

// Shared-weights convenience overload (style path identical to content path).
FusedOutput fused_attention(const FeatureMap& f_l, const FeatureMap& f_c,
                            const FeatureMap& f_s, const ProjectionSet& proj,
                            const FusionConfig& cfg);

}  // namespace sfa
