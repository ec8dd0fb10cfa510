#include "sfa/attention.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace sfa {

void ProjectionSet::validate() const {
    const std::size_t c = w_q.rows();
    auto square = [c](const Matrix& m) { return m.rows() == c && m.cols() == c; };
    if (c == 0 || !square(w_q) || !square(w_k) || !square(w_v)) {
        throw ShapeError("ProjectionSet: W_Q, W_K, W_V must all be CxC");
    }
    if (heads == 0 || c % heads != 0) {
        throw ShapeError("ProjectionSet: heads must divide the channel count");
    }
}

ProjectionSet ProjectionSet::random(std::size_t channels, std::size_t heads,
                                    std::uint64_t seed) {
    // Q/K start four times smaller than V: softer initial attention keeps
    // the softmax out of saturation, where gradients stall.
    const double v_scale = 1.0 / std::sqrt(static_cast<double>(channels));
    const double qk_scale = 0.25 * v_scale;
    ProjectionSet p{
        seeded_normal_matrix(channels, channels, SeededRng::derive(seed, 0), qk_scale),
        seeded_normal_matrix(channels, channels, SeededRng::derive(seed, 1), qk_scale),
        seeded_normal_matrix(channels, channels, SeededRng::derive(seed, 2), v_scale),
        heads};
    p.validate();
    return p;
}

std::vector<std::uint8_t> StyleMask::resize_to(std::size_t h, std::size_t w) const {
    if (height == 0 || width == 0 || grid.size() != height * width) {
        throw ShapeError("StyleMask: bad grid");
    }
    std::vector<std::uint8_t> out(h * w);
    for (std::size_t y = 0; y < h; ++y) {
        const std::size_t sy = y * height / h;
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t sx = x * width / w;
            out[y * w + x] = grid[sy * width + sx] >= 0.5 ? 1 : 0;
        }
    }
    return out;
}

static int pgm_token(std::istream& is) {
    // Skips whitespace and '#' comments.
    int c = is.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = is.get();
        } else if (!std::isspace(c)) {
            is.unget();
            int v;
            if (!(is >> v)) throw IoError("PGM: bad header token");
            return v;
        }
        c = is.get();
    }
    throw IoError("PGM: truncated header");
}

StyleMask StyleMask::load_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    char p, five;
    is.get(p);
    is.get(five);
    if (p != 'P' || five != '5') throw IoError("not a P5 PGM: " + path);
    const int w = pgm_token(is);
    const int h = pgm_token(is);
    const int maxval = pgm_token(is);
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) {
        throw IoError("unsupported PGM header in " + path);
    }
    is.get();  // single whitespace before raster
    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!is) throw IoError("truncated PGM raster: " + path);
    StyleMask m;
    m.height = static_cast<std::size_t>(h);
    m.width = static_cast<std::size_t>(w);
    m.grid.resize(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        m.grid[i] = static_cast<double>(raw[i]) / static_cast<double>(maxval);
    }
    return m;
}

void StyleMask::save_pgm(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << "P5\n" << width << " " << height << "\n255\n";
    for (double v : grid) {
        const double clamped = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        os.put(static_cast<char>(static_cast<int>(clamped * 255.0 + 0.5)));
    }
    if (!os) throw IoError("write failed: " + path);
}

StyleMask merge_disjoint_masks(const std::vector<StyleMask>& regions,
                               std::size_t h, std::size_t w) {
    StyleMask out;
    out.height = h;
    out.width = w;
    out.grid.assign(h * w, 0.0);
    for (const StyleMask& r : regions) {
        const auto bin = r.resize_to(h, w);
        for (std::size_t i = 0; i < bin.size(); ++i) {
            if (bin[i]) {
                if (out.grid[i] > 0.0) {
                    throw DomainError("merge_disjoint_masks: regions overlap");
                }
                out.grid[i] = 1.0;
            }
        }
    }
    return out;
}

void FusionConfig::validate() const {
    if (!(tau > 0.0)) {
        throw DomainError("FusionConfig: tau must be positive");
    }
    if (alpha && (*alpha < 0.0 || *alpha > 1.0)) {
        throw DomainError("FusionConfig: alpha must lie in [0, 1]");
    }
    if (!(eps > 0.0)) {
        throw DomainError("FusionConfig: eps must be positive");
    }
}

std::vector<Matrix> project(const Matrix& tokens, const Matrix& w,
                            std::size_t heads) {
    if (tokens.cols() != w.rows()) {
        throw ShapeError("project: token channels " + std::to_string(tokens.cols()) +
                         " do not match projection " + std::to_string(w.rows()));
    }
    if (heads == 0 || w.cols() % heads != 0) {
        throw ShapeError("project: heads must divide the projected width");
    }
    const Matrix full = matmul(tokens, w);
    const std::size_t d = w.cols() / heads;
    std::vector<Matrix> out;
    out.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        Matrix block(full.rows(), d);
        for (std::size_t r = 0; r < full.rows(); ++r) {
            const double* src = full.row(r) + h * d;
            std::copy(src, src + d, block.row(r));
        }
        out.push_back(std::move(block));
    }
    return out;
}

Matrix key_scale(const Matrix& keys, double tau) {
    if (!(tau > 0.0)) throw DomainError("key_scale: tau must be positive");
    Matrix out = keys;
    for (double& v : out.data()) v *= tau;
    return out;
}

std::vector<std::uint8_t> mask_to_tokens(const StyleMask& mask, Shape5 tokens) {
    const auto bin = mask.resize_to(tokens.h, tokens.w);
    std::vector<std::uint8_t> out;
    out.reserve(tokens.tokens());
    for (std::size_t s = 0; s < tokens.s; ++s) {
        for (std::size_t n = 0; n < tokens.n; ++n) {
            out.insert(out.end(), bin.begin(), bin.end());
        }
    }
    return out;
}

Matrix selective_style_keys(const Matrix& k_c, const Matrix& k_hat_s,
                            const std::vector<std::uint8_t>& mask_tokens) {
    if (k_c.rows() != k_hat_s.rows() || k_c.cols() != k_hat_s.cols() ||
        mask_tokens.size() != k_c.rows()) {
        throw ShapeError("selective_style_keys: token counts do not line up");
    }
    Matrix out(k_c.rows(), k_c.cols());
    for (std::size_t r = 0; r < k_c.rows(); ++r) {
        const Matrix& src = mask_tokens[r] ? k_hat_s : k_c;
        std::copy(src.row(r), src.row(r) + k_c.cols(), out.row(r));
    }
    return out;
}

std::pair<Matrix, std::vector<double>> apply_style_mask(
    const Matrix& k_s, const std::vector<std::uint8_t>& mask_tokens,
    MaskMode mode) {
    if (mask_tokens.size() != k_s.rows()) {
        throw ShapeError("apply_style_mask: mask token count " +
                         std::to_string(mask_tokens.size()) + " vs keys " +
                         std::to_string(k_s.rows()));
    }
    std::vector<double> bias(k_s.rows(), 0.0);
    Matrix keys = k_s;
    if (mode == MaskMode::paper_literal) {
        for (std::size_t r = 0; r < keys.rows(); ++r) {
            if (!mask_tokens[r]) {
                std::fill(keys.row(r), keys.row(r) + keys.cols(), 0.0);
            }
        }
    } else {
        for (std::size_t r = 0; r < keys.rows(); ++r) {
            if (!mask_tokens[r]) bias[r] = -1e9;
        }
    }
    return {std::move(keys), std::move(bias)};
}

std::pair<Matrix, Matrix> interpolate_style(const FeatureMap& f_s1,
                                            const FeatureMap& f_s2,
                                            double alpha, const Matrix& w_k,
                                            const Matrix& w_v) {
    if (!(f_s1.shape() == f_s2.shape())) {
        throw ShapeError("interpolate_style: style shapes differ, " +
                         f_s1.shape().str() + " vs " + f_s2.shape().str());
    }
    if (alpha < 0.0 || alpha > 1.0) {
        throw DomainError("interpolate_style: alpha must lie in [0, 1]");
    }
    const Matrix t1 = flatten_tokens(f_s1);
    const Matrix t2 = flatten_tokens(f_s2);
    const Matrix k1 = matmul(t1, w_k), k2 = matmul(t2, w_k);
    const Matrix v1 = matmul(t1, w_v), v2 = matmul(t2, w_v);
    Matrix k(k1.rows(), k1.cols()), v(v1.rows(), v1.cols());
    for (std::size_t i = 0; i < k.data().size(); ++i) {
        k.data()[i] = (1.0 - alpha) * k1.data()[i] + alpha * k2.data()[i];
    }
    for (std::size_t i = 0; i < v.data().size(); ++i) {
        v.data()[i] = (1.0 - alpha) * v1.data()[i] + alpha * v2.data()[i];
    }
    return {std::move(k), std::move(v)};
}

static Matrix column_block(const Matrix& m, std::size_t offset, std::size_t width) {
    Matrix out(m.rows(), width);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double* src = m.row(r) + offset;
        std::copy(src, src + width, out.row(r));
    }
    return out;
}

static void vstack_into(Matrix& dst, std::size_t row_offset, const Matrix& src) {
    std::copy(src.data().begin(), src.data().end(),
              dst.data().begin() + row_offset * dst.cols());
}

FusedOutput fused_attention(const FeatureMap& f_l, const FeatureMap& f_c,
                            const FeatureMap& f_s,
                            const ProjectionSet& content_proj,
                            const ProjectionSet& style_proj,
                            const FusionConfig& cfg, const FeatureMap* f_s2,
                            FusionCache* cache) {
    cfg.validate();
    content_proj.validate();
    style_proj.validate();
    if (f_l.shape().s != 1) {
        throw ShapeError("fused_attention: latent map must have S=1, got " +
                         f_l.shape().str());
    }
    if (f_c.shape().s != 2 || f_s.shape().s != 2) {
        throw ShapeError("fused_attention: content and style maps must have S=2");
    }
    if (!(f_c.shape() == f_s.shape())) {
        throw ShapeError("fused_attention: content/style shapes differ");
    }
    const std::size_t c = content_proj.dim();
    if (f_l.shape().c != c || f_c.shape().c != c || style_proj.dim() != c ||
        content_proj.heads != style_proj.heads) {
        throw ShapeError("fused_attention: channel/head mismatch with projections");
    }
    if (f_s2 && !cfg.alpha) {
        throw DomainError("fused_attention: second style map given without alpha");
    }

    const std::size_t heads = content_proj.heads;
    const std::size_t d = content_proj.head_dim();
    const Matrix lat = flatten_tokens(f_l);
    const Matrix con = flatten_tokens(f_c);
    const Matrix sty = flatten_tokens(f_s);
    const std::size_t t_l = lat.rows(), t_c = con.rows(), t_s = sty.rows();

    const Matrix q_full = matmul(lat, content_proj.w_q);
    const Matrix k_l_full = matmul(lat, content_proj.w_k);
    const Matrix v_l_full = matmul(lat, content_proj.w_v);
    const Matrix k_c_full = matmul(con, content_proj.w_k);
    const Matrix v_c_full = matmul(con, content_proj.w_v);

    Matrix k_s_full, v_s_full, sty_eff;
    if (f_s2 && cfg.alpha) {
        auto [ks, vs] = interpolate_style(f_s, *f_s2, *cfg.alpha, style_proj.w_k,
                                          style_proj.w_v);
        k_s_full = std::move(ks);
        v_s_full = std::move(vs);
        const Matrix sty2 = flatten_tokens(*f_s2);
        sty_eff = Matrix(t_s, c);
        for (std::size_t i = 0; i < sty_eff.data().size(); ++i) {
            sty_eff.data()[i] =
                (1.0 - *cfg.alpha) * sty.data()[i] + *cfg.alpha * sty2.data()[i];
        }
    } else {
        k_s_full = matmul(sty, style_proj.w_k);
        v_s_full = matmul(sty, style_proj.w_v);
        sty_eff = sty;
    }

    std::vector<std::uint8_t> mtok;
    if (cfg.mask) {
        Shape5 style_tokens = f_s.shape();
        mtok = mask_to_tokens(*cfg.mask, style_tokens);
    }

    const std::size_t total = t_l + t_c + t_s;
    Matrix out_tokens(t_l, c);
    Matrix block_mass(t_l, 3);
    if (cache) {
        cache->heads.clear();
        cache->style_tokens_eff = sty_eff;
        cache->mask_tokens = mtok;
        cache->t_l = t_l;
        cache->t_c = t_c;
        cache->t_s = t_s;
    }

    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * d;
        const Matrix q = column_block(q_full, off, d);
        const Matrix k_l = column_block(k_l_full, off, d);
        const Matrix v_l = column_block(v_l_full, off, d);
        const Matrix k_c = column_block(k_c_full, off, d);
        const Matrix v_c = column_block(v_c_full, off, d);
        const Matrix k_s = column_block(k_s_full, off, d);
        const Matrix v_s = column_block(v_s_full, off, d);

        // AdaIN of content keys onto style key statistics, per head.
        const ChannelStats cs = channel_stats(k_c, cfg.eps);
        const ChannelStats ss = channel_stats(k_s, cfg.eps);
        Matrix content_norm(t_c, d);
        Matrix k_hat(t_c, d);
        for (std::size_t r = 0; r < t_c; ++r) {
            for (std::size_t j = 0; j < d; ++j) {
                const double n = (k_c.at(r, j) - cs.mu[j]) / cs.sigma[j];
                content_norm.at(r, j) = n;
                k_hat.at(r, j) = ss.sigma[j] * n + ss.mu[j];
            }
        }

        Matrix block2 = mtok.empty() ? k_hat
                                     : selective_style_keys(k_c, k_hat, mtok);
        Matrix k_s_masked = k_s;
        std::vector<double> bias(t_s, 0.0);
        if (!mtok.empty()) {
            auto [keys, b] = apply_style_mask(k_s, mtok, cfg.mask_mode);
            k_s_masked = std::move(keys);
            bias = std::move(b);
        }
        const Matrix block3 = key_scale(k_s_masked, cfg.tau);

        Matrix k(total, d);
        vstack_into(k, 0, k_l);
        vstack_into(k, t_l, block2);
        vstack_into(k, t_l + t_c, block3);

        Matrix v(total, d);
        vstack_into(v, 0, v_l);
        if (cfg.pairing_mode == PairingMode::as_written) {
            vstack_into(v, t_l, v_s);
            vstack_into(v, t_l + t_c, v_c);
        } else {
            vstack_into(v, t_l, v_c);
            vstack_into(v, t_l + t_c, v_s);
        }

        Matrix logits = matmul_nt(q, k);
        for (std::size_t r = 0; r < t_l; ++r) {
            double* row = logits.row(r);
            for (std::size_t j = 0; j < total; ++j) row[j] *= inv_sqrt_d;
            for (std::size_t j = 0; j < t_s; ++j) row[t_l + t_c + j] += bias[j];
        }
        const Matrix attn = softmax_rows(logits);
        const Matrix o = matmul(attn, v);

        for (std::size_t r = 0; r < t_l; ++r) {
            std::copy(o.row(r), o.row(r) + d, out_tokens.row(r) + off);
            const double* arow = attn.row(r);
            double m0 = 0.0, m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < t_l; ++j) m0 += arow[j];
            for (std::size_t j = 0; j < t_c; ++j) m1 += arow[t_l + j];
            for (std::size_t j = 0; j < t_s; ++j) m2 += arow[t_l + t_c + j];
            block_mass.at(r, 0) += m0;
            block_mass.at(r, 1) += m1;
            block_mass.at(r, 2) += m2;
        }

        if (cache) {
            FusionHeadCache hc;
            hc.q = q;
            hc.k_s_raw = k_s;
            hc.v = std::move(v);
            hc.attn = attn;
            hc.style_stats = ss;
            hc.content_norm = std::move(content_norm);
            cache->heads.push_back(std::move(hc));
        }
    }

    FusedOutput out;
    const double inv_heads = 1.0 / static_cast<double>(heads);
    for (double& m : block_mass.data()) m *= inv_heads;
    out.mean_mass = {0.0, 0.0, 0.0};
    for (std::size_t r = 0; r < t_l; ++r) {
        for (int b = 0; b < 3; ++b) {
            out.mean_mass[static_cast<std::size_t>(b)] +=
                block_mass.at(r, static_cast<std::size_t>(b));
        }
    }
    for (auto& m : out.mean_mass) m /= static_cast<double>(t_l);
    out.block_mass = std::move(block_mass);
    out.features = unflatten_tokens(out_tokens, f_l.shape());
    if (!out.features.all_finite()) {
        throw NumericError("fused_attention: non-finite output");
    }
    return out;
}

FusedOutput fused_attention(const FeatureMap& f_l, const FeatureMap& f_c,
                            const FeatureMap& f_s, const ProjectionSet& proj,
                            const FusionConfig& cfg) {
    return fused_attention(f_l, f_c, f_s, proj, proj, cfg);
}

}  // namespace sfa
