#include "sfa/autodiff.hpp"

#include <cmath>
#include <fstream>

namespace sfa {

ParamVector ParamVector::pack_style(const ProjectionSet& style) {
    style.validate();
    ParamVector p;
    auto push = [&p](const std::string& name, const Matrix& m) {
        p.index.push_back({name, p.values.size(), m.rows(), m.cols()});
        p.values.insert(p.values.end(), m.data().begin(), m.data().end());
    };
    push("style.w_q", style.w_q);
    push("style.w_k", style.w_k);
    push("style.w_v", style.w_v);
    return p;
}

Matrix ParamVector::get(const std::string& name) const {
    for (const Entry& e : index) {
        if (e.name == name) {
            return Matrix(e.rows, e.cols,
                          std::vector<double>(values.begin() + e.offset,
                                              values.begin() + e.offset +
                                                  e.rows * e.cols));
        }
    }
    throw DomainError("ParamVector: no entry named " + name);
}

ProjectionSet ParamVector::unpack_style(std::size_t heads) const {
    ProjectionSet p{get("style.w_q"), get("style.w_k"), get("style.w_v"), heads};
    p.validate();
    return p;
}

std::string ParamVector::label(std::size_t i) const {
    for (const Entry& e : index) {
        if (i >= e.offset && i < e.offset + e.rows * e.cols) {
            const std::size_t local = i - e.offset;
            return e.name + "[" + std::to_string(local / e.cols) + "," +
                   std::to_string(local % e.cols) + "]";
        }
    }
    return "param[" + std::to_string(i) + "]";
}

namespace {

struct LossInputs {
    FeatureMap latent;
    FeatureMap target;
};

LossInputs split_batch(const StylePairSample& batch) {
    return {batch.content_views.stream(0), batch.target_views.stream(0)};
}

double mse(const FeatureMap& a, const FeatureMap& b) {
    if (!(a.shape() == b.shape())) {
        throw ShapeError("loss: output/target shapes differ");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) {
        const double d = a.data()[i] - b.data()[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.data().size());
}

}  // namespace

double loss_forward(const ParamVector& params, const ProjectionSet& content,
                    const StylePairSample& batch, const FusionConfig& cfg) {
    const ProjectionSet style = params.unpack_style(content.heads);
    const LossInputs in = split_batch(batch);
    const FusedOutput out = fused_attention(in.latent, batch.content_views,
                                            batch.style_views, content, style, cfg);
    return mse(out.features, in.target);
}

BackwardResult loss_backward(const ParamVector& params,
                             const ProjectionSet& content,
                             const StylePairSample& batch,
                             const FusionConfig& cfg) {
    const ProjectionSet style = params.unpack_style(content.heads);
    const LossInputs in = split_batch(batch);

    FusionCache cache;
    const FusedOutput out =
        fused_attention(in.latent, batch.content_views, batch.style_views,
                        content, style, cfg, nullptr, &cache);

    BackwardResult res;
    res.loss = mse(out.features, in.target);
    if (!std::isfinite(res.loss)) {
        throw NumericError("loss_backward: non-finite loss");
    }

    const std::size_t c = content.dim();
    const std::size_t heads = content.heads;
    const std::size_t d = content.head_dim();
    const std::size_t t_l = cache.t_l, t_c = cache.t_c, t_s = cache.t_s;
    const std::size_t total = t_l + t_c + t_s;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

    // dL/d(output tokens).
    Matrix d_out(t_l, c);
    {
        const double scale = 2.0 / static_cast<double>(out.features.data().size());
        for (std::size_t i = 0; i < d_out.data().size(); ++i) {
            d_out.data()[i] =
                scale * (out.features.data()[i] - in.target.data()[i]);
        }
    }

    Matrix d_k_s_full(t_s, c);  // gradient wrt raw style keys, full width
    Matrix d_v_s_full(t_s, c);

    for (std::size_t h = 0; h < heads; ++h) {
        const FusionHeadCache& hc = cache.heads[h];
        const std::size_t off = h * d;

        Matrix d_o(t_l, d);
        for (std::size_t r = 0; r < t_l; ++r) {
            const double* src = d_out.row(r) + off;
            std::copy(src, src + d, d_o.row(r));
        }

        // o = attn * v
        const Matrix d_attn = matmul_nt(d_o, hc.v);  // t_l x total
        const Matrix d_v = matmul_tn(hc.attn, d_o);  // total x d

        // softmax backward
        Matrix d_logits(t_l, total);
        for (std::size_t r = 0; r < t_l; ++r) {
            const double* a = hc.attn.row(r);
            const double* da = d_attn.row(r);
            double dot = 0.0;
            for (std::size_t j = 0; j < total; ++j) dot += da[j] * a[j];
            double* dl = d_logits.row(r);
            for (std::size_t j = 0; j < total; ++j) dl[j] = a[j] * (da[j] - dot);
        }

        // logits = (q k^T) / sqrt(d) + bias
        Matrix d_k = matmul_tn(d_logits, hc.q);  // total x d
        for (double& v : d_k.data()) v *= inv_sqrt_d;

        // Style values: position depends on the pairing mode.
        const std::size_t v_s_row0 =
            cfg.pairing_mode == PairingMode::as_written ? t_l : t_l + t_c;
        for (std::size_t r = 0; r < t_s; ++r) {
            const double* src = d_v.row(v_s_row0 + r);
            double* dst = d_v_s_full.row(r) + off;
            for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
        }

        // Block 3: tau * (masked) K_s.
        const bool literal_mask =
            !cache.mask_tokens.empty() && cfg.mask_mode == MaskMode::paper_literal;
        for (std::size_t r = 0; r < t_s; ++r) {
            if (literal_mask && !cache.mask_tokens[r]) continue;
            const double* src = d_k.row(t_l + t_c + r);
            double* dst = d_k_s_full.row(r) + off;
            for (std::size_t j = 0; j < d; ++j) dst[j] += cfg.tau * src[j];
        }

        // Block 2: adain(K_c, K_s) = sigma_s * n_c + mu_s, where n_c is
        // constant with respect to the style path. With a mask, rows with
        // flag 0 carry frozen content keys and contribute nothing.
        std::vector<double> d_mu(d, 0.0), d_sigma(d, 0.0);
        for (std::size_t r = 0; r < t_c; ++r) {
            if (!cache.mask_tokens.empty() && !cache.mask_tokens[r]) continue;
            const double* dk = d_k.row(t_l + r);
            const double* n = hc.content_norm.row(r);
            for (std::size_t j = 0; j < d; ++j) {
                d_mu[j] += dk[j];
                d_sigma[j] += dk[j] * n[j];
            }
        }
        const double inv_ts = 1.0 / static_cast<double>(t_s);
        for (std::size_t r = 0; r < t_s; ++r) {
            const double* ks = hc.k_s_raw.row(r);
            double* dst = d_k_s_full.row(r) + off;
            for (std::size_t j = 0; j < d; ++j) {
                dst[j] += d_mu[j] * inv_ts +
                          d_sigma[j] * (ks[j] - hc.style_stats.mu[j]) * inv_ts /
                              hc.style_stats.sigma[j];
            }
        }
    }

    // K_s = S_eff W_K, V_s = S_eff W_V.
    const Matrix d_w_k = matmul_tn(cache.style_tokens_eff, d_k_s_full);
    const Matrix d_w_v = matmul_tn(cache.style_tokens_eff, d_v_s_full);

    res.grad = params;
    std::fill(res.grad.values.begin(), res.grad.values.end(), 0.0);
    for (const ParamVector::Entry& e : res.grad.index) {
        const Matrix* src = nullptr;
        if (e.name == "style.w_k") src = &d_w_k;
        if (e.name == "style.w_v") src = &d_w_v;
        if (!src) continue;  // style.w_q never enters the forward pass
        std::copy(src->data().begin(), src->data().end(),
                  res.grad.values.begin() + e.offset);
    }
    for (double g : res.grad.values) {
        if (!std::isfinite(g)) {
            throw NumericError("loss_backward: non-finite gradient");
        }
    }
    return res;
}

ParamVector finite_diff_grad(const ParamVector& params,
                             const ProjectionSet& content,
                             const StylePairSample& batch,
                             const FusionConfig& cfg, double h) {
    if (!(h > 0.0)) throw DomainError("finite_diff_grad: h must be positive");
    ParamVector grad = params;
    ParamVector probe = params;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double orig = params.values[i];
        probe.values[i] = orig + h;
        const double fp = loss_forward(probe, content, batch, cfg);
        probe.values[i] = orig - h;
        const double fm = loss_forward(probe, content, batch, cfg);
        probe.values[i] = orig;
        grad.values[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

GradReport grad_check(const ParamVector& analytic, const ParamVector& numeric,
                      double tol) {
    if (analytic.size() != numeric.size()) {
        throw ShapeError("grad_check: vector lengths differ");
    }
    GradReport rep;
    rep.rows.reserve(analytic.size());
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double a = analytic.values[i];
        const double n = numeric.values[i];
        const double err =
            std::abs(a - n) / std::max(1e-8, std::abs(a) + std::abs(n));
        rep.rows.push_back({analytic.label(i), a, n, err});
        rep.max_rel_err = std::max(rep.max_rel_err, err);
    }
    rep.pass = rep.max_rel_err <= tol;
    return rep;
}

void GradReport::save_csv(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << "name,analytic,numeric,rel_err\n";
    os.precision(17);
    for (const Row& r : rows) {
        os << r.name << "," << r.analytic << "," << r.numeric << ","
           << r.rel_err << "\n";
    }
}

}  // namespace sfa
