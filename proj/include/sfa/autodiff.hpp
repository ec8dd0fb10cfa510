#pragma once

#include <string>
#include <vector>

#include "sfa/attention.hpp"
#include "sfa/synth.hpp"

namespace sfa {

// Flat view of the trainable style-path parameters (W_Q, W_K, W_V of the
// style projection). The frozen content path never appears here.
struct ParamVector {
    struct Entry {
        std::string name;
        std::size_t offset = 0;
        std::size_t rows = 0;
        std::size_t cols = 0;
    };

    std::vector<double> values;
    std::vector<Entry> index;

    static ParamVector pack_style(const ProjectionSet& style);
    ProjectionSet unpack_style(std::size_t heads) const;

    Matrix get(const std::string& name) const;
    std::size_t size() const { return values.size(); }
    // Flat label for scalar i, e.g. "style.w_k[2,3]".
    std::string label(std::size_t i) const;
};

// Mean squared error between the fused attention output (latent = front
// content stream) and the front stream of the stylized target views.
double loss_forward(const ParamVector& params, const ProjectionSet& content,
                    const StylePairSample& batch, const FusionConfig& cfg);

struct BackwardResult {
    double loss = 0.0;
    ParamVector grad;
};

// Reverse-mode gradient of loss_forward with respect to every style-path
// scalar, including the paths through the AdaIN statistics and the tau
// scaling. Content-path parameters are never touched.
BackwardResult loss_backward(const ParamVector& params,
                             const ProjectionSet& content,
                             const StylePairSample& batch,
                             const FusionConfig& cfg);

// Central differences (f(p + h e_i) - f(p - h e_i)) / (2h).
ParamVector finite_diff_grad(const ParamVector& params,
                             const ProjectionSet& content,
                             const StylePairSample& batch,
                             const FusionConfig& cfg, double h);

struct GradReport {
    struct Row {
        std::string name;
        double analytic = 0.0;
        double numeric = 0.0;
        double rel_err = 0.0;
    };
    std::vector<Row> rows;
    double max_rel_err = 0.0;
    bool pass = false;

    void save_csv(const std::string& path) const;
};

// rel_err = |a - n| / max(1e-8, |a| + |n|); pass iff the max is <= tol.
GradReport grad_check(const ParamVector& analytic, const ParamVector& numeric,
                      double tol);

}  // namespace sfa
