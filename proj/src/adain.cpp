#include "sfa/adain.hpp"

#include <cmath>

namespace sfa {

ChannelStats channel_stats(const Matrix& t, double eps) {
    if (t.rows() == 0 || t.cols() == 0) {
        throw ShapeError("channel_stats: empty matrix");
    }
    if (eps <= 0.0) {
        throw DomainError("channel_stats: eps must be positive");
    }
    const std::size_t n = t.rows(), c = t.cols();
    ChannelStats st;
    st.mu.assign(c, 0.0);
    st.sigma.assign(c, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        const double* row = t.row(r);
        for (std::size_t j = 0; j < c; ++j) st.mu[j] += row[j];
    }
    for (std::size_t j = 0; j < c; ++j) st.mu[j] /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) {
        const double* row = t.row(r);
        for (std::size_t j = 0; j < c; ++j) {
            const double d = row[j] - st.mu[j];
            st.sigma[j] += d * d;
        }
    }
    for (std::size_t j = 0; j < c; ++j) {
        st.sigma[j] = std::sqrt(st.sigma[j] / static_cast<double>(n) + eps);
    }
    return st;
}

Matrix adain(const Matrix& content, const Matrix& style, double eps) {
    if (content.cols() != style.cols()) {
        throw ShapeError("adain: channel counts differ, " +
                         std::to_string(content.cols()) + " vs " +
                         std::to_string(style.cols()));
    }
    const ChannelStats cs = channel_stats(content, eps);
    const ChannelStats ss = channel_stats(style, eps);
    Matrix out(content.rows(), content.cols());
    for (std::size_t r = 0; r < content.rows(); ++r) {
        const double* in = content.row(r);
        double* o = out.row(r);
        for (std::size_t j = 0; j < content.cols(); ++j) {
            o[j] = ss.sigma[j] * (in[j] - cs.mu[j]) / cs.sigma[j] + ss.mu[j];
        }
    }
    return out;
}

}  // namespace sfa
