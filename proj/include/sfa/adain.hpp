#pragma once

#include "sfa/tensor.hpp"

namespace sfa {

// Per-channel mean and standard deviation, pooled over all tokens.
struct ChannelStats {
    std::vector<double> mu;
    std::vector<double> sigma;  // sqrt(population variance + eps), always > 0
};

// Population statistics of each column of `t`, stabilized with eps inside
// the square root.
ChannelStats channel_stats(const Matrix& t, double eps);

// Re-normalizes the content tokens so their per-channel statistics match the
// style tokens': sigma_s * (content - mu_c) / sigma_c + mu_s.
Matrix adain(const Matrix& content, const Matrix& style, double eps);

}  // namespace sfa
