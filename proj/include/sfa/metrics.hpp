#pragma once

#include <string>
#include <vector>

#include "sfa/tensor.hpp"

namespace sfa {

struct MetricReport {
    std::string name;
    double aggregate = 0.0;
    std::vector<double> per_view;
    std::size_t n_views = 0;
    std::string metadata;  // names the analytic substitution behind the score

    void save_csv(const std::string& path) const;
    std::string to_json() const;
};

// Mean RMS difference over adjacent view pairs (0,1)...(N-1,0), the wrap
// pair closing the loop; aggregate is the mean over pairs times 100.
MetricReport cycle_consistency(const FeatureMap& views);

// Per-view RMS difference between two aligned stacks; aggregate is the mean
// over views.
MetricReport depth_delta(const FeatureMap& generated, const FeatureMap& reference);

// Statistic-matching similarity in (0, 1]: per view, 1 / (1 + D) where D is
// the euclidean distance between per-channel (mu, sigma) of the view and of
// the whole style reference. 1 iff the statistics match exactly.
MetricReport style_alignment(const FeatureMap& output, const FeatureMap& style_ref);

}  // namespace sfa
