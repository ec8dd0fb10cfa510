#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sfa/autodiff.hpp"
#include "sfa/synth.hpp"

namespace sfa {

struct TrainConfig {
    double learning_rate = 1e-5;
    std::size_t steps = 800;
    double cfg_weight = 3.0;
    std::size_t views_per_batch = 16;
    double cfg_dropout_prob = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrainState {
    ParamVector params;
    std::size_t step = 0;
    std::vector<double> loss_history;
    std::uint64_t frozen_checksum = 0;
    ProjectionSet content;  // the frozen path, kept for inference
    TrainConfig config;
};

// FNV-1a over the raw bit patterns of the frozen projections.
std::uint64_t content_checksum(const ProjectionSet& content);

// uncond + w * (cond - uncond).
FeatureMap cfg_combine(const FeatureMap& uncond, const FeatureMap& cond, double w);

// Plain gradient descent on the style-path parameters, content path frozen.
// Style projections start as a copy of the frozen content projections. With
// probability cfg_dropout_prob per step the style conditioning is zeroed so
// the unconditional branch is trained for cfg_combine.
TrainState train_style_path(const Dataset& dataset, const ProjectionSet& content,
                            const TrainConfig& cfg, const FusionConfig& fusion);

bool freeze_check(const TrainState& state);

// Checkpoint: magic "SFT1", length-prefixed JSON config echo, then the
// ParamVector as little-endian doubles. Loss history goes to a CSV sidecar
// at path + ".loss.csv".
void save_checkpoint(const TrainState& state, const std::string& path);
TrainState load_checkpoint(const std::string& path);

}  // namespace sfa
