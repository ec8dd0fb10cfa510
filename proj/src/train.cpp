#include "sfa/train.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <json.hpp>

namespace sfa {

using nlohmann::json;

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || steps == 0 || !(cfg_weight > 0.0) ||
        views_per_batch == 0) {
        throw DomainError("TrainConfig: fields must be positive");
    }
    if (cfg_dropout_prob < 0.0 || cfg_dropout_prob > 1.0) {
        throw DomainError("TrainConfig: cfg_dropout_prob must lie in [0, 1]");
    }
}

std::uint64_t content_checksum(const ProjectionSet& content) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    auto mix = [&h](const Matrix& m) {
        for (double v : m.data()) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, 8);
            for (int i = 0; i < 8; ++i) {
                h ^= (bits >> (8 * i)) & 0xFF;
                h *= 0x100000001B3ULL;
            }
        }
    };
    mix(content.w_q);
    mix(content.w_k);
    mix(content.w_v);
    return h;
}

FeatureMap cfg_combine(const FeatureMap& uncond, const FeatureMap& cond, double w) {
    if (!(uncond.shape() == cond.shape())) {
        throw ShapeError("cfg_combine: shapes differ, " + uncond.shape().str() +
                         " vs " + cond.shape().str());
    }
    FeatureMap out = uncond;
    for (std::size_t i = 0; i < out.data().size(); ++i) {
        out.data()[i] += w * (cond.data()[i] - uncond.data()[i]);
    }
    return out;
}

TrainState train_style_path(const Dataset& dataset, const ProjectionSet& content,
                            const TrainConfig& cfg, const FusionConfig& fusion) {
    cfg.validate();
    content.validate();
    if (dataset.samples.empty()) {
        throw DomainError("train_style_path: dataset is empty");
    }

#if defined(__GLIBC__)
    // The attention buffers are tens of megabytes and reallocated every
    // step; without this glibc serves them with fresh mmaps and the run
    // spends more time page faulting than computing.
    mallopt(M_MMAP_THRESHOLD, 512 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);
#endif

    TrainState state;
    state.content = content;
    state.config = cfg;
    state.frozen_checksum = content_checksum(content);
    state.params = ParamVector::pack_style(content);  // copy-initialization
    state.loss_history.reserve(cfg.steps);

    SeededRng dropout_rng(SeededRng::derive(cfg.seed, 0xD80F0FFULL));

    for (std::size_t t = 0; t < cfg.steps; ++t) {
        const StylePairSample& sample = dataset.samples[t % dataset.samples.size()];
        const bool drop = dropout_rng.next_uniform() < cfg.cfg_dropout_prob;

        BackwardResult back;
        if (drop) {
            StylePairSample uncond = sample;
            std::fill(uncond.style_views.data().begin(),
                      uncond.style_views.data().end(), 0.0);
            back = loss_backward(state.params, content, uncond, fusion);
        } else {
            back = loss_backward(state.params, content, sample, fusion);
        }
        if (!std::isfinite(back.loss)) {
            throw NumericError("train_style_path: NaN loss at step " +
                               std::to_string(t));
        }
        state.loss_history.push_back(back.loss);
        for (std::size_t i = 0; i < state.params.size(); ++i) {
            state.params.values[i] -= cfg.learning_rate * back.grad.values[i];
        }
        state.step = t + 1;
        if (content_checksum(content) != state.frozen_checksum) {
            throw NumericError("train_style_path: frozen content path changed");
        }
    }
    return state;
}

bool freeze_check(const TrainState& state) {
    return content_checksum(state.content) == state.frozen_checksum;
}

static void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

static std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void write_f64_le(std::ostream& os, const double* p, std::size_t n);
void read_f64_le(std::istream& is, double* p, std::size_t n);

void save_checkpoint(const TrainState& state, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os.write("SFT1", 4);

    json echo;
    echo["learning_rate"] = state.config.learning_rate;
    echo["steps"] = state.config.steps;
    echo["cfg_weight"] = state.config.cfg_weight;
    echo["views_per_batch"] = state.config.views_per_batch;
    echo["cfg_dropout_prob"] = state.config.cfg_dropout_prob;
    echo["seed"] = state.config.seed;
    echo["channels"] = state.content.dim();
    echo["heads"] = state.content.heads;
    echo["step"] = state.step;
    const std::string echo_str = echo.dump();
    put_u64(os, echo_str.size());
    os.write(echo_str.data(), static_cast<std::streamsize>(echo_str.size()));

    put_u64(os, state.params.size());
    write_f64_le(os, state.params.values.data(), state.params.size());
    write_f64_le(os, state.content.w_q.data().data(), state.content.w_q.data().size());
    write_f64_le(os, state.content.w_k.data().data(), state.content.w_k.data().size());
    write_f64_le(os, state.content.w_v.data().data(), state.content.w_v.data().size());
    put_u64(os, state.frozen_checksum);
    if (!os) throw IoError("write failed: " + path);

    std::ofstream loss(path + ".loss.csv");
    if (!loss) throw IoError("cannot write loss sidecar for " + path);
    loss << "step,loss\n";
    loss.precision(17);
    for (std::size_t i = 0; i < state.loss_history.size(); ++i) {
        loss << i << "," << state.loss_history[i] << "\n";
    }
}

TrainState load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "SFT1", 4) != 0) {
        throw IoError("bad checkpoint magic in " + path);
    }
    const std::uint64_t echo_len = get_u64(is);
    std::string echo_str(echo_len, '\0');
    is.read(echo_str.data(), static_cast<std::streamsize>(echo_len));
    const json echo = json::parse(echo_str);

    TrainState state;
    state.config.learning_rate = echo.at("learning_rate").get<double>();
    state.config.steps = echo.at("steps").get<std::size_t>();
    state.config.cfg_weight = echo.at("cfg_weight").get<double>();
    state.config.views_per_batch = echo.at("views_per_batch").get<std::size_t>();
    state.config.cfg_dropout_prob = echo.at("cfg_dropout_prob").get<double>();
    state.config.seed = echo.at("seed").get<std::uint64_t>();
    state.step = echo.at("step").get<std::size_t>();
    const std::size_t channels = echo.at("channels").get<std::size_t>();
    const std::size_t heads = echo.at("heads").get<std::size_t>();

    const std::uint64_t n_params = get_u64(is);
    std::vector<double> values(n_params);
    read_f64_le(is, values.data(), n_params);

    Matrix w_q(channels, channels), w_k(channels, channels), w_v(channels, channels);
    read_f64_le(is, w_q.data().data(), w_q.data().size());
    read_f64_le(is, w_k.data().data(), w_k.data().size());
    read_f64_le(is, w_v.data().data(), w_v.data().size());
    state.frozen_checksum = get_u64(is);
    if (!is) throw IoError("truncated checkpoint: " + path);

    state.content = ProjectionSet{std::move(w_q), std::move(w_k), std::move(w_v), heads};
    state.content.validate();
    state.params = ParamVector::pack_style(state.content);
    if (state.params.size() != n_params) {
        throw IoError("checkpoint parameter count mismatch in " + path);
    }
    state.params.values = std::move(values);

    std::ifstream loss(path + ".loss.csv");
    if (loss) {
        std::string line;
        std::getline(loss, line);  // header
        while (std::getline(loss, line)) {
            const auto comma = line.find(',');
            if (comma != std::string::npos) {
                state.loss_history.push_back(std::stod(line.substr(comma + 1)));
            }
        }
    }
    return state;
}

}  // namespace sfa
