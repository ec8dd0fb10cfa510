#include "sfa/metrics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "sfa/adain.hpp"

namespace sfa {

void MetricReport::save_csv(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << "name,aggregate,view_index,value\n";
    os.precision(17);
    for (std::size_t v = 0; v < per_view.size(); ++v) {
        os << name << "," << aggregate << "," << v << "," << per_view[v] << "\n";
    }
}

std::string MetricReport::to_json() const {
    std::ostringstream os;
    os.precision(17);
    os << "{\"name\":\"" << name << "\",\"aggregate\":" << aggregate
       << ",\"n_views\":" << n_views << ",\"metadata\":\"" << metadata
       << "\",\"per_view\":[";
    for (std::size_t i = 0; i < per_view.size(); ++i) {
        os << (i ? "," : "") << per_view[i];
    }
    os << "]}";
    return os.str();
}

namespace {

// RMS over everything in view v except the view axis itself.
double view_rms_diff(const FeatureMap& a, const FeatureMap& b, std::size_t v) {
    const Shape5& sh = a.shape();
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t s = 0; s < sh.s; ++s) {
        for (std::size_t y = 0; y < sh.h; ++y) {
            for (std::size_t x = 0; x < sh.w; ++x) {
                for (std::size_t c = 0; c < sh.c; ++c) {
                    const double d = a.at(s, v, y, x, c) - b.at(s, v, y, x, c);
                    acc += d * d;
                    ++count;
                }
            }
        }
    }
    return std::sqrt(acc / static_cast<double>(count));
}

double mean(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
}

ChannelStats view_stats(const FeatureMap& f, std::size_t v) {
    const Shape5& sh = f.shape();
    Matrix tokens(sh.s * sh.h * sh.w, sh.c);
    std::size_t r = 0;
    for (std::size_t s = 0; s < sh.s; ++s) {
        for (std::size_t y = 0; y < sh.h; ++y) {
            for (std::size_t x = 0; x < sh.w; ++x, ++r) {
                for (std::size_t c = 0; c < sh.c; ++c) {
                    tokens.at(r, c) = f.at(s, v, y, x, c);
                }
            }
        }
    }
    return channel_stats(tokens, 1e-12);
}

}  // namespace

MetricReport cycle_consistency(const FeatureMap& views) {
    const std::size_t n = views.shape().n;
    if (n < 2) throw ShapeError("cycle_consistency: need at least 2 views");
    MetricReport rep;
    rep.name = "cycle_consistency";
    rep.n_views = n;
    rep.metadata = "exact-arithmetic loop analog (not MEt3R); scores x100";
    rep.per_view.resize(n);
    for (std::size_t v = 0; v < n; ++v) {
        const std::size_t next = (v + 1) % n;
        const Shape5& sh = views.shape();
        double acc = 0.0;
        std::size_t count = 0;
        for (std::size_t s = 0; s < sh.s; ++s) {
            for (std::size_t y = 0; y < sh.h; ++y) {
                for (std::size_t x = 0; x < sh.w; ++x) {
                    for (std::size_t c = 0; c < sh.c; ++c) {
                        const double d =
                            views.at(s, v, y, x, c) - views.at(s, next, y, x, c);
                        acc += d * d;
                        ++count;
                    }
                }
            }
        }
        rep.per_view[v] = std::sqrt(acc / static_cast<double>(count));
    }
    rep.aggregate = mean(rep.per_view) * 100.0;
    return rep;
}

MetricReport depth_delta(const FeatureMap& generated, const FeatureMap& reference) {
    if (!(generated.shape() == reference.shape())) {
        throw ShapeError("depth_delta: shapes differ, " + generated.shape().str() +
                         " vs " + reference.shape().str());
    }
    MetricReport rep;
    rep.name = "depth_delta";
    rep.n_views = generated.shape().n;
    rep.metadata = "exact depth fields replace the pretrained estimator";
    rep.per_view.resize(rep.n_views);
    for (std::size_t v = 0; v < rep.n_views; ++v) {
        rep.per_view[v] = view_rms_diff(generated, reference, v);
    }
    rep.aggregate = mean(rep.per_view);
    return rep;
}

MetricReport style_alignment(const FeatureMap& output, const FeatureMap& style_ref) {
    if (output.shape().c != style_ref.shape().c) {
        throw ShapeError("style_alignment: channel counts differ");
    }
    if (output.shape().n != style_ref.shape().n) {
        throw ShapeError("style_alignment: view counts differ");
    }
    MetricReport rep;
    rep.name = "style_alignment";
    rep.n_views = output.shape().n;
    rep.metadata = "channel-statistics similarity (CLIP stand-in), 1/(1+distance)";
    rep.per_view.resize(rep.n_views);
    for (std::size_t v = 0; v < rep.n_views; ++v) {
        const ChannelStats a = view_stats(output, v);
        const ChannelStats b = view_stats(style_ref, v);
        double d2 = 0.0;
        for (std::size_t c = 0; c < a.mu.size(); ++c) {
            const double dm = a.mu[c] - b.mu[c];
            const double dsg = a.sigma[c] - b.sigma[c];
            d2 += dm * dm + dsg * dsg;
        }
        rep.per_view[v] = 1.0 / (1.0 + std::sqrt(d2));
    }
    rep.aggregate = mean(rep.per_view);
    return rep;
}

}  // namespace sfa
