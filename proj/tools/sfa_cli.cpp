// Command-line front end: dataset generation, style-path training, fusion
// inference (plain, interpolated, masked), metrics, gradient checking, and
// tau sweeps. File formats are owned by the library modules.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "sfa/attention.hpp"
#include "sfa/autodiff.hpp"
#include "sfa/metrics.hpp"
#include "sfa/synth.hpp"
#include "sfa/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sfa;

namespace {

struct CommonOpts {
    std::string data_dir;
    std::string ckpt_path;
    std::string config_path;
    std::string mask_path;
    std::string mask_mode = "exclusion";
    std::string pairing_mode = "as_written";
    std::string out;
    double tau = 1.05;
    std::optional<double> alpha;
    double eps = 1e-5;
    std::size_t heads = 2;
    std::size_t sample = 0;
    std::uint64_t seed = 0;
    bool force = false;
};

void require_output_free(const std::string& path, bool force) {
    if (!force && fs::exists(path)) {
        throw DomainError("output exists (use --force to overwrite): " + path);
    }
}

std::string resolve_data_dir(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("SFA_DATA_DIR")) return env;
    throw DomainError("no dataset directory: pass --data or set SFA_DATA_DIR");
}

MaskMode parse_mask_mode(const std::string& s) {
    if (s == "exclusion") return MaskMode::exclusion;
    if (s == "paper_literal") return MaskMode::paper_literal;
    throw DomainError("unknown mask mode: " + s);
}

PairingMode parse_pairing_mode(const std::string& s) {
    if (s == "as_written") return PairingMode::as_written;
    if (s == "aligned") return PairingMode::aligned;
    throw DomainError("unknown pairing mode: " + s);
}

FusionConfig build_fusion_config(const CommonOpts& o) {
    FusionConfig cfg;
    if (!o.config_path.empty()) {
        std::ifstream is(o.config_path);
        if (!is) throw IoError("cannot open config: " + o.config_path);
        json j;
        is >> j;
        if (j.contains("tau")) cfg.tau = j["tau"].get<double>();
        if (j.contains("alpha") && !j["alpha"].is_null()) {
            cfg.alpha = j["alpha"].get<double>();
        }
        if (j.contains("mask_path") && !j["mask_path"].is_null()) {
            cfg.mask = StyleMask::load_pgm(j["mask_path"].get<std::string>());
        }
        if (j.contains("mask_mode")) {
            cfg.mask_mode = parse_mask_mode(j["mask_mode"].get<std::string>());
        }
        if (j.contains("pairing_mode")) {
            cfg.pairing_mode = parse_pairing_mode(j["pairing_mode"].get<std::string>());
        }
        if (j.contains("eps")) cfg.eps = j["eps"].get<double>();
    }
    cfg.tau = o.tau;
    cfg.eps = o.eps;
    if (o.alpha) cfg.alpha = o.alpha;
    if (!o.mask_path.empty()) cfg.mask = StyleMask::load_pgm(o.mask_path);
    cfg.mask_mode = parse_mask_mode(o.mask_mode);
    cfg.pairing_mode = parse_pairing_mode(o.pairing_mode);
    cfg.validate();
    return cfg;
}

struct Model {
    ProjectionSet content;
    ProjectionSet style;
};

// Checkpoint when given, otherwise seed-derived projections with the style
// path still equal to the frozen content path.
Model load_model(const CommonOpts& o, std::size_t channels) {
    if (!o.ckpt_path.empty()) {
        TrainState state = load_checkpoint(o.ckpt_path);
        if (state.content.dim() != channels) {
            throw ShapeError("checkpoint channel width does not match dataset");
        }
        return {state.content, state.params.unpack_style(state.content.heads)};
    }
    ProjectionSet content =
        ProjectionSet::random(channels, o.heads, SeededRng::derive(o.seed, 0xC0DE));
    return {content, content};
}

const StylePairSample& pick_sample(const Dataset& ds, std::size_t index) {
    if (index >= ds.samples.size()) {
        throw DomainError("sample index " + std::to_string(index) +
                          " out of range (dataset has " +
                          std::to_string(ds.samples.size()) + ")");
    }
    return ds.samples[index];
}

void write_preview_pgm(const FeatureMap& f, std::size_t view, std::size_t channel,
                       const std::string& path) {
    const Shape5& sh = f.shape();
    double lo = f.at(0, view, 0, 0, channel), hi = lo;
    for (std::size_t y = 0; y < sh.h; ++y) {
        for (std::size_t x = 0; x < sh.w; ++x) {
            const double v = f.at(0, view, y, x, channel);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    const double range = hi > lo ? hi - lo : 1.0;
    StyleMask img;
    img.height = sh.h;
    img.width = sh.w;
    img.grid.resize(sh.h * sh.w);
    for (std::size_t y = 0; y < sh.h; ++y) {
        for (std::size_t x = 0; x < sh.w; ++x) {
            img.grid[y * sh.w + x] = (f.at(0, view, y, x, channel) - lo) / range;
        }
    }
    img.save_pgm(path);
}

void write_fusion_outputs(const FusedOutput& out, const std::string& dir,
                          bool force) {
    require_output_free(dir, force);
    fs::create_directories(dir);
    save_feature_map(out.features, (fs::path(dir) / "fused.sfa").string());
    const Shape5& sh = out.features.shape();
    for (std::size_t v = 0; v < sh.n; ++v) {
        FeatureMap view({1, 1, sh.h, sh.w, sh.c});
        for (std::size_t y = 0; y < sh.h; ++y) {
            for (std::size_t x = 0; x < sh.w; ++x) {
                for (std::size_t c = 0; c < sh.c; ++c) {
                    view.at(0, 0, y, x, c) = out.features.at(0, v, y, x, c);
                }
            }
        }
        char name[32];
        std::snprintf(name, sizeof name, "view_%02zu.sfa", v);
        save_feature_map(view, (fs::path(dir) / name).string());
        std::snprintf(name, sizeof name, "preview_%02zu.pgm", v);
        write_preview_pgm(out.features, v, 0, (fs::path(dir) / name).string());
    }
    std::ofstream csv(fs::path(dir) / "block_mass.csv");
    if (!csv) throw IoError("cannot write block_mass.csv in " + dir);
    csv << "query,latent_mass,norm_style_mass,scaled_style_mass\n";
    csv.precision(17);
    for (std::size_t q = 0; q < out.block_mass.rows(); ++q) {
        csv << q << "," << out.block_mass.at(q, 0) << ","
            << out.block_mass.at(q, 1) << "," << out.block_mass.at(q, 2) << "\n";
    }
    csv << "mean," << out.mean_mass[0] << "," << out.mean_mass[1] << ","
        << out.mean_mass[2] << "\n";
}

int cmd_gen_data(const CommonOpts& o, const DatasetConfig& dcfg) {
    require_output_free((fs::path(o.out) / "manifest.json").string(), o.force);
    Dataset ds = make_dataset(dcfg);
    save_dataset(ds, o.out);
    std::cout << "wrote " << ds.samples.size() << " samples to " << o.out << "\n";
    return 0;
}

int cmd_train(const CommonOpts& o, const TrainConfig& tcfg) {
    require_output_free(o.out, o.force);
    Dataset ds = load_dataset(resolve_data_dir(o.data_dir));
    ProjectionSet content = ProjectionSet::random(
        ds.config.channels, o.heads, SeededRng::derive(tcfg.seed, 0xC0DE));
    FusionConfig fusion = build_fusion_config(o);
    TrainState state = train_style_path(ds, content, tcfg, fusion);
    save_checkpoint(state, o.out);
    std::cout << "trained " << state.step << " steps, loss "
              << state.loss_history.front() << " -> " << state.loss_history.back()
              << ", checkpoint " << o.out << "\n";
    return 0;
}

FusedOutput run_fusion(const CommonOpts& o, const Dataset& ds,
                       const StylePairSample& sample, const FusionConfig& cfg,
                       const FeatureMap* style2) {
    const Model model = load_model(o, ds.config.channels);
    const FeatureMap latent = sample.content_views.stream(0);
    return fused_attention(latent, sample.content_views, sample.style_views,
                           model.content, model.style, cfg, style2);
}

int cmd_fuse(const CommonOpts& o, std::size_t style2_sample, bool use_style2) {
    Dataset ds = load_dataset(resolve_data_dir(o.data_dir));
    const StylePairSample& sample = pick_sample(ds, o.sample);
    FusionConfig cfg = build_fusion_config(o);
    const FeatureMap* style2 = nullptr;
    FeatureMap style2_map;
    if (use_style2) {
        style2_map = pick_sample(ds, style2_sample).style_views;
        style2 = &style2_map;
    }
    FusedOutput out = run_fusion(o, ds, sample, cfg, style2);
    write_fusion_outputs(out, o.out, o.force);
    std::cout << "fused sample " << o.sample << " -> " << o.out << "\n";
    return 0;
}

int cmd_eval(const CommonOpts& o) {
    Dataset ds = load_dataset(resolve_data_dir(o.data_dir));
    const StylePairSample& sample = pick_sample(ds, o.sample);
    FusionConfig cfg = build_fusion_config(o);
    FusedOutput out = run_fusion(o, ds, sample, cfg, nullptr);

    require_output_free(o.out, o.force);
    fs::create_directories(o.out);
    MetricReport cyc = cycle_consistency(out.features);
    MetricReport dd = depth_delta(out.features, sample.content_views.stream(0));
    MetricReport sa = style_alignment(out.features, sample.style_views);
    cyc.save_csv((fs::path(o.out) / "cycle_consistency.csv").string());
    dd.save_csv((fs::path(o.out) / "depth_delta.csv").string());
    sa.save_csv((fs::path(o.out) / "style_alignment.csv").string());
    std::ofstream js(fs::path(o.out) / "summary.json");
    js << "[" << cyc.to_json() << "," << dd.to_json() << "," << sa.to_json()
       << "]\n";
    std::cout << "cycle_consistency " << cyc.aggregate << "\n"
              << "depth_delta " << dd.aggregate << "\n"
              << "style_alignment " << sa.aggregate << "\n";
    return 0;
}

int cmd_gradcheck(const CommonOpts& o) {
    // Micro instance: C=4, two heads, 12 tokens in the widest map.
    const std::size_t channels = 4;
    ProjectionSet content =
        ProjectionSet::random(channels, 2, SeededRng::derive(o.seed, 1));
    StylePairSample batch;
    batch.content_views = seeded_normal({2, 1, 2, 2, channels},
                                        SeededRng::derive(o.seed, 2));
    batch.style_views = seeded_normal({2, 1, 2, 2, channels},
                                      SeededRng::derive(o.seed, 3));
    batch.target_views = seeded_normal({2, 1, 2, 2, channels},
                                       SeededRng::derive(o.seed, 4));
    batch.depth_views = FeatureMap({1, 1, 2, 2, 1});
    FusionConfig cfg = build_fusion_config(o);

    ParamVector params = ParamVector::pack_style(content);
    BackwardResult back = loss_backward(params, content, batch, cfg);
    ParamVector numeric = finite_diff_grad(params, content, batch, cfg, 1e-5);
    GradReport rep = grad_check(back.grad, numeric, 1e-4);
    if (!o.out.empty()) {
        require_output_free(o.out, o.force);
        rep.save_csv(o.out);
    }
    std::cout << "gradcheck max_rel_err " << rep.max_rel_err << " "
              << (rep.pass ? "PASS" : "FAIL") << "\n";
    return rep.pass ? 0 : 4;
}

int cmd_sweep_tau(const CommonOpts& o, const std::vector<double>& taus) {
    if (taus.empty()) throw DomainError("sweep-tau: empty tau list");
    for (double t : taus) {
        if (!(t > 0.0)) throw DomainError("sweep-tau: tau values must be positive");
    }
    Dataset ds = load_dataset(resolve_data_dir(o.data_dir));
    const StylePairSample& sample = pick_sample(ds, o.sample);
    require_output_free(o.out, o.force);

    std::ofstream csv(o.out);
    if (!csv) throw IoError("cannot open for writing: " + o.out);
    csv << "tau,style_alignment,cycle_consistency,depth_delta,"
           "scaled_style_mass,probe_positive_style_logit\n";
    csv.precision(17);
    for (double tau : taus) {
        CommonOpts local = o;
        local.tau = tau;
        FusionConfig cfg = build_fusion_config(local);
        FusedOutput out = run_fusion(o, ds, sample, cfg, nullptr);
        MetricReport sa = style_alignment(out.features, sample.style_views);
        MetricReport cyc = cycle_consistency(out.features);
        MetricReport dd = depth_delta(out.features, sample.content_views.stream(0));
        // Probe: the query with the highest scaled-style mass. Its mass grows
        // with tau when its dominant logit is a positive style logit, i.e.
        // when that mass already exceeds the uniform share and grows at
        // tau slightly above the current value.
        std::size_t probe = 0;
        for (std::size_t q = 0; q < out.block_mass.rows(); ++q) {
            if (out.block_mass.at(q, 2) > out.block_mass.at(probe, 2)) probe = q;
        }
        CommonOpts bumped = local;
        bumped.tau = tau * 1.01;
        FusedOutput out2 = run_fusion(o, ds, sample, build_fusion_config(bumped),
                                      nullptr);
        const bool flag =
            out2.block_mass.at(probe, 2) > out.block_mass.at(probe, 2);
        csv << tau << "," << sa.aggregate << "," << cyc.aggregate << ","
            << dd.aggregate << "," << out.mean_mass[2] << ","
            << (flag ? 1 : 0) << "\n";
    }
    std::cout << "sweep written to " << o.out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Style fusion attention toolkit"};
    app.require_subcommand(1);

    CommonOpts o;
    DatasetConfig dcfg;
    TrainConfig tcfg;
    std::size_t style2_sample = 0;
    std::vector<double> taus{1.0, 1.05, 1.10};

    auto add_fusion_flags = [&](CLI::App* c) {
        c->add_option("--config", o.config_path, "JSON fusion config");
        c->add_option("--tau", o.tau, "style key scaling factor");
        c->add_option("--alpha", [&o](const std::vector<std::string>& v) {
            o.alpha = std::stod(v.at(0));
            return true;
        }, "style interpolation weight");
        c->add_option("--mask", o.mask_path, "style mask (P5 PGM)");
        c->add_option("--mask-mode", o.mask_mode, "exclusion|paper_literal");
        c->add_option("--pairing-mode", o.pairing_mode, "as_written|aligned");
        c->add_option("--eps", o.eps, "AdaIN stabilizer");
        c->add_option("--heads", o.heads, "attention heads");
        c->add_option("--seed", o.seed, "seed");
    };
    auto add_io_flags = [&](CLI::App* c, bool needs_data) {
        if (needs_data) {
            c->add_option("--data", o.data_dir, "dataset dir (or SFA_DATA_DIR)");
            c->add_option("--ckpt", o.ckpt_path, "checkpoint file");
            c->add_option("--sample", o.sample, "sample index");
        }
        c->add_option("--out", o.out, "output path")->required();
        c->add_flag("--force", o.force, "overwrite existing outputs");
    };

    CLI::App* gen = app.add_subcommand("gen-data", "generate the paired dataset");
    gen->add_option("--identities", dcfg.n_identities);
    gen->add_option("--styles", dcfg.n_styles);
    gen->add_option("--samples-per-style", dcfg.samples_per_style);
    gen->add_option("--views", dcfg.n_views);
    gen->add_option("--res", dcfg.height);
    gen->add_option("--channels", dcfg.channels);
    gen->add_option("--seed", dcfg.seed);
    add_io_flags(gen, false);

    CLI::App* train = app.add_subcommand("train", "fine-tune the style path");
    train->add_option("--data", o.data_dir);
    train->add_option("--steps", tcfg.steps);
    train->add_option("--lr", tcfg.learning_rate);
    train->add_option("--cfg-weight", tcfg.cfg_weight);
    train->add_option("--views", tcfg.views_per_batch);
    train->add_option("--dropout", tcfg.cfg_dropout_prob);
    add_fusion_flags(train);
    add_io_flags(train, false);

    CLI::App* fuse = app.add_subcommand("fuse", "run style fusion attention");
    add_fusion_flags(fuse);
    add_io_flags(fuse, true);

    CLI::App* interp = app.add_subcommand("interpolate", "blend two styles");
    interp->add_option("--style2-sample", style2_sample, "second style sample")
        ->required();
    add_fusion_flags(interp);
    add_io_flags(interp, true);

    CLI::App* localize = app.add_subcommand("localize", "masked local stylization");
    add_fusion_flags(localize);
    add_io_flags(localize, true);
    // mask is mandatory for localize; checked after parse

    CLI::App* eval = app.add_subcommand("eval", "compute consistency metrics");
    add_fusion_flags(eval);
    add_io_flags(eval, true);

    CLI::App* grad = app.add_subcommand("gradcheck", "verify gradients");
    add_fusion_flags(grad);
    grad->add_option("--out", o.out, "CSV report path");
    grad->add_flag("--force", o.force);

    CLI::App* sweep = app.add_subcommand("sweep-tau", "tau sweep CSV");
    sweep->add_option("--taus", taus, "tau values")->delimiter(',');
    add_fusion_flags(sweep);
    add_io_flags(sweep, true);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            dcfg.width = dcfg.height;
            return cmd_gen_data(o, dcfg);
        }
        if (train->parsed()) {
            tcfg.seed = o.seed;
            o.data_dir = resolve_data_dir(o.data_dir);
            return cmd_train(o, tcfg);
        }
        if (fuse->parsed()) return cmd_fuse(o, 0, false);
        if (interp->parsed()) {
            if (!o.alpha) o.alpha = 0.5;
            return cmd_fuse(o, style2_sample, true);
        }
        if (localize->parsed()) {
            if (o.mask_path.empty()) {
                throw DomainError("localize requires --mask");
            }
            return cmd_fuse(o, 0, false);
        }
        if (eval->parsed()) return cmd_eval(o);
        if (grad->parsed()) return cmd_gradcheck(o);
        if (sweep->parsed()) return cmd_sweep_tau(o, taus);
    } catch (const IoError& e) {
        std::cerr << "ERROR code=2 msg=\"" << e.what() << "\"\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "ERROR code=4 msg=\"" << e.what() << "\"\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "ERROR code=3 msg=\"" << e.what() << "\"\n";
        return 3;
    }
    return 0;
}
