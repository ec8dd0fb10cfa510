#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "sfa/train.hpp"

using namespace sfa;

namespace {

Dataset tiny_dataset(std::uint64_t seed = 0) {
    DatasetConfig cfg;
    cfg.n_identities = 3;
    cfg.n_styles = 2;
    cfg.samples_per_style = 3;
    cfg.n_views = 4;
    cfg.height = cfg.width = 4;
    cfg.channels = 4;
    cfg.seed = seed;
    return make_dataset(cfg);
}

}  // namespace

TEST_CASE("cfg_combine endpoints and arithmetic") {
    FeatureMap uncond({1, 1, 1, 1, 1}, {1.0});
    FeatureMap cond({1, 1, 1, 1, 1}, {2.0});
    CHECK(cfg_combine(uncond, cond, 0.0).data()[0] == 1.0);
    CHECK(cfg_combine(uncond, cond, 1.0).data()[0] == 2.0);
    CHECK(cfg_combine(uncond, cond, 3.0).data()[0] == 4.0);
    FeatureMap bad({1, 1, 1, 1, 2}, {0.0, 0.0});
    CHECK_THROWS_AS(cfg_combine(uncond, bad, 1.0), ShapeError);
}

TEST_CASE("zero learning rate leaves parameters bit-identical") {
    Dataset ds = tiny_dataset();
    ProjectionSet content = ProjectionSet::random(4, 2, 1);
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.steps = 5;
    FusionConfig fusion;
    TrainState state = train_style_path(ds, content, cfg, fusion);
    ParamVector init = ParamVector::pack_style(content);
    CHECK(state.params.values == init.values);
}

TEST_CASE("same seed gives identical loss histories") {
    Dataset ds = tiny_dataset();
    ProjectionSet content = ProjectionSet::random(4, 2, 1);
    TrainConfig cfg;
    cfg.learning_rate = 1e-4;
    cfg.steps = 10;
    cfg.seed = 3;
    FusionConfig fusion;
    TrainState a = train_style_path(ds, content, cfg, fusion);
    TrainState b = train_style_path(ds, content, cfg, fusion);
    CHECK(a.loss_history == b.loss_history);
    CHECK(a.params.values == b.params.values);
}

TEST_CASE("training keeps the frozen path frozen and losses finite") {
    Dataset ds = tiny_dataset(9);
    ProjectionSet content = ProjectionSet::random(4, 2, 2);
    TrainConfig cfg;
    cfg.learning_rate = 1e-4;
    cfg.steps = 20;
    FusionConfig fusion;
    TrainState state = train_style_path(ds, content, cfg, fusion);
    CHECK(freeze_check(state));
    CHECK(state.loss_history.size() == 20);
    for (double l : state.loss_history) CHECK(std::isfinite(l));
}

TEST_CASE("freeze_check detects perturbation") {
    Dataset ds = tiny_dataset();
    ProjectionSet content = ProjectionSet::random(4, 2, 1);
    TrainConfig cfg;
    cfg.steps = 1;
    TrainState state = train_style_path(ds, content, cfg, FusionConfig{});
    CHECK(freeze_check(state));
    state.content.w_k.at(0, 0) += 1e-9;
    CHECK(!freeze_check(state));
}

TEST_CASE("with dropout disabled and weight one cfg_combine is the cond output") {
    FeatureMap uncond = seeded_normal({1, 2, 2, 2, 3}, 10);
    FeatureMap cond = seeded_normal({1, 2, 2, 2, 3}, 11);
    FeatureMap combined = cfg_combine(uncond, cond, 1.0);
    for (std::size_t i = 0; i < combined.data().size(); ++i) {
        CHECK(combined.data()[i] ==
              doctest::Approx(cond.data()[i]).epsilon(1e-15));
    }
}

TEST_CASE("train config validation") {
    TrainConfig cfg;
    cfg.cfg_dropout_prob = 1.5;
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    cfg = TrainConfig{};
    cfg.steps = 0;
    CHECK_THROWS_AS(cfg.validate(), DomainError);
}

TEST_CASE("checkpoint round trip") {
    Dataset ds = tiny_dataset();
    ProjectionSet content = ProjectionSet::random(4, 2, 4);
    TrainConfig cfg;
    cfg.learning_rate = 1e-4;
    cfg.steps = 8;
    cfg.seed = 12;
    TrainState state = train_style_path(ds, content, cfg, FusionConfig{});
    const std::string path =
        (std::filesystem::temp_directory_path() / "sfa_ckpt_test.bin").string();
    save_checkpoint(state, path);
    TrainState back = load_checkpoint(path);
    CHECK(back.params.values == state.params.values);
    CHECK(back.content.w_q == state.content.w_q);
    CHECK(back.content.w_k == state.content.w_k);
    CHECK(back.frozen_checksum == state.frozen_checksum);
    CHECK(back.config.learning_rate == cfg.learning_rate);
    CHECK(back.loss_history.size() == state.loss_history.size());
    CHECK(back.loss_history.back() ==
          doctest::Approx(state.loss_history.back()).epsilon(1e-15));
    std::filesystem::remove(path);
    std::filesystem::remove(path + ".loss.csv");
}
