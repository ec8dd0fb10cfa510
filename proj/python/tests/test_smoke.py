import numpy as np
import pytest

import sfa


def test_seeded_normal_deterministic():
    a = sfa.seeded_normal(1, 2, 3, 3, 4, seed=42)
    b = sfa.seeded_normal(1, 2, 3, 3, 4, seed=42)
    assert a.shape == (1, 2, 3, 3, 4)
    np.testing.assert_array_equal(a, b)
    c = sfa.seeded_normal(1, 2, 3, 3, 4, seed=43)
    assert not np.array_equal(a, c)


def test_adain_matches_style_statistics():
    rng = np.random.default_rng(0)
    content = rng.normal(1.0, 2.0, size=(32, 5))
    style = rng.normal(-0.5, 0.7, size=(24, 5))
    out = sfa.adain(content, style, eps=1e-12)
    np.testing.assert_allclose(out.mean(axis=0), style.mean(axis=0), atol=1e-6)
    np.testing.assert_allclose(out.std(axis=0), style.std(axis=0), atol=1e-5)


def test_fused_attention_masses_sum_to_one():
    c, heads = 4, 2
    f_l = sfa.seeded_normal(1, 1, 2, 2, c, seed=1)
    f_c = sfa.seeded_normal(2, 1, 2, 2, c, seed=2)
    f_s = sfa.seeded_normal(2, 1, 2, 2, c, seed=3)
    w_q, w_k, w_v = sfa.random_projection(c, heads, seed=4)
    out = sfa.fused_attention(f_l, f_c, f_s, w_q, w_k, w_v, heads=heads, tau=1.05)
    assert out["features"].shape == f_l.shape
    np.testing.assert_allclose(out["block_mass"].sum(axis=1), 1.0, atol=1e-9)
    assert abs(sum(out["mean_mass"]) - 1.0) < 1e-9


def test_interpolation_endpoints():
    f1 = sfa.seeded_normal(2, 1, 2, 2, 4, seed=5)
    f2 = sfa.seeded_normal(2, 1, 2, 2, 4, seed=6)
    rng = np.random.default_rng(7)
    w_k = rng.normal(size=(4, 4))
    w_v = rng.normal(size=(4, 4))
    k0, v0 = sfa.interpolate_style(f1, f2, 0.0, w_k, w_v)
    k1, v1 = sfa.interpolate_style(f1, f2, 1.0, w_k, w_v)
    tokens1 = f1.reshape(-1, 4)
    tokens2 = f2.reshape(-1, 4)
    np.testing.assert_allclose(k0, tokens1 @ w_k, atol=1e-12)
    np.testing.assert_allclose(k1, tokens2 @ w_k, atol=1e-12)
    kh, vh = sfa.interpolate_style(f1, f2, 0.5, w_k, w_v)
    np.testing.assert_allclose(kh, 0.5 * (k0 + k1), atol=1e-12)
    np.testing.assert_allclose(vh, 0.5 * (v0 + v1), atol=1e-12)


def test_cfg_combine():
    uncond = np.zeros((1, 1, 1, 1, 2))
    cond = np.ones((1, 1, 1, 1, 2))
    out = sfa.cfg_combine(uncond, cond, 3.0)
    np.testing.assert_allclose(out, 3.0)


def test_metrics():
    views = sfa.seeded_normal(1, 4, 3, 3, 2, seed=8)
    rep = sfa.cycle_consistency(views)
    assert rep["name"] == "cycle_consistency"
    assert len(rep["per_view"]) == 4
    assert rep["aggregate"] > 0.0

    same = sfa.depth_delta(views, views)
    assert same["aggregate"] == 0.0

    align = sfa.style_alignment(views, views)
    assert align["aggregate"] == pytest.approx(1.0)


def test_feature_map_roundtrip(tmp_path):
    f = sfa.seeded_normal(2, 3, 2, 2, 4, seed=9)
    path = str(tmp_path / "roundtrip.sfa")
    sfa.save_feature_map(f, path)
    back = sfa.load_feature_map(path)
    np.testing.assert_array_equal(back, f)


def test_error_taxonomy(tmp_path):
    with pytest.raises(sfa.ShapeError):
        sfa.adain(np.zeros((3, 2)), np.zeros((3, 3)))
    with pytest.raises(sfa.IoError):
        sfa.load_feature_map(str(tmp_path / "missing.sfa"))
    f_l = sfa.seeded_normal(1, 1, 2, 2, 4, seed=1)
    f_c = sfa.seeded_normal(2, 1, 2, 2, 4, seed=2)
    w_q, w_k, w_v = sfa.random_projection(4, 1, seed=3)
    with pytest.raises(sfa.DomainError):
        sfa.fused_attention(f_l, f_c, f_c, w_q, w_k, w_v, heads=1, tau=-1.0)
