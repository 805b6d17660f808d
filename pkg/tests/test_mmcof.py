import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from fmanet.flow import FlowField
from fmanet.mmcof import (ModulationConfig, adaptive_thresholds, build_mmcof, combine_flows, modulate,
                          normalize_magnitude)

PROPS = settings(max_examples=1000, deadline=None)

maps = arrays(np.float32, st.tuples(st.integers(1, 6), st.integers(1, 6)),
              elements=st.floats(0, 100, width=32))


def flows(seed, shape=(5, 6)):
    rng = np.random.default_rng(seed)
    return [FlowField(*rng.standard_normal((2, *shape)).astype(np.float32)) for _ in range(2)]


# -- normalize ------------------------------------------------------------------------

def test_normalize_examples():
    np.testing.assert_allclose(normalize_magnitude(np.array([0.0, 5.0, 10.0])), [0, 0.5, 1])
    assert not normalize_magnitude(np.full((3, 3), 7.0)).any()
    rng = np.random.default_rng(0)
    m = rng.uniform(0, 9, (8, 8))
    np.testing.assert_allclose(normalize_magnitude(m), (m - m.min()) / (m.max() - m.min()), atol=1e-6)


@PROPS
@given(maps, st.floats(1e-3, 1e3))
def test_normalize_scale_invariant(m, c):
    assume(m.max() > m.min())
    out = normalize_magnitude(m)
    np.testing.assert_allclose(normalize_magnitude(np.float64(c) * m), out, atol=1e-6)
    assert out.min() == 0.0 and out.max() == pytest.approx(1.0) and out.dtype == np.float32


# -- combine --------------------------------------------------------------------------

def test_combine_examples():
    m = np.random.default_rng(1).uniform(0, 1, (4, 4)).astype(np.float32)
    np.testing.assert_array_equal(combine_flows(m, m), 2 * m)
    np.testing.assert_allclose(combine_flows(m, 1 - m, 0.7, 0.0), 0.7 * m, atol=1e-7)
    with pytest.raises(ValueError):
        combine_flows(m, m[:, :3])
    with pytest.raises(ValueError):
        combine_flows(m, m, -1.0)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_combined_range_with_unit_weights(seed):
    rng = np.random.default_rng(seed)
    mc = combine_flows(normalize_magnitude(rng.uniform(size=(5, 5))), normalize_magnitude(rng.uniform(size=(5, 5))))
    assert mc.min() >= 0 and mc.max() <= 2


# -- adaptive thresholds --------------------------------------------------------------

def test_adaptive_examples():
    assert adaptive_thresholds(np.full((3, 3), 0.4)) == pytest.approx((0.4, 0.4))
    assert adaptive_thresholds(np.array([0.5, 1.5]), 2, 1) == pytest.approx((0.5, 2.0))
    assert adaptive_thresholds(np.array([0.0, 2.0])) == pytest.approx((0.0, 3.0))
    with pytest.raises(ValueError):
        adaptive_thresholds(np.zeros(0))


@PROPS
@given(maps, st.floats(0, 5), st.floats(0, 5))
def test_adaptive_ordering(m, k_upper, k_lower):
    lower, upper = adaptive_thresholds(m, k_upper, k_lower)
    mu = float(np.mean(m, dtype=np.float64))
    tol = 1e-9 * max(1.0, abs(mu))
    assert 0 <= lower <= mu + tol and lower <= upper and mu - tol <= upper


def test_adaptive_two_pass_oracle():
    rng = np.random.default_rng(2)
    for _ in range(20):
        m = rng.uniform(0, 2, rng.integers(1, 50))
        mu = sum(m) / len(m)
        sd = (sum((x - mu) ** 2 for x in m) / len(m)) ** 0.5
        lo, hi = adaptive_thresholds(m, 2, 1)
        assert lo == pytest.approx(max(mu - sd, 0)) and hi == pytest.approx(mu + 2 * sd)


# -- modulate -------------------------------------------------------------------------

def test_modulate_examples():
    out = modulate(np.array([2.0, 0.2, 1.0]), 0.5, 1.8, 2.0, 0.5)
    np.testing.assert_allclose(out, [4.0, 0.1, 1.0])
    x = np.random.default_rng(3).uniform(0, 2, 50)
    np.testing.assert_allclose(modulate(x, 0.3, 1.2, 1.0, 1.0), x, atol=1e-7)
    with pytest.raises(ValueError):
        modulate(x, 1.0, 0.5)


def test_modulate_branch_oracle():
    rng = np.random.default_rng(4)
    for _ in range(20):
        x = rng.uniform(0, 2, 40)
        a, b = np.sort(rng.uniform(0, 2, 2))
        w1, w2 = rng.uniform(1, 3), rng.uniform(0.1, 1)
        expect = [w1 * v if v > b else w2 * v if v < a else v for v in x]
        np.testing.assert_allclose(modulate(x, a, b, w1, w2), expect, rtol=1e-6)


@PROPS
@given(arrays(np.float32, st.integers(1, 30), elements=st.floats(0, 2, width=32)),
       st.floats(0, 2), st.floats(0, 2), st.floats(1, 4), st.floats(0.05, 1))
def test_modulate_slopes(mc, t1, t2, w1, w2):
    alpha, beta = float(np.float32(min(t1, t2))), float(np.float32(max(t1, t2)))
    out = modulate(mc, alpha, beta, w1, w2).astype(np.float64)
    x = mc.astype(np.float64)
    slope = np.where(x > beta, w1, np.where(x < alpha, w2, 1.0))
    assert set(np.unique(slope)) <= {w1, w2, 1.0}
    np.testing.assert_allclose(out, np.float32(slope) * mc, rtol=1e-6)
    # monotone inside each region
    for region in (x > beta, x < alpha, (x >= alpha) & (x <= beta)):
        order = np.argsort(x[region], kind="stable")
        assert np.all(np.diff(out[region][order]) >= 0)


# -- build ----------------------------------------------------------------------------

def test_build_zero_flows():
    z = FlowField(np.zeros((4, 4)), np.zeros((4, 4)))
    img = build_mmcof(z, z)
    assert img.shape == (3, 4, 4) and not img.any()


def test_build_identical_horizontal_hand_trace():
    f = FlowField(np.ones((4, 4)), np.zeros((4, 4)))
    cfg = ModulationConfig(mode="manual", alpha=0.0, beta=10.0, w1=1.0, w2=1.0)
    img = build_mmcof(f, f, cfg)
    assert (img[0] == 2).all() and (img[1] == 0).all() and (img[2] == 0).all()


def test_build_adaptive_blob_regions():
    yy, xx = np.mgrid[0:32, 0:32]
    m = np.exp(-((xx - 16) ** 2 + (yy - 16) ** 2) / (2 * 8.0 ** 2))
    f = FlowField(m, np.zeros_like(m))
    cfg = ModulationConfig()
    img = build_mmcof(f, f, cfg)
    mc = 2 * normalize_magnitude(m).astype(np.float64)
    lo, hi = adaptive_thresholds(mc.astype(np.float32), 2, 1)
    core, flat = mc > hi, mc < lo
    assert core.any() and flat.any()
    np.testing.assert_allclose(img[2][core], 2.0 * mc[core], rtol=1e-5)
    np.testing.assert_allclose(img[2][flat], 0.5 * mc[flat], rtol=1e-5, atol=1e-7)
    mid = ~core & ~flat
    np.testing.assert_allclose(img[2][mid], mc[mid], rtol=1e-5)
    assert (img[2] >= 0).all()


def test_single_phase_ignores_offset_flow():
    on, off = flows(5)
    a = build_mmcof(on, off, theta2=0.0)
    b = build_mmcof(on, FlowField(np.zeros((5, 6)), np.ones((5, 6))), theta2=0.0)
    np.testing.assert_array_equal(a, b)


@PROPS
@given(st.integers(0, 2 ** 31 - 1), st.floats(0, 3), st.sampled_from(["manual", "adaptive"]))
def test_phase_symmetry(seed, theta, mode):
    f1, f2 = flows(seed)
    cfg = ModulationConfig(mode=mode, alpha=0.4, beta=1.2)
    a = build_mmcof(f1, f2, cfg, theta, theta)
    b = build_mmcof(f2, f1, cfg, theta, theta)
    np.testing.assert_array_equal(a[2], b[2])
    assert (a[2] >= 0).all()


def test_build_shape_mismatch():
    with pytest.raises(ValueError):
        build_mmcof(FlowField(np.zeros((3, 3)), np.zeros((3, 3))), FlowField(np.zeros((3, 4)), np.zeros((3, 4))))


@pytest.mark.parametrize("kwargs", [dict(mode="fixed"), dict(mode="manual", alpha=1.0, beta=1.0),
                                    dict(w1=0.9), dict(w2=0.0), dict(w2=1.2), dict(k_upper=-1.0)])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        ModulationConfig(**kwargs)


def test_defaults():
    cfg = ModulationConfig()
    assert (cfg.mode, cfg.k_upper, cfg.k_lower, cfg.w1, cfg.w2) == ("adaptive", 2.0, 1.0, 2.0, 0.5)
