import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from dptr import (
    InstrumentSpec,
    LagRule,
    PanelDataset,
    ThresholdParams,
    build_instruments,
    first_difference,
    moment_eval,
)


def direct_g_units(panel, iv, theta):
    """Oracle: per-unit moments straight from the defining formula."""
    diff = first_difference(panel)
    n = panel.n
    out = np.zeros((n, iv.k))
    for j, block in enumerate(iv.blocks):
        t = iv.t0 + j  # level period
        col = t - 2  # diff-panel column
        hi = (diff.q_pairs[:, col, 0] > theta.gamma)[:, None] * diff.x_pairs[:, col, 0, :]
        lo = (diff.q_pairs[:, col, 1] > theta.gamma)[:, None] * diff.x_pairs[:, col, 1, :]
        resid = diff.dy[:, col] - diff.dx[:, col, :] @ theta.beta - (hi - lo) @ theta.delta
        out[:, iv.block_slice(j)] = block * resid[:, None]
    return out


def random_theta(rng, p):
    return ThresholdParams(
        beta=rng.normal(size=p), delta=rng.normal(size=p + 1), gamma=rng.normal()
    )


def test_linearity_identity_100_random_thetas(seed1_panel, seed1_ms):
    rng = np.random.default_rng(42)
    iv = seed1_ms.iv
    for _ in range(100):
        theta = random_theta(rng, seed1_panel.p)
        ev = moment_eval(seed1_ms, None, theta)
        direct = direct_g_units(seed1_panel, iv, theta).mean(axis=0)
        scale = max(1.0, np.abs(direct).max())
        assert np.abs(ev.g_bar - direct).max() / scale < 1e-12
        # identity g_bar = v_n + M alpha against the per-unit mean
        assert np.abs(ev.g_units.mean(axis=0) - ev.g_bar).max() / scale < 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(5, 25), st.integers(3, 5), st.integers(1, 3))
def test_linearity_identity_property(seed, n, T, p):
    rng = np.random.default_rng(seed)
    panel = PanelDataset(
        y=rng.normal(size=(n, T)), x=rng.normal(size=(n, T, p)), unit_ids=tuple(range(n))
    )
    spec = InstrumentSpec(t0=3, y_rule=LagRule(2), q_rule=LagRule(1))
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        iv = build_instruments(panel, spec)
    theta = random_theta(rng, p)
    ev = moment_eval(first_difference(panel), iv, theta)
    direct = direct_g_units(panel, iv, theta).mean(axis=0)
    scale = max(1.0, np.abs(direct).max())
    assert np.abs(ev.g_bar - direct).max() / scale < 1e-12


def test_piecewise_constant_between_observed_q(seed1_panel, seed1_ms):
    q = np.sort(np.unique(np.concatenate([seed1_ms.q_hi.ravel(), seed1_ms.q_lo.ravel()])))
    mid = len(q) // 2
    lo_edge, hi_edge = q[mid], q[mid + 1]
    inner = [lo_edge + (hi_edge - lo_edge) * f for f in (0.25, 0.5, 0.75)]
    rng = np.random.default_rng(7)
    theta = random_theta(rng, seed1_panel.p)
    evs = [
        moment_eval(seed1_ms, None, ThresholdParams(theta.beta, theta.delta, g)) for g in inner
    ]
    for ev in evs[1:]:
        np.testing.assert_array_equal(ev.g_bar, evs[0].g_bar)
        np.testing.assert_array_equal(ev.g_units, evs[0].g_units)


def test_moment_zero_at_truth_without_noise(exact_ms):
    theta0 = ThresholdParams(beta=[0.6, 1.0], delta=[0.5, 0.0, 2.0], gamma=0.25)
    ev = moment_eval(exact_ms, None, theta0)
    assert np.abs(ev.g_bar).max() < 1e-10


def test_indicator_saturation_with_zero_delta(seed1_ms):
    q_min = min(seed1_ms.q_hi.min(), seed1_ms.q_lo.min())
    q_max = max(seed1_ms.q_hi.max(), seed1_ms.q_lo.max())
    beta = np.array([0.3, -0.2])
    zero_delta = np.zeros(3)
    below = moment_eval(seed1_ms, None, ThresholdParams(beta, zero_delta, q_min - 1.0))
    above = moment_eval(seed1_ms, None, ThresholdParams(beta, zero_delta, q_max + 1.0))
    np.testing.assert_array_equal(below.g_bar, above.g_bar)


def test_strict_inequality_ties_fall_lower(seed1_ms):
    # placing gamma exactly on an observed q value: that observation stays in
    # the lower regime, so nudging gamma down by one ulp changes the moments
    q_val = seed1_ms.q_hi[0, 0]
    rng = np.random.default_rng(3)
    theta_at = ThresholdParams(rng.normal(size=2), rng.normal(size=3), q_val)
    theta_below = ThresholdParams(theta_at.beta, theta_at.delta, np.nextafter(q_val, -np.inf))
    at = moment_eval(seed1_ms, None, theta_at)
    below = moment_eval(seed1_ms, None, theta_below)
    assert not np.array_equal(at.g_bar, below.g_bar)


def test_jacobian_shapes_and_mbar(seed1_ms):
    theta = ThresholdParams(beta=[0.1, 0.2], delta=[0.0, 0.1, -0.2], gamma=0.2)
    ev = moment_eval(seed1_ms, None, theta)
    assert ev.m_bar.shape == (24, 5)
    assert ev.g_units.shape == (400, 24)
    assert ev.v_n.shape == (24,)
    recon = ev.v_n + ev.m_bar @ theta.alpha
    np.testing.assert_allclose(recon, ev.g_bar, rtol=0, atol=1e-14)


def test_concurrent_moment_eval_consistency(seed1_ms):
    # pure function: repeated evaluation is bitwise identical
    theta = ThresholdParams(beta=[0.5, 0.5], delta=[0.1, 0.0, 0.3], gamma=0.1)
    a = moment_eval(seed1_ms, None, theta)
    b = moment_eval(seed1_ms, None, theta)
    np.testing.assert_array_equal(a.g_bar, b.g_bar)
