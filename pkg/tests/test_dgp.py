import numpy as np
import pytest

from dptr import DgpConfig, DimensionError, simulate_panel
from dptr.dgp import regression_function

# frozen oracle: stationary AR(1) variance 1 / (1 - rho^2) at rho = 0.7
AR1_VAR_RHO_07 = 1.9607843137254901


def test_reproducible_bitwise():
    cfg = DgpConfig(n=50, T=6)
    a = simulate_panel(cfg, seed=5)
    b = simulate_panel(cfg, seed=5)
    np.testing.assert_array_equal(a.y, b.y)
    np.testing.assert_array_equal(a.x, b.x)
    c = simulate_panel(cfg, seed=6)
    assert not np.array_equal(a.y, c.y)


def test_key_extends_stream():
    cfg = DgpConfig(n=20, T=6)
    a = simulate_panel(cfg, seed=5, key=(0,))
    b = simulate_panel(cfg, seed=5, key=(1,))
    assert not np.array_equal(a.y, b.y)


def test_degenerate_design_gives_zero_outcome():
    cfg = DgpConfig(n=30, T=6, sigma=0.0, beta2=0.0, beta3=0.0,
                    delta1=0.0, delta2=0.0, delta3=0.0)
    panel = simulate_panel(cfg, seed=1)
    assert np.all(panel.y == 0.0)


def test_fixed_effect_shifts_outcome():
    base = DgpConfig(n=30, T=6, sigma=0.0, beta2=0.0, beta3=0.0,
                     delta1=0.0, delta2=0.0, delta3=0.0, fixed_effect_sd=1.0)
    panel = simulate_panel(base, seed=1)
    # constant across time for each unit, not all zero
    assert np.allclose(panel.y, panel.y[:, :1])
    assert np.any(panel.y != 0.0)


def test_iid_threshold_variance():
    cfg = DgpConfig(n=1600, T=6, rho=0.0)
    panel = simulate_panel(cfg, seed=2)
    assert panel.q.size == 9600
    assert abs(panel.q.var() - 1.0) < 0.05


def test_ar1_threshold_variance():
    cfg = DgpConfig(n=1600, T=6, rho=0.7)
    panel = simulate_panel(cfg, seed=3)
    assert abs(panel.q.var() - AR1_VAR_RHO_07) < 0.08


def test_error_innovation_cross_correlation():
    cfg = DgpConfig(n=1600, T=6)
    panel = simulate_panel(cfg, seed=4)
    q = panel.q
    y = panel.y
    ylag = panel.x[:, :, 0]
    # recover the innovations from the recursions
    upper = q > cfg.gamma
    e = (
        y - cfg.beta2 * ylag - cfg.beta3 * q
        - upper * (cfg.delta1 + cfg.delta2 * ylag + cfg.delta3 * q)
    ) / cfg.sigma
    u = q[:, 1:] - cfg.rho * q[:, :-1]
    e_lead = e[:, :-1].ravel()
    corr = np.corrcoef(e_lead, u.ravel())[0, 1]
    assert abs(corr - cfg.rho_eu) < 0.03
    # contemporaneous correlation is zero
    corr0 = np.corrcoef(e[:, 1:].ravel(), u.ravel())[0, 1]
    assert abs(corr0) < 0.03


def test_regime_balance():
    cfg = DgpConfig(n=1600, T=6)
    panel = simulate_panel(cfg, seed=5)
    frac = np.mean(panel.q > cfg.gamma)
    assert 0.35 < frac < 0.55


def test_continuous_design_is_continuous_at_threshold():
    cfg = DgpConfig(n=10, T=6).with_jump(0.0)
    assert cfg.jump_size == pytest.approx(0.0, abs=1e-15)
    y_lag = 0.8
    below = regression_function(cfg, y_lag, np.nextafter(cfg.gamma, -np.inf))
    above = regression_function(cfg, y_lag, np.nextafter(cfg.gamma, np.inf))
    assert abs(above - below) < 1e-12


def test_jump_design_jumps_at_threshold():
    cfg = DgpConfig(n=10, T=6).with_jump(1.0)
    below = regression_function(cfg, 0.0, np.nextafter(cfg.gamma, -np.inf))
    above = regression_function(cfg, 0.0, np.nextafter(cfg.gamma, np.inf))
    assert above - below == pytest.approx(1.0, abs=1e-9)


def test_config_validation():
    with pytest.raises(DimensionError):
        DgpConfig(rho=1.0)
    with pytest.raises(DimensionError):
        DgpConfig(rho_eu=1.5)
    with pytest.raises(DimensionError):
        DgpConfig(sigma=-0.1)
    with pytest.raises(DimensionError):
        DgpConfig(T=1)


def test_panel_layout():
    cfg = DgpConfig(n=25, T=6)
    panel = simulate_panel(cfg, seed=9)
    assert panel.n == 25 and panel.T == 6 and panel.p == 2
    assert panel.x_names == ("y_lag1", "q")
    # the first regressor is the lagged outcome
    np.testing.assert_array_equal(panel.x[:, 1:, 0], panel.y[:, :-1])
