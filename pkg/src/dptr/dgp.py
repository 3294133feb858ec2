"""Monte Carlo data generator for the dynamic threshold design.

The outcome follows an AR(1)-with-threshold recursion driven by an AR(1)
threshold variable whose innovations lead the outcome errors with a fixed
cross-correlation. Regressors are x_it = (y_it-1, q_it), so p = 2 and the
threshold variable sits in the last column as the estimator expects.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionError
from .panel import PanelDataset
from .rng import STREAM_MC, substream


@dataclass(frozen=True)
class DgpConfig:
    """Simulation design. Defaults reproduce the benchmark Monte Carlo design."""

    n: int = 400
    T: int = 6
    beta2: float = 0.6  # AR coefficient on y_it-1
    beta3: float = 1.0  # coefficient on q_it
    delta1: float = -0.5  # regime shift of the intercept
    delta2: float = 0.0  # regime shift on y_it-1
    delta3: float = 2.0  # regime shift on q_it
    gamma: float = 0.25
    sigma: float = 0.5
    rho: float = 0.7  # AR(1) coefficient of q
    rho_eu: float = 0.5  # corr(e_it, u_it+1)
    burn_in: int = 100
    fixed_effect_sd: float = 0.0

    def __post_init__(self):
        if not abs(self.rho) < 1:
            raise DimensionError("|rho| must be < 1 for a stationary threshold variable")
        if not abs(self.rho_eu) <= 1:
            raise DimensionError("|rho_eu| must be <= 1")
        if self.sigma < 0 or self.burn_in < 0 or self.fixed_effect_sd < 0:
            raise DimensionError("sigma, burn_in and fixed_effect_sd must be nonnegative")
        if self.n < 1 or self.T < 2:
            raise DimensionError("need n >= 1 and T >= 2")

    @property
    def jump_size(self):
        """Discontinuity of the regression function at the threshold."""
        return self.delta1 + self.delta3 * self.gamma

    def with_jump(self, jump):
        """Same design with delta1 set to produce the given jump size."""
        return replace(self, delta1=jump - self.delta3 * self.gamma)

    def to_json_dict(self):
        return {
            "n": self.n, "T": self.T, "beta2": self.beta2, "beta3": self.beta3,
            "delta1": self.delta1, "delta2": self.delta2, "delta3": self.delta3,
            "gamma": self.gamma, "sigma": self.sigma, "rho": self.rho,
            "rho_eu": self.rho_eu, "burn_in": self.burn_in,
            "fixed_effect_sd": self.fixed_effect_sd,
        }


def simulate_panel(cfg, seed, key=()):
    """Simulate one balanced panel; identical bytes for identical (cfg, seed, key).

    The threshold variable starts from its stationary law; (e_it, u_it+1) are
    jointly normal with unit variances and correlation rho_eu, all other
    cross-moments zero; y starts at zero and runs through the burn-in. ``key``
    extends the stream id (Monte Carlo replicates pass their index).
    """
    rng = substream(seed, STREAM_MC, *key)
    n, T = cfg.n, cfg.T
    slots = cfg.burn_in + T + 1  # slot s holds period s - burn_in; slot burn_in is period 0
    e = rng.standard_normal((n, slots))
    eta_u = rng.standard_normal((n, slots))
    q0 = rng.standard_normal(n) * np.sqrt(1.0 / (1.0 - cfg.rho**2))
    alpha_i = (
        rng.standard_normal(n) * cfg.fixed_effect_sd if cfg.fixed_effect_sd > 0 else np.zeros(n)
    )

    cross = np.sqrt(1.0 - cfg.rho_eu**2)
    q = np.empty((n, slots))
    y = np.empty((n, slots))
    q[:, 0] = q0
    y[:, 0] = 0.0
    for s in range(1, slots):
        u = cfg.rho_eu * e[:, s - 1] + cross * eta_u[:, s]
        q[:, s] = cfg.rho * q[:, s - 1] + u
        qs = q[:, s]
        upper = qs > cfg.gamma
        y[:, s] = (
            cfg.beta2 * y[:, s - 1]
            + cfg.beta3 * qs
            + upper * (cfg.delta1 + cfg.delta2 * y[:, s - 1] + cfg.delta3 * qs)
            + cfg.sigma * e[:, s]
            + alpha_i
        )

    keep = slice(cfg.burn_in + 1, cfg.burn_in + T + 1)
    lag = slice(cfg.burn_in, cfg.burn_in + T)
    x = np.stack([y[:, lag], q[:, keep]], axis=2)
    return PanelDataset(
        y=y[:, keep].copy(),
        x=x,
        unit_ids=tuple(range(1, n + 1)),
        x_names=("y_lag1", "q"),
    )


def regression_function(cfg, y_lag, q):
    """Conditional mean of y given (y_it-1, q_it); used to probe continuity."""
    base = cfg.beta2 * y_lag + cfg.beta3 * q
    shift = (q > cfg.gamma) * (cfg.delta1 + cfg.delta2 * y_lag + cfg.delta3 * q)
    return base + shift
