"""Test statistics: threshold-location distance, continuity distance, sup-Wald.

Also provides the plug-in simulator for the continuity statistic's limit law,
used to calibrate the shrinkage constant and to cross-check the bootstrap.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky

from .errors import (
    DimensionError,
    EstimationError,
    InternalConsistencyError,
    SingularMomentError,
)
from .gmm import (
    DEFAULT_CONFIG,
    RankDeficientError,
    _profiled_sweep,
    _solve_single,
    _stage_weight,
    _unrestricted_mbars,
    centered_covariance,
    invert_covariance,
)
from .moments import MomentSystem
from .panel import PanelDataset
from .rng import STREAM_LIMIT_SIM, substream
from .util import empirical_quantile

NEGATIVE_STAT_TOL = 1e-10


@dataclass(frozen=True)
class TestStat:
    """A nonnegative scalar test statistic."""

    kind: str  # distance | continuity | supwald
    value: float
    n: int
    at_gamma: float | None = None

    def to_json_dict(self, p_value=None, critical_values=None):
        out = {"kind": self.kind, "value": float(self.value), "n": int(self.n)}
        if self.at_gamma is not None:
            out["gamma"] = float(self.at_gamma)
        if p_value is not None:
            out["p_value"] = float(p_value)
        if critical_values is not None:
            out["critical_values"] = {str(k): float(v) for k, v in critical_values.items()}
        return out


def _clamped_gap(restricted_crit, unrestricted_crit, n, what):
    raw = n * (restricted_crit - unrestricted_crit)
    if raw < -NEGATIVE_STAT_TOL:
        raise InternalConsistencyError(
            f"{what} statistic is {raw!r} < -{NEGATIVE_STAT_TOL}: restricted criterion "
            "fell below the unrestricted one beyond numerical noise"
        )
    return max(raw, 0.0)


def _check_paired_fits(fit_a, fit_b):
    if fit_a.k != fit_b.k:
        raise DimensionError(f"fits have mismatched moment dimension k: {fit_a.k} vs {fit_b.k}")
    if fit_a.W.shape == fit_b.W.shape and not np.allclose(fit_a.W, fit_b.W, rtol=1e-8, atol=0):
        warnings.warn(
            "paired fits use different weight matrices; the distance statistic "
            "assumes a shared weight",
            stacklevel=3,
        )


def distance_stat(fit_unres, fit_at_gamma):
    """Threshold-location distance: n times the criterion gap at a pinned gamma."""
    _check_paired_fits(fit_unres, fit_at_gamma)
    value = _clamped_gap(
        fit_at_gamma.criterion, fit_unres.criterion, fit_unres.n, "threshold-location distance"
    )
    return TestStat(
        kind="distance", value=value, n=fit_unres.n, at_gamma=fit_at_gamma.theta_hat.gamma
    )


def continuity_stat(fit_unres, fit_kink):
    """Continuity distance: n times the kink-restricted criterion gap."""
    _check_paired_fits(fit_unres, fit_kink)
    value = _clamped_gap(fit_kink.criterion, fit_unres.criterion, fit_unres.n, "continuity")
    return TestStat(kind="continuity", value=value, n=fit_unres.n)


def distance_curve(fit_unres):
    """D_n(gamma) over the fit's grid, from its stage-2 profiled curve."""
    crits = fit_unres.profile_qtilde
    valid = fit_unres.profile_valid
    out = np.full(crits.shape, np.inf)
    for ell in np.flatnonzero(valid):
        out[ell] = _clamped_gap(
            float(crits[ell]), fit_unres.criterion, fit_unres.n, "threshold-location distance"
        )
    return out


# -- sup-Wald linearity statistic ----------------------------------------------------


def supwald_core(ms, gw, w_units, omega, recenter, cfg=DEFAULT_CONFIG):
    """Supremum over the grid of Wald statistics on the regime coefficients.

    Each grid point gets its own two-stage weighting and a sandwich covariance;
    singular points are skipped with a warning, and the scan fails only when
    every point is unusable.
    """
    p = ms.p
    vbar = omega @ w_units - recenter
    mbars = _unrestricted_mbars(ms, gw, omega)
    alphas1, _, valid1 = _profiled_sweep(mbars, vbar, None, cfg.rank_rtol)
    best = -np.inf
    skipped = []
    for ell in range(gw.L):
        gamma = float(gw.gammas[ell])
        if not valid1[ell]:
            skipped.append(gamma)
            continue
        try:
            a1 = alphas1[ell]
            g1 = gw.g_units_at_point(ell, a1[:p], a1[p:], w_units)
            W = _stage_weight(g1, w_units, omega, cfg)
            alpha, _ = _solve_single(mbars[ell], vbar, W, cfg.rank_rtol, gamma)
            delta = alpha[p:]
            if not np.any(delta):
                # exact-zero regime coefficients contribute a zero Wald form
                best = max(best, 0.0)
                continue
            g2 = gw.g_units_at_point(ell, alpha[:p], alpha[p:], w_units)
            omega_g, _ = centered_covariance(g2, omega)
            MW = mbars[ell].T @ W  # (2p+1, k)
            A = MW @ mbars[ell]
            C = np.linalg.solve(A, MW)  # (M'WM)^{-1} M'W
            V = C @ omega_g @ C.T
            Vd = V[p:, p:]
            c, low = cho_factor(0.5 * (Vd + Vd.T), lower=True)
            stat = float(ms.n * delta @ cho_solve((c, low), delta))
        except (SingularMomentError, RankDeficientError, np.linalg.LinAlgError):
            skipped.append(gamma)
            continue
        if stat > best:
            best = stat
    if not np.isfinite(best):
        raise EstimationError("sup-Wald scan failed at every grid point")
    if skipped:
        warnings.warn(
            f"sup-Wald: skipped {len(skipped)} singular grid point(s) at "
            f"gamma={np.round(skipped, 4).tolist()}",
            stacklevel=3,
        )
    return max(best, 0.0)


def sup_wald(panel, iv_spec, grid, cfg=None, workspace=None):
    """Sample sup-Wald statistic for linearity (no threshold effect)."""
    cfg = cfg or DEFAULT_CONFIG
    if isinstance(panel, MomentSystem):
        ms = panel
    elif isinstance(panel, PanelDataset):
        from .instruments import build_instruments

        ms = MomentSystem.from_panel(panel, build_instruments(panel, iv_spec))
    else:
        raise DimensionError("expected a PanelDataset or MomentSystem")
    gw = workspace if workspace is not None else ms.prepare_grid(grid.points)
    value = supwald_core(ms, gw, ms.v_units, ms.uniform_weights(), 0.0, cfg)
    return TestStat(kind="supwald", value=value, n=ms.n)


# -- plug-in simulation of the continuity statistic's limit law ----------------------


@dataclass(frozen=True)
class ContinuityLimitPlugins:
    """Sample plug-ins for simulating the continuity statistic's limit law."""

    omega_hat: np.ndarray
    m1_hat: np.ndarray
    m2_hat: np.ndarray
    psi_hat: np.ndarray
    n2_hat: np.ndarray
    gamma_hat: float
    delta3_hat: float

    @classmethod
    def from_fit(cls, fit, cfg=None):
        """Plug-ins evaluated at the unrestricted estimate."""
        cfg = cfg or DEFAULT_CONFIG
        ms = fit.ms
        omega = ms.uniform_weights()
        m1 = ms.m1_bar(omega)
        gamma_hat = fit.theta_hat.gamma
        delta3_hat = fit.theta_hat.delta3
        m2 = ms.m2_bar(omega, gamma_hat)
        omega_hat = fit.omega_hat
        omega_inv = invert_covariance(omega_hat, cfg)
        inner = m1.T @ omega_inv @ m1
        c, low = cho_factor(0.5 * (inner + inner.T), lower=True)
        proj = omega_inv @ m1 @ cho_solve((c, low), m1.T @ omega_inv)
        psi = omega_inv - proj
        psi = 0.5 * (psi + psi.T)
        p = ms.p
        J = np.zeros((2, p + 1))
        J[0, 0] = -gamma_hat
        J[0, -1] = 1.0
        J[1, 0] = -delta3_hat
        n2 = m2 @ J.T
        return cls(
            omega_hat=omega_hat,
            m1_hat=m1,
            m2_hat=m2,
            psi_hat=psi,
            n2_hat=n2,
            gamma_hat=gamma_hat,
            delta3_hat=delta3_hat,
        )


@dataclass(frozen=True)
class EmpiricalDistribution:
    """Sorted i.i.d. draws with an order-statistic quantile function."""

    values: np.ndarray

    def quantile(self, level):
        return empirical_quantile(self.values, level)


def _projection_form(psi, basis):
    """Psi B (B' Psi B)^{-1} B' Psi for a column basis B."""
    pb = psi @ basis
    inner = basis.T @ pb
    inner = 0.5 * (inner + inner.T)
    eig = np.linalg.eigvalsh(inner)
    if eig[0] <= 1e-12 * max(eig[-1], 0.0) or eig[-1] <= 0:
        raise SingularMomentError(eig[0], "projection basis is numerically singular")
    c, low = cho_factor(inner, lower=True)
    return pb @ cho_solve((c, low), pb.T)


def simulate_continuity_limit(plugs, draws, seed, return_components=False):
    """Monte Carlo draws from the plug-in limit law of the continuity statistic.

    Each draw is V1 - V2 + V3: two nested projection quadratic forms of a
    N(0, Omega) vector plus an independent squared censored standard normal.
    """
    rng = substream(seed, STREAM_LIMIT_SIM)
    k = plugs.omega_hat.shape[0]
    chol = cholesky(plugs.omega_hat, lower=True)
    C1 = _projection_form(plugs.psi_hat, plugs.m2_hat)
    C2 = _projection_form(plugs.psi_hat, plugs.n2_hat)
    z = rng.standard_normal((int(draws), k)) @ chol.T
    v1 = np.einsum("ij,ij->i", z @ C1, z)
    v2 = np.einsum("ij,ij->i", z @ C2, z)
    z0 = np.maximum(rng.standard_normal(int(draws)), 0.0)
    v3 = z0 * z0
    dist = EmpiricalDistribution(values=np.sort(v1 - v2 + v3))
    if return_components:
        return dist, {"v1": v1, "v2": v2, "v3": v3}
    return dist
