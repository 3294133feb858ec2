"""Two-stage GMM estimation with grid-searched threshold location.

At a fixed threshold the criterion is quadratic in the coefficients, so the
profiled coefficients have a closed form; the threshold is found by sweeping a
grid of candidates. The same machinery drives the unrestricted fit, the
threshold-pinned fit, the continuity-restricted (kink) fit and the linear
(no-threshold) fit, for both sample data and recentered bootstrap worlds.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import (
    DimensionError,
    EstimationError,
    RankDeficientError,
    SingularMomentError,
)
from .instruments import build_instruments
from .moments import MomentSystem
from .panel import PanelDataset
from .params import KinkParams, ThresholdParams


@dataclass(frozen=True)
class GmmConfig:
    """Numerical knobs for the estimation pipeline."""

    rank_rtol: float = 1e-12  # eigenvalue ratio below which a profiled system is rank deficient
    jitter_scale: float = 1e-10  # one-shot ridge relative to tr(S)/k for a singular covariance
    cond_max: float = 1e14  # condition ceiling for the centered moment covariance
    exact_fit_rtol: float = 1e-18  # residual moments this small (vs data scale) mean an exact fit
    warn_small_n: bool = True


DEFAULT_CONFIG = GmmConfig()


@dataclass(frozen=True)
class GammaGrid:
    """Sorted candidate thresholds with a construction tag."""

    points: np.ndarray
    construction: str = "explicit"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        object.__setattr__(self, "points", pts)
        if pts.ndim != 1 or pts.size == 0:
            raise DimensionError("grid must be a non-empty 1-d array")
        if not np.all(np.diff(pts) > 0):
            raise DimensionError("grid points must be strictly increasing")

    @property
    def size(self):
        return self.points.size

    @classmethod
    def from_quantiles(cls, q_values, lo=0.10, hi=0.90, count=81):
        """Grid at evenly spaced quantile levels of the pooled threshold sample.

        Evenly spaced levels put (approximately) equal observation counts
        between consecutive points; points are observed sample values.
        """
        q = np.asarray(q_values, dtype=float).ravel()
        if not 0.0 <= lo < hi <= 1.0:
            raise DimensionError(f"need 0 <= lo < hi <= 1, got ({lo}, {hi})")
        levels = np.linspace(lo, hi, int(count))
        pts = np.unique(np.quantile(q, levels, method="lower"))
        return cls(points=pts, construction=f"quantile:{lo}:{hi}:{int(count)}")

    def with_point(self, gamma):
        """Grid augmented with one extra candidate; returns (grid, index of gamma)."""
        gamma = float(gamma)
        pts = np.unique(np.append(self.points, gamma))
        idx = int(np.searchsorted(pts, gamma))
        return GammaGrid(points=pts, construction=self.construction + "+point"), idx

    def validate_support(self, q_values):
        q = np.asarray(q_values, dtype=float).ravel()
        if self.points[0] < q.min() or self.points[-1] > q.max():
            raise EstimationError(
                "grid extends outside the observed threshold-variable range "
                f"[{q.min()!r}, {q.max()!r}]"
            )


@dataclass(frozen=True)
class GmmFit:
    """Result of one GMM estimation.

    The profiled curve stores, for every grid point, the criterion value and
    the closed-form coefficients under this fit's weight matrix. Invalid
    (rank-deficient) points carry +inf criterion.
    """

    theta_hat: ThresholdParams
    W: np.ndarray
    criterion: float
    grid_points: np.ndarray
    profile_qtilde: np.ndarray
    profile_alphas: np.ndarray
    profile_valid: np.ndarray
    residuals: np.ndarray
    fitted: np.ndarray
    omega_hat: np.ndarray
    gbar_hat: np.ndarray
    stage: str
    first_stage: ThresholdParams | None
    ms: MomentSystem = field(repr=False)
    workspace: object = field(default=None, repr=False)
    kink: KinkParams | None = None

    @property
    def n(self):
        return self.ms.n

    @property
    def k(self):
        return self.ms.k

    @property
    def p(self):
        return self.ms.p

    @property
    def profiled_curve(self):
        """List of (gamma, criterion, alpha) records for valid grid points."""
        return [
            (float(g), float(q), a.copy())
            for g, q, a, ok in zip(
                self.grid_points, self.profile_qtilde, self.profile_alphas, self.profile_valid
            )
            if ok
        ]

    def to_json_dict(self):
        return {
            "theta": self.theta_hat.to_json_dict(),
            "criterion": float(self.criterion),
            "stage": self.stage,
            "n": int(self.n),
            "k": int(self.k),
            "p": int(self.p),
            "profiled_curve": [
                {"gamma": float(g), "qtilde": float(q)}
                for g, q, ok in zip(self.grid_points, self.profile_qtilde, self.profile_valid)
                if ok
            ],
            "kink": None
            if self.kink is None
            else {
                "beta": [float(b) for b in self.kink.beta],
                "delta3": float(self.kink.delta3),
                "gamma": float(self.kink.gamma),
            },
        }


# -- covariance / weight-matrix plumbing -------------------------------------------


def centered_covariance(g_units, omega=None):
    """Weighted centered covariance of per-unit moments and their weighted mean."""
    n = g_units.shape[0]
    if omega is None:
        omega = np.full(n, 1.0 / n)
    gw = g_units * omega[:, None]
    mean = omega @ g_units
    S = g_units.T @ gw - np.outer(mean, mean)
    return 0.5 * (S + S.T), mean


def invert_covariance(S, cfg=DEFAULT_CONFIG):
    """Invert a centered moment covariance, with a single jitter retry.

    Raises SingularMomentError carrying the offending eigenvalue when the
    matrix stays singular or worse-conditioned than cfg.cond_max.
    """
    k = S.shape[0]

    def _try(mat):
        eig = np.linalg.eigvalsh(mat)
        lo, hi = eig[0], eig[-1]
        if hi <= 0 or lo <= 0 or hi / lo > cfg.cond_max:
            return None, lo
        c, low = cho_factor(mat, lower=True)
        W = cho_solve((c, low), np.eye(k))
        return 0.5 * (W + W.T), lo

    W, lo = _try(S)
    if W is not None:
        return W
    ridge = cfg.jitter_scale * np.trace(S) / k
    if ridge > 0:
        W, lo2 = _try(S + ridge * np.eye(k))
        if W is not None:
            return W
        lo = lo2
    raise SingularMomentError(lo)


def weight_matrix(ev, cfg=DEFAULT_CONFIG):
    """Two-stage GMM weight: inverse of the centered covariance of g_i."""
    S, _ = centered_covariance(ev.g_units)
    return invert_covariance(S, cfg)


def _stage_weight(g_units, ref_units, omega, cfg):
    """Second-stage weight from the stage-1 per-unit moments.

    When the stage-1 fit is numerically exact (residual moments at roundoff
    level relative to the outcome moments) the covariance is floating-point
    dust; fall back to the scale-free identity weight instead of inverting it.
    """
    msq_g = float(np.einsum("i,ik,ik->", omega, g_units, g_units))
    msq_ref = float(np.einsum("i,ik,ik->", omega, ref_units, ref_units))
    if msq_g <= cfg.exact_fit_rtol * max(msq_ref, 1e-300):
        return np.eye(g_units.shape[1])
    S, _ = centered_covariance(g_units, omega)
    return invert_covariance(S, cfg)


# -- profiled closed-form solves -----------------------------------------------------


def _profiled_sweep(mbars, vbar, W, rank_rtol):
    """Closed-form coefficient minimizers for a batch of Jacobians.

    mbars has shape (L, k, m); returns (alphas (L, m), crits (L,), valid (L,)).
    Invalid (rank-deficient) points get +inf criterion and zero coefficients.
    """
    L, k, m = mbars.shape
    if W is None:
        A = np.einsum("lkm,lkn->lmn", mbars, mbars)
        b = mbars.transpose(0, 2, 1) @ vbar
    else:
        WM = np.einsum("kj,ljm->lkm", W, mbars)
        A = np.einsum("lkm,lkn->lmn", mbars, WM)
        b = WM.transpose(0, 2, 1) @ vbar
    A = 0.5 * (A + A.transpose(0, 2, 1))
    eig = np.linalg.eigvalsh(A)
    valid = (eig[:, 0] > rank_rtol * np.maximum(eig[:, -1], 0.0)) & (eig[:, -1] > 0.0)
    alphas = np.zeros((L, m))
    if valid.any():
        alphas[valid] = -np.linalg.solve(A[valid], b[valid][..., None])[..., 0]
    gbar = vbar[None, :] + np.einsum("lkm,lm->lk", mbars, alphas)
    if W is None:
        crits = np.einsum("lk,lk->l", gbar, gbar)
    else:
        crits = np.einsum("lk,kj,lj->l", gbar, W, gbar)
    crits = np.where(valid, crits, np.inf)
    return alphas, crits, valid


def _solve_single(mbar, vbar, W, rank_rtol, gamma_label):
    alphas, crits, valid = _profiled_sweep(mbar[None], vbar, W, rank_rtol)
    if not valid[0]:
        raise RankDeficientError(gamma_label)
    return alphas[0], float(crits[0])


def profiled_alpha(diff, iv, gamma, W, cfg=DEFAULT_CONFIG):
    """Closed-form coefficient minimizer and criterion at a fixed threshold.

    Solves alpha_hat(gamma) = -(M'WM)^{-1} M'W v for the stacked Jacobian
    M = [M1 | M2(gamma)]; W=None means the identity weight.
    """
    ms = diff if isinstance(diff, MomentSystem) else MomentSystem(diff, iv)
    omega = ms.uniform_weights()
    mbar = np.concatenate([ms.m1_bar(omega), ms.m2_bar(omega, gamma)], axis=1)
    vbar = omega @ ms.v_units
    return _solve_single(mbar, vbar, W, cfg.rank_rtol, gamma)


# -- shared sweep drivers (sample and bootstrap use the same code paths) -----------


def _unrestricted_mbars(ms, gw, omega):
    m1 = ms.m1_bar(omega)
    m2 = gw.m2_bar_grid(omega)
    L = gw.L
    return np.concatenate([np.broadcast_to(m1, (L,) + m1.shape), m2], axis=2)


def _kink_mbars(ms, gw, omega):
    m1 = ms.m1_bar(omega)
    kk = gw.kink_bar_grid(omega)
    L = gw.L
    return np.concatenate([np.broadcast_to(m1, (L,) + m1.shape), kk[:, :, None]], axis=2)


def _argmin_sweep(crits, valid, what):
    if not valid.any():
        raise EstimationError(f"all grid points rank-deficient in {what}")
    return int(np.argmin(crits))  # ties resolve to the smallest gamma (grid is sorted)


def two_stage_sweep(ms, gw, w_units, omega, recenter, cfg, W=None):
    """Full two-stage unrestricted estimation over the grid.

    Returns the final weight, the stage-2 profiled curve, the argmin index and
    the stage-1 point. Passing W pins the weight matrix and skips stage 1.
    """
    vbar = omega @ w_units - recenter
    mbars = _unrestricted_mbars(ms, gw, omega)
    first = None
    if W is None:
        alphas1, crits1, valid1 = _profiled_sweep(mbars, vbar, None, cfg.rank_rtol)
        ell1 = _argmin_sweep(crits1, valid1, "first stage")
        p = ms.p
        g1 = gw.g_units_at_point(ell1, alphas1[ell1][:p], alphas1[ell1][p:], w_units)
        W = _stage_weight(g1, w_units, omega, cfg)
        first = (ell1, alphas1[ell1])
    alphas, crits, valid = _profiled_sweep(mbars, vbar, W, cfg.rank_rtol)
    ell = _argmin_sweep(crits, valid, "second stage")
    return {
        "W": W,
        "alphas": alphas,
        "crits": crits,
        "valid": valid,
        "ell": ell,
        "criterion": float(crits[ell]),
        "first": first,
        "vbar": vbar,
    }


def kink_sweep(ms, gw, w_units, omega, recenter, W, cfg):
    """Continuity-restricted profiled sweep under a given weight matrix.

    Returns (ell, psis (L, p+1), crits, valid); psi = (beta', delta3).
    """
    vbar = omega @ w_units - recenter
    mbars = _kink_mbars(ms, gw, omega)
    psis, crits, valid = _profiled_sweep(mbars, vbar, W, cfg.rank_rtol)
    ell = _argmin_sweep(crits, valid, "continuity-restricted sweep")
    return ell, psis, crits, valid


def linear_core(ms, w_units, omega, recenter, cfg, W=None):
    """Two-stage GMM with the regime block pinned to zero (linear model)."""
    vbar = omega @ w_units - recenter
    m1 = ms.m1_bar(omega)
    if W is None:
        try:
            beta1, _ = _solve_single(m1, vbar, None, cfg.rank_rtol, None)
        except RankDeficientError as exc:
            raise EstimationError("linear moment Jacobian is rank deficient") from exc
        g1 = w_units + ms.m1_units @ beta1
        W = _stage_weight(g1, w_units, omega, cfg)
    try:
        beta, crit = _solve_single(m1, vbar, W, cfg.rank_rtol, None)
    except RankDeficientError as exc:
        raise EstimationError("linear moment Jacobian is rank deficient") from exc
    return beta, crit, W


# -- public fit entry points ---------------------------------------------------------


def _resolve_system(panel, iv_spec):
    if isinstance(panel, MomentSystem):
        return panel
    if isinstance(panel, PanelDataset):
        iv = build_instruments(panel, iv_spec)
        return MomentSystem.from_panel(panel, iv)
    raise DimensionError("expected a PanelDataset or MomentSystem")


def _embed_kink_profile(gw, psis):
    """Embed each grid point's (beta, delta3) into full coefficient vectors."""
    p = gw.ms.p
    L = gw.L
    alphas = np.zeros((L, 2 * p + 1))
    alphas[:, :p] = psis[:, :p]
    alphas[:, p] = -gw.gammas * psis[:, p]
    alphas[:, 2 * p] = psis[:, p]
    return alphas


def _finish_fit(ms, gw, theta, W, criterion, crits, alphas, valid, first, stage, cfg, kink=None):
    resid = ms.residuals(theta)
    fitted = ms.predict(theta)
    g_at_hat = ms.g_units_at(theta)
    omega_hat, _ = centered_covariance(g_at_hat)
    gbar_hat = ms.stack_scaled(resid).mean(axis=0)
    p = ms.p
    first_params = None
    if first is not None:
        ell1, alpha1 = first
        first_params = ThresholdParams.from_alpha(alpha1, float(gw.gammas[ell1]), p)
    return GmmFit(
        theta_hat=theta,
        W=W,
        criterion=criterion,
        grid_points=gw.gammas.copy() if gw is not None else np.empty(0),
        profile_qtilde=crits,
        profile_alphas=alphas,
        profile_valid=valid,
        residuals=resid,
        fitted=fitted,
        omega_hat=omega_hat,
        gbar_hat=gbar_hat,
        stage=stage,
        first_stage=first_params,
        ms=ms,
        workspace=gw,
        kink=kink,
    )


def fit_unrestricted(panel, iv_spec, grid, cfg=None, workspace=None):
    """Two-stage GMM estimate of the full threshold model.

    Stage 1 uses the identity weight over the grid; stage 2 reweights with the
    inverse centered moment covariance at the stage-1 point. The threshold is
    the grid argmin of the profiled criterion (ties take the smallest value).
    """
    cfg = cfg or DEFAULT_CONFIG
    ms = _resolve_system(panel, iv_spec)
    if cfg.warn_small_n and ms.n <= ms.k:
        warnings.warn(
            f"n={ms.n} <= k={ms.k}: weight matrix estimate will be poor", stacklevel=2
        )
    grid.validate_support(np.concatenate([ms.q_hi.ravel(), ms.q_lo.ravel()]))
    gw = workspace if workspace is not None else ms.prepare_grid(grid.points)
    omega = ms.uniform_weights()
    res = two_stage_sweep(ms, gw, ms.v_units, omega, 0.0, cfg)
    ell = res["ell"]
    theta = ThresholdParams.from_alpha(res["alphas"][ell], float(gw.gammas[ell]), ms.p)
    return _finish_fit(
        ms,
        gw,
        theta,
        res["W"],
        res["criterion"],
        res["crits"],
        res["alphas"],
        res["valid"],
        res["first"],
        "second",
        cfg,
    )


def fit_gamma_restricted(panel, iv_spec, gamma, cfg=None, weight_matrix=None):
    """GMM fit with the threshold pinned at ``gamma``.

    With ``weight_matrix`` given (typically the unrestricted fit's), solves the
    profiled problem under that fixed weight, which is what the distance
    statistic and the grid bootstrap null require. Otherwise runs its own
    two-stage weighting at the pinned threshold (the sup-Wald convention).
    """
    cfg = cfg or DEFAULT_CONFIG
    ms = _resolve_system(panel, iv_spec)
    gamma = float(gamma)
    omega = ms.uniform_weights()
    mbar = np.concatenate([ms.m1_bar(omega), ms.m2_bar(omega, gamma)], axis=1)
    vbar = omega @ ms.v_units
    W = weight_matrix
    if W is None:
        alpha1, _ = _solve_single(mbar, vbar, None, cfg.rank_rtol, gamma)
        g1 = ms.g_units_at(ThresholdParams.from_alpha(alpha1, gamma, ms.p))
        W = _stage_weight(g1, ms.v_units, omega, cfg)
    alpha, crit = _solve_single(mbar, vbar, W, cfg.rank_rtol, gamma)
    theta = ThresholdParams.from_alpha(alpha, gamma, ms.p)
    gw = ms.prepare_grid(np.array([gamma]))
    return _finish_fit(
        ms,
        gw,
        theta,
        W,
        crit,
        np.array([crit]),
        alpha[None, :],
        np.array([True]),
        None,
        "second",
        cfg,
    )


def fit_continuity_restricted(panel, iv_spec, grid, cfg=None, weight_matrix=None, workspace=None):
    """Continuity-restricted (kink) GMM estimate.

    Profiles over the grid with the regime block collapsed to the single kink
    regressor (q - gamma) * 1{q > gamma}; the returned parameters satisfy
    delta2 = 0 and delta1 + delta3 * gamma = 0 exactly. The default weight
    matrix is the one the unrestricted two-stage produces, so criterion gaps
    against the unrestricted fit are nonnegative by construction.
    """
    cfg = cfg or DEFAULT_CONFIG
    ms = _resolve_system(panel, iv_spec)
    grid.validate_support(np.concatenate([ms.q_hi.ravel(), ms.q_lo.ravel()]))
    gw = workspace if workspace is not None else ms.prepare_grid(grid.points)
    omega = ms.uniform_weights()
    W = weight_matrix
    if W is None:
        res = two_stage_sweep(ms, gw, ms.v_units, omega, 0.0, cfg)
        W = res["W"]
    ell, psis, crits, valid = kink_sweep(ms, gw, ms.v_units, omega, 0.0, W, cfg)
    psi = KinkParams(beta=psis[ell][: ms.p], delta3=psis[ell][ms.p], gamma=float(gw.gammas[ell]))
    theta = psi.embed()
    alphas = _embed_kink_profile(gw, psis)
    return _finish_fit(
        ms,
        gw,
        theta,
        W,
        float(crits[ell]),
        crits,
        alphas,
        valid,
        None,
        "second",
        cfg,
        kink=psi,
    )


def fit_linear_null(panel, iv_spec, cfg=None, weight_matrix=None):
    """Two-stage linear dynamic-panel GMM with the regime block pinned to zero.

    The threshold location is irrelevant under the null; the returned
    parameters carry gamma = NaN and delta = 0.
    """
    cfg = cfg or DEFAULT_CONFIG
    ms = _resolve_system(panel, iv_spec)
    omega = ms.uniform_weights()
    beta, crit, W = linear_core(ms, ms.v_units, omega, 0.0, cfg, W=weight_matrix)
    theta = ThresholdParams(beta=beta, delta=np.zeros(ms.p + 1), gamma=float("nan"))
    m = 2 * ms.p + 1
    return GmmFit(
        theta_hat=theta,
        W=W,
        criterion=crit,
        grid_points=np.empty(0),
        profile_qtilde=np.empty(0),
        profile_alphas=np.empty((0, m)),
        profile_valid=np.empty(0, dtype=bool),
        residuals=ms.residuals(theta),
        fitted=ms.predict(theta),
        omega_hat=centered_covariance(ms.g_units_at(theta))[0],
        gbar_hat=ms.stack_scaled(ms.residuals(theta)).mean(axis=0),
        stage="second",
        first_stage=None,
        ms=ms,
        workspace=None,
        kink=None,
    )
