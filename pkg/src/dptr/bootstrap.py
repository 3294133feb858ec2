"""Resampling engine and the four null-imposed bootstrap schemes.

One engine drives everything: resample whole per-unit tuples (regressors,
instruments, residuals) jointly, generate synthetic differenced outcomes from
a scheme-specific parameter theta0*, recenter the bootstrap moments by the
sample moment at the unrestricted estimate, and re-run the two-stage GMM on
each replicate. Scheme choice only changes theta0* and the statistic
collected per replicate:

- grid:       theta0* = (alpha_hat(gamma_ell), gamma_ell), threshold test inversion
- residual:   theta0* = w_n theta_hat + (1 - w_n) theta_tilde, coefficient CIs
- continuity: theta0* = theta_tilde, continuity test critical values
- linearity:  theta0* = (beta under the null, delta = 0), sup-Wald critical values

The standard nonparametric bootstrap is the theta0* = theta_hat special case,
kept for comparison columns only.

Replicate reductions are weighted means over original units with multiplicity
counts as weights, so results are bitwise independent of evaluation order and
worker count; replicate b of a run is a pure function of (master seed, scheme,
grid-point id, b).
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BootstrapError,
    DimensionError,
    EstimationError,
    InternalConsistencyError,
    SingularMomentError,
)
from .gmm import DEFAULT_CONFIG, kink_sweep, two_stage_sweep
from .params import ThresholdParams
from .parallel import chunk_ranges, run_indexed_tasks
from .rng import (
    SCHEME_CONTINUITY,
    SCHEME_GRID,
    SCHEME_LINEARITY,
    SCHEME_NONPARAMETRIC,
    SCHEME_RESIDUAL,
    resample_indices,
    substream,
)
from .stattests import NEGATIVE_STAT_TOL, continuity_stat, distance_curve, supwald_core
from .util import empirical_quantile

_SCHEME_IDS = {
    "grid": SCHEME_GRID,
    "residual": SCHEME_RESIDUAL,
    "continuity": SCHEME_CONTINUITY,
    "linearity": SCHEME_LINEARITY,
    "nonparametric": SCHEME_NONPARAMETRIC,
}


@dataclass(frozen=True)
class BootstrapConfig:
    """Replicate budget, seeding and derived-quantity conventions."""

    B: int
    seed: int
    tau: float = 0.05
    c_quantile_level: float = 0.5  # quantile of the null continuity draws defining C_hat
    B_C: int | None = None  # draws for C_hat; defaults to B (shared budget)
    workers: int = 1
    max_failure_fraction: float = 0.05
    linearity_null_beta: str = "linear"  # which beta seeds the linearity bootstrap dgp

    def __post_init__(self):
        if self.B < 1:
            raise DimensionError("B must be >= 1")
        if not 0.0 < self.tau < 1.0:
            raise DimensionError("tau must be in (0, 1)")
        if not 0.0 < self.c_quantile_level < 1.0:
            raise DimensionError("c_hat quantile level must be in (0, 1)")
        if self.linearity_null_beta not in ("linear", "unrestricted"):
            raise DimensionError("linearity_null_beta must be 'linear' or 'unrestricted'")

    @property
    def b_c(self):
        return self.B if self.B_C is None else self.B_C


@dataclass(frozen=True)
class SyntheticOutcomes:
    """Per-original-unit synthetic outcomes for one bootstrap parameter.

    dy_syn[j] is the outcome unit j contributes when drawn; it equals the
    observed dy[j] plus the fitted-value shift from theta_hat to theta0*, so
    theta0* = theta_hat reproduces the observed outcomes bitwise.
    """

    theta0_star: ThresholdParams
    dy_syn: np.ndarray
    w_units: np.ndarray
    fit: object = field(repr=False)


def synthetic_outcomes(fit, theta0_star):
    ms = fit.ms
    dy_syn = ms.dy + (ms.predict(theta0_star) - fit.fitted)
    return SyntheticOutcomes(
        theta0_star=theta0_star, dy_syn=dy_syn, w_units=ms.stack_scaled(dy_syn), fit=fit
    )


@dataclass(frozen=True)
class BootstrapWorld:
    """One resampled dataset: an index map plus synthetic outcomes."""

    resample_index: np.ndarray
    counts: np.ndarray
    dy_star: np.ndarray
    syn: SyntheticOutcomes = field(repr=False)

    @property
    def theta0_star(self):
        return self.syn.theta0_star

    @property
    def ms(self):
        return self.syn.fit.ms

    def z_blocks(self):
        return tuple(b[self.resample_index] for b in self.ms.iv.blocks)

    def dx(self):
        return self.ms.dx[self.resample_index]

    def residuals_star(self):
        return self.syn.fit.residuals[self.resample_index]


def make_world(fit, theta0_star, rep_index, seed, scheme="residual", point_id=0, syn=None,
               index_map=None):
    """Algorithm step 1-2: joint resample and synthetic outcome generation.

    ``index_map`` overrides the random draw (used by degeneracy tests).
    """
    ms = fit.ms
    if syn is None:
        syn = synthetic_outcomes(fit, theta0_star)
    if index_map is None:
        rng = substream(seed, _SCHEME_IDS[scheme], point_id, rep_index)
        idx = resample_indices(ms.n, rng)
    else:
        idx = np.asarray(index_map, dtype=int)
    counts = np.bincount(idx, minlength=ms.n).astype(float)
    return BootstrapWorld(
        resample_index=idx, counts=counts, dy_star=syn.dy_syn[idx], syn=syn
    )


def expected_bootstrap_moment(fit, theta0_star):
    """Closed-form resampling expectation of the recentered bootstrap moment.

    Equal-weight average over the n possible single-unit draws of the
    bootstrap moment at theta0*, minus the recentering vector; exactly zero up
    to floating-point roundoff for every theta0*.
    """
    ms = fit.ms
    syn = synthetic_outcomes(fit, theta0_star)
    omega = ms.uniform_weights()
    mean = omega @ syn.w_units
    mean = mean + ms.m1_bar(omega) @ theta0_star.beta
    mean = mean + ms.m2_bar(omega, theta0_star.gamma) @ theta0_star.delta
    return mean - fit.gbar_hat


def bootstrap_criterion(world, theta, cfg=None):
    """Recentered two-stage bootstrap criterion evaluated at ``theta``.

    Runs the replicate's own two-stage weighting (over the fit's grid) to get
    the bootstrap weight matrix, then evaluates the recentered moment at the
    requested parameter point under that weight.
    """
    cfg = cfg or DEFAULT_CONFIG
    fit = world.syn.fit
    ms, gw = fit.ms, fit.workspace
    omega = world.counts / ms.n
    res = two_stage_sweep(ms, gw, world.syn.w_units, omega, fit.gbar_hat, cfg)
    vbar = res["vbar"]
    gbar = vbar + ms.m1_bar(omega) @ theta.beta + ms.m2_bar(omega, theta.gamma) @ theta.delta
    return float(gbar @ res["W"] @ gbar)


@dataclass(frozen=True)
class BootstrapRun:
    """Replicate statistics plus scheme-specific derived quantities."""

    scheme: str
    B: int
    failures: int
    stats: np.ndarray
    tau: float
    seed: int
    theta0_star: object = None
    observed: float | None = None
    p_value: float | None = None
    ci: dict | None = None
    curve: dict | None = None
    ci_set: np.ndarray | None = None
    ci_convex: tuple | None = None
    w_n: float | None = None
    c_hat: float | None = None

    def quantile(self, level, column=None):
        vals = self.stats if column is None else self.stats[:, column]
        return empirical_quantile(vals, level)

    def to_json_dict(self):
        out = {
            "scheme": self.scheme,
            "B": int(self.B),
            "failures": int(self.failures),
            "tau": float(self.tau),
            "seed": int(self.seed),
        }
        if self.stats.ndim == 1 and self.stats.size:
            out["stats_summary"] = {
                "mean": float(np.mean(self.stats)),
                "q50": empirical_quantile(self.stats, 0.5),
                "q95": empirical_quantile(self.stats, 0.95),
            }
        if self.observed is not None:
            out["observed"] = float(self.observed)
        if self.p_value is not None:
            out["p_value"] = float(self.p_value)
        if self.w_n is not None:
            out["w_n"] = float(self.w_n)
        if self.c_hat is not None:
            out["c_hat"] = float(self.c_hat)
        if self.ci is not None:
            out["ci"] = {
                str(k): {kind: [float(v[0]), float(v[1])] for kind, v in d.items()}
                for k, d in self.ci.items()
            }
        if self.ci_set is not None:
            out["ci_set"] = [float(g) for g in self.ci_set]
        if self.ci_convex is not None:
            out["ci_convex"] = [float(self.ci_convex[0]), float(self.ci_convex[1])]
        if self.curve is not None:
            out["curve"] = {k: [float(x) for x in v] for k, v in self.curve.items()}
        if self.theta0_star is not None and isinstance(self.theta0_star, ThresholdParams):
            out["theta0_star"] = self.theta0_star.to_json_dict()
        return out


def _check_failures(failures, total, cfg, what):
    if total == 0:
        raise BootstrapError(f"{what}: no replicates requested")
    if failures / total > cfg.max_failure_fraction:
        raise BootstrapError(
            f"{what}: {failures}/{total} replicates failed "
            f"(> {cfg.max_failure_fraction:.0%} allowed)"
        )


def _counts_for(seed, scheme, point_id, b, n):
    rng = substream(seed, _SCHEME_IDS[scheme], point_id, b)
    return np.bincount(resample_indices(n, rng), minlength=n).astype(float)


# -- replicate statistic kernels ---------------------------------------------------


def _rep_distance(fit, gw, syn, counts, ell, gmm_cfg):
    """D*_n at grid point ell: gap between the pinned and free inner minima."""
    ms = fit.ms
    omega = counts / ms.n
    res = two_stage_sweep(ms, gw, syn.w_units, omega, fit.gbar_hat, gmm_cfg)
    pinned = res["crits"][ell]
    if not np.isfinite(pinned):
        raise EstimationError("pinned grid point rank-deficient in replicate")
    return max(ms.n * float(pinned - res["criterion"]), 0.0)


def _rep_theta_star(fit, gw, syn, counts, gmm_cfg):
    """Full unrestricted bootstrap estimate theta* = (alpha*, gamma*)."""
    ms = fit.ms
    omega = counts / ms.n
    res = two_stage_sweep(ms, gw, syn.w_units, omega, fit.gbar_hat, gmm_cfg)
    ell = res["ell"]
    return np.append(res["alphas"][ell], gw.gammas[ell])


def _rep_continuity(fit, gw, syn, counts, gmm_cfg):
    """T*_n: gap between the kink-restricted and free minima under one weight."""
    ms = fit.ms
    omega = counts / ms.n
    res = two_stage_sweep(ms, gw, syn.w_units, omega, fit.gbar_hat, gmm_cfg)
    _, _, kink_crits, kink_valid = kink_sweep(
        ms, gw, syn.w_units, omega, fit.gbar_hat, res["W"], gmm_cfg
    )
    raw = ms.n * float(np.min(kink_crits[kink_valid]) - res["criterion"])
    if raw < -NEGATIVE_STAT_TOL:
        raise InternalConsistencyError(
            f"bootstrap continuity statistic {raw!r} below zero beyond noise"
        )
    return max(raw, 0.0)


def _rep_supwald(fit, gw, syn, counts, gmm_cfg):
    ms = fit.ms
    omega = counts / ms.n
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return supwald_core(ms, gw, syn.w_units, omega, fit.gbar_hat, gmm_cfg)


_REP_KERNELS = {
    "distance": _rep_distance,
    "theta_star": _rep_theta_star,
    "continuity": _rep_continuity,
    "supwald": _rep_supwald,
}

_REPLICATE_ERRORS = (EstimationError, SingularMomentError, np.linalg.LinAlgError)


def _run_chunk(payload):
    """Worker task: replicate range [start, stop) of one scheme at one point."""
    (kernel_name, fit, gw, syn, seed, scheme, point_id, start, stop, gmm_cfg, kernel_args) = payload
    kernel = _REP_KERNELS[kernel_name]
    out = []
    for b in range(start, stop):
        counts = _counts_for(seed, scheme, point_id, b, fit.ms.n)
        try:
            out.append(kernel(fit, gw, syn, counts, *kernel_args, gmm_cfg))
        except _REPLICATE_ERRORS:
            out.append(None)
    return out


def _collect_replicates(kernel_name, fit, gw, syn, cfg, scheme, point_id, B,
                        kernel_args=(), gmm_cfg=None):
    """Run B replicates deterministically, optionally across processes."""
    gmm_cfg = gmm_cfg or DEFAULT_CONFIG
    chunks = chunk_ranges(B, max(1, cfg.workers) * 4 if cfg.workers > 1 else 1)
    payloads = [
        (kernel_name, fit, gw, syn, cfg.seed, scheme, point_id, start, stop, gmm_cfg, kernel_args)
        for start, stop in chunks
    ]
    results = run_indexed_tasks(_run_chunk, payloads, cfg.workers)
    flat = [r for chunk in results for r in chunk]
    ok = [r for r in flat if r is not None]
    failures = len(flat) - len(ok)
    return ok, failures


# -- scheme drivers ------------------------------------------------------------------


def grid_bootstrap_ci(fit, cfg, gmm_cfg=None):
    """Threshold confidence set by inverting null-imposed bootstrap tests.

    For each grid point, the null bootstrap dgp uses the profiled coefficients
    at that point; the point enters the confidence set when its distance
    statistic is at most the bootstrap (1 - tau) quantile. Emits the
    per-point curve (gamma, D_n, critical value) for plotting.
    """
    gmm_cfg = gmm_cfg or DEFAULT_CONFIG
    ms, gw = fit.ms, fit.workspace
    d_curve = distance_curve(fit)
    valid_points = np.flatnonzero(fit.profile_valid)
    if valid_points.size < fit.grid_points.size:
        bad = fit.grid_points[~fit.profile_valid]
        warnings.warn(f"grid bootstrap: excluding rank-deficient grid points {bad}", stacklevel=2)

    point_payloads = []
    for ell in valid_points:
        theta0 = ThresholdParams.from_alpha(
            fit.profile_alphas[ell], float(fit.grid_points[ell]), ms.p
        )
        point_payloads.append((fit, cfg, gmm_cfg, int(ell), theta0))
    per_point = run_indexed_tasks(_grid_point_task, point_payloads, cfg.workers)

    crit = np.full(fit.grid_points.size, np.nan)
    failures = np.zeros(fit.grid_points.size, dtype=int)
    for ell, c, f in per_point:
        crit[ell] = c
        failures[ell] = f
    accepted = np.zeros(fit.grid_points.size, dtype=bool)
    for ell in valid_points:
        accepted[ell] = d_curve[ell] <= crit[ell]
    ci_set = fit.grid_points[accepted]
    ci_convex = (float(ci_set.min()), float(ci_set.max())) if ci_set.size else None
    return BootstrapRun(
        scheme="grid",
        B=cfg.B,
        failures=int(failures.sum()),
        stats=np.empty(0),
        tau=cfg.tau,
        seed=cfg.seed,
        curve={
            "gamma": fit.grid_points,
            "D_n": d_curve,
            "crit": crit,
            "accepted": accepted.astype(float),
        },
        ci_set=ci_set,
        ci_convex=ci_convex,
    )


def _grid_point_task(payload):
    fit, cfg, gmm_cfg, ell, theta0 = payload
    syn = synthetic_outcomes(fit, theta0)
    stats, fails = _collect_replicates(
        "distance", fit, fit.workspace, syn, _sequential(cfg), "grid", ell, cfg.B,
        kernel_args=(ell,), gmm_cfg=gmm_cfg,
    )
    _check_failures(fails, cfg.B, cfg, f"grid bootstrap at gamma={fit.grid_points[ell]}")
    return ell, empirical_quantile(stats, 1.0 - cfg.tau), fails


def _sequential(cfg):
    """Copy of the config with workers pinned to 1 (for nested task bodies)."""
    if cfg.workers == 1:
        return cfg
    return BootstrapConfig(
        B=cfg.B,
        seed=cfg.seed,
        tau=cfg.tau,
        c_quantile_level=cfg.c_quantile_level,
        B_C=cfg.B_C,
        workers=1,
        max_failure_fraction=cfg.max_failure_fraction,
        linearity_null_beta=cfg.linearity_null_beta,
    )


def grid_bootstrap_test_at(fit, gamma, cfg, gmm_cfg=None):
    """Null-imposed bootstrap test of one threshold location.

    Equivalent to asking whether ``gamma`` would enter the grid bootstrap
    confidence set; off-grid values augment the inner optimization grid so the
    bootstrap statistic stays nonnegative.
    """
    from .gmm import GammaGrid, _solve_single

    gmm_cfg = gmm_cfg or DEFAULT_CONFIG
    ms = fit.ms
    grid = GammaGrid(points=fit.grid_points, construction="fit")
    aug, idx = grid.with_point(gamma)
    if aug.size == fit.grid_points.size:
        gw = fit.workspace
        alpha = fit.profile_alphas[idx]
        if not fit.profile_valid[idx]:
            raise EstimationError(f"grid point gamma={gamma} is rank-deficient")
        pinned_crit = float(fit.profile_qtilde[idx])
    else:
        gw = ms.prepare_grid(aug.points)
        omega = ms.uniform_weights()
        mbar = np.concatenate([ms.m1_bar(omega), ms.m2_bar(omega, float(gamma))], axis=1)
        alpha, pinned_crit = _solve_single(
            mbar, omega @ ms.v_units, fit.W, gmm_cfg.rank_rtol, float(gamma)
        )
    observed = max(ms.n * (pinned_crit - fit.criterion), 0.0)
    theta0 = ThresholdParams.from_alpha(alpha, float(gamma), ms.p)
    syn = synthetic_outcomes(fit, theta0)
    stats, fails = _collect_replicates(
        "distance", fit, gw, syn, cfg, "grid", idx, cfg.B, kernel_args=(idx,), gmm_cfg=gmm_cfg
    )
    _check_failures(fails, cfg.B, cfg, f"grid bootstrap test at gamma={gamma}")
    stats = np.asarray(stats)
    crit = empirical_quantile(stats, 1.0 - cfg.tau)
    return BootstrapRun(
        scheme="grid",
        B=cfg.B,
        failures=fails,
        stats=stats,
        tau=cfg.tau,
        seed=cfg.seed,
        theta0_star=theta0,
        observed=observed,
        p_value=float(np.mean(stats >= observed)),
        curve={"gamma": [float(gamma)], "D_n": [observed], "crit": [crit],
               "accepted": [float(observed <= crit)]},
    )


def _continuity_draws(fit, fit_kink, cfg, B, gmm_cfg):
    syn = synthetic_outcomes(fit, fit_kink.theta_hat)
    stats, fails = _collect_replicates(
        "continuity", fit, fit.workspace, syn, cfg, "continuity", 0, B, gmm_cfg=gmm_cfg
    )
    _check_failures(fails, B, cfg, "continuity bootstrap")
    return np.asarray(stats), fails, syn


def compute_c_hat(fit, fit_kink, cfg, gmm_cfg=None, draws=None):
    """Scale constant for the shrinkage weight: a quantile of the null draws.

    Default is the 50th percentile of the bootstrap continuity statistic with
    the kink-restricted estimate as the bootstrap truth.
    """
    gmm_cfg = gmm_cfg or DEFAULT_CONFIG
    if draws is None:
        draws, _, _ = _continuity_draws(fit, fit_kink, cfg, cfg.b_c, gmm_cfg)
    if not np.any(draws > 0):
        raise BootstrapError("all null continuity draws are zero; C_hat is degenerate")
    c_hat = empirical_quantile(draws, cfg.c_quantile_level)
    if c_hat <= 0:
        raise BootstrapError(
            f"C_hat at level {cfg.c_quantile_level} is nonpositive; "
            "raise the level or the replicate budget"
        )
    return c_hat


def continuity_bootstrap_test(fit, fit_kink, cfg, gmm_cfg=None):
    """Bootstrap continuity test: null-imposed draws of the continuity statistic."""
    gmm_cfg = gmm_cfg or DEFAULT_CONFIG
    observed = continuity_stat(fit, fit_kink).value
    stats, fails, _ = _continuity_draws(fit, fit_kink, cfg, cfg.B, gmm_cfg)
    return BootstrapRun(
        scheme="continuity",
        B=cfg.B,
        failures=fails,
        stats=stats,
        tau=cfg.tau,
        seed=cfg.seed,
        theta0_star=fit_kink.theta_hat,
        observed=observed,
        p_value=float(np.mean(stats >= observed)),
    )


def shrinkage_weight(t_n, c_hat, n):
    """Data-driven weight min(T_n / (C_hat n^{1/4}), 1) for the bootstrap dgp."""
    return float(min(t_n / (c_hat * n ** 0.25), 1.0))


def blend_theta(fit, fit_kink, w_n):
    """Componentwise convex combination of the two estimates (gamma included)."""
    a = fit.theta_hat
    b = fit_kink.theta_hat
    return ThresholdParams(
        beta=w_n * a.beta + (1.0 - w_n) * b.beta,
        delta=w_n * a.delta + (1.0 - w_n) * b.delta,
        gamma=w_n * a.gamma + (1.0 - w_n) * b.gamma,
    )


def _percentile_cis(stats, center, n, tau):
    """Asymmetric and symmetric percentile CIs per component."""
    root_n = np.sqrt(n)
    out = {}
    for j in range(stats.shape[1]):
        s = stats[:, j]
        lo_q = empirical_quantile(s, tau / 2.0)
        hi_q = empirical_quantile(s, 1.0 - tau / 2.0)
        half = empirical_quantile(np.abs(s), 1.0 - tau)
        out[j] = {
            "asymmetric": (center[j] - hi_q / root_n, center[j] - lo_q / root_n),
            "symmetric": (center[j] - half / root_n, center[j] + half / root_n),
        }
    return out


def residual_bootstrap_ci(fit, fit_kink, cfg, gmm_cfg=None, c_hat=None):
    """Coefficient CIs from the adaptively recentered residual bootstrap.

    The bootstrap truth interpolates between the unrestricted and the
    kink-restricted estimates with the data-driven shrinkage weight, then each
    replicate re-estimates the full model; CIs come from the percentiles of
    root-n deviations of the replicate coefficients around the bootstrap truth.
    """
    gmm_cfg = gmm_cfg or DEFAULT_CONFIG
    t_n = continuity_stat(fit, fit_kink).value
    if c_hat is None:
        c_hat = compute_c_hat(fit, fit_kink, cfg, gmm_cfg)
    w_n = shrinkage_weight(t_n, c_hat, fit.n)
    theta0 = blend_theta(fit, fit_kink, w_n)
    return _ci_run_from_theta0(
        fit, theta0, cfg, "residual", gmm_cfg, w_n=w_n, c_hat=c_hat
    )


def nonparametric_bootstrap_ci(fit, cfg, gmm_cfg=None):
    """Standard nonparametric bootstrap CIs (theta0* = theta_hat).

    Inconsistent under continuity; provided only for comparison columns.
    """
    gmm_cfg = gmm_cfg or DEFAULT_CONFIG
    return _ci_run_from_theta0(fit, fit.theta_hat, cfg, "nonparametric", gmm_cfg, w_n=1.0)


def _ci_run_from_theta0(fit, theta0, cfg, scheme, gmm_cfg, w_n=None, c_hat=None):
    syn = synthetic_outcomes(fit, theta0)
    rows, fails = _collect_replicates(
        "theta_star", fit, fit.workspace, syn, cfg, scheme, 0, cfg.B, gmm_cfg=gmm_cfg
    )
    _check_failures(fails, cfg.B, cfg, f"{scheme} bootstrap")
    thetas = np.asarray(rows)  # (B_ok, 2p+2), gamma last
    stats = np.sqrt(fit.n) * (thetas - theta0.theta[None, :])
    center = fit.theta_hat.theta
    ci = _percentile_cis(stats, center, fit.n, cfg.tau)
    return BootstrapRun(
        scheme=scheme,
        B=cfg.B,
        failures=fails,
        stats=stats,
        tau=cfg.tau,
        seed=cfg.seed,
        theta0_star=theta0,
        ci=ci,
        w_n=w_n,
        c_hat=c_hat,
    )


def linearity_bootstrap_test(fit, fit_linear, cfg, gmm_cfg=None):
    """Bootstrap sup-Wald linearity test with the regime block pinned to zero.

    The bootstrap dgp uses delta0* = 0 (so the threshold location in theta0*
    is irrelevant) and, by default, the null-imposed linear GMM beta.
    """
    gmm_cfg = gmm_cfg or DEFAULT_CONFIG
    ms = fit.ms
    observed = supwald_core(ms, fit.workspace, ms.v_units, ms.uniform_weights(), 0.0, gmm_cfg)
    beta0 = (
        fit_linear.theta_hat.beta
        if cfg.linearity_null_beta == "linear"
        else fit.theta_hat.beta
    )
    theta0 = ThresholdParams(beta=beta0, delta=np.zeros(ms.p + 1), gamma=0.0)
    syn = synthetic_outcomes(fit, theta0)
    stats, fails = _collect_replicates(
        "supwald", fit, fit.workspace, syn, cfg, "linearity", 0, cfg.B, gmm_cfg=gmm_cfg
    )
    _check_failures(fails, cfg.B, cfg, "linearity bootstrap")
    stats = np.asarray(stats)
    return BootstrapRun(
        scheme="linearity",
        B=cfg.B,
        failures=fails,
        stats=stats,
        tau=cfg.tau,
        seed=cfg.seed,
        theta0_star=theta0,
        observed=observed,
        p_value=float(np.mean(stats >= observed)),
    )
