"""Monte Carlo experiment driver: coverage, power and CI-length tables.

Each replicate simulates a panel, fits the model, runs the requested bootstrap
methods and records containment/rejection indicators; the driver aggregates
them into per-method rates. Replicates are independent tasks keyed by
(master seed, replicate index), so tables are identical for any worker count.
"""

import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .bootstrap import (
    BootstrapConfig,
    _continuity_draws,
    compute_c_hat,
    grid_bootstrap_test_at,
    linearity_bootstrap_test,
    nonparametric_bootstrap_ci,
    residual_bootstrap_ci,
)
from .errors import DptrError
from .dgp import simulate_panel
from .gmm import (
    DEFAULT_CONFIG,
    GammaGrid,
    fit_continuity_restricted,
    fit_linear_null,
    fit_unrestricted,
)
from .instruments import InstrumentSpec, build_instruments
from .moments import MomentSystem
from .parallel import run_indexed_tasks
from .rng import child_seed
from .util import format_table


@dataclass(frozen=True)
class McTargets:
    """Which experiment tables to compute."""

    gamma_coverage: bool = True
    gamma_methods: tuple = ("grid", "np")
    power_offsets: tuple = ()
    coef_coverage: bool = False
    coef_methods: tuple = ("residual", "np")
    continuity_test: bool = False
    linearity_test: bool = False

    def to_json_dict(self):
        return {
            "gamma_coverage": self.gamma_coverage,
            "gamma_methods": list(self.gamma_methods),
            "power_offsets": [float(c) for c in self.power_offsets],
            "coef_coverage": self.coef_coverage,
            "coef_methods": list(self.coef_methods),
            "continuity_test": self.continuity_test,
            "linearity_test": self.linearity_test,
        }


@dataclass(frozen=True)
class McConfig:
    """Full experiment description."""

    dgp: object
    reps: int
    bootstrap: BootstrapConfig
    iv: InstrumentSpec = InstrumentSpec()
    grid_lo: float = 0.10
    grid_hi: float = 0.90
    grid_count: int = 21
    targets: McTargets = McTargets()

    def __post_init__(self):
        if self.reps < 1:
            raise DptrError("reps must be >= 1")

    def to_json_dict(self):
        return {
            "dgp": self.dgp.to_json_dict(),
            "reps": int(self.reps),
            "bootstrap": {
                "B": self.bootstrap.B,
                "seed": self.bootstrap.seed,
                "tau": self.bootstrap.tau,
                "c_quantile_level": self.bootstrap.c_quantile_level,
                "B_C": self.bootstrap.B_C,
                "linearity_null_beta": self.bootstrap.linearity_null_beta,
            },
            "iv": {
                "t0": self.iv.t0,
                "y_lag_nearest": None if self.iv.y_rule is None else self.iv.y_rule.nearest,
                "q_lag_nearest": None if self.iv.q_rule is None else self.iv.q_rule.nearest,
            },
            "grid": f"quantile:{self.grid_lo}:{self.grid_hi}:{self.grid_count}",
            "targets": self.targets.to_json_dict(),
        }


@dataclass
class McResult:
    """Aggregated rates plus replicate-level records."""

    config: McConfig
    coverage_gamma: dict = field(default_factory=dict)
    rejection_gamma: dict = field(default_factory=dict)
    coverage_coef: dict = field(default_factory=dict)
    length_coef: dict = field(default_factory=dict)
    test_rejection: dict = field(default_factory=dict)
    records: list = field(default_factory=list)
    failures: int = 0
    reps_used: int = 0
    wall_time: float = 0.0

    def length_ratios(self):
        """Average-length ratios residual / nonparametric per coefficient and kind."""
        out = {}
        for (method, kind, coef), length in self.length_coef.items():
            if method != "residual":
                continue
            np_len = self.length_coef.get(("np", kind, coef))
            if np_len:
                out[(kind, coef)] = length / np_len
        return out


def coefficient_labels(x_names):
    """Coefficient names by role: level effects then regime shifts."""
    names = list(x_names)
    labels = [f"beta_{nm}" for nm in names]
    labels += ["delta_intercept"] + [f"delta_{nm}" for nm in names]
    return labels


def true_coefficients(dgp):
    return np.array([dgp.beta2, dgp.beta3, dgp.delta1, dgp.delta2, dgp.delta3])


def _mc_rep_task(payload):
    cfg, rep = payload
    try:
        return _run_one_rep(cfg, rep)
    except (DptrError, np.linalg.LinAlgError) as exc:
        return {"failed": True, "error": str(exc), "rep": rep}


def _run_one_rep(cfg, rep):
    master = cfg.bootstrap.seed
    panel = simulate_panel(cfg.dgp, master, key=(rep,))
    iv = build_instruments(panel, cfg.iv)
    ms = MomentSystem.from_panel(panel, iv)
    grid = GammaGrid.from_quantiles(panel.q, cfg.grid_lo, cfg.grid_hi, cfg.grid_count)
    bcfg = replace(cfg.bootstrap, seed=child_seed(master, rep, 1), workers=1)
    gmm_cfg = DEFAULT_CONFIG
    targets = cfg.targets
    rec = {"failed": False, "rep": rep}

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fit = fit_unrestricted(ms, None, grid, gmm_cfg)
        rec["gamma_hat"] = fit.theta_hat.gamma
        gamma0 = cfg.dgp.gamma

        run_np = ("np" in targets.gamma_methods and targets.gamma_coverage) or (
            "np" in targets.coef_methods and targets.coef_coverage
        ) or (targets.power_offsets and "np" in targets.gamma_methods)
        need_kink = (
            targets.continuity_test
            or (targets.coef_coverage and "residual" in targets.coef_methods)
        )

        if targets.gamma_coverage:
            for method in targets.gamma_methods:
                if method == "grid":
                    run = grid_bootstrap_test_at(fit, gamma0, bcfg, gmm_cfg)
                    rec[("cover_gamma", "grid")] = bool(run.observed <= run.curve["crit"][0])
                elif method == "stub_accept_all":
                    rec[("cover_gamma", "stub_accept_all")] = True
                elif method != "np":
                    raise DptrError(f"unknown gamma method {method!r}")

        for c in targets.power_offsets:
            if "grid" in targets.gamma_methods:
                run = grid_bootstrap_test_at(fit, gamma0 + c, bcfg, gmm_cfg)
                rec[("reject_gamma", "grid", c)] = bool(run.observed > run.curve["crit"][0])

        if run_np:
            np_run = nonparametric_bootstrap_ci(fit, bcfg, gmm_cfg)
            gamma_idx = 2 * ms.p + 1
            ci = np_run.ci[gamma_idx]
            if targets.gamma_coverage and "np" in targets.gamma_methods:
                lo, hi = ci["asymmetric"]
                rec[("cover_gamma", "np_asym")] = bool(lo <= gamma0 <= hi)
                lo, hi = ci["symmetric"]
                rec[("cover_gamma", "np_sym")] = bool(lo <= gamma0 <= hi)
            for c in targets.power_offsets:
                if "np" in targets.gamma_methods:
                    lo, hi = ci["asymmetric"]
                    rec[("reject_gamma", "np_asym", c)] = not lo <= gamma0 + c <= hi
                    lo, hi = ci["symmetric"]
                    rec[("reject_gamma", "np_sym", c)] = not lo <= gamma0 + c <= hi
            if targets.coef_coverage and "np" in targets.coef_methods:
                _record_coef(rec, np_run, "np", ms.p, cfg, panel)

        if need_kink:
            kink = fit_continuity_restricted(
                ms, None, grid, gmm_cfg, weight_matrix=fit.W, workspace=fit.workspace
            )
            draws, fails, _ = _continuity_draws(fit, kink, bcfg, bcfg.b_c, gmm_cfg)
            if targets.continuity_test:
                from .stattests import continuity_stat
                from .util import empirical_quantile

                t_n = continuity_stat(fit, kink).value
                crit = empirical_quantile(draws, 1.0 - bcfg.tau)
                rec[("test", "continuity")] = bool(t_n > crit)
            if targets.coef_coverage and "residual" in targets.coef_methods:
                c_hat = compute_c_hat(fit, kink, bcfg, gmm_cfg, draws=draws)
                rb_run = residual_bootstrap_ci(fit, kink, bcfg, gmm_cfg, c_hat=c_hat)
                rec["w_n"] = rb_run.w_n
                _record_coef(rec, rb_run, "residual", ms.p, cfg, panel)

        if targets.linearity_test:
            lin = fit_linear_null(ms, None, gmm_cfg)
            run = linearity_bootstrap_test(fit, lin, bcfg, gmm_cfg)
            rec[("test", "linearity")] = bool(run.observed > run.quantile(1.0 - bcfg.tau))

    return rec


def _record_coef(rec, run, method, p, cfg, panel):
    labels = coefficient_labels(panel.x_names)
    truth = true_coefficients(cfg.dgp)
    for j, label in enumerate(labels):
        ci = run.ci[j]
        for kind_key, kind_label in (("asymmetric", "asym"), ("symmetric", "sym")):
            lo, hi = ci[kind_key]
            rec[("cover_coef", method, kind_label, label)] = bool(lo <= truth[j] <= hi)
            rec[("len_coef", method, kind_label, label)] = float(hi - lo)


def run_mc(cfg, workers=None):
    """Run the full experiment and aggregate rates over non-failed replicates."""
    start = time.monotonic()
    workers = workers if workers is not None else cfg.bootstrap.workers
    payloads = [(cfg, rep) for rep in range(cfg.reps)]
    records = run_indexed_tasks(_mc_rep_task, payloads, workers)
    result = McResult(config=cfg, records=records)
    good = [r for r in records if not r["failed"]]
    result.failures = len(records) - len(good)
    result.reps_used = len(good)

    def _rate(key):
        vals = [r[key] for r in good if key in r]
        return (float(np.mean(vals)), len(vals)) if vals else (float("nan"), 0)

    keys = set()
    for r in good:
        keys.update(k for k in r.keys() if isinstance(k, tuple))
    for key in sorted(keys, key=str):
        rate, count = _rate(key)
        if key[0] == "cover_gamma":
            result.coverage_gamma[key[1]] = rate
        elif key[0] == "reject_gamma":
            result.rejection_gamma[(key[1], key[2])] = rate
        elif key[0] == "cover_coef":
            result.coverage_coef[(key[1], key[2], key[3])] = rate
        elif key[0] == "len_coef":
            result.length_coef[(key[1], key[2], key[3])] = rate
        elif key[0] == "test":
            result.test_rejection[key[1]] = rate
    result.wall_time = time.monotonic() - start
    return result


def export_tables(result, outdir):
    """Write the aggregated tables as CSV files; returns the file list."""
    import pathlib

    outdir = pathlib.Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []

    def _write(name, header, rows):
        path = outdir / name
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(str(x) for x in row) + "\n")
        written.append(str(path))

    if result.coverage_gamma:
        _write(
            "coverage_gamma.csv",
            ["method", "coverage", "reps"],
            [
                (m, format_table(v), result.reps_used)
                for m, v in sorted(result.coverage_gamma.items())
            ],
        )
    if result.rejection_gamma:
        _write(
            "power_gamma.csv",
            ["method", "offset", "rejection", "reps"],
            [
                (m, format_table(c), format_table(v), result.reps_used)
                for (m, c), v in sorted(result.rejection_gamma.items())
            ],
        )
    if result.coverage_coef:
        rows = []
        for (method, kind, coef), v in sorted(result.coverage_coef.items()):
            length = result.length_coef.get((method, kind, coef), float("nan"))
            rows.append((method, kind, coef, format_table(v), format_table(length)))
        _write("coverage_coef.csv", ["method", "kind", "coef", "coverage", "mean_length"], rows)
        ratios = result.length_ratios()
        if ratios:
            _write(
                "length_ratios.csv",
                ["kind", "coef", "residual_over_np"],
                [(k, c, format_table(v)) for (k, c), v in sorted(ratios.items())],
            )
    if result.test_rejection:
        _write(
            "tests.csv",
            ["test", "rejection", "reps"],
            [(t, format_table(v), result.reps_used) for t, v in sorted(result.test_rejection.items())],
        )
    return written
