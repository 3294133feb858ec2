"""Balanced panel data model, CSV ingestion and first-differencing.

Panels are stored in levels with periods 1..T; the threshold variable is
always the last regressor column. First-differencing keeps the level pairs
needed to rebuild regime indicators at any candidate threshold.
"""

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import DimensionError, PanelFormatError


@dataclass(frozen=True)
class PanelSchema:
    """Column mapping for long-format CSV panels.

    ``x`` lists the regressor columns in order; ``threshold`` names the one of
    them that acts as the threshold variable (it is moved to the last regressor
    position on load).
    """

    unit: str = "unit"
    time: str = "time"
    y: str = "y"
    x: tuple = ()
    threshold: str = ""

    def ordered_x(self):
        if self.threshold not in self.x:
            raise PanelFormatError(
                f"threshold column {self.threshold!r} not among regressors {list(self.x)}"
            )
        others = [c for c in self.x if c != self.threshold]
        return others + [self.threshold]


@dataclass(frozen=True)
class PanelDataset:
    """Balanced panel in levels.

    y has shape (n, T); x has shape (n, T, p) with the threshold variable in
    the last column. Periods are 1..T mapped to axis positions 0..T-1.
    """

    y: np.ndarray
    x: np.ndarray
    unit_ids: tuple
    x_names: tuple = ()

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        x = np.asarray(self.x, dtype=float)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        if y.ndim != 2 or x.ndim != 3:
            raise DimensionError("y must be (n, T) and x must be (n, T, p)")
        if x.shape[:2] != y.shape:
            raise DimensionError(f"y shape {y.shape} and x shape {x.shape} disagree")
        if x.shape[2] < 1:
            raise DimensionError("need at least one regressor (p >= 1)")
        if not np.isfinite(y).all() or not np.isfinite(x).all():
            raise PanelFormatError("panel contains non-finite values")
        if len(self.unit_ids) != y.shape[0]:
            raise DimensionError("unit_ids length must equal n")

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def T(self):
        return self.y.shape[1]

    @property
    def p(self):
        return self.x.shape[2]

    @property
    def q(self):
        """Threshold variable, shape (n, T)."""
        return self.x[:, :, -1]


@dataclass(frozen=True)
class DiffPanel:
    """First-differenced panel with the level pairs kept for regime terms.

    Arrays are indexed by differenced period t = 2..T mapped to axis position
    t - 2. ``x_pairs[i, j]`` stacks the two level rows (1, x_it') over
    (1, x_it-1'); ``q_pairs[i, j]`` holds (q_it, q_it-1).
    """

    dy: np.ndarray
    dx: np.ndarray
    x_pairs: np.ndarray
    q_pairs: np.ndarray

    @property
    def n(self):
        return self.dy.shape[0]

    @property
    def T(self):
        return self.dy.shape[1] + 1

    @property
    def p(self):
        return self.dx.shape[2]


def first_difference(panel):
    """First-difference a panel, retaining level pairs for the regime block."""
    if panel.T < 2:
        raise DimensionError(f"first differencing needs T >= 2, got T={panel.T}")
    y, x = panel.y, panel.x
    n, T, p = panel.n, panel.T, panel.p
    dy = y[:, 1:] - y[:, :-1]
    dx = x[:, 1:, :] - x[:, :-1, :]
    ones = np.ones((n, T - 1, 1))
    hi = np.concatenate([ones, x[:, 1:, :]], axis=2)
    lo = np.concatenate([ones, x[:, :-1, :]], axis=2)
    x_pairs = np.stack([hi, lo], axis=2)  # (n, T-1, 2, p+1)
    q = panel.q
    q_pairs = np.stack([q[:, 1:], q[:, :-1]], axis=2)  # (n, T-1, 2)
    return DiffPanel(dy=dy, dx=dx, x_pairs=x_pairs, q_pairs=q_pairs)


def load_panel(source, schema):
    """Read a long-format CSV into a balanced PanelDataset.

    ``source`` is a path or file-like object with header columns
    ``unit,time,y,<x-names...>``. Rows are sorted by (unit, time); the
    threshold column is moved to the last regressor position.
    """
    x_cols = schema.ordered_x()
    needed = [schema.unit, schema.time, schema.y] + x_cols
    try:
        df = pd.read_csv(source, dtype=str, keep_default_na=False)
    except Exception as exc:  # malformed CSV structure
        raise PanelFormatError(f"could not parse CSV: {exc}") from exc
    missing_cols = [c for c in needed if c not in df.columns]
    if missing_cols:
        raise PanelFormatError(f"missing columns: {missing_cols}")
    df = df[needed]

    def parse_float_column(col):
        # exact round-trip parsing; pandas' fast parser loses the last digit
        raw = df[col].to_numpy()
        out = np.empty(raw.shape[0])
        for i, v in enumerate(raw):
            try:
                out[i] = float(v)
            except (TypeError, ValueError):
                raise PanelFormatError(
                    f"non-numeric value {v!r} in column {col!r} at CSV row {i + 2}"
                ) from None
        return out

    numeric = {col: parse_float_column(col) for col in [schema.y] + x_cols}
    times = parse_float_column(schema.time)
    units = df[schema.unit].to_numpy()
    unit_numeric = pd.to_numeric(df[schema.unit], errors="coerce")
    if not unit_numeric.isna().any():
        units = unit_numeric.to_numpy()
        if np.array_equal(units, units.astype(int)):
            units = units.astype(int)

    key = pd.DataFrame({"unit": units, "time": times})
    dup = key.duplicated().to_numpy()
    if dup.any():
        r = int(np.flatnonzero(dup)[0])
        raise PanelFormatError(f"duplicate (unit, time) cell: ({units[r]!r}, {times[r]!r})")

    unit_levels = sorted(pd.unique(units).tolist())
    time_levels = sorted(pd.unique(times).tolist())
    cell_index = {
        (u, t): i * len(time_levels) + j
        for i, u in enumerate(unit_levels)
        for j, t in enumerate(time_levels)
    }
    present = np.zeros(len(cell_index), dtype=bool)
    order = np.empty(len(units), dtype=int)
    for r, (u, t) in enumerate(zip(units, times)):
        pos = cell_index[(u, t)]
        present[pos] = True
        order[r] = pos
    if not present.all():
        missing = [
            (unit_levels[pos // len(time_levels)], time_levels[pos % len(time_levels)])
            for pos in np.flatnonzero(~present)
        ]
        shown = ", ".join(f"({u!r}, t={t})" for u, t in missing[:10])
        more = "" if len(missing) <= 10 else f" and {len(missing) - 10} more"
        raise PanelFormatError(f"unbalanced panel, missing cells: {shown}{more}")

    n, T = len(unit_levels), len(time_levels)
    perm = np.argsort(order)
    y = numeric[schema.y][perm].reshape(n, T)
    x = np.stack([numeric[c][perm].reshape(n, T) for c in x_cols], axis=2)
    return PanelDataset(y=y, x=x, unit_ids=tuple(unit_levels), x_names=tuple(x_cols))


def write_panel_csv(panel, path, schema=None):
    """Write a PanelDataset as long-format CSV (the load_panel inverse).

    Floats are written with full round-trip precision.
    """
    x_names = list(panel.x_names) if panel.x_names else [f"x{j + 1}" for j in range(panel.p)]
    unit_col = schema.unit if schema else "unit"
    time_col = schema.time if schema else "time"
    y_col = schema.y if schema else "y"
    header = [unit_col, time_col, y_col] + x_names
    lines = [",".join(header)]
    for i, uid in enumerate(panel.unit_ids):
        for t in range(panel.T):
            cells = [str(uid), str(t + 1), repr(float(panel.y[i, t]))]
            cells += [repr(float(panel.x[i, t, j])) for j in range(panel.p)]
            lines.append(",".join(cells))
    text = "\n".join(lines) + "\n"
    if hasattr(path, "write"):
        path.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
