"""Instrument layout for the first-differenced moment conditions.

Each differenced period t in t0..T gets its own instrument vector built from
lagged variables; blocks are stacked into one length-k moment vector per unit.
Blocks are stored ragged (one matrix per t), never zero-padded.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InstrumentSpecError


@dataclass(frozen=True)
class LagRule:
    """Inclusive lag range for one variable.

    ``nearest`` is the smallest lag offset used at period t (e.g. 2 means the
    newest instrument is the value at t-2). ``farthest`` is the largest offset;
    None means "all the way back to period 1".
    """

    nearest: int
    farthest: int | None = None

    def __post_init__(self):
        if self.nearest < 1:
            raise InstrumentSpecError(f"nearest lag must be >= 1, got {self.nearest}")
        if self.farthest is not None and self.farthest < self.nearest:
            raise InstrumentSpecError("farthest lag must be >= nearest lag")

    def periods(self, t):
        """Level periods supplying instruments at differenced period t, newest first."""
        last = 1 if self.farthest is None else t - self.farthest
        if last < 1:
            raise InstrumentSpecError(
                f"lag {self.farthest} at period t={t} references period {last} < 1"
            )
        first = t - self.nearest
        if first < 1:
            raise InstrumentSpecError(
                f"lag {self.nearest} at period t={t} references period {first} < 1"
            )
        return list(range(first, last - 1, -1))


@dataclass(frozen=True)
class InstrumentSpec:
    """Which lags instrument each differenced period.

    ``t0`` is the first usable differenced period in levels indexing (>= 2;
    default 3 so that y lags at t-2 exist). ``x_rules`` optionally maps other
    regressor column indices to lag rules for the CSV workflow.
    """

    t0: int = 3
    y_rule: LagRule | None = LagRule(2)
    q_rule: LagRule | None = LagRule(1)
    x_rules: tuple = ()  # pairs (column index, LagRule)

    def __post_init__(self):
        if self.t0 < 2:
            raise InstrumentSpecError(f"t0 must be >= 2, got {self.t0}")
        if self.y_rule is None and self.q_rule is None and not self.x_rules:
            raise InstrumentSpecError("no instruments specified")


@dataclass(frozen=True)
class InstrumentSet:
    """Per-period instrument matrices and their stacked layout.

    ``blocks[j]`` has shape (n, dim_t) for t = t0 + j; ``offsets[j]`` locates
    block j inside the stacked length-k vector.
    """

    t0: int
    T: int
    blocks: tuple
    offsets: tuple
    k: int
    labels: tuple = ()

    @property
    def n_periods(self):
        return self.T - self.t0 + 1

    def block_slice(self, j):
        start = self.offsets[j]
        stop = self.offsets[j + 1] if j + 1 < len(self.blocks) else self.k
        return slice(start, stop)


def build_instruments(panel, spec):
    """Build the instrument set for a panel under a lag specification.

    Ordering inside each period block is deterministic: y lags (descending
    period), then q lags (descending period), then the other x columns in
    column order (each descending period).
    """
    T, p = panel.T, panel.p
    if spec.t0 > T:
        raise DimensionError(f"t0={spec.t0} exceeds panel T={T}")
    blocks = []
    offsets = []
    labels = []
    k = 0
    x_rules = dict(spec.x_rules)
    for col in x_rules:
        if not 0 <= col < p - 1:
            raise InstrumentSpecError(
                f"x-rule column {col} out of range (non-threshold columns are 0..{p - 2})"
            )
    for t in range(spec.t0, T + 1):
        cols = []
        if spec.y_rule is not None:
            for s in spec.y_rule.periods(t):
                cols.append(panel.y[:, s - 1])
                labels.append(f"y[t-{t - s}]@t={t}")
        if spec.q_rule is not None:
            for s in spec.q_rule.periods(t):
                cols.append(panel.q[:, s - 1])
                labels.append(f"q[t-{t - s}]@t={t}")
        for col, rule in x_rules.items():
            for s in rule.periods(t):
                cols.append(panel.x[:, s - 1, col])
                labels.append(f"x{col}[t-{t - s}]@t={t}")
        if not cols:
            raise InstrumentSpecError(f"no instruments available at period t={t}")
        block = np.column_stack(cols)
        offsets.append(k)
        k += block.shape[1]
        blocks.append(block)
    iv = InstrumentSet(
        t0=spec.t0, T=T, blocks=tuple(blocks), offsets=tuple(offsets), k=k, labels=tuple(labels)
    )
    order_needed = 2 * p + 2
    if k < order_needed:
        # Counting small layouts is legitimate; estimation with them is not.
        warnings.warn(
            f"order condition k >= dim(theta): k={k} < {order_needed}; "
            "threshold estimation will be under-identified",
            stacklevel=2,
        )
    return iv
