"""Stacked GMM moment evaluation for the first-differenced threshold model.

The per-unit moment is linear in the coefficients at a fixed threshold:
g_i(theta) = v_i + M_1i beta + M_2i(gamma) delta, where v_i stacks z_it dy_it,
M_1i stacks -z_it dx_it' and M_2i(gamma) stacks -z_it times the regime row.
MomentSystem precomputes the per-unit pieces once so grid sweeps and bootstrap
replicates reduce to small weighted averages.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .panel import DiffPanel, first_difference


@dataclass(frozen=True)
class MomentEvaluation:
    """Moment vector and Jacobian blocks at one parameter point.

    g_bar is the length-k sample moment, g_units the n x k per-unit moments,
    m_bar the k x (2p+1) stacked Jacobian [M1 | M2(gamma)] and v_n the
    intercept so that g_bar = v_n + m_bar @ alpha.
    """

    g_bar: np.ndarray
    g_units: np.ndarray
    m_bar: np.ndarray
    v_n: np.ndarray
    n: int
    k: int
    p: int


class MomentSystem:
    """Per-unit moment pieces bound to one differenced panel + instrument set.

    Immutable after construction; all evaluation methods are pure functions,
    so a system can be shared across concurrent workers.
    """

    def __init__(self, diff, iv):
        n, p = diff.n, diff.p
        if iv.T != diff.T:
            raise DimensionError(f"instrument set built for T={iv.T}, panel has T={diff.T}")
        t0, T = iv.t0, iv.T
        n_periods = T - t0 + 1
        # differenced period t occupies column t-2 of DiffPanel arrays
        sel = slice(t0 - 2, T - 1)
        self.n = n
        self.p = p
        self.k = iv.k
        self.t0 = t0
        self.T = T
        self.n_periods = n_periods
        self.iv = iv
        self.dy = diff.dy[:, sel]
        self.dx = diff.dx[:, sel, :]
        self.a_hi = diff.x_pairs[:, sel, 0, :]  # (1, x_it')
        self.a_lo = diff.x_pairs[:, sel, 1, :]  # (1, x_it-1')
        self.q_hi = diff.q_pairs[:, sel, 0]
        self.q_lo = diff.q_pairs[:, sel, 1]
        self.block_slices = tuple(iv.block_slice(j) for j in range(n_periods))
        # flattened layout: z_flat[:, c] is the instrument in stacked column c;
        # columns are grouped by differenced period with these multiplicities
        self.z_flat = np.concatenate(iv.blocks, axis=1)
        self.col_repeats = np.array([iv.blocks[j].shape[1] for j in range(n_periods)])
        self.v_units = self.stack_scaled(self.dy)
        self.m1_units = -self.z_flat[:, :, None] * self.expand_periods(self.dx)

    @classmethod
    def from_panel(cls, panel, iv):
        return cls(first_difference(panel), iv)

    # -- per-unit building blocks -------------------------------------------------

    def expand_periods(self, arr, axis=1):
        """Spread a per-period axis onto the stacked moment columns."""
        return np.repeat(arr, self.col_repeats, axis=axis)

    def stack_scaled(self, series):
        """Stack z_it * series_it over periods into (n, k)."""
        return self.z_flat * self.expand_periods(series)

    def regime_rows(self, gamma):
        """Regime rows r_it(gamma) of shape (n, n_periods, p+1).

        r_it(gamma) = 1{q_it > gamma}(1, x_it') - 1{q_it-1 > gamma}(1, x_it-1');
        the indicator is strict, so ties fall in the lower regime.
        """
        hi = (self.q_hi > gamma)[:, :, None] * self.a_hi
        lo = (self.q_lo > gamma)[:, :, None] * self.a_lo
        return hi - lo

    def kink_rows(self, gamma):
        """Kink regressor (q_it - g)1{q_it > g} - (q_it-1 - g)1{q_it-1 > g}."""
        hi = np.where(self.q_hi > gamma, self.q_hi - gamma, 0.0)
        lo = np.where(self.q_lo > gamma, self.q_lo - gamma, 0.0)
        return hi - lo

    def m2_units(self, gamma):
        """Per-unit regime Jacobian blocks, shape (n, k, p+1)."""
        r = self.regime_rows(gamma)
        return -self.z_flat[:, :, None] * self.expand_periods(r)

    def predict(self, theta):
        """Fitted differenced outcomes dx'beta + r(gamma)'delta, shape (n, n_periods)."""
        return self.dx @ theta.beta + self.regime_rows(theta.gamma) @ theta.delta

    def residuals(self, theta):
        return self.dy - self.predict(theta)

    def g_units_at(self, theta, w_units=None):
        """Per-unit moments at theta via the linear-in-alpha representation.

        w_units replaces the outcome term (bootstrap worlds pass their own);
        defaults to the sample v_units.
        """
        if w_units is None:
            w_units = self.v_units
        s = self.regime_rows(theta.gamma) @ theta.delta
        out = w_units + self.m1_units @ theta.beta
        out -= self.z_flat * self.expand_periods(s)
        return out

    # -- weighted sample-level reductions ------------------------------------------

    def uniform_weights(self):
        return np.full(self.n, 1.0 / self.n)

    def m1_bar(self, omega):
        return np.tensordot(omega, self.m1_units, axes=1)

    def m2_bar(self, omega, gamma):
        r = self.regime_rows(gamma)
        out = np.empty((self.k, self.p + 1))
        for j, sl in enumerate(self.block_slices):
            zw = self.iv.blocks[j] * omega[:, None]
            out[sl, :] = -zw.T @ r[:, j, :]
        return out

    def prepare_grid(self, gammas):
        return GridWorkspace(self, np.asarray(gammas, dtype=float))


class GridWorkspace:
    """Regime rows cached over a grid of candidate thresholds.

    Lets one compute the stacked Jacobian averages for every grid point with a
    handful of matrix products per weight vector, which is what makes grid
    sweeps inside bootstrap replicates affordable.
    """

    def __init__(self, ms, gammas):
        if gammas.ndim != 1 or gammas.size == 0:
            raise DimensionError("grid must be a non-empty 1-d array")
        self.ms = ms
        self.gammas = gammas
        L = gammas.size
        hi = (ms.q_hi[:, :, None] > gammas)[..., None] * ms.a_hi[:, :, None, :]
        lo = (ms.q_lo[:, :, None] > gammas)[..., None] * ms.a_lo[:, :, None, :]
        self.r_grid = hi - lo  # (n, n_periods, L, p+1)
        kap_hi = np.maximum(ms.q_hi[:, :, None] - gammas, 0.0)
        kap_lo = np.maximum(ms.q_lo[:, :, None] - gammas, 0.0)
        self.kappa_grid = kap_hi - kap_lo  # (n, n_periods, L)
        self.L = L

    def m2_bar_grid(self, omega):
        """Weighted averages of M_2i(gamma) for all grid points, (L, k, p+1)."""
        ms = self.ms
        L, m = self.L, ms.p + 1
        out = np.empty((L, ms.k, m))
        for j, sl in enumerate(ms.block_slices):
            zw = ms.iv.blocks[j] * omega[:, None]
            flat = zw.T @ self.r_grid[:, j].reshape(ms.n, L * m)  # (dim_t, L*m)
            out[:, sl, :] = -flat.reshape(-1, L, m).transpose(1, 0, 2)
        return out

    def kink_bar_grid(self, omega):
        """Weighted averages of the kink Jacobian column per grid point, (L, k)."""
        ms = self.ms
        out = np.empty((self.L, ms.k))
        for j, sl in enumerate(ms.block_slices):
            zw = ms.iv.blocks[j] * omega[:, None]
            out[:, sl] = -(zw.T @ self.kappa_grid[:, j]).T
        return out

    def g_units_at_point(self, ell, beta, delta, w_units):
        """Per-unit moments at (beta, delta, gamma_ell) using the cached rows."""
        ms = self.ms
        s = self.r_grid[:, :, ell, :] @ delta
        out = w_units + ms.m1_units @ beta
        out -= ms.z_flat * ms.expand_periods(s)
        return out

    def g_units_at_kink_point(self, ell, beta, delta3, w_units):
        """Per-unit moments at the kink-restricted point (beta, delta3, gamma_ell)."""
        ms = self.ms
        s = self.kappa_grid[:, :, ell] * delta3
        out = w_units + ms.m1_units @ beta
        out -= ms.z_flat * ms.expand_periods(s)
        return out


def moment_eval(diff, iv, theta):
    """Evaluate the stacked sample moment, per-unit moments and Jacobian.

    Accepts a DiffPanel (with its InstrumentSet) or a prebuilt MomentSystem.
    """
    ms = diff if isinstance(diff, MomentSystem) else MomentSystem(diff, iv)
    if theta.p != ms.p:
        raise DimensionError(f"theta has p={theta.p}, panel has p={ms.p}")
    m1 = ms.m1_bar(ms.uniform_weights())
    m2 = ms.m2_bar(ms.uniform_weights(), theta.gamma)
    m_bar = np.concatenate([m1, m2], axis=1)
    v_n = ms.v_units.mean(axis=0)
    g_units = ms.g_units_at(theta)
    g_bar = v_n + m_bar @ theta.alpha
    return MomentEvaluation(
        g_bar=g_bar, g_units=g_units, m_bar=m_bar, v_n=v_n, n=ms.n, k=ms.k, p=ms.p
    )
