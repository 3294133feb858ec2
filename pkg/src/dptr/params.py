"""Parameter containers for the threshold model."""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError


@dataclass(frozen=True)
class ThresholdParams:
    """Full parameter point (beta', delta', gamma)'.

    beta has length p; delta has length p+1 and partitions as
    (delta1, delta2 in R^{p-1}, delta3): the regime shifts of the intercept,
    the non-threshold regressors, and the threshold variable.
    """

    beta: np.ndarray
    delta: np.ndarray
    gamma: float

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        delta = np.atleast_1d(np.asarray(self.delta, dtype=float))
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "gamma", float(self.gamma))
        if delta.shape[0] != beta.shape[0] + 1:
            raise DimensionError(
                f"delta must have length p+1={beta.shape[0] + 1}, got {delta.shape[0]}"
            )

    @property
    def p(self):
        return self.beta.shape[0]

    @property
    def alpha(self):
        """Coefficient vector (beta', delta')' of length 2p+1."""
        return np.concatenate([self.beta, self.delta])

    @property
    def theta(self):
        """Full vector (beta', delta', gamma)' of length 2p+2."""
        return np.concatenate([self.beta, self.delta, [self.gamma]])

    @property
    def delta1(self):
        return float(self.delta[0])

    @property
    def delta2(self):
        return self.delta[1:-1]

    @property
    def delta3(self):
        return float(self.delta[-1])

    @classmethod
    def from_alpha(cls, alpha, gamma, p):
        alpha = np.asarray(alpha, dtype=float)
        if alpha.shape[0] != 2 * p + 1:
            raise DimensionError(f"alpha must have length 2p+1={2 * p + 1}, got {alpha.shape[0]}")
        return cls(beta=alpha[:p], delta=alpha[p:], gamma=gamma)

    def to_json_dict(self):
        return {
            "beta": [float(b) for b in self.beta],
            "delta": [float(d) for d in self.delta],
            "gamma": None if np.isnan(self.gamma) else float(self.gamma),
        }

    @classmethod
    def from_json_dict(cls, d):
        gamma = d["gamma"]
        return cls(
            beta=np.array(d["beta"], dtype=float),
            delta=np.array(d["delta"], dtype=float),
            gamma=float("nan") if gamma is None else float(gamma),
        )


@dataclass(frozen=True)
class KinkParams:
    """Reduced parameter (beta', delta3, gamma)' of a continuous (kink) model."""

    beta: np.ndarray
    delta3: float
    gamma: float

    def __post_init__(self):
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, dtype=float)))
        object.__setattr__(self, "delta3", float(self.delta3))
        object.__setattr__(self, "gamma", float(self.gamma))

    def embed(self):
        """Embed into the full parameter space.

        The embedded point satisfies the continuity restrictions exactly:
        delta2 = 0 and delta1 = -delta3 * gamma.
        """
        p = self.beta.shape[0]
        delta = np.zeros(p + 1)
        delta[0] = -self.gamma * self.delta3
        delta[-1] = self.delta3
        return ThresholdParams(beta=self.beta.copy(), delta=delta, gamma=self.gamma)
