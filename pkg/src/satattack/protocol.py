"""Honest GMCS path: modulation, linear channel, calibration, estimation.

Only the X quadrature is simulated.  Parameter estimation uses centered
second moments only, which is why a constant displacement of Bob's data is
invisible to it.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .units import as_generator

__all__ = [
    "QuadratureBlock",
    "EstimationResult",
    "Moments",
    "EstimationError",
    "modulate_alice",
    "transmit_linear",
    "calibrate_shot_noise",
    "estimate_parameters",
    "estimate_from_moments",
    "read_block_csv",
    "write_block_csv",
]


class EstimationError(ValueError):
    """Raised when the estimators are undefined for the given data."""


@dataclass(frozen=True)
class QuadratureBlock:
    alice: np.ndarray
    bob: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.alice, dtype=float)
        b = np.asarray(self.bob, dtype=float)
        if a.shape != b.shape or a.ndim != 1:
            raise ValueError("alice and bob must be 1-D sequences of equal length")
        object.__setattr__(self, "alice", a)
        object.__setattr__(self, "bob", b)

    def __len__(self) -> int:
        return len(self.alice)


@dataclass(frozen=True)
class EstimationResult:
    cov_ab: float
    var_a: float
    var_b: float
    t_hat: float
    xi_hat: float
    mean_a: float
    mean_b: float
    n: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class Moments:
    """Running means and centered co-moments of (alice, bob) pairs.

    Chunks are reduced two-pass (mean first, then centered sums) and merged
    with the pairwise update of Chan et al., so sharded blocks can be combined
    in any order.
    """

    n: int = 0
    mean_a: float = 0.0
    mean_b: float = 0.0
    m2_a: float = 0.0
    m2_b: float = 0.0
    c_ab: float = 0.0

    @classmethod
    def from_arrays(cls, a, b) -> "Moments":
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        n = a.size
        if n == 0:
            return cls()
        ma, mb = a.mean(), b.mean()
        da, db = a - ma, b - mb
        # Second pass absorbs the rounding error of the first-pass means.
        ca, cb = da.mean(), db.mean()
        return cls(
            n=n,
            mean_a=float(ma + ca),
            mean_b=float(mb + cb),
            m2_a=float(np.dot(da, da) - n * ca * ca),
            m2_b=float(np.dot(db, db) - n * cb * cb),
            c_ab=float(np.dot(da, db) - n * ca * cb),
        )

    def merge(self, other: "Moments") -> "Moments":
        if other.n == 0:
            return Moments(**self.__dict__)
        if self.n == 0:
            return Moments(**other.__dict__)
        n = self.n + other.n
        wa, wb = self.n / n, other.n / n
        dA = other.mean_a - self.mean_a
        dB = other.mean_b - self.mean_b
        k = self.n * other.n / n
        return Moments(
            n=n,
            mean_a=self.mean_a + dA * wb,
            mean_b=self.mean_b + dB * wb,
            m2_a=self.m2_a + other.m2_a + dA * dA * k,
            m2_b=self.m2_b + other.m2_b + dB * dB * k,
            c_ab=self.c_ab + other.c_ab + dA * dB * k,
        )

    __add__ = merge

    @property
    def var_a(self) -> float:
        return self.m2_a / self.n

    @property
    def var_b(self) -> float:
        return self.m2_b / self.n

    @property
    def cov_ab(self) -> float:
        return self.c_ab / self.n


def modulate_alice(v_a: float, n: int, rng=None) -> np.ndarray:
    """Alice's X quadratures: i.i.d. N(0, v_a)."""
    if not v_a > 0:
        raise ValueError("v_a must be positive")
    if n < 1:
        raise ValueError("n must be at least 1")
    return as_generator(rng).normal(0.0, math.sqrt(v_a), n)


def transmit_linear(alice, T: float, eta: float, xi: float, v_ele: float, rng=None) -> np.ndarray:
    """Bob's quadratures under the linear Gaussian channel.

    X_B = sqrt(eta*T) X_A + X_N with Var(X_N) = 1 + eta*T*xi + v_ele.
    """
    if not 0 < T <= 1:
        raise ValueError("T must lie in (0, 1]")
    if xi < 0 or v_ele < 0:
        raise ValueError("xi and v_ele must be non-negative")
    alice = np.asarray(alice, dtype=float)
    sigma_n = math.sqrt(1.0 + eta * T * xi + v_ele)
    return math.sqrt(eta * T) * alice + as_generator(rng).normal(0.0, sigma_n, alice.shape)


def calibrate_shot_noise(n: int, v_ele: float, rng=None) -> float:
    """Variance of vacuum-input homodyne samples, i.e. V_B0 = N0 + v_ele."""
    if n < 1000:
        raise ValueError("calibration needs at least 1000 samples")
    x = as_generator(rng).normal(0.0, math.sqrt(1.0 + v_ele), n)
    return float(np.var(x))


def estimate_from_moments(m: Moments, eta: float, v_ele: float, n0: float = 1.0) -> EstimationResult:
    if m.n < 2:
        raise EstimationError("need at least two samples")
    if not eta > 0:
        raise ValueError("eta must be positive")
    var_a = m.var_a
    if not var_a > 0:
        raise EstimationError("Alice's empirical variance is zero")
    cov = m.cov_ab
    t_hat = cov * cov / (eta * var_a * var_a)
    if t_hat == 0:
        raise EstimationError("zero covariance: transmission estimate is 0, excess noise undefined")
    et = eta * t_hat
    xi_hat = m.var_b / et - var_a - n0 / et - v_ele / et
    return EstimationResult(
        cov_ab=cov,
        var_a=var_a,
        var_b=m.var_b,
        t_hat=t_hat,
        xi_hat=xi_hat,
        mean_a=m.mean_a,
        mean_b=m.mean_b,
        n=m.n,
    )


def estimate_parameters(block: QuadratureBlock, eta: float, v_ele: float, n0: float = 1.0) -> EstimationResult:
    """Estimate (T, xi) from centered covariances.

    T = Cov(X_A, X_B)^2 / (eta Var(X_A)^2) and
    xi = Var(X_B)/(eta T) - Var(X_A) - N0/(eta T) - v_ele/(eta T).
    """
    if len(block) < 2:
        raise EstimationError("need at least two samples")
    return estimate_from_moments(Moments.from_arrays(block.alice, block.bob), eta, v_ele, n0)


def write_block_csv(path: str | Path, block: QuadratureBlock) -> None:
    np.savetxt(
        path,
        np.column_stack([block.alice, block.bob]),
        delimiter=",",
        header="x_a,x_b",
        comments="",
        fmt="%.17g",
    )


def read_block_csv(path: str | Path) -> QuadratureBlock:
    with open(path, newline="") as fh:
        header = next(csv.reader(fh))
    if [h.strip() for h in header] != ["x_a", "x_b"]:
        raise ValueError("expected header x_a,x_b")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return QuadratureBlock(data[:, 0], data[:, 1])
