"""Homodyne detector saturation model and LO-intensity characterization.

The detector output is the linear quadrature clamped to ``[-alpha, alpha]``.
In the voltage domain the same clamp (the DAQ range) acts on a vacuum-input
output whose mean drifts with LO power through the subtraction imbalance.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .units import RngHandle, as_generator

__all__ = [
    "SaturationModel",
    "DetectorCharacterization",
    "SweepPoint",
    "InsufficientDataError",
    "FitError",
    "saturate",
    "simulate_lo_sweep",
    "fit_detector",
    "read_sweep_csv",
    "write_sweep_csv",
    "DEFAULT_DETECTOR",
]

SWEEP_HEADER = ("i_lo_uw", "mean_v", "var_v")


class InsufficientDataError(ValueError):
    pass


class FitError(ValueError):
    pass


def saturate(x, alpha: float):
    """Clamp ``x`` to ``[-alpha, alpha]``; identity strictly inside."""
    if not alpha > 0:
        raise ValueError(f"saturation bound must be positive, got {alpha}")
    if np.ndim(x) == 0:
        return float(min(max(x, -alpha), alpha))
    return np.clip(x, -alpha, alpha)


@dataclass(frozen=True)
class SaturationModel:
    alpha: float

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")

    def __call__(self, x):
        return saturate(x, self.alpha)


@dataclass(frozen=True)
class DetectorCharacterization:
    """Linear-domain fit of a vacuum-input LO sweep.

    ``fit_slope`` (V^2/uW) and ``fit_offset`` (V^2) give Var = A*I_LO + B;
    ``imbalance`` (V/uW) gives the mean drift eps*I_LO.  The default imbalance
    puts the mean at the 0.5 V DAQ rail at 35 uW.
    """

    fit_slope: float = 2.0e-5
    fit_offset: float = 1.0e-5
    imbalance: float = 0.5 / 35.0
    alpha_volts: float = 0.5
    linear_lo_max: float = 30.0
    stderr: dict | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if not self.fit_slope > 0:
            raise ValueError("fit_slope must be positive")
        if not self.fit_offset >= 0:
            raise ValueError("fit_offset must be non-negative")
        if not self.imbalance >= 0:
            raise ValueError("imbalance must be non-negative")
        if not self.alpha_volts > 0:
            raise ValueError("alpha_volts must be positive")

    @property
    def onset_lo(self) -> float:
        """LO intensity at which the mean output reaches the rail."""
        return math.inf if self.imbalance == 0 else self.alpha_volts / self.imbalance

    def linear_mean(self, i_lo):
        return self.imbalance * np.asarray(i_lo, dtype=float)

    def linear_variance(self, i_lo):
        return self.fit_slope * np.asarray(i_lo, dtype=float) + self.fit_offset


DEFAULT_DETECTOR = DetectorCharacterization()


class SweepPoint(NamedTuple):
    i_lo_uw: float
    mean_v: float
    var_v: float


def simulate_lo_sweep(
    char: DetectorCharacterization,
    lo_points: Sequence[float],
    n_per_point: int,
    rng=None,
) -> list[SweepPoint]:
    """Simulate vacuum-input detector statistics over a list of LO intensities.

    Each point draws ``n_per_point`` samples from N(eps*I, A*I + B), clamps them
    to the DAQ rails and reports the empirical mean and variance.  With an
    :class:`RngHandle` every point gets its own sub-stream, so results do not
    depend on evaluation order.
    """
    lo = [float(x) for x in lo_points]
    if not lo:
        raise ValueError("lo_points is empty")
    if any(x < 0 for x in lo):
        raise ValueError("LO intensities must be non-negative")
    if n_per_point < 1000:
        raise ValueError("n_per_point must be at least 1000")
    out = []
    shared = None if isinstance(rng, RngHandle) else as_generator(rng)
    for k, i_lo in enumerate(lo):
        gen = rng.child(k).generator() if shared is None else shared
        mean = char.imbalance * i_lo
        sd = math.sqrt(char.fit_slope * i_lo + char.fit_offset)
        v = gen.normal(mean, sd, n_per_point)
        if math.isfinite(char.alpha_volts):
            np.clip(v, -char.alpha_volts, char.alpha_volts, out=v)
        m = float(v.mean())
        out.append(SweepPoint(i_lo, m, float(np.mean((v - m) ** 2))))
    return out


def fit_detector(
    sweep: Iterable[SweepPoint | tuple[float, float, float]],
    linear_lo_max: float,
    *,
    alpha_volts: float = 0.5,
    n_per_point: int | None = None,
) -> DetectorCharacterization:
    """Least-squares lines through the points with ``I_LO < linear_lo_max``.

    When ``n_per_point`` is given the fit is weighted by the sampling standard
    errors of each mean and variance, and ``stderr`` holds the parameter
    uncertainties.
    """
    pts = np.array([tuple(p) for p in sweep], dtype=float).reshape(-1, 3)
    pts = pts[pts[:, 0] < linear_lo_max]
    if len(pts) < 3:
        raise InsufficientDataError(
            f"need at least 3 sweep points below {linear_lo_max} uW, got {len(pts)}"
        )
    i_lo, mean_v, var_v = pts.T
    stderr = None
    if n_per_point is None:
        (eps, _), (a, b) = np.polyfit(i_lo, mean_v, 1), np.polyfit(i_lo, var_v, 1)
    else:
        se_mean = np.sqrt(var_v / n_per_point)
        se_var = var_v * math.sqrt(2.0 / (n_per_point - 1))
        (eps, _), cov_m = np.polyfit(i_lo, mean_v, 1, w=1 / se_mean, cov="unscaled")
        (a, b), cov_v = np.polyfit(i_lo, var_v, 1, w=1 / se_var, cov="unscaled")
        stderr = {
            "imbalance": math.sqrt(cov_m[0, 0]),
            "fit_slope": math.sqrt(cov_v[0, 0]),
            "fit_offset": math.sqrt(cov_v[1, 1]),
        }
    if not a > 0:
        raise FitError(f"fitted variance slope is not positive ({a:.3g})")
    if b < 0:
        raise FitError(f"fitted electronic-noise offset is negative ({b:.3g})")
    return DetectorCharacterization(
        fit_slope=float(a),
        fit_offset=float(b),
        imbalance=max(float(eps), 0.0),
        alpha_volts=alpha_volts,
        linear_lo_max=linear_lo_max,
        stderr=stderr,
    )


def write_sweep_csv(path: str | Path, points: Iterable[SweepPoint]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_HEADER)
        for p in points:
            w.writerow([repr(float(p[0])), repr(float(p[1])), repr(float(p[2]))])


def read_sweep_csv(path: str | Path) -> list[SweepPoint]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SWEEP_HEADER:
            raise ValueError(f"expected header {','.join(SWEEP_HEADER)}")
        return [SweepPoint(float(r["i_lo_uw"]), float(r["mean_v"]), float(r["var_v"])) for r in reader]
