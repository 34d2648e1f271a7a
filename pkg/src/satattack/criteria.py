"""Attack success criteria.

Level I: Eve can drive the estimated excess noise down to any target
(strategy I, fixed gain G = 2).  Level II: additionally the estimated
transmission is unbiased (strategy II gain) and the estimated excess noise
falls below the null-key threshold, so Alice and Bob keep distilling key.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .attack import (
    AttackParams,
    InfeasibleError,
    UndefinedEstimateError,
    find_delta_for_target_xi,
    solve_gain_for_unbiased_t,
    t_hat_sat_analytic,
    xi_hat_sat_analytic,
)
from .keyrate import DEFAULT_TARGET_SNR, NoPositiveRateError, null_key_threshold, system_at_distance
from .units import SystemParams

__all__ = [
    "LevelOneResult",
    "LevelTwoResult",
    "ThresholdResult",
    "level_one",
    "strategy2_xi",
    "level_two",
    "strategy2_threshold",
]


@dataclass(frozen=True)
class LevelOneResult:
    distance_km: float
    xi_target: float
    delta: float
    xi_hat: float
    success: bool

    def to_dict(self) -> dict:
        return asdict(self)


def level_one(sys: SystemParams, distance_km: float, xi_target: float, target_snr: float = DEFAULT_TARGET_SNR) -> LevelOneResult:
    """Strategy I at ``distance_km``: displacement that yields ``xi_target``."""
    s, ch = system_at_distance(sys, distance_km, target_snr)
    try:
        d = find_delta_for_target_xi(s, ch, "fixed", xi_target)
    except InfeasibleError:
        return LevelOneResult(distance_km, xi_target, math.nan, math.nan, False)
    xi = xi_hat_sat_analytic(s, ch, AttackParams(d))
    return LevelOneResult(distance_km, xi_target, d, xi, abs(xi - xi_target) < 1e-4 and 0 <= d < 2 * s.alpha)


def strategy2_xi(sys: SystemParams, channel, delta: float) -> tuple[float, float]:
    """(gain, xi_hat) with the unbiasing gain; (nan, nan) where no gain exists."""
    try:
        g = solve_gain_for_unbiased_t(sys, channel, delta)
        return g, xi_hat_sat_analytic(sys, channel, AttackParams(delta, g))
    except (InfeasibleError, UndefinedEstimateError):
        return math.nan, math.nan


@dataclass(frozen=True)
class LevelTwoResult:
    distance_km: float
    xi_null: float
    delta_star: float
    gain: float
    xi_hat_min: float
    t_hat_rel_bias: float
    success: bool

    def to_dict(self) -> dict:
        return asdict(self)


def level_two(
    sys: SystemParams,
    distance_km: float,
    target_snr: float = DEFAULT_TARGET_SNR,
    *,
    grid_points: int = 201,
) -> LevelTwoResult:
    """Best strategy-II displacement at ``distance_km`` against xi_null.

    xi_hat with the unbiasing gain is minimized over Delta in [0, alpha]: a
    grid locates the basin and a bounded scalar search polishes it.
    """
    s, ch = system_at_distance(sys, distance_km, target_snr)
    try:
        xi_null = null_key_threshold(s, distance_km)
    except NoPositiveRateError:
        xi_null = math.nan

    grid = np.linspace(0.0, s.alpha, grid_points)
    vals = np.array([strategy2_xi(s, ch, float(d))[1] for d in grid])
    if np.all(np.isnan(vals)):
        return LevelTwoResult(distance_km, xi_null, math.nan, math.nan, math.nan, math.nan, False)
    k = int(np.nanargmin(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid_points - 1)]

    def obj(d: float) -> float:
        v = strategy2_xi(s, ch, d)[1]
        return math.inf if math.isnan(v) else v

    res = minimize_scalar(obj, bounds=(lo, hi), method="bounded", options={"xatol": 1e-6})
    d_star, xi_min = (float(res.x), float(res.fun)) if res.fun < vals[k] else (float(grid[k]), float(vals[k]))
    g = strategy2_xi(s, ch, d_star)[0]
    bias = t_hat_sat_analytic(s, ch, AttackParams(d_star, g)) / ch.transmission - 1.0
    ok = bool(not math.isnan(xi_null) and xi_min < xi_null and abs(bias) < 1e-6)
    return LevelTwoResult(distance_km, xi_null, d_star, g, xi_min, bias, ok)


@dataclass(frozen=True)
class ThresholdResult:
    distance_km: float
    delta_star: float
    detail: LevelTwoResult | None
    scanned: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "distance_km": self.distance_km,
            "delta_star": self.delta_star,
            "detail": None if self.detail is None else self.detail.to_dict(),
            "scanned": list(self.scanned),
        }


def strategy2_threshold(
    sys: SystemParams,
    *,
    d_min: float = 1.0,
    d_max: float = 100.0,
    step: float = 1.0,
    tol: float = 1e-3,
    target_snr: float = DEFAULT_TARGET_SNR,
) -> ThresholdResult:
    """Smallest distance where strategy II meets the Level II criteria.

    Distances are scanned at ``step`` km up to the first success, then the
    boundary is bisected on the success predicate down to ``tol`` km.
    """
    scanned = []
    prev = None
    for d in np.arange(d_min, d_max + 0.5 * step, step):
        d = float(d)
        scanned.append(d)
        r = level_two(sys, d, target_snr)
        if r.success:
            lo, hi, best = prev, d, r
            while lo is not None and hi - lo > tol:
                mid = 0.5 * (lo + hi)
                rm = level_two(sys, mid, target_snr)
                if rm.success:
                    hi, best = mid, rm
                else:
                    lo = mid
            return ThresholdResult(hi, best.delta_star, best, tuple(scanned))
        prev = d
    return ThresholdResult(math.nan, math.nan, None, tuple(scanned))
