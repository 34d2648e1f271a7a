"""Intercept-resend plus displacement ("saturation") attack.

Two independent routes to the biased estimates are provided:

* a Monte Carlo chain that draws every noise term of Eve's heterodyne
  measurement, re-preparation and the lossy line, then clamps Bob's output;
* closed forms for Cov(X_A, X_B_sat), Var(X_B_sat), T_hat and xi_hat built
  on the moments of a Gaussian clamped from above.

The closed-form variance ignores the lower rail at ``-alpha``; it is trusted
only where the linear output has negligible mass below ``-alpha``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Literal, Sequence

import numpy as np
from scipy.special import erf, ndtr

from . import roots
from .protocol import EstimationResult, Moments, QuadratureBlock, estimate_from_moments, modulate_alice
from .units import ChannelSpec, RngHandle, SystemParams, as_generator

__all__ = [
    "AttackParams",
    "AttackAnalytics",
    "AttackRun",
    "SaturationStats",
    "InfeasibleError",
    "UndefinedEstimateError",
    "CHUNK",
    "eve_intercept_resend",
    "var_b_lin_analytic",
    "cov_sat_analytic",
    "var_sat_analytic",
    "t_hat_sat_analytic",
    "xi_hat_sat_analytic",
    "attack_analytics",
    "solve_gain_for_unbiased_t",
    "find_delta_for_target_xi",
    "simulate_attack",
    "saturation_statistics",
]

SQRT2 = math.sqrt(2.0)
G_MAX = 1.0e3
# Monte Carlo pulses are generated in fixed-size chunks, one RNG sub-stream
# each.
CHUNK = 1 << 16
# Linear-output mass below -alpha up to which the upper-clamp formulas are trusted.
LOWER_TAIL_TOL = 1e-12

XiMode = Literal["composed", "as_printed"]


class InfeasibleError(ValueError):
    """No attack parameter meets the requested condition."""


class UndefinedEstimateError(ValueError):
    """The estimated transmission vanishes, so the excess noise is undefined."""


@dataclass(frozen=True)
class AttackParams:
    """Eve's knobs.

    ``delta`` is the displacement seen at Bob's detector input (t * Delta_X).
    ``xi_ae`` / ``xi_eb`` split the technical noise between Alice-Eve and
    Eve-Bob; left as ``None`` the whole system excess noise is put on the
    Alice-Eve side, so that xi_sys = xi_ae + (2/G) xi_eb holds for any gain.
    """

    delta: float
    gain: float = SQRT2
    xi_ae: float | None = None
    xi_eb: float = 0.0

    def __post_init__(self) -> None:
        if not self.delta >= 0:
            raise ValueError("delta must be non-negative (negative values follow by symmetry)")
        if not self.gain >= 0:
            raise ValueError("gain must be non-negative")
        if self.xi_eb < 0 or (self.xi_ae is not None and self.xi_ae < 0):
            raise ValueError("technical noises must be non-negative")

    @property
    def G(self) -> float:
        return self.gain * self.gain

    def noise_split(self, sys: SystemParams) -> tuple[float, float]:
        xi_ae = sys.xi_sys if self.xi_ae is None else self.xi_ae
        return xi_ae, self.xi_eb

    def xi_sys(self, sys: SystemParams) -> float:
        xi_ae, xi_eb = self.noise_split(sys)
        if xi_eb == 0:
            return xi_ae
        return xi_ae + 2.0 / self.G * xi_eb


@dataclass(frozen=True)
class AttackAnalytics:
    var_b_lin: float
    erf_term: float
    exp_term: float
    cov_sat: float
    var_sat: float
    t_hat_sat: float
    xi_hat_sat: float
    mode: str = "composed"
    transmission: float = 0.0
    lower_tail_mass: float = 0.0

    @property
    def closed_form_valid(self) -> bool:
        """The clamped-variance closed form ignores the lower rail; trust it only if that rail is never hit."""
        return self.lower_tail_mass < LOWER_TAIL_TOL

    def to_dict(self) -> dict:
        d = asdict(self)
        d["closed_form_valid"] = self.closed_form_valid
        return d


def _validate(sys: SystemParams, channel: ChannelSpec, params: AttackParams) -> None:
    if not channel.transmission > 0:
        raise ValueError("channel transmission must be positive")


def var_b_lin_analytic(sys: SystemParams, channel: ChannelSpec, params: AttackParams) -> float:
    """Var(X_B_lin) = eta T (G/2) (V_A + 2 + xi_sys) + 1 + v_ele."""
    _validate(sys, channel, params)
    et = sys.eta * channel.transmission
    xi_ae, xi_eb = params.noise_split(sys)
    # (G/2)(2/G) xi_eb is written out so that G = 0 stays finite.
    return et * (0.5 * params.G * (sys.v_a + 2.0 + xi_ae) + xi_eb) + 1.0 + sys.v_ele


@dataclass(frozen=True)
class _Core:
    var_lin: float
    sigma: float
    eps: float
    p: float  # P(y < eps) = (1 + A)/2
    q: float  # 1 - p, evaluated without cancellation
    A: float
    B: float


def _core(sys: SystemParams, channel: ChannelSpec, params: AttackParams) -> _Core:
    if not sys.alpha > 0:
        raise ValueError("alpha must be positive")
    v = var_b_lin_analytic(sys, channel, params)
    s = math.sqrt(v)
    eps = sys.alpha - params.delta
    u = eps / s
    return _Core(
        var_lin=v,
        sigma=s,
        eps=eps,
        p=float(ndtr(u)),
        q=float(ndtr(-u)),
        A=float(erf(eps / math.sqrt(2.0 * v))),
        B=math.exp(-eps * eps / (2.0 * v)),
    )


def cov_sat_analytic(sys: SystemParams, channel: ChannelSpec, params: AttackParams) -> float:
    """Cov(X_A, X_B_sat) = (t g / (2 sqrt 2)) V_A [1 + erf((alpha - Delta)/sqrt(2 Var_lin))]."""
    c = _core(sys, channel, params)
    t = channel.amplitude(sys.eta)
    return t * params.gain / (2.0 * SQRT2) * sys.v_a * (2.0 * c.p)


def _var_sat(c: _Core) -> float:
    # sigma^2((1+A)/2 - B^2/(2 pi)) - eps sigma A B / sqrt(2 pi) + eps^2 (1 - A^2)/4
    # with (1+A)/2 = p, A = p - q and (1 - A^2)/4 = p q.
    v = (
        c.var_lin * (c.p - c.B * c.B / (2.0 * math.pi))
        - c.eps * c.sigma / math.sqrt(2.0 * math.pi) * (c.p - c.q) * c.B
        + c.eps * c.eps * c.p * c.q
    )
    return max(v, 0.0)


def var_sat_analytic(sys: SystemParams, channel: ChannelSpec, params: AttackParams) -> float:
    """Variance of the linear output clamped from above at alpha (D - C^2)."""
    return _var_sat(_core(sys, channel, params))


def _t_hat(c: _Core, channel: ChannelSpec, params: AttackParams) -> float:
    # T (G/8) (1 + A)^2 with 1 + A = 2p
    return channel.transmission * params.G / 8.0 * (2.0 * c.p) ** 2


def t_hat_sat_analytic(sys: SystemParams, channel: ChannelSpec, params: AttackParams) -> float:
    return _t_hat(_core(sys, channel, params), channel, params)


def _xi_hat(c: _Core, sys: SystemParams, channel: ChannelSpec, params: AttackParams, mode: XiMode) -> float:
    if mode == "composed":
        t_hat = _t_hat(c, channel, params)
        if not t_hat > 0:
            raise UndefinedEstimateError("estimated transmission is zero")
        et = sys.eta * t_hat
        return _var_sat(c) / et - sys.v_a - (1.0 + sys.v_ele) / et
    if mode == "as_printed":
        one_a = 2.0 * c.p
        denom = sys.eta * channel.transmission * params.G / 2.0 * one_a * one_a
        if not denom > 0:
            raise UndefinedEstimateError("estimated transmission is zero")
        bracket = (
            c.var_lin * (one_a - c.B * c.B / math.pi)
            - 2.0 * math.sqrt(2.0 * c.var_lin / math.pi) * c.eps * c.A * c.B
            + c.eps * c.eps * (1.0 - c.A * c.A)
            - 4.0
            - 4.0 * sys.v_ele
        )
        return bracket / denom - sys.v_a
    raise ValueError(f"unknown mode {mode!r}")


def xi_hat_sat_analytic(
    sys: SystemParams, channel: ChannelSpec, params: AttackParams, mode: XiMode = "composed"
) -> float:
    """Excess noise Alice and Bob estimate under saturation.

    ``composed`` plugs the clamped variance and T_hat into the standard
    estimator; ``as_printed`` evaluates the alternative typeset closed form,
    whose first bracket term is half of the composed one.
    """
    return _xi_hat(_core(sys, channel, params), sys, channel, params, mode)


def attack_analytics(
    sys: SystemParams, channel: ChannelSpec, params: AttackParams, mode: XiMode = "composed"
) -> AttackAnalytics:
    c = _core(sys, channel, params)
    try:
        xi = _xi_hat(c, sys, channel, params, mode)
    except UndefinedEstimateError:
        xi = math.nan
    t = channel.amplitude(sys.eta)
    return AttackAnalytics(
        var_b_lin=c.var_lin,
        erf_term=c.A,
        exp_term=c.B,
        cov_sat=t * params.gain / (2.0 * SQRT2) * sys.v_a * (2.0 * c.p),
        var_sat=_var_sat(c),
        t_hat_sat=_t_hat(c, channel, params),
        xi_hat_sat=xi,
        mode=mode,
        transmission=channel.transmission,
        lower_tail_mass=float(ndtr((-sys.alpha - params.delta) / c.sigma)),
    )


def solve_gain_for_unbiased_t(
    sys: SystemParams,
    channel: ChannelSpec,
    delta: float,
    *,
    g_max: float = G_MAX,
    xi_eb: float = 0.0,
    xi_ae: float | None = None,
) -> float:
    """Gain g for which the saturated covariance still yields T_hat = T.

    Solves erf((alpha - Delta)/sqrt(2 Var_lin(g))) = 2 sqrt 2 / g - 1, i.e.
    g * P(y < alpha - Delta) = sqrt 2, by bisection on [sqrt 2, g_max].
    """

    def h(g: float) -> float:
        c = _core(sys, channel, AttackParams(delta, g, xi_ae, xi_eb))
        return g * c.p / SQRT2 - 1.0

    lo = SQRT2
    if g_max < lo:
        raise InfeasibleError(f"g_max={g_max} is below the linear gain sqrt 2")
    if h(lo) >= 0:
        g = lo
    else:
        try:
            lo, hi = roots.expand_bracket(h, lo, min(2.0 * SQRT2, g_max), g_max)
        except roots.NoRootError as exc:
            raise InfeasibleError(f"no unbiasing gain below {g_max} at delta={delta}") from exc
        g = roots.bisect(h, lo, hi)
    t_hat = t_hat_sat_analytic(sys, channel, AttackParams(delta, g, xi_ae, xi_eb))
    if abs(t_hat / channel.transmission - 1.0) > 1e-6:
        raise InfeasibleError(f"gain {g} leaves T_hat biased by {t_hat / channel.transmission - 1:.2e}")
    return g


GainRule = Literal["fixed", "strategy2"]


def _gain_for(rule, sys: SystemParams, channel: ChannelSpec, delta: float) -> float:
    if rule == "fixed":
        return SQRT2
    if rule == "strategy2":
        return solve_gain_for_unbiased_t(sys, channel, delta)
    return float(rule)


def xi_hat_with_rule(sys: SystemParams, channel: ChannelSpec, delta: float, gain_rule="fixed") -> float:
    """Composed xi_hat at ``delta`` with the gain chosen by ``gain_rule``.

    ``gain_rule`` is ``"fixed"`` (G = 2), ``"strategy2"`` (unbiased T_hat) or
    an explicit gain value.
    """
    g = _gain_for(gain_rule, sys, channel, delta)
    return xi_hat_sat_analytic(sys, channel, AttackParams(delta, g))


def find_delta_for_target_xi(
    sys: SystemParams,
    channel: ChannelSpec,
    gain_rule="fixed",
    xi_target: float = 0.01,
    *,
    grid_points: int = 4001,
    tol: float = 1e-4,
) -> float:
    """Smallest displacement in [0, 2 alpha) at which xi_hat hits ``xi_target``.

    A uniform scan locates the first sign change (the curve is not monotone
    on short links) and bisection refines it.
    """
    xi0 = xi_hat_with_rule(sys, channel, 0.0, gain_rule)
    if xi_target > xi0 + tol:
        raise InfeasibleError(f"target {xi_target} exceeds the unsaturated estimate {xi0:.6g}")
    if abs(xi_target - xi0) < tol:
        return 0.0

    def f(d: float) -> float:
        try:
            return xi_hat_with_rule(sys, channel, d, gain_rule) - xi_target
        except (InfeasibleError, UndefinedEstimateError):
            return math.nan

    upper = 2.0 * sys.alpha
    grid = np.linspace(0.0, upper, grid_points)[:-1]
    prev_d = 0.0
    for d in grid[1:]:
        fd = f(float(d))
        if math.isnan(fd):
            continue
        if fd <= 0:
            return roots.bisect(f, prev_d, float(d), tol=tol)
        prev_d = float(d)
    raise InfeasibleError(f"xi_hat never reaches {xi_target} on [0, {upper})")


def eve_intercept_resend(
    alice,
    params: AttackParams,
    channel: ChannelSpec,
    sys: SystemParams,
    rng=None,
) -> np.ndarray:
    """Bob's linear (unclamped) quadratures after Eve's intercept-resend.

    X_M = (X_A + X_0 + X_0' + X_N_AE)/sqrt 2, X_E = g X_M + Delta_X + X_0'',
    X_B_lin = t (X_E + X_N_EB) + sqrt(1 - t^2) X_0''' + X_ele, with
    Delta_X = Delta / t chosen from Eve's knowledge of the line.
    """
    gen = as_generator(rng)
    alice = np.asarray(alice, dtype=float)
    n = alice.shape
    t = channel.amplitude(sys.eta)
    if not t > 0:
        raise ValueError("channel amplitude must be positive")
    xi_ae, xi_eb = params.noise_split(sys)
    x_m = (alice + gen.standard_normal(n) + gen.standard_normal(n) + math.sqrt(xi_ae) * gen.standard_normal(n)) / SQRT2
    x_e = params.gain * x_m + params.delta / t + gen.standard_normal(n)
    return (
        t * (x_e + math.sqrt(xi_eb) * gen.standard_normal(n))
        + math.sqrt(1.0 - t * t) * gen.standard_normal(n)
        + math.sqrt(sys.v_ele) * gen.standard_normal(n)
    )


MIN_BATCHES = 32


def _chunk_sizes(n: int) -> list[int]:
    full, rest = divmod(n, CHUNK)
    return [CHUNK] * full + ([rest] if rest else [])


def _batch_size(n: int) -> int:
    """Batch length for standard errors: a power-of-two divisor of CHUNK giving >= MIN_BATCHES batches."""
    b = CHUNK
    while n // b < MIN_BATCHES and b > 1024:
        b //= 2
    return b


def _batched_moments(a: np.ndarray, b: np.ndarray, batch: int) -> list[Moments]:
    return [Moments.from_arrays(a[i : i + batch], b[i : i + batch]) for i in range(0, a.size, batch)]


def _merge_all(batches: Sequence[Moments]) -> Moments:
    total = Moments()
    for m in batches:
        total = total.merge(m)
    return total


def _batch_se(values: Sequence[float], weights: Sequence[int]) -> float:
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    k = len(v)
    if k < 2:
        return math.nan
    w = w / w.sum()
    mean = float(np.dot(w, v))
    return math.sqrt(float(np.dot(w * w, (v - mean) ** 2)) * k / (k - 1))


@dataclass
class AttackRun:
    """Outcome of :func:`simulate_attack`; unpacks as ``(block, estimate)``."""

    block: QuadratureBlock | None
    estimate: EstimationResult
    analytics: AttackAnalytics
    stderr: dict[str, float]
    inputs: dict = field(default_factory=dict)

    def __iter__(self):
        yield self.block
        yield self.estimate

    def report(self, n_se: float = 5.0) -> dict:
        """JSON-ready comparison of the empirical and closed-form estimates.

        The analytic counterpart of the excess noise is only defined for a
        saturated run; with saturation off the linear theory value is used.
        """
        e, a, se = self.estimate, self.analytics, self.stderr
        saturated = self.inputs.get("apply_saturation", True)
        expected = {
            "cov_ab": a.cov_sat,
            "var_b": a.var_sat,
            "t_hat": a.t_hat_sat,
            "xi_hat": a.xi_hat_sat,
        }
        if not saturated:
            G = self.inputs["gain"] ** 2
            t = math.sqrt(self.inputs["eta"] * a.transmission)
            expected = {
                "cov_ab": t * self.inputs["gain"] / SQRT2 * self.inputs["v_a"],
                "var_b": a.var_b_lin,
                "t_hat": a.transmission * G / 2.0,
                "xi_hat": 2.0 + self.inputs["xi_sys_attack"],
            }
        comparison = {}
        for key, ana in expected.items():
            emp = getattr(e, key)
            z = (emp - ana) / se[key] if se[key] > 0 else math.inf
            comparison[key] = {
                "empirical": emp,
                "analytic": ana,
                "stderr": se[key],
                "z": z,
                "pass": bool(abs(z) <= n_se),
            }
        return {
            "inputs": self.inputs,
            "empirical": e.to_dict(),
            "analytic": a.to_dict(),
            "stderr": se,
            "comparison": comparison,
            "pass": all(c["pass"] for c in comparison.values()),
        }


def _simulate_chunk(args):
    sys, channel, params, size, handle, apply_saturation, keep, batch = args
    gen = handle.generator()
    a = modulate_alice(sys.v_a, size, gen)
    b = eve_intercept_resend(a, params, channel, sys, gen)
    if apply_saturation:
        np.clip(b, -sys.alpha, sys.alpha, out=b)
    return _batched_moments(a, b, batch), ((a, b) if keep else None)


def simulate_attack(
    sys: SystemParams,
    channel: ChannelSpec,
    params: AttackParams,
    n: int,
    seed: int,
    apply_saturation: bool = True,
    *,
    keep_block: bool = True,
    n0: float = 1.0,
    workers: int = 1,
) -> AttackRun:
    """End-to-end chain: modulation, intercept-resend, optional clamp, estimation.

    Pulses are produced in chunks of :data:`CHUNK`, chunk ``k`` drawing from
    sub-stream ``k`` of ``seed``; results do not depend on ``workers``.
    Standard errors are batch means over at least :data:`MIN_BATCHES`
    batches (chunks are split when ``n`` is small).
    """
    if n < 10_000:
        raise ValueError("simulate_attack needs n >= 10^4")
    root = RngHandle(seed)
    batch = _batch_size(n)
    jobs = [
        (sys, channel, params, size, root.child(k), apply_saturation, keep_block, batch)
        for k, size in enumerate(_chunk_sizes(n))
    ]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_simulate_chunk, jobs))
    else:
        results = [_simulate_chunk(j) for j in jobs]

    batches = [m for ms, _ in results for m in ms]
    total = _merge_all(batches)
    estimate = estimate_from_moments(total, sys.eta, sys.v_ele, n0)
    stderr = _estimate_stderr(batches, sys, n0)

    block = None
    if keep_block:
        block = QuadratureBlock(
            np.concatenate([r[1][0] for r in results]), np.concatenate([r[1][1] for r in results])
        )
    inputs = {
        "system": sys.to_dict(),
        "distance_km": channel.distance_km,
        "transmission": channel.transmission,
        "delta": params.delta,
        "gain": params.gain,
        "xi_ae": params.noise_split(sys)[0],
        "xi_eb": params.xi_eb,
        "xi_sys_attack": params.xi_sys(sys) if params.gain > 0 else params.noise_split(sys)[0],
        "eta": sys.eta,
        "v_a": sys.v_a,
        "n": n,
        "seed": seed,
        "apply_saturation": apply_saturation,
        "n0": n0,
    }
    return AttackRun(block, estimate, attack_analytics(sys, channel, params), stderr, inputs)


def _estimate_stderr(batches: Sequence[Moments], sys: SystemParams, n0: float) -> dict[str, float]:
    per = {"cov_ab": [], "var_b": [], "t_hat": [], "xi_hat": []}
    weights = []
    for m in batches:
        if m.n < 2:
            continue
        try:
            e = estimate_from_moments(m, sys.eta, sys.v_ele, n0)
        except ValueError:
            continue
        weights.append(m.n)
        for key in per:
            per[key].append(getattr(e, key))
    return {key: _batch_se(vals, weights) for key, vals in per.items()}


@dataclass(frozen=True)
class SaturationStats:
    """Monte Carlo statistics of the clamped output at one displacement."""

    delta: float
    estimate: EstimationResult
    stderr: dict[str, float]


def saturation_statistics(
    sys: SystemParams,
    channel: ChannelSpec,
    gain: float,
    deltas: Iterable[float],
    n: int,
    seed: int,
    *,
    workers: int = 1,
) -> list[SaturationStats]:
    """Clamped-output statistics for several displacements from one sample.

    The displacement enters the linear output additively, so one chain run
    at Delta = 0 is shifted by each Delta and clamped.  Runs at different
    displacements therefore share their random numbers.
    """
    deltas = [float(d) for d in deltas]
    base = AttackParams(0.0, gain)
    root = RngHandle(seed)
    batch = _batch_size(n)

    def work(k_size):
        k, size = k_size
        gen = root.child(k).generator()
        a = modulate_alice(sys.v_a, size, gen)
        b = eve_intercept_resend(a, base, channel, sys, gen)
        return [_batched_moments(a, np.clip(b + d, -sys.alpha, sys.alpha), batch) for d in deltas]

    chunks = list(enumerate(_chunk_sizes(n)))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_chunk = list(pool.map(work, chunks))
    else:
        per_chunk = [work(c) for c in chunks]

    out = []
    for j, d in enumerate(deltas):
        batches = [m for row in per_chunk for m in row[j]]
        total = _merge_all(batches)
        out.append(
            SaturationStats(d, estimate_from_moments(total, sys.eta, sys.v_ele), _estimate_stderr(batches, sys, 1.0))
        )
    return out
