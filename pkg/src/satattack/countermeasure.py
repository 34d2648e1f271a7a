"""Software counter-measures against detector saturation.

Radical post-selection rejects a whole block as soon as one sample leaves the
confidence interval.  Gaussian post-selection instead thins the in-range data
bin by bin so that what survives follows a Gaussian filter g(x) <= f(x)
that is (almost) contained in the linear domain.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtr, ndtri

from .units import as_generator

__all__ = [
    "Histogram",
    "GaussianFilter",
    "InfeasibleFilterError",
    "radical_postselect",
    "exceedance_probability",
    "build_histogram",
    "optimize_gaussian_filter",
    "keep_probabilities",
    "apply_gaussian_postselect",
    "l2_distance_to_gaussian",
    "l2_density_distance",
    "l2_noise_floor",
    "TAIL_MASS",
]

# Filter mass allowed outside [-alpha, alpha], relative to total filter mass.
TAIL_MASS = 1e-6


class InfeasibleFilterError(ValueError):
    pass


def radical_postselect(block, alpha: float, margin: float) -> bool:
    """Accept the block iff every sample lies within +-(alpha - margin)."""
    if not 0 < margin < alpha:
        raise ValueError("margin must satisfy 0 < margin < alpha")
    x = np.asarray(block, dtype=float)
    if x.size == 0:
        raise ValueError("empty block")
    return bool(np.all(np.abs(x) <= alpha - margin))


def exceedance_probability(half_width_in_std: float) -> float:
    """Per-sample probability that a centered Gaussian leaves +-k std."""
    return float(2.0 * ndtr(-half_width_in_std))


@dataclass(frozen=True)
class Histogram:
    """Counts on bins ``[lo + k*w, lo + (k+1)*w)``; out-of-domain samples are tallied in ``excluded``."""

    edges: np.ndarray
    counts: np.ndarray
    excluded: int = 0

    @property
    def bin_width(self) -> float:
        return float(self.edges[1] - self.edges[0])

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.edges[0]), float(self.edges[-1])

    def bin_index(self, x) -> np.ndarray:
        """Bin of each sample, -1 outside the domain."""
        x = np.asarray(x, dtype=float)
        k = np.floor((x - self.edges[0]) / self.bin_width).astype(np.int64)
        k[(k < 0) | (k >= len(self.counts)) | ~np.isfinite(x)] = -1
        return k


def build_histogram(samples, bin_width: float, domain: tuple[float, float]) -> Histogram:
    if not bin_width > 0:
        raise ValueError("bin_width must be positive")
    lo, hi = map(float, domain)
    if not hi > lo:
        raise ValueError("empty domain")
    nbins = max(1, int(round((hi - lo) / bin_width)))
    edges = lo + bin_width * np.arange(nbins + 1)
    x = np.asarray(samples, dtype=float).ravel()
    k = np.floor((x - lo) / bin_width).astype(np.int64)
    inside = (k >= 0) & (k < nbins) & np.isfinite(x)
    counts = np.bincount(k[inside], minlength=nbins)
    return Histogram(edges=edges, counts=counts, excluded=int(x.size - inside.sum()))


@dataclass(frozen=True)
class GaussianFilter:
    """g(x) = amplitude * N(x; mu_g, sigma_g^2), in samples per unit x."""

    amplitude: float
    mu_g: float
    sigma_g_sq: float
    n_selected_pred: float
    tail_mass: float = 0.0

    @property
    def sigma_g(self) -> float:
        return math.sqrt(self.sigma_g_sq)

    def density(self, x) -> np.ndarray:
        s = self.sigma_g
        x = np.asarray(x, dtype=float)
        return self.amplitude * np.exp(-0.5 * ((x - self.mu_g) / s) ** 2) / (math.sqrt(2 * math.pi) * s)

    def to_dict(self) -> dict:
        return asdict(self)


def _tail(mu: float, sigma: float, alpha: float) -> float:
    return float(ndtr((-alpha - mu) / sigma) + ndtr((mu - alpha) / sigma))


def _feasible_mu_range(sigma: float, alpha: float, tail: float) -> tuple[float, float] | None:
    """Interval of filter means whose out-of-domain mass is at most ``tail``."""
    if _tail(0.0, sigma, alpha) > tail:
        return None
    # the far rail dominates; start from the one-sided bound and polish
    lo, hi = 0.0, alpha
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if _tail(mid, sigma, alpha) <= tail:
            lo = mid
        else:
            hi = mid
    return -lo, lo


class _Objective:
    def __init__(self, hist: Histogram, alpha: float, tail: float):
        occ = hist.counts > 0
        self.x = hist.centers[occ]
        self.c = hist.counts[occ].astype(float)
        self.w = hist.bin_width
        self.alpha = alpha
        self.tail = tail

    def _log_phi(self, mu: float, sigma: float) -> np.ndarray:
        z = (self.x - mu) / sigma
        return -0.5 * z * z - math.log(math.sqrt(2 * math.pi) * sigma)

    def amplitude(self, mu: float, sigma: float) -> float:
        # binding constraint: amplitude * phi * w <= count on every occupied bin
        return float(np.exp(np.min(np.log(self.c / self.w) - self._log_phi(mu, sigma))))

    def realized(self, mu: float, sigma: float) -> tuple[float, float]:
        """Amplitude and expected kept count; empty bins contribute nothing."""
        log_phi = self._log_phi(mu, sigma)
        log_amp = float(np.min(np.log(self.c / self.w) - log_phi))
        return math.exp(log_amp), float(np.sum(np.exp(log_amp + log_phi)) * self.w)

    def n_prime(self, mu: float, sigma: float) -> float:
        rng = _feasible_mu_range(sigma, self.alpha, self.tail)
        if rng is None:
            return 0.0
        mu = min(max(mu, rng[0]), rng[1])
        return self.realized(mu, sigma)[1]

    def project(self, mu: float, sigma: float) -> float:
        rng = _feasible_mu_range(sigma, self.alpha, self.tail)
        return mu if rng is None else min(max(mu, rng[0]), rng[1])


def optimize_gaussian_filter(
    hist: Histogram,
    alpha: float,
    *,
    tail: float = TAIL_MASS,
    mu_points: int = 81,
    sigma_points: int = 60,
    rtol: float = 1e-12,
) -> GaussianFilter:
    """Gaussian filter maximizing the number of selected points.

    For fixed (mu, sigma) the largest admissible amplitude is the minimum over
    occupied bins of count / (phi * bin_width).  The objective is the filter
    mass on occupied bins, i.e. the expected number of samples the thinning
    keeps; filter mass over empty bins cannot be selected.  The mean is projected into
    the range that keeps the tail mass outside [-alpha, alpha] at most
    ``tail``.  A log-spaced grid over sigma and a uniform grid over mu seed a
    Nelder-Mead refinement, stopped once N' changes by less than ``rtol``
    relative.
    """
    if hist.total == 0 or np.count_nonzero(hist.counts) < 2:
        raise InfeasibleFilterError("histogram has fewer than two occupied bins in the linear domain")
    obj = _Objective(hist, alpha, tail)
    sigma_max = alpha / -ndtri(tail / 2.0)
    sigma_min = hist.bin_width / 2.0
    best = (0.0, 0.0, sigma_min)
    lo_x, hi_x = float(obj.x.min()), float(obj.x.max())
    for sigma in np.geomspace(sigma_min, sigma_max, sigma_points):
        for mu in np.linspace(max(lo_x, -alpha), min(hi_x, alpha), mu_points):
            val = obj.n_prime(float(mu), float(sigma))
            if val > best[0]:
                best = (val, float(mu), float(sigma))
    if not best[0] > 0:
        raise InfeasibleFilterError("no Gaussian filter fits under the histogram")

    def neg(p):
        mu, log_s = p
        s = math.exp(log_s)
        if not sigma_min <= s <= sigma_max:
            return 0.0
        return -obj.n_prime(mu, s)

    res = minimize(
        neg,
        x0=[best[1], math.log(best[2])],
        method="Nelder-Mead",
        options={"xatol": 1e-9, "fatol": rtol * best[0], "maxiter": 4000},
    )
    if -res.fun > best[0]:
        mu, sigma = float(res.x[0]), math.exp(float(res.x[1]))
    else:
        mu, sigma = best[1], best[2]
    mu = obj.project(mu, sigma)
    amp, kept = obj.realized(mu, sigma)
    return GaussianFilter(
        amplitude=amp,
        mu_g=mu,
        sigma_g_sq=sigma * sigma,
        n_selected_pred=kept,
        tail_mass=_tail(mu, sigma, alpha),
    )


def keep_probabilities(filt: GaussianFilter, hist: Histogram) -> np.ndarray:
    """Per-bin acceptance min(1, g/f) with g integrated at the bin center."""
    expected = filt.density(hist.centers) * hist.bin_width
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(hist.counts > 0, expected / hist.counts, 0.0)
    return np.clip(p, 0.0, 1.0)


def apply_gaussian_postselect(samples, filt: GaussianFilter, hist: Histogram, rng=None) -> np.ndarray:
    """Bernoulli thinning of each in-domain sample with its bin's keep probability."""
    x = np.asarray(samples, dtype=float).ravel()
    k = hist.bin_index(x)
    p = np.zeros(x.size)
    inside = k >= 0
    p[inside] = keep_probabilities(filt, hist)[k[inside]]
    keep = as_generator(rng).random(x.size) < p
    return x[keep]


def l2_density_distance(density, centers, bin_width: float, mu: float, sigma: float) -> float:
    """sqrt(sum_bins (h(x) - phi(x))^2 * dx) against N(mu, sigma^2) at bin centers."""
    centers = np.asarray(centers, dtype=float)
    phi = np.exp(-0.5 * ((centers - mu) / sigma) ** 2) / (math.sqrt(2 * math.pi) * sigma)
    return float(math.sqrt(np.sum((np.asarray(density) - phi) ** 2) * bin_width))


def l2_distance_to_gaussian(selected, bin_width: float) -> float:
    """L2 distance between the normalized histogram and the moment-matched Gaussian.

    Bins extend 8 sample standard deviations either side of the sample mean,
    aligned on multiples of ``bin_width``.
    """
    x = np.asarray(selected, dtype=float).ravel()
    if x.size < 1000:
        raise ValueError("need at least 1000 selected samples")
    mu, sigma = float(x.mean()), float(x.std())
    lo = math.floor((mu - 8 * sigma) / bin_width) * bin_width
    hi = math.ceil((mu + 8 * sigma) / bin_width) * bin_width
    hist = build_histogram(x, bin_width, (lo, hi))
    density = hist.counts / (x.size * bin_width)
    return l2_density_distance(density, hist.centers, bin_width, mu, sigma)


def l2_noise_floor(n: int, bin_width: float, mu: float, sigma: float, rng=None, repeats: int = 20) -> tuple[float, float]:
    """Mean and spread of the L2 distance for ``n`` exact Gaussian draws."""
    gen = as_generator(rng)
    d = [l2_distance_to_gaussian(gen.normal(mu, sigma, n), bin_width) for _ in range(repeats)]
    return float(np.mean(d)), float(np.std(d, ddof=1))
