"""Shot-noise units, system parameter records and the shared RNG contract.

All quadratures in the simulation pipelines are in units of sqrt(N0) with
N0 fixed to 1; variances are in units of N0.  Only the detector module works
with volts.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np

__all__ = [
    "SystemParams",
    "ChannelSpec",
    "RngHandle",
    "REFERENCE_PROFILE",
    "transmission_from_distance",
    "normalize_to_snu",
    "load_config",
]


@dataclass(frozen=True)
class SystemParams:
    """Protocol and device constants, in shot-noise units.

    Defaults reproduce the simulation profile of the attack analysis:
    eta = 0.55, v_ele = 0.015, xi_sys = 0.1, beta = 0.95, 0.2 dB/km and a
    detector linearity bound of 20 sqrt(N0).  ``v_a`` defaults to the value
    used for the post-selection example (11.58 N0); distance-dependent
    schedules live in :func:`satattack.keyrate.optimize_va`.
    """

    v_a: float = 11.58
    eta: float = 0.55
    v_ele: float = 0.015
    xi_sys: float = 0.1
    beta_rec: float = 0.95
    atten_db_per_km: float = 0.2
    alpha: float = 20.0

    def __post_init__(self) -> None:
        if not self.v_a > 0:
            raise ValueError(f"v_a must be positive, got {self.v_a}")
        if not 0 < self.eta <= 1:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")
        if not self.v_ele >= 0:
            raise ValueError(f"v_ele must be non-negative, got {self.v_ele}")
        if not self.xi_sys >= 0:
            raise ValueError(f"xi_sys must be non-negative, got {self.xi_sys}")
        if not 0 < self.beta_rec <= 1:
            raise ValueError(f"beta_rec must lie in (0, 1], got {self.beta_rec}")
        if not self.atten_db_per_km >= 0:
            raise ValueError("atten_db_per_km must be non-negative")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")

    def with_(self, **changes: float) -> "SystemParams":
        return replace(self, **changes)

    def to_dict(self) -> dict[str, float]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SystemParams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown system fields: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in data.items()})


REFERENCE_PROFILE = SystemParams()


def transmission_from_distance(distance_km: float, atten_db_per_km: float = 0.2) -> float:
    """Fiber transmission ``10**(-a*L/10)``."""
    if distance_km < 0 or atten_db_per_km < 0:
        raise ValueError("distance and attenuation must be non-negative")
    return 10.0 ** (-atten_db_per_km * distance_km / 10.0)


@dataclass(frozen=True)
class ChannelSpec:
    """A fiber link of given length; ``transmission`` is derived."""

    distance_km: float
    atten_db_per_km: float = 0.2
    transmission: float = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(
            self,
            "transmission",
            transmission_from_distance(self.distance_km, self.atten_db_per_km),
        )

    @classmethod
    def for_system(cls, sys: SystemParams, distance_km: float) -> "ChannelSpec":
        return cls(distance_km, sys.atten_db_per_km)

    def amplitude(self, eta: float) -> float:
        """Field amplitude transmission t = sqrt(eta*T) up to Bob's detector."""
        return math.sqrt(eta * self.transmission)


def normalize_to_snu(value_volts, n0_volts_sq: float):
    """Express a voltage reading in sqrt(N0) units given the shot-noise variance."""
    if not n0_volts_sq > 0:
        raise ValueError("shot-noise variance must be positive")
    if np.ndim(value_volts) == 0:
        return float(value_volts) / math.sqrt(n0_volts_sq)
    return np.asarray(value_volts, dtype=float) / math.sqrt(n0_volts_sq)


@dataclass(frozen=True)
class RngHandle:
    """Seed plus stream id.  Streams of one seed are independent.

    Identical ``(seed, stream)`` pairs give identical sequences; reproducibility
    is guaranteed within one build of numpy, not across implementations.
    """

    seed: int
    stream: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.stream < 0:
            raise ValueError("stream id must be non-negative")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, index: int) -> "RngHandle":
        """Derive a sub-stream, used to shard work into chunks."""
        # Cantor pairing keeps (stream, index) -> stream id injective.
        s = self.stream + 1
        return RngHandle(self.seed, (s + index) * (s + index + 1) // 2 + index)


def as_generator(rng) -> np.random.Generator:
    """Accept a Generator, an RngHandle, an int seed or None."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngHandle):
        return rng.generator()
    return RngHandle(0 if rng is None else int(rng)).generator()


def load_config(path: str | Path) -> tuple[SystemParams, int, dict[str, Any]]:
    """Read a JSON config ``{"system": {...}, "seed": N, ...}``.

    Omitted system fields default to the reference profile.  Returns the system,
    the seed and the remaining top-level keys.
    """
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise ValueError("config must be a JSON object")
    system = SystemParams.from_dict(data.pop("system", {}) or {})
    seed = int(data.pop("seed", 0))
    RngHandle(seed)
    return system, seed, data
