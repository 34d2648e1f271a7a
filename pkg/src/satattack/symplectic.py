"""Generic Gaussian-state oracle for the Holevo bound.

Builds the entanglement-based covariance matrices explicitly (EPR source,
lossy noisy line, beamsplitter model of the detector with a thermal
ancilla), conditions on Bob's homodyne outcome and takes symplectic
eigenvalues numerically.  Shares nothing with the closed forms in
:mod:`satattack.keyrate` beyond the entropy function.
"""

from __future__ import annotations

import math

import numpy as np

from .keyrate import _g_of_eig
from .units import SystemParams

__all__ = [
    "symplectic_form",
    "symplectic_eigenvalues",
    "epr_state",
    "beamsplitter",
    "homodyne_condition",
    "holevo_bound_oracle",
    "mutual_information_oracle",
]

Z = np.diag([1.0, -1.0])
I2 = np.eye(2)


def symplectic_form(modes: int) -> np.ndarray:
    return np.kron(np.eye(modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def symplectic_eigenvalues(gamma: np.ndarray) -> np.ndarray:
    """Symplectic spectrum (ascending) of a real symmetric 2n x 2n matrix."""
    gamma = np.asarray(gamma, dtype=float)
    n = gamma.shape[0] // 2
    ev = np.linalg.eigvals(1j * symplectic_form(n) @ gamma)
    return np.sort(np.abs(ev.real))[::2]


def epr_state(v: float) -> np.ndarray:
    """Two-mode squeezed vacuum with local variance ``v``."""
    c = math.sqrt(max(v * v - 1.0, 0.0))
    return np.block([[v * I2, c * Z], [c * Z, v * I2]])


def beamsplitter(modes: int, i: int, j: int, transmittance: float) -> np.ndarray:
    """Symplectic matrix mixing modes ``i`` and ``j`` on a beamsplitter."""
    s = np.eye(2 * modes)
    r, q = math.sqrt(transmittance), math.sqrt(1.0 - transmittance)
    ii, jj = slice(2 * i, 2 * i + 2), slice(2 * j, 2 * j + 2)
    s[ii, ii] = r * I2
    s[ii, jj] = q * I2
    s[jj, ii] = -q * I2
    s[jj, jj] = r * I2
    return s


def homodyne_condition(gamma: np.ndarray, mode: int) -> np.ndarray:
    """Covariance of the other modes after an x-homodyne on ``mode``."""
    idx = [2 * mode, 2 * mode + 1]
    rest = [k for k in range(gamma.shape[0]) if k not in idx]
    a = gamma[np.ix_(rest, rest)]
    c = gamma[np.ix_(rest, idx)]
    b = gamma[np.ix_(idx, idx)]
    pinv = np.diag([1.0 / b[0, 0], 0.0])
    return a - c @ pinv @ c.T


def _channel_state(sys: SystemParams, T: float, xi: float) -> np.ndarray:
    """Covariance of (A, B) after the untrusted line."""
    V = sys.v_a + 1.0
    chi_line = 1.0 / T - 1.0 + xi
    c = math.sqrt(T * (V * V - 1.0))
    return np.block([[V * I2, c * Z], [c * Z, T * (V + chi_line) * I2]])


def holevo_bound_oracle(sys: SystemParams, T: float, xi: float) -> float:
    gamma_ab = _channel_state(sys, T, xi)
    s_ab = sum(_g_of_eig(nu) for nu in symplectic_eigenvalues(gamma_ab))

    if sys.eta < 1.0:
        v_n = 1.0 + sys.v_ele / (1.0 - sys.eta)
        modes = np.zeros((8, 8))
        modes[:4, :4] = gamma_ab
        modes[4:, 4:] = epr_state(v_n)  # modes F (enters the detector) and G
        S = beamsplitter(4, 1, 2, sys.eta)
        full = S @ modes @ S.T
        cond = homodyne_condition(full, 1)
    else:
        if sys.v_ele > 0:
            raise ValueError("electronic noise needs eta < 1 in the beamsplitter model")
        cond = homodyne_condition(gamma_ab, 1)
    s_cond = sum(_g_of_eig(nu) for nu in symplectic_eigenvalues(cond))
    return s_ab - s_cond


def _gaussian_entropy_numeric(var: float) -> float:
    """Differential entropy (bits) of N(0, var) by quadrature."""
    from scipy.integrate import quad

    s = math.sqrt(var)

    def integrand(x):
        p = math.exp(-0.5 * x * x / var) / (math.sqrt(2 * math.pi) * s)
        return -p * math.log2(p) if p > 0 else 0.0

    val, _ = quad(integrand, -40 * s, 40 * s, limit=400, points=[0.0])
    return val


def mutual_information_oracle(sys: SystemParams, T: float, xi: float) -> float:
    """h(X_B) - h(X_B | X_A) evaluated by numerical integration."""
    et = sys.eta * T
    noise = 1.0 + et * xi + sys.v_ele
    return _gaussian_entropy_numeric(et * sys.v_a + noise) - _gaussian_entropy_numeric(noise)
