"""Double-well potential: exact quadratic wings with a smooth even bridge.

Outside ``|t| >= 1 - delta0`` the potential is exactly
``(|t| - 1)^2 / (2 C0)``; inside, an even bridge matches value, first and
second derivative at the matching point so the result is C^2, nonnegative,
vanishes only at t = +-1 and decreases strictly on [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

__all__ = ["PotentialSpec", "build_potential"]


@dataclass(frozen=True)
class PotentialSpec:
    c0: float
    delta0: float
    bridge: str  # "quartic" or "cosine"
    coeffs: tuple  # quartic: (a, b, c); cosine: (a, b, alpha)

    @property
    def match(self) -> float:
        return 1.0 - self.delta0

    # -- evaluation (all even in t; wing formulas go through |t| so that
    #    W(-t) equals W(t) bit-exactly)

    def w(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        a = np.abs(t)
        out = np.where(a >= self.match,
                       (a - 1.0) ** 2 / (2.0 * self.c0),
                       self._bridge_w(t))
        return out if out.shape else float(out)

    def wp(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        a = np.abs(t)
        wing = np.sign(t) * (a - 1.0) / self.c0
        out = np.where(a >= self.match, wing, self._bridge_wp(t))
        return out if out.shape else float(out)

    def wpp(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        a = np.abs(t)
        out = np.where(a >= self.match, 1.0 / self.c0, self._bridge_wpp(t))
        return out if out.shape else float(out)

    def _bridge_w(self, t):
        if self.bridge == "quartic":
            a, b, c = self.coeffs
            t2 = t * t
            return a + t2 * (b + c * t2)
        a, b, alpha = self.coeffs
        return a + b * np.cos(alpha * t)

    def _bridge_wp(self, t):
        if self.bridge == "quartic":
            _, b, c = self.coeffs
            return t * (2.0 * b + 4.0 * c * (t * t))
        _, b, alpha = self.coeffs
        return -b * alpha * np.sin(alpha * t)

    def _bridge_wpp(self, t):
        if self.bridge == "quartic":
            _, b, c = self.coeffs
            return 2.0 * b + 12.0 * c * (t * t)
        _, b, alpha = self.coeffs
        return -b * alpha * alpha * np.cos(alpha * t)

    def max_abs_wpp(self, bound: float) -> float:
        """Curvature bound over [-bound, bound]; enters the descent step size."""
        ts = np.linspace(0.0, max(bound, 1.0), 4001)
        return float(np.abs(self.wpp(ts)).max())


def _quartic_coeffs(c0: float, delta0: float) -> tuple:
    """Even quartic a + b t^2 + c t^4 matching the wing at t = 1 - delta0."""
    tau = 1.0 - delta0
    rhs = np.array([
        delta0 ** 2 / (2.0 * c0),   # value
        -delta0 / c0,               # first derivative
        1.0 / c0,                   # second derivative
    ])
    mat = np.array([
        [1.0, tau ** 2, tau ** 4],
        [0.0, 2.0 * tau, 4.0 * tau ** 3],
        [0.0, 2.0, 12.0 * tau ** 2],
    ])
    a, b, c = np.linalg.solve(mat, rhs)
    return (float(a), float(b), float(c))


def _cosine_coeffs(c0: float, delta0: float) -> tuple:
    """Even bridge a + b cos(alpha t) with the same C^2 matching conditions."""
    tau = 1.0 - delta0
    # the derivative ratio at the matching point fixes the frequency:
    # -alpha cot(alpha tau) = 1/delta0, with a root in (0, pi/tau)

    def f(alpha):
        return -alpha / math.tan(alpha * tau) - 1.0 / delta0

    lo, hi = 1e-9, (math.pi - 1e-9) / tau
    alpha = brentq(f, lo, hi)
    b = delta0 / (c0 * alpha * math.sin(alpha * tau))
    a = delta0 ** 2 / (2.0 * c0) - b * math.cos(alpha * tau)
    return (float(a), float(b), float(alpha))


def build_potential(c0: float, delta0: float, bridge: str = "quartic") -> PotentialSpec:
    if not c0 > 0:
        raise ValueError(f"c0 must be positive, got {c0}")
    if not 0.0 < delta0 < 1.0:
        raise ValueError(f"delta0 must lie in (0, 1), got {delta0}")
    if bridge == "quartic":
        coeffs = _quartic_coeffs(c0, delta0)
    elif bridge == "cosine":
        coeffs = _cosine_coeffs(c0, delta0)
    else:
        raise ValueError(f"unknown bridge {bridge!r}")
    pot = PotentialSpec(c0=float(c0), delta0=float(delta0), bridge=bridge, coeffs=coeffs)
    _validate(pot)
    return pot


def _validate(pot: PotentialSpec) -> None:
    """Numerical admissibility check on a fine sample."""
    ts = np.linspace(0.0, 1.0, 20001)
    w = pot.w(ts)
    if not np.all(w[:-1] >= 0):
        raise ValueError("bridge makes the potential negative on [0, 1)")
    dw = np.diff(w)
    if not np.all(dw[ts[:-1] < 1.0 - 1e-12] <= 1e-15):
        raise ValueError(
            f"(c0={pot.c0}, delta0={pot.delta0}) bridge is not decreasing on [0, 1]")
    if abs(float(pot.w(1.0))) > 1e-14 or abs(float(pot.w(-1.0))) > 1e-14:
        raise ValueError("potential does not vanish at +-1")
