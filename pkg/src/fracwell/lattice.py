"""Grids, disorder fields, and the piecewise-constant disorder lift.

Geometry conventions (fixed once, everything downstream relies on them):

* The domain is the open box ``(-n/2, n/2)^d`` with ``n`` even, so its unit
  cells are ``[a, a+1)^d`` with integer left edges ``a in {-n/2, ..., n/2-1}``.
  Each unit cell is split into ``m`` collocation sub-cells per axis; the
  collocation points are the sub-cell centers ``-n/2 + (j + 1/2)/m`` for
  ``j = 0..n*m-1``.
* The disorder lives on the integer lattice: site ``z`` owns the half-open
  cell ``z + [-1/2, 1/2)^d``, so a point ``x`` lifts to the site
  ``floor(x + 1/2)`` per axis (ties broken upward).

Collocation cells and disorder cells are therefore staggered by half a cell;
the lift is the only place where the two lattices meet.

Disorder values are a pure function of ``(seed, site)`` via a splitmix64-style
hash, so regeneration, translation and parallel sweeps are bit-exact by
construction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

__all__ = [
    "Grid",
    "make_grid",
    "DistSpec",
    "Disorder",
    "sample_disorder",
    "translate_disorder",
    "negate_disorder",
    "lift_g1",
    "g1_on_grid",
    "realization_seed",
]

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
# distinct odd multipliers so that permuted coordinates hash differently
_COORD_SALT = (np.uint64(0xA24BAED4963EE407), np.uint64(0x9FB21C651E98DF25))


def _mix64(x: np.ndarray) -> np.ndarray:
    x = (x + _GAMMA) & _MASK
    x = ((x ^ (x >> np.uint64(30))) * _MIX1) & _MASK
    x = ((x ^ (x >> np.uint64(27))) * _MIX2) & _MASK
    return x ^ (x >> np.uint64(31))


def _site_hash(seed: int, sites: np.ndarray, stream: int = 0) -> np.ndarray:
    """64-bit hash per lattice site; ``sites`` is an (N, d) int array."""
    h = np.full(sites.shape[0], np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
    h = _mix64((h + np.uint64(stream)) & _MASK)
    for k in range(sites.shape[1]):
        c = sites[:, k].astype(np.int64).view(np.uint64)
        h = _mix64((h ^ ((c * _COORD_SALT[k % 2]) & _MASK)) & _MASK)
    return h


def _unit_from_hash(h: np.ndarray) -> np.ndarray:
    # top 53 bits -> double in [0, 1)
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def realization_seed(base_seed: int, *indices: int) -> int:
    """Derive a per-realization stream seed from a base seed and indices.

    Pure function, so worker scheduling cannot change which stream a
    realization uses.
    """
    h = np.uint64(base_seed & 0xFFFFFFFFFFFFFFFF)
    for ix in indices:
        h = _mix64(np.asarray([(h ^ np.uint64(ix & 0xFFFFFFFFFFFFFFFF)) & _MASK]))[0]
    return int(h)


# ---------------------------------------------------------------------------
# grid


@dataclass(frozen=True)
class Grid:
    """Collocation lattice for the box ``(-n/2, n/2)^d``.

    ``n`` counts unit cells per axis (even), ``m`` collocation points per unit
    cell per axis, so the spacing is ``h = 1/m`` and there are ``(n*m)^d``
    points in total.
    """

    d: int
    n: int
    m: int

    @property
    def h(self) -> float:
        return 1.0 / self.m

    @property
    def half(self) -> float:
        return self.n / 2.0

    @property
    def shape(self) -> tuple:
        return (self.n * self.m,) * self.d

    @property
    def npoints(self) -> int:
        return (self.n * self.m) ** self.d

    def axis(self) -> np.ndarray:
        """Per-axis point coordinates ``-n/2 + (j+1/2)/m``."""
        j = np.arange(self.n * self.m)
        return (2 * j + 1 - self.n * self.m) / (2.0 * self.m)

    def index_grid(self) -> np.ndarray:
        """(N, d) integer per-axis indices in C (row-major) order."""
        idx = np.indices(self.shape).reshape(self.d, -1).T
        return np.ascontiguousarray(idx)

    def coords(self) -> np.ndarray:
        """(N, d) point coordinates in C order."""
        return self.axis()[self.index_grid()]

    def sites(self) -> np.ndarray:
        """(N, d) disorder site per point: ``floor(x + 1/2)`` in exact integer
        arithmetic."""
        j = self.index_grid()
        num = 2 * j + 1 - self.n * self.m + self.m
        return np.floor_divide(num, 2 * self.m)

    def site_box(self) -> tuple:
        """Inclusive integer box guaranteed to contain every lifted site."""
        lo = tuple([-(self.n // 2)] * self.d)
        hi = tuple([self.n // 2] * self.d)
        return lo, hi

    def inner_mask(self, half: float) -> np.ndarray:
        """Points with ``|x|_inf < half`` (flat bool array)."""
        x = self.coords()
        return (np.abs(x) < half).all(axis=1)

    def boundary_distance(self) -> np.ndarray:
        """Euclidean distance of each point to the domain boundary."""
        x = self.coords()
        return (self.half - np.abs(x)).min(axis=1)


def make_grid(d: int, n: int, m: int = 1) -> Grid:
    if d not in (1, 2):
        raise ValueError(f"dimension d must be 1 or 2, got {d}")
    if n < 2 or n % 2 != 0:
        raise ValueError(f"side length n must be even and >= 2, got {n}")
    if m < 1:
        raise ValueError(f"refinement m must be >= 1, got {m}")
    return Grid(d=d, n=n, m=m)


# ---------------------------------------------------------------------------
# disorder


@dataclass(frozen=True)
class DistSpec:
    """Symmetric, mean-zero, variance-one, bounded site distribution.

    ``uniform``: uniform on [-sqrt(3), sqrt(3)] (bound A = sqrt(3)).
    ``triangular``: sum of two uniforms, support [-sqrt(6), sqrt(6)].
    """

    name: str = "uniform"

    def __post_init__(self):
        if self.name not in ("uniform", "triangular"):
            raise ValueError(f"unknown distribution {self.name!r}")

    @property
    def bound(self) -> float:
        return math.sqrt(3.0) if self.name == "uniform" else math.sqrt(6.0)

    def _values(self, seed: int, sites: np.ndarray) -> np.ndarray:
        u = _unit_from_hash(_site_hash(seed, sites, stream=0))
        if self.name == "uniform":
            return (2.0 * u - 1.0) * math.sqrt(3.0)
        u2 = _unit_from_hash(_site_hash(seed, sites, stream=1))
        return (u + u2 - 1.0) * math.sqrt(6.0)


@dataclass(frozen=True)
class Disorder:
    """I.i.d. site values on an inclusive integer box.

    The value at site ``z`` is ``sign * raw(seed, z + shift)`` where ``raw``
    is a pure hash-based sampler, so translated/negated copies stay exactly
    consistent with the original field on overlapping supports.
    """

    seed: int
    box_lo: tuple
    box_hi: tuple
    dist: DistSpec = field(default_factory=DistSpec)
    shift: tuple = None
    sign: int = 1
    values: np.ndarray = None  # filled by sample_disorder

    @property
    def d(self) -> int:
        return len(self.box_lo)

    @property
    def bound(self) -> float:
        return self.dist.bound

    def box_shape(self) -> tuple:
        return tuple(hi - lo + 1 for lo, hi in zip(self.box_lo, self.box_hi))

    def contains(self, sites: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.box_lo)
        hi = np.asarray(self.box_hi)
        return ((sites >= lo) & (sites <= hi)).all(axis=1)

    def value_at(self, sites: np.ndarray) -> np.ndarray:
        """Values at an (N, d) array of sites; out-of-box sites are an error."""
        sites = np.atleast_2d(np.asarray(sites, dtype=np.int64))
        if not self.contains(sites).all():
            raise ValueError("site outside the sampled disorder box")
        idx = tuple((sites[:, k] - self.box_lo[k]) for k in range(self.d))
        return self.values[idx]

    def max_abs(self) -> float:
        return float(np.abs(self.values).max())


def _all_sites(box_lo, box_hi) -> np.ndarray:
    axes = [np.arange(lo, hi + 1) for lo, hi in zip(box_lo, box_hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def sample_disorder(box_lo, box_hi, dist: DistSpec = None, seed: int = 0,
                    shift=None, sign: int = 1) -> Disorder:
    """Materialize the disorder field on an inclusive integer box."""
    dist = dist or DistSpec()
    box_lo = tuple(int(v) for v in np.atleast_1d(box_lo))
    box_hi = tuple(int(v) for v in np.atleast_1d(box_hi))
    if len(box_lo) != len(box_hi):
        raise ValueError("box_lo and box_hi must have equal length")
    if any(hi < lo for lo, hi in zip(box_lo, box_hi)):
        raise ValueError("empty disorder box")
    shift = tuple(int(v) for v in (shift if shift is not None else (0,) * len(box_lo)))
    sites = _all_sites(box_lo, box_hi) + np.asarray(shift)
    raw = dist._values(seed, sites)
    shape = tuple(hi - lo + 1 for lo, hi in zip(box_lo, box_hi))
    values = (sign * raw).reshape(shape)
    values.setflags(write=False)
    return Disorder(seed=seed, box_lo=box_lo, box_hi=box_hi, dist=dist,
                    shift=shift, sign=sign, values=values)


def disorder_for_grid(grid: Grid, dist: DistSpec = None, seed: int = 0) -> Disorder:
    lo, hi = grid.site_box()
    return sample_disorder(lo, hi, dist=dist, seed=seed)


def translate_disorder(dis: Disorder, y) -> Disorder:
    """Shifted field: ``(T_y w)(z) = w(z + y)`` on the same box."""
    y = tuple(int(v) for v in np.atleast_1d(y))
    if len(y) != dis.d:
        raise ValueError("translation vector has wrong dimension")
    shift = tuple(s + dy for s, dy in zip(dis.shift, y))
    return sample_disorder(dis.box_lo, dis.box_hi, dist=dis.dist, seed=dis.seed,
                           shift=shift, sign=dis.sign)


def negate_disorder(dis: Disorder) -> Disorder:
    return sample_disorder(dis.box_lo, dis.box_hi, dist=dis.dist, seed=dis.seed,
                           shift=dis.shift, sign=-dis.sign)


def lift_g1(dis: Disorder, x) -> np.ndarray:
    """Piecewise-constant lift: value of the unique site with
    ``x in z + [-1/2, 1/2)^d``."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    sites = np.floor(x + 0.5).astype(np.int64)
    return dis.value_at(sites)


def g1_on_grid(dis: Disorder, grid: Grid) -> np.ndarray:
    """Lifted disorder sampled at every collocation point (flat array)."""
    return dis.value_at(grid.sites())


# ---------------------------------------------------------------------------
# serialization (bit-exact round trip through JSON)


def disorder_to_json(dis: Disorder) -> str:
    payload = {
        "d": dis.d,
        "box_lo": list(dis.box_lo),
        "box_hi": list(dis.box_hi),
        "seed": dis.seed,
        "dist": dis.dist.name,
        "shift": list(dis.shift),
        "sign": dis.sign,
        "values": [v.hex() for v in dis.values.ravel().tolist()],
    }
    return json.dumps(payload)


def disorder_from_json(text: str) -> Disorder:
    payload = json.loads(text)
    dis = sample_disorder(payload["box_lo"], payload["box_hi"],
                          dist=DistSpec(payload["dist"]), seed=payload["seed"],
                          shift=payload["shift"], sign=payload["sign"])
    stored = np.array([float.fromhex(v) for v in payload["values"]])
    if not np.array_equal(stored, dis.values.ravel()):
        # regenerated values must agree bit-exactly with the snapshot
        raise ValueError("disorder snapshot does not match regenerated values")
    return dis
