"""Discrete energy: interior kernel sum, potential, disorder and exterior terms.

The interaction kernel is collocated at cell-center distances with the
diagonal excluded: ``K(i-j) = h^{2d} / |x_i - x_j|^{d+2s}`` per ordered pair,
mirroring the symmetric double integral. The exterior of the domain enters
through per-point tail moments ``w_i = int_{outside} |x_i - y|^{-(d+2s)} dy``
(closed form in d=1, exact radial integration plus per-edge Gauss angular
quadrature in d=2) and, for window exteriors, through pairwise sums against
the window points.

Conventions fixed here and used everywhere else:

* the interior double sum runs over ordered pairs (both (i,j) and (j,i));
* the exterior interaction carries the explicit leading factor 2;
* all exterior descriptors are clamped/negated together with the field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import kernels
from .lattice import Disorder, Grid, g1_on_grid
from .potential import PotentialSpec

__all__ = [
    "ConstantExterior",
    "WindowExterior",
    "ScalarField",
    "KernelTable",
    "EnergyBreakdown",
    "exterior_weights",
    "weight_mass",
    "build_exterior_operator",
    "interior_energy",
    "exterior_interaction",
    "total_energy",
    "region_energy",
    "interaction_energy",
    "gradient",
    "el_residual",
]


# ---------------------------------------------------------------------------
# fields and exterior descriptors


@dataclass(frozen=True)
class ConstantExterior:
    """Field equals a constant on the whole exterior of the domain."""
    value: float


@dataclass(frozen=True)
class WindowExterior:
    """Exterior values prescribed on a larger grid, constant beyond it.

    ``values`` is a flat array over all points of ``big_grid``; only the
    entries outside the inner domain are meaningful.
    """
    big_grid: Grid
    values: np.ndarray
    tail: float


Exterior = Union[ConstantExterior, WindowExterior]


@dataclass
class ScalarField:
    grid: Grid
    values: np.ndarray
    exterior: Exterior

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if self.values.shape[0] != self.grid.npoints:
            raise ValueError("field values do not match the grid size")
        if not np.isfinite(self.values).all():
            raise ValueError("field has non-finite values")
        if isinstance(self.exterior, WindowExterior):
            _check_window(self.grid, self.exterior)

    def shaped(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, values, self.exterior)

    def linf(self) -> float:
        sup = float(np.abs(self.values).max())
        ext = self.exterior
        if isinstance(ext, ConstantExterior):
            return max(sup, abs(ext.value))
        mask = _annulus_mask(self.grid, ext)
        return max(sup, float(np.abs(ext.values[mask]).max()), abs(ext.tail))

    def exterior_sup(self) -> float:
        ext = self.exterior
        if isinstance(ext, ConstantExterior):
            return abs(ext.value)
        mask = _annulus_mask(self.grid, ext)
        return max(float(np.abs(ext.values[mask]).max()), abs(ext.tail))


def constant_field(grid: Grid, value: float, exterior: Exterior) -> ScalarField:
    return ScalarField(grid, np.full(grid.npoints, float(value)), exterior)


def _check_window(grid: Grid, ext: WindowExterior) -> None:
    big = ext.big_grid
    if big.d != grid.d or big.m != grid.m:
        raise ValueError("window grid must share dimension and refinement")
    if big.n <= grid.n:
        raise ValueError("window grid must be strictly larger than the domain")
    if np.asarray(ext.values).size != big.npoints:
        raise ValueError("window values do not match the window grid")


def _annulus_mask(grid: Grid, ext: WindowExterior) -> np.ndarray:
    return ~ext.big_grid.inner_mask(grid.half)


def _inner_offset(grid: Grid, big: Grid) -> int:
    return (big.n - grid.n) * grid.m // 2


# ---------------------------------------------------------------------------
# kernel table


class KernelTable:
    """Per-offset interaction weights on a collocation lattice.

    One table built on the largest lattice in play serves every sub-lattice
    with the same spacing, because entries depend only on the integer offset.
    """

    def __init__(self, d: int, s: float, m: int, shape: tuple):
        if not 0.0 < s < 1.0:
            raise ValueError(f"s must lie in (0, 1), got {s}")
        self.d = d
        self.s = s
        self.m = m
        self.h = 1.0 / m
        self.shape = tuple(shape)
        self.ker = self._build()
        self._deg_dense: dict = {}
        self._deg_fft: dict = {}
        self._fft_cache: dict = {}

    @classmethod
    def from_grid(cls, grid: Grid, s: float) -> "KernelTable":
        return cls(grid.d, s, grid.m, grid.shape)

    def _build(self) -> np.ndarray:
        expo = self.d + 2.0 * self.s
        scale = self.h ** (2 * self.d)
        if self.d == 1:
            r = np.arange(self.shape[0], dtype=np.float64) * self.h
            ker = np.zeros(self.shape[0])
            ker[1:] = scale / r[1:] ** expo
            return ker
        a = np.arange(self.shape[0], dtype=np.float64)
        b = np.arange(self.shape[1], dtype=np.float64)
        r = np.hypot(a[:, None], b[None, :]) * self.h
        ker = np.zeros(self.shape)
        ker.flat[1:] = scale / r.flat[1:] ** expo
        ker[0, 0] = 0.0
        return ker

    def _sliced(self, shape: tuple) -> np.ndarray:
        if tuple(shape) == self.shape:
            return self.ker
        if any(a > b for a, b in zip(shape, self.shape)):
            raise ValueError(
                f"kernel table built for lattice {self.shape} cannot serve "
                f"offsets of lattice {tuple(shape)}; build it on the larger "
                "lattice (window exteriors need the window's table)")
        if self.d == 1:
            return np.ascontiguousarray(self.ker[: shape[0]])
        return np.ascontiguousarray(self.ker[: shape[0], : shape[1]])

    def total_mass(self) -> float:
        """Upper bound on the per-point kernel degree, for step sizing."""
        return float(self.deg(self.shape).max())

    # -- dense / fft matvec with per-shape caches

    def matvec(self, v: np.ndarray, path: str = "auto") -> np.ndarray:
        path = self._resolve(path, v.size)
        ker = self._sliced(v.shape)
        if path == "dense":
            return kernels.matvec_dense(v, ker)
        ker_hat, padded = self._fft_kernel(v.shape)
        return kernels.matvec_fft(v, ker_hat, padded)

    def deg(self, shape: tuple, path: str = "auto") -> np.ndarray:
        path = self._resolve(path, int(np.prod(shape)))
        cache = self._deg_dense if path == "dense" else self._deg_fft
        key = tuple(shape)
        if key not in cache:
            ones = np.ones(shape)
            cache[key] = self.matvec(ones, path=path)
        return cache[key]

    def _fft_kernel(self, shape: tuple):
        key = tuple(shape)
        if key not in self._fft_cache:
            emb = kernels.embed_kernel(self._sliced(shape))
            if self.d == 1:
                self._fft_cache[key] = (np.fft.rfft(emb), emb.shape)
            else:
                self._fft_cache[key] = (np.fft.rfftn(emb), emb.shape)
        return self._fft_cache[key]

    @staticmethod
    def _resolve(path: str, size: int) -> str:
        if path == "auto":
            return "fft" if size >= 256 else "dense"
        if path not in ("dense", "fft"):
            raise ValueError(f"unknown matvec path {path!r}")
        return path

    # -- energies

    def pair_energy(self, v: np.ndarray) -> float:
        """Ordered-pair Gagliardo sum (dense accumulation of positive terms)."""
        return kernels.pair_energy_dense(v, self._sliced(v.shape))

    def pair_energy_conv(self, v: np.ndarray, path: str = "fft") -> float:
        """Same sum through the matvec identity; used by the agreement gate."""
        deg = self.deg(v.shape, path=path)
        kv = self.matvec(v, path=path)
        return 2.0 * (float(np.sum(deg * v * v)) - float(np.sum(v * kv)))


# ---------------------------------------------------------------------------
# exterior weights


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(48)


def exterior_weights(points: np.ndarray, half: float, d: int, s: float) -> np.ndarray:
    """Zeroth kernel moment of the exterior of ``(-half, half)^d`` per point."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if np.any(np.abs(points) >= half):
        raise ValueError("exterior weights need points strictly inside the box")
    if d == 1:
        x = points[:, 0]
        return ((x + half) ** (-2 * s) + (half - x) ** (-2 * s)) / (2 * s)
    return _weights_2d(points, half, s)


def _weights_2d(points: np.ndarray, half: float, s: float) -> np.ndarray:
    # radial integral is exact: w = (1/2s) * int rho(phi)^(-2s) dphi, with
    # rho the exit distance to the square; integrate each smooth arc between
    # corner directions by Gauss-Legendre
    x = points[:, 0][:, None]
    y = points[:, 1][:, None]
    cx = np.array([half, half, -half, -half])
    cy = np.array([half, -half, half, -half])
    ang = np.sort(np.arctan2(cy[None, :] - y, cx[None, :] - x), axis=1)
    lo = ang
    hi = np.concatenate([ang[:, 1:], ang[:, :1] + 2 * np.pi], axis=1)
    mid = 0.5 * (hi + lo)[:, :, None]
    rad = 0.5 * (hi - lo)[:, :, None]
    phi = mid + rad * _GL_NODES[None, None, :]
    c = np.cos(phi)
    sn = np.sin(phi)
    with np.errstate(divide="ignore"):
        tx = (np.where(c >= 0, half, -half) - x[:, :, None]) / c
        ty = (np.where(sn >= 0, half, -half) - y[:, :, None]) / sn
    tx = np.where(np.abs(c) < 1e-300, np.inf, tx)
    ty = np.where(np.abs(sn) < 1e-300, np.inf, ty)
    rho = np.minimum(tx, ty)
    seg = np.sum(rho ** (-2 * s) * _GL_WEIGHTS[None, None, :], axis=2) * rad[:, :, 0]
    return seg.sum(axis=1) / (2 * s)


def weight_mass(grid: Grid, s: float) -> float:
    """``h^d * sum_i w_i`` -- the boundary-interaction mass of the domain."""
    w = exterior_weights(grid.coords(), grid.half, grid.d, s)
    return grid.h ** grid.d * float(np.sum(w))


def cached_tables(cache_dir: str, grid: Grid, s: float):
    """Kernel and exterior-weight tables, disk-cached by (d, n, m, s).

    Returns ``(KernelTable, weights)``; the weights are the grid's own
    exterior moments. Cached values are verified against a freshly built
    kernel row so a stale file cannot silently poison a run.
    """
    import os
    os.makedirs(cache_dir, exist_ok=True)
    path = os.path.join(cache_dir,
                        f"tables_d{grid.d}_n{grid.n}_m{grid.m}_s{s:.17g}.npz")
    kt = KernelTable.from_grid(grid, s)
    if os.path.exists(path):
        data = np.load(path)
        if (data["ker"].shape == kt.ker.shape
                and np.array_equal(data["ker"], kt.ker)):
            return kt, data["weights"]
    weights = exterior_weights(grid.coords(), grid.half, grid.d, s)
    np.savez(path, ker=kt.ker, weights=weights)
    return kt, weights


# ---------------------------------------------------------------------------
# exterior operator (precomputed linear/quadratic data for fast evaluation)


@dataclass
class ExteriorOperator:
    h_d: float
    wtail: np.ndarray
    tail_const: float
    cdeg: Optional[np.ndarray]      # kernel degree against window points
    ext_lin: Optional[np.ndarray]   # kernel matvec of the window values
    u2: float                       # quadratic window constant

    def energy(self, v: np.ndarray) -> float:
        dv = v - self.tail_const
        acc = self.h_d * float(np.sum(dv * dv * self.wtail))
        if self.cdeg is not None:
            acc += (float(np.sum(self.cdeg * v * v))
                    - 2.0 * float(np.sum(v * self.ext_lin)) + self.u2)
        return 2.0 * acc

    def grad(self, v: np.ndarray) -> np.ndarray:
        g = 4.0 * self.h_d * self.wtail * (v - self.tail_const)
        if self.cdeg is not None:
            g = g + 4.0 * (self.cdeg * v - self.ext_lin)
        return g

    def max_weight(self) -> float:
        top = float(self.wtail.max()) * self.h_d
        if self.cdeg is not None:
            top += float(self.cdeg.max())
        return top


def build_exterior_operator(field: ScalarField, kt: KernelTable) -> ExteriorOperator:
    grid = field.grid
    h_d = grid.h ** grid.d
    ext = field.exterior
    if isinstance(ext, ConstantExterior):
        w = exterior_weights(grid.coords(), grid.half, grid.d, kt.s)
        return ExteriorOperator(h_d, w, ext.value, None, None, 0.0)
    big = ext.big_grid
    off = _inner_offset(grid, big)
    pos_in = grid.index_grid() + off
    ann = _annulus_mask(grid, ext)
    pos_ann = big.index_grid()[ann]
    vals_ann = np.asarray(ext.values, dtype=np.float64).ravel()[ann]
    ker = kt._sliced(big.shape)
    cdeg = kernels.cross_degree(pos_in, pos_ann, ker)
    ext_lin = kernels.cross_matvec(pos_in, vals_ann, pos_ann, ker)
    cdeg_b = kernels.cross_degree(pos_ann, pos_in, ker)
    u2 = float(np.sum(vals_ann * vals_ann * cdeg_b))
    w = exterior_weights(grid.coords(), big.half, grid.d, kt.s)
    return ExteriorOperator(h_d, w, ext.tail, cdeg, ext_lin, u2)


# ---------------------------------------------------------------------------
# energies


@dataclass
class EnergyBreakdown:
    gagliardo: float
    potential: float
    disorder: float
    exterior: float

    @property
    def k1(self) -> float:
        return self.gagliardo + self.potential + self.disorder

    @property
    def total(self) -> float:
        return self.gagliardo + self.potential + self.disorder + self.exterior

    def as_dict(self) -> dict:
        return {
            "gagliardo": self.gagliardo,
            "potential": self.potential,
            "disorder": self.disorder,
            "exterior": self.exterior,
            "total": self.total,
        }


def _g1(field_grid: Grid, disorder) -> np.ndarray:
    if disorder is None:
        return np.zeros(field_grid.npoints)
    if isinstance(disorder, Disorder):
        return g1_on_grid(disorder, field_grid)
    return np.asarray(disorder, dtype=np.float64).ravel()


def interior_energy(field: ScalarField, disorder, theta: float,
                    kt: KernelTable, pot: Optional[PotentialSpec]) -> float:
    """Interior part: kernel double sum + potential - disorder coupling."""
    grid = field.grid
    h_d = grid.h ** grid.d
    v = field.shaped()
    gag = kt.pair_energy(v)
    pot_term = h_d * float(np.sum(pot.w(field.values))) if pot is not None else 0.0
    dis_term = 0.0
    if theta != 0.0:
        g1 = _g1(grid, disorder)
        dis_term = -theta * h_d * float(np.sum(g1 * field.values))
    return gag + pot_term + dis_term


def exterior_interaction(field: ScalarField, kt: KernelTable,
                         ext_op: Optional[ExteriorOperator] = None) -> float:
    """The interaction of the field on the domain with its exterior data."""
    if ext_op is None:
        ext_op = build_exterior_operator(field, kt)
    return ext_op.energy(field.values)


def total_energy(field: ScalarField, disorder, theta: float, kt: KernelTable,
                 pot: Optional[PotentialSpec],
                 ext_op: Optional[ExteriorOperator] = None) -> EnergyBreakdown:
    grid = field.grid
    h_d = grid.h ** grid.d
    gag = kt.pair_energy(field.shaped())
    pot_term = h_d * float(np.sum(pot.w(field.values))) if pot is not None else 0.0
    dis_term = 0.0
    if theta != 0.0:
        g1 = _g1(grid, disorder)
        dis_term = -theta * h_d * float(np.sum(g1 * field.values))
    ext = exterior_interaction(field, kt, ext_op)
    return EnergyBreakdown(gag, pot_term, dis_term, ext)


def _environment(field: ScalarField, kt: KernelTable):
    """Common-lattice positions plus exterior point/tail data for region sums."""
    grid = field.grid
    ext = field.exterior
    if isinstance(ext, ConstantExterior):
        pos = grid.index_grid()
        lattice_shape = grid.shape
        chunks = []
        w = exterior_weights(grid.coords(), grid.half, grid.d, kt.s)
        tail_c = ext.value
    else:
        big = ext.big_grid
        off = _inner_offset(grid, big)
        pos = grid.index_grid() + off
        lattice_shape = big.shape
        ann = _annulus_mask(grid, ext)
        chunks = [(big.index_grid()[ann],
                   np.asarray(ext.values, dtype=np.float64).ravel()[ann])]
        w = exterior_weights(grid.coords(), big.half, grid.d, kt.s)
        tail_c = ext.tail
    return pos, lattice_shape, chunks, w, tail_c


def region_energy(field: ScalarField, mask: np.ndarray, disorder, theta: float,
                  kt: KernelTable, pot: Optional[PotentialSpec]) -> EnergyBreakdown:
    """Energy contribution of a subset of collocation points.

    The interior part runs over pairs inside the subset; the exterior part
    collects the interaction of the subset with everything outside it (the
    rest of the grid with the field's own values, the window points and the
    constant tail).
    """
    grid = field.grid
    mask = np.asarray(mask, dtype=bool).ravel()
    h_d = grid.h ** grid.d
    pos, lattice_shape, chunks, w, tail_c = _environment(field, kt)
    ker = kt._sliced(lattice_shape)
    vals = field.values[mask]
    pos_in = np.ascontiguousarray(pos[mask])
    gag = kernels.masked_pair_energy(vals, pos_in, ker)
    pot_term = h_d * float(np.sum(pot.w(vals))) if pot is not None else 0.0
    dis_term = 0.0
    if theta != 0.0:
        g1 = _g1(grid, disorder)
        dis_term = -theta * h_d * float(np.sum(g1[mask] * vals))
    ext_acc = kernels.cross_pair_energy(
        vals, pos_in, field.values[~mask], np.ascontiguousarray(pos[~mask]), ker)
    for pos_b, vals_b in chunks:
        ext_acc += kernels.cross_pair_energy(vals, pos_in, vals_b,
                                             np.ascontiguousarray(pos_b), ker)
    dv = vals - tail_c
    ext_acc += h_d * float(np.sum(dv * dv * w[mask]))
    return EnergyBreakdown(gag, pot_term, dis_term, 2.0 * ext_acc)


def interaction_energy(field: ScalarField, mask_a: np.ndarray, mask_b: np.ndarray,
                       kt: KernelTable, values_b: Optional[np.ndarray] = None) -> float:
    """``2 x`` kernel sum between two disjoint point subsets of one grid.

    ``values_b`` substitutes the field values on the second subset (used by
    the glue bookkeeping, where the two factors come from different fields).
    """
    mask_a = np.asarray(mask_a, dtype=bool).ravel()
    mask_b = np.asarray(mask_b, dtype=bool).ravel()
    if np.any(mask_a & mask_b):
        raise ValueError("interaction subsets must be disjoint")
    pos, lattice_shape, _, _, _ = _environment(field, kt)
    ker = kt._sliced(lattice_shape)
    vb = field.values if values_b is None else np.asarray(values_b).ravel()
    return 2.0 * kernels.cross_pair_energy(
        field.values[mask_a], np.ascontiguousarray(pos[mask_a]),
        vb[mask_b], np.ascontiguousarray(pos[mask_b]), ker)


# ---------------------------------------------------------------------------
# gradient and Euler-Lagrange residual


def gradient(field: ScalarField, disorder, theta: float, kt: KernelTable,
             pot: Optional[PotentialSpec],
             ext_op: Optional[ExteriorOperator] = None,
             path: str = "auto") -> np.ndarray:
    """Exact derivative of the discrete total energy in the interior values."""
    grid = field.grid
    h_d = grid.h ** grid.d
    v = field.shaped()
    deg = kt.deg(v.shape, path=path)
    kv = kt.matvec(v, path=path)
    g = 4.0 * (deg * v - kv).ravel()
    if pot is not None:
        g = g + h_d * pot.wp(field.values)
    if theta != 0.0:
        g = g - theta * h_d * _g1(grid, disorder)
    if ext_op is None:
        ext_op = build_exterior_operator(field, kt)
    return g + ext_op.grad(field.values)


def el_residual(field: ScalarField, disorder, theta: float, kt: KernelTable,
                pot: Optional[PotentialSpec],
                ext_op: Optional[ExteriorOperator] = None) -> float:
    """Max-norm Euler-Lagrange residual, normalized as gradient / (2 h^d)."""
    g = gradient(field, disorder, theta, kt, pot, ext_op)
    h_d = field.grid.h ** field.grid.d
    return float(np.abs(g).max()) / (2.0 * h_d)
