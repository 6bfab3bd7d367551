"""Hot summation kernels: dense pairwise loops and FFT convolutions.

Two independent choices live here:

* backend -- ``numba`` (njit loops) or ``numpy`` (vectorized), selected once
  at import from the env var ``FRACWELL_BACKEND`` (``auto`` | ``numba`` |
  ``numpy``; ``auto`` prefers numba when importable).
* path -- ``dense`` pairwise accumulation versus the ``fft`` circulant
  embedding for the translation-invariant matvec. Both are exposed so the
  agreement gate (relative 1e-12) can be tested; higher layers pick per size.

All loops use a fixed accumulation order, so results are reproducible and
exactly antisymmetric under global sign flips of the field.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = [
    "active_backend",
    "pair_energy_dense",
    "pair_energy_conv",
    "matvec_dense",
    "embed_kernel",
    "matvec_fft",
    "masked_pair_energy",
    "cross_pair_energy",
    "cross_matvec",
    "cross_degree",
]

_FLAG = os.environ.get("FRACWELL_BACKEND", "auto").lower()
if _FLAG not in ("auto", "numba", "numpy"):
    raise RuntimeError(f"FRACWELL_BACKEND must be auto|numba|numpy, got {_FLAG!r}")

_NUMBA_OK = False
if _FLAG in ("auto", "numba"):
    try:
        from numba import njit
        _NUMBA_OK = True
    except ImportError:
        if _FLAG == "numba":
            raise
        _NUMBA_OK = False

_BACKEND = "numba" if _NUMBA_OK else "numpy"


def active_backend() -> str:
    return _BACKEND


# ---------------------------------------------------------------------------
# numba implementations

if _NUMBA_OK:

    @njit(cache=True)
    def _pair_energy_1d(v, ker):
        n = v.shape[0]
        acc = 0.0
        for i in range(n):
            vi = v[i]
            for j in range(i + 1, n):
                dv = vi - v[j]
                acc += ker[j - i] * dv * dv
        return 2.0 * acc

    @njit(cache=True)
    def _pair_energy_2d(v, ker):
        n1, n2 = v.shape
        acc = 0.0
        for a1 in range(n1):
            for a2 in range(n2):
                va = v[a1, a2]
                for b2 in range(a2 + 1, n2):
                    dv = va - v[a1, b2]
                    acc += ker[0, b2 - a2] * dv * dv
                for b1 in range(a1 + 1, n1):
                    for b2 in range(n2):
                        dv = va - v[b1, b2]
                        acc += ker[b1 - a1, abs(b2 - a2)] * dv * dv
        return 2.0 * acc

    @njit(cache=True)
    def _matvec_1d(v, ker):
        n = v.shape[0]
        out = np.zeros(n)
        for i in range(n):
            s = 0.0
            for j in range(n):
                d = i - j
                if d < 0:
                    d = -d
                s += ker[d] * v[j]
            out[i] = s
        return out

    @njit(cache=True)
    def _matvec_2d(v, ker):
        n1, n2 = v.shape
        out = np.zeros((n1, n2))
        for a1 in range(n1):
            for a2 in range(n2):
                s = 0.0
                for b1 in range(n1):
                    d1 = a1 - b1
                    if d1 < 0:
                        d1 = -d1
                    for b2 in range(n2):
                        d2 = a2 - b2
                        if d2 < 0:
                            d2 = -d2
                        s += ker[d1, d2] * v[b1, b2]
                out[a1, a2] = s
        return out

    @njit(cache=True)
    def _masked_pair_energy_nb(vals, pos, ker1, ker2, two_d):
        mm = vals.shape[0]
        acc = 0.0
        for i in range(mm):
            vi = vals[i]
            for j in range(i + 1, mm):
                dv = vi - vals[j]
                if two_d:
                    acc += ker2[abs(pos[i, 0] - pos[j, 0]),
                                abs(pos[i, 1] - pos[j, 1])] * dv * dv
                else:
                    acc += ker1[abs(pos[i, 0] - pos[j, 0])] * dv * dv
        return 2.0 * acc

    @njit(cache=True)
    def _cross_pair_energy_nb(va, pa, vb, pb, ker1, ker2, two_d):
        acc = 0.0
        for i in range(va.shape[0]):
            ai = va[i]
            for j in range(vb.shape[0]):
                dv = ai - vb[j]
                if two_d:
                    acc += ker2[abs(pa[i, 0] - pb[j, 0]),
                                abs(pa[i, 1] - pb[j, 1])] * dv * dv
                else:
                    acc += ker1[abs(pa[i, 0] - pb[j, 0])] * dv * dv
        return acc

    @njit(cache=True)
    def _cross_matvec_nb(pa, vb, pb, ker1, ker2, two_d):
        out = np.zeros(pa.shape[0])
        for i in range(pa.shape[0]):
            s = 0.0
            for j in range(vb.shape[0]):
                if two_d:
                    s += ker2[abs(pa[i, 0] - pb[j, 0]),
                              abs(pa[i, 1] - pb[j, 1])] * vb[j]
                else:
                    s += ker1[abs(pa[i, 0] - pb[j, 0])] * vb[j]
            out[i] = s
        return out


# ---------------------------------------------------------------------------
# numpy implementations

def _offsets(pa: np.ndarray, pb: np.ndarray) -> tuple:
    return tuple(np.abs(pa[:, k:k + 1] - pb[:, k].T) for k in range(pa.shape[1]))


def _ker_lookup(ker: np.ndarray, pa: np.ndarray, pb: np.ndarray) -> np.ndarray:
    offs = _offsets(pa, pb)
    return ker[offs] if len(offs) == 1 else ker[offs[0], offs[1]]


def _pair_energy_np(v: np.ndarray, ker: np.ndarray) -> float:
    pos = np.indices(v.shape).reshape(v.ndim, -1).T
    kmat = _ker_lookup(ker, pos, pos)  # diagonal hits ker[0...] == 0
    flat = v.ravel()
    dv = flat[:, None] - flat[None, :]
    return float(np.sum(kmat * dv * dv))


def _matvec_np(v: np.ndarray, ker: np.ndarray) -> np.ndarray:
    pos = np.indices(v.shape).reshape(v.ndim, -1).T
    kmat = _ker_lookup(ker, pos, pos)
    return (kmat @ v.ravel()).reshape(v.shape)


# ---------------------------------------------------------------------------
# public dispatchers

def pair_energy_dense(v: np.ndarray, ker: np.ndarray) -> float:
    """Sum over ordered point pairs of ``K(i-j) (v_i - v_j)^2``."""
    if _BACKEND == "numba":
        if v.ndim == 1:
            return float(_pair_energy_1d(v, ker))
        return float(_pair_energy_2d(v, ker))
    return _pair_energy_np(v, ker)


def matvec_dense(v: np.ndarray, ker: np.ndarray) -> np.ndarray:
    if _BACKEND == "numba":
        if v.ndim == 1:
            return _matvec_1d(v, ker)
        return _matvec_2d(v, ker)
    return _matvec_np(v, ker)


def embed_kernel(ker: np.ndarray) -> np.ndarray:
    """Circulant embedding of the symmetric offset table (for FFT matvec)."""
    if ker.ndim == 1:
        L = ker.shape[0]
        c = np.zeros(2 * L)
        c[:L] = ker
        c[L + 1:] = ker[L - 1:0:-1]
        return c
    L1, L2 = ker.shape
    c = np.zeros((2 * L1, 2 * L2))
    c[:L1, :L2] = ker
    c[:L1, L2 + 1:] = ker[:, L2 - 1:0:-1]
    c[L1 + 1:, :L2] = ker[L1 - 1:0:-1, :]
    c[L1 + 1:, L2 + 1:] = ker[L1 - 1:0:-1, L2 - 1:0:-1]
    return c


def matvec_fft(v: np.ndarray, ker_hat: np.ndarray, padded_shape: tuple) -> np.ndarray:
    """Toeplitz / block-Toeplitz matvec through the circulant embedding.

    ``ker_hat`` is ``rfftn(embed_kernel(ker))``; agreement with the dense
    path is gated at relative 1e-12 in the test suite.
    """
    pad = np.zeros(padded_shape)
    if v.ndim == 1:
        pad[:v.shape[0]] = v
        out = np.fft.irfft(np.fft.rfft(pad) * ker_hat, n=padded_shape[0])
        return out[:v.shape[0]]
    pad[:v.shape[0], :v.shape[1]] = v
    out = np.fft.irfftn(np.fft.rfftn(pad) * ker_hat, s=padded_shape,
                        axes=(0, 1))
    return out[:v.shape[0], :v.shape[1]]


def _split_kers(ker: np.ndarray):
    if ker.ndim == 1:
        return ker, np.zeros((1, 1)), False
    return np.zeros(1), ker, True


def masked_pair_energy(vals: np.ndarray, pos: np.ndarray, ker: np.ndarray) -> float:
    """Ordered-pair kernel sum restricted to an arbitrary point subset.

    ``pos`` holds (M, d) integer lattice indices on the kernel's lattice.
    """
    if vals.shape[0] < 2:
        return 0.0
    if _BACKEND == "numba":
        k1, k2, twod = _split_kers(ker)
        return float(_masked_pair_energy_nb(vals, pos, k1, k2, twod))
    kmat = _ker_lookup(ker, pos, pos)
    dv = vals[:, None] - vals[None, :]
    return float(np.sum(kmat * dv * dv))


def cross_pair_energy(va, pa, vb, pb, ker) -> float:
    """One-directional kernel sum between two disjoint point sets."""
    if va.shape[0] == 0 or vb.shape[0] == 0:
        return 0.0
    if _BACKEND == "numba":
        k1, k2, twod = _split_kers(ker)
        return float(_cross_pair_energy_nb(va, pa, vb, pb, k1, k2, twod))
    kmat = _ker_lookup(ker, pa, pb)
    dv = va[:, None] - vb[None, :]
    return float(np.sum(kmat * dv * dv))


def cross_matvec(pa, vb, pb, ker) -> np.ndarray:
    """Per-point sums ``sum_j K(i - j) u_j`` against a fixed outside set."""
    if vb.shape[0] == 0:
        return np.zeros(pa.shape[0])
    if _BACKEND == "numba":
        k1, k2, twod = _split_kers(ker)
        return _cross_matvec_nb(pa, vb, pb, k1, k2, twod)
    return _ker_lookup(ker, pa, pb) @ vb


def cross_degree(pa, pb, ker) -> np.ndarray:
    """Per-point kernel mass ``sum_j K(i - j)`` against an outside set."""
    return cross_matvec(pa, np.ones(pb.shape[0]), pb, ker)
