import subprocess
import sys

import numpy as np
import pytest

from fracwell import kernels
from fracwell.energy import KernelTable
from fracwell.lattice import make_grid


@pytest.mark.parametrize("d,n", [(1, 512), (2, 24)])
def test_fft_matvec_matches_dense(d, n):
    # correctness gate for the fast path: relative 1e-12 against dense
    grid = make_grid(d, n, 1)
    kt = KernelTable.from_grid(grid, 0.6)
    rng = np.random.default_rng(3)
    v = rng.standard_normal(grid.shape)
    dense = kt.matvec(v, path="dense")
    fast = kt.matvec(v, path="fft")
    err = np.abs(fast - dense).max() / np.abs(dense).max()
    assert err < 1e-12


@pytest.mark.parametrize("d,n", [(1, 64), (2, 8)])
def test_conv_energy_matches_pair_energy(d, n):
    grid = make_grid(d, n, 1)
    kt = KernelTable.from_grid(grid, 0.35)
    rng = np.random.default_rng(4)
    v = rng.uniform(-2, 2, grid.shape)
    e_pair = kt.pair_energy(v)
    for path in ("dense", "fft"):
        e_conv = kt.pair_energy_conv(v, path=path)
        assert e_conv == pytest.approx(e_pair, rel=1e-12)


def test_kernel_table_symmetry_monotone():
    kt1 = KernelTable.from_grid(make_grid(1, 32, 2), 0.5)
    assert kt1.ker[0] == 0.0
    assert np.all(kt1.ker[1:] > 0)
    assert np.all(np.diff(kt1.ker[1:]) < 0)
    kt2 = KernelTable.from_grid(make_grid(2, 8, 1), 0.5)
    assert kt2.ker[0, 0] == 0.0
    assert np.all(np.diff(kt2.ker[1:, 0]) < 0)
    assert np.all(np.diff(kt2.ker[0, 1:]) < 0)
    assert np.array_equal(kt2.ker, kt2.ker.T)


def test_masked_equals_full():
    grid = make_grid(1, 32, 1)
    kt = KernelTable.from_grid(grid, 0.7)
    rng = np.random.default_rng(5)
    v = rng.uniform(-1, 1, grid.npoints)
    pos = grid.index_grid()
    full = kernels.masked_pair_energy(v, pos, kt.ker)
    assert full == pytest.approx(kt.pair_energy(v), rel=1e-12)


def test_cross_terms_against_bruteforce():
    grid = make_grid(2, 6, 1)
    kt = KernelTable.from_grid(grid, 0.4)
    rng = np.random.default_rng(6)
    v = rng.uniform(-1, 1, grid.npoints)
    mask = rng.uniform(size=grid.npoints) < 0.4
    pos = grid.index_grid()
    pa, pb = pos[mask], pos[~mask]
    va, vb = v[mask], v[~mask]
    brute = 0.0
    brute_mv = np.zeros(va.size)
    for i in range(va.size):
        for j in range(vb.size):
            k = kt.ker[abs(pa[i, 0] - pb[j, 0]), abs(pa[i, 1] - pb[j, 1])]
            brute += k * (va[i] - vb[j]) ** 2
            brute_mv[i] += k * vb[j]
    assert kernels.cross_pair_energy(va, pa, vb, pb, kt.ker) == pytest.approx(
        brute, rel=1e-12)
    assert np.allclose(kernels.cross_matvec(pa, vb, pb, kt.ker), brute_mv,
                       rtol=1e-12)


def test_numpy_backend_agrees():
    # the env-selected fallback must agree with the default backend
    code = (
        "import numpy as np\n"
        "from fracwell.energy import KernelTable\n"
        "from fracwell.lattice import make_grid\n"
        "from fracwell import kernels\n"
        "grid = make_grid(1, 64, 1)\n"
        "kt = KernelTable.from_grid(grid, 0.6)\n"
        "v = np.random.default_rng(9).uniform(-1, 1, grid.shape)\n"
        "print(repr(kt.pair_energy(v)))\n"
        "print(repr(float(kt.matvec(v, path='dense').sum())))\n"
        "print(kernels.active_backend())\n"
    )
    outs = {}
    for backend in ("numba", "numpy"):
        proc = subprocess.run([sys.executable, "-c", code],
                              capture_output=True, text=True,
                              env={"FRACWELL_BACKEND": backend,
                                   "PATH": "/usr/bin:/bin"})
        assert proc.returncode == 0, proc.stderr
        lines = proc.stdout.strip().splitlines()
        assert lines[2] == backend
        outs[backend] = (float(lines[0]), float(lines[1]))
    for a, b in zip(outs["numba"], outs["numpy"]):
        assert a == pytest.approx(b, rel=1e-12)
