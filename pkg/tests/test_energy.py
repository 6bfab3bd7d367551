import numpy as np
import pytest
from scipy.integrate import quad

from fracwell.energy import (ConstantExterior, KernelTable, ScalarField,
                             WindowExterior, build_exterior_operator,
                             el_residual, exterior_interaction,
                             exterior_weights, gradient, interior_energy,
                             region_energy, total_energy, weight_mass)
from fracwell.lattice import (DistSpec, g1_on_grid, make_grid,
                              negate_disorder, sample_disorder)
from fracwell.potential import build_potential

POT = build_potential(1.0, 0.5)


def _setup(d, n, s, seed=1, m=1):
    grid = make_grid(d, n, m)
    kt = KernelTable.from_grid(grid, s)
    dis = sample_disorder(*grid.site_box(), seed=seed)
    return grid, kt, dis


def test_two_point_gagliardo():
    # two points at distance 1, exponent d + 2s = 2, ordered pairs -> 2
    grid, kt, _ = _setup(1, 2, 0.5)
    f = ScalarField(grid, np.array([0.0, 1.0]), ConstantExterior(0.0))
    assert kt.pair_energy(f.shaped()) == 2.0


def test_constant_field_zero_total():
    grid, kt, _ = _setup(1, 16, 0.3)
    f = ScalarField(grid, np.ones(grid.npoints), ConstantExterior(1.0))
    bd = total_energy(f, None, 0.0, kt, POT)
    assert bd.total == 0.0
    assert bd.gagliardo == 0.0 and bd.exterior == 0.0


def test_zero_field_kills_disorder_term():
    grid, kt, dis = _setup(1, 8, 0.5)
    f = ScalarField(grid, np.zeros(grid.npoints), ConstantExterior(0.0))
    bd = total_energy(f, dis, 2.0, kt, POT)
    assert bd.disorder == 0.0
    assert bd.potential == pytest.approx(grid.npoints * POT.w(0.0) * grid.h,
                                         rel=1e-14)


def test_breakdown_total_is_sum():
    grid, kt, dis = _setup(2, 6, 0.7)
    rng = np.random.default_rng(0)
    f = ScalarField(grid, rng.uniform(-2, 2, grid.npoints),
                    ConstantExterior(0.5))
    bd = total_energy(f, dis, 1.0, kt, POT)
    assert bd.total == bd.gagliardo + bd.potential + bd.disorder + bd.exterior
    assert np.isfinite(list(bd.as_dict().values())).all()


def test_gradient_theta_linearity():
    grid, kt, dis = _setup(1, 12, 0.5)
    rng = np.random.default_rng(2)
    f = ScalarField(grid, rng.uniform(-1, 1, grid.npoints),
                    ConstantExterior(0.0))
    g1 = g1_on_grid(dis, grid)
    ga = gradient(f, dis, 0.5, kt, POT)
    gb = gradient(f, dis, 2.0, kt, POT)
    assert np.allclose(gb - ga, -1.5 * grid.h * g1, rtol=0, atol=1e-14)


def test_gradient_zero_at_critical_point():
    grid, kt, _ = _setup(1, 10, 0.25)
    f = ScalarField(grid, np.ones(grid.npoints), ConstantExterior(1.0))
    g = gradient(f, None, 0.0, kt, POT)
    assert np.abs(g).max() == 0.0


def test_el_residual_is_scaled_gradient():
    grid, kt, dis = _setup(1, 8, 0.6, m=2)
    rng = np.random.default_rng(3)
    f = ScalarField(grid, rng.uniform(-1, 1, grid.npoints),
                    ConstantExterior(0.3))
    g = gradient(f, dis, 1.0, kt, POT)
    res = el_residual(f, dis, 1.0, kt, POT)
    assert res == np.abs(g).max() / (2.0 * grid.h ** grid.d)


def test_exterior_weight_closed_form_vs_quadrature():
    rng = np.random.default_rng(4)
    for _ in range(10):
        half = rng.uniform(1.0, 10.0)
        s = rng.uniform(0.1, 0.9)
        x = rng.uniform(-half * 0.95, half * 0.95)
        w = exterior_weights([[x]], half, 1, s)[0]
        ref = (quad(lambda y: (y - x) ** (-1 - 2 * s), half, np.inf)[0]
               + quad(lambda y: (x - y) ** (-1 - 2 * s), -np.inf, -half)[0])
        assert w == pytest.approx(ref, rel=1e-10)


def test_exterior_weight_2d_vs_quadrature():
    half, s = 2.0, 0.7

    def rho(phi, x, y):
        c, sn = np.cos(phi), np.sin(phi)
        tx = ((half if c >= 0 else -half) - x) / c if abs(c) > 1e-15 else np.inf
        ty = ((half if sn >= 0 else -half) - y) / sn if abs(sn) > 1e-15 else np.inf
        return min(tx, ty)

    for x, y in [(0.0, 0.0), (0.37, -1.1), (1.7, 1.7)]:
        w = exterior_weights([[x, y]], half, 2, s)[0]
        ref = quad(lambda p: rho(p, x, y) ** (-2 * s), 0, 2 * np.pi,
                   limit=500)[0] / (2 * s)
        assert w == pytest.approx(ref, rel=1e-8)


def test_weights_grow_toward_boundary():
    grid = make_grid(1, 32, 1)
    w = exterior_weights(grid.coords(), grid.half, 1, 0.4)
    mid = grid.npoints // 2
    assert np.all(np.diff(w[mid:]) > 0)
    assert np.all(w > 0)


def test_single_cell_exterior_value():
    # one unit cell on (-1, 1): quadrature weight times the square mismatch
    grid = make_grid(1, 2, 1)
    kt = KernelTable.from_grid(grid, 0.25)
    f = ScalarField(grid, np.array([1.0, 1.0]), ConstantExterior(0.0))
    w = exterior_weights(grid.coords(), 1.0, 1, 0.25)
    expected = 2.0 * grid.h * float(np.sum(w))
    assert exterior_interaction(f, kt) == pytest.approx(expected, rel=1e-14)


def test_weight_mass_scaling_audit():
    # h^d sum w_i grows like n^(d-2s) for s < 1/2
    s = 0.25
    masses = [weight_mass(make_grid(1, n, 1), s) for n in (256, 512, 1024)]
    ratios = [masses[i + 1] / masses[i] for i in range(2)]
    for r in ratios:
        assert r == pytest.approx(2 ** (1 - 2 * s), rel=0.05)


def test_sub_superadditivity_exact():
    grid, kt, dis = _setup(1, 16, 0.45)
    rng = np.random.default_rng(7)
    f = ScalarField(grid, rng.uniform(-2, 2, grid.npoints),
                    ConstantExterior(0.2))
    idx = np.arange(grid.npoints)
    mask_a = (idx >= 2) & (idx < 6)
    mask_b = (idx >= 9) & (idx < 14)
    ea = region_energy(f, mask_a, dis, 1.0, kt, POT)
    eb = region_energy(f, mask_b, dis, 1.0, kt, POT)
    eab = region_energy(f, mask_a | mask_b, dis, 1.0, kt, POT)
    # K1 superadditive, G1 subadditive, both off by the same cross term
    from fracwell.kernels import cross_pair_energy
    pos = grid.index_grid()
    cross = cross_pair_energy(f.values[mask_a], pos[mask_a],
                              f.values[mask_b], pos[mask_b], kt.ker)
    assert eab.k1 - ea.k1 - eb.k1 == pytest.approx(2 * cross, rel=1e-12)
    assert eab.total - ea.total - eb.total == pytest.approx(-2 * cross,
                                                            rel=1e-12)


def test_sign_flip_invariance():
    # negating field, exterior and disorder together leaves the energy fixed
    grid, kt, dis = _setup(2, 4, 0.5, seed=8)
    rng = np.random.default_rng(8)
    vals = rng.uniform(-2, 2, grid.npoints)
    f = ScalarField(grid, vals, ConstantExterior(0.7))
    fneg = ScalarField(grid, -vals, ConstantExterior(-0.7))
    a = total_energy(f, dis, 1.3, kt, POT)
    b = total_energy(fneg, negate_disorder(dis), 1.3, kt, POT)
    assert a.total == b.total
    assert a.disorder == b.disorder and a.exterior == b.exterior


def test_region_full_equals_total():
    grid, kt, dis = _setup(1, 12, 0.65)
    rng = np.random.default_rng(9)
    f = ScalarField(grid, rng.uniform(-1, 1, grid.npoints),
                    ConstantExterior(0.4))
    full = np.ones(grid.npoints, bool)
    rb = region_energy(f, full, dis, 1.0, kt, POT)
    tb = total_energy(f, dis, 1.0, kt, POT)
    assert rb.total == tb.total


def test_window_restriction_identity():
    # restricting a big-grid energy to the inner box equals the energy of the
    # restricted field carrying the annulus as a window exterior
    big = make_grid(1, 32, 1)
    inner = make_grid(1, 16, 1)
    kt = KernelTable.from_grid(big, 0.6)
    dis = sample_disorder(*big.site_box(), seed=10)
    rng = np.random.default_rng(10)
    vals = rng.uniform(-2, 2, big.npoints)
    fbig = ScalarField(big, vals, ConstantExterior(1.5))
    mask = big.inner_mask(inner.half)
    rb = region_energy(fbig, mask, dis, 1.0, kt, POT)
    fwin = ScalarField(inner, vals[mask], WindowExterior(big, vals, 1.5))
    g1_inner = g1_on_grid(dis, inner)
    tb = total_energy(fwin, g1_inner, 1.0, kt, POT)
    assert tb.total == pytest.approx(rb.total, rel=1e-13)
    assert tb.exterior == pytest.approx(rb.exterior, rel=1e-13)


def test_window_gradient_finite_difference():
    big = make_grid(1, 16, 1)
    inner = make_grid(1, 8, 1)
    kt = KernelTable.from_grid(big, 0.4)
    rng = np.random.default_rng(11)
    wvals = rng.uniform(-1, 1, big.npoints)
    f = ScalarField(inner, rng.uniform(-1, 1, inner.npoints),
                    WindowExterior(big, wvals, -0.5))
    dis = sample_disorder(*inner.site_box(), seed=11)
    g = gradient(f, dis, 1.0, kt, POT)
    eps = 1e-6
    for i in (0, 3, 7):
        vp = f.values.copy()
        vp[i] += eps
        vm = f.values.copy()
        vm[i] -= eps
        num = (total_energy(f.with_values(vp), dis, 1.0, kt, POT).total
               - total_energy(f.with_values(vm), dis, 1.0, kt, POT).total) / (2 * eps)
        assert g[i] == pytest.approx(num, rel=1e-6)


def test_cached_tables_roundtrip(tmp_path):
    from fracwell.energy import cached_tables
    grid = make_grid(1, 16, 2)
    kt1, w1 = cached_tables(str(tmp_path), grid, 0.35)
    kt2, w2 = cached_tables(str(tmp_path), grid, 0.35)
    assert np.array_equal(w1, w2)
    assert np.array_equal(kt1.ker, kt2.ker)
    assert len(list(tmp_path.iterdir())) == 1


def test_kernel_cache_key():
    grid = make_grid(1, 16, 1)
    kt = KernelTable.from_grid(grid, 0.5)
    v = np.ones(8)
    small = kt.matvec(v, path="dense")
    assert small.shape == (8,)
    # sliced kernel agrees with a table built on the small lattice
    kt_small = KernelTable(1, 0.5, 1, (8,))
    assert np.allclose(small, kt_small.matvec(v, path="dense"), rtol=1e-15)
