import math

import numpy as np
import pytest
from scipy.optimize import minimize as scipy_minimize

from fracwell.energy import (ConstantExterior, KernelTable, ScalarField,
                             WindowExterior, total_energy)
from fracwell.lattice import (g1_on_grid, make_grid, negate_disorder,
                              sample_disorder)
from fracwell.minimize import (Problem, SolverConfig, extremal_pair,
                               glue_chain_report, glue_cutoff,
                               lattice_min_max, minimize, truncate)
from fracwell.potential import build_potential

POT = build_potential(1.0, 0.5)
A = math.sqrt(3.0)
KSTAR = 1.0 + A  # 1 + C0 * theta * A at theta = 1


def _problem(d=1, n=16, s=0.5, theta=1.0, ext=0.0, seed=1, m=1):
    grid = make_grid(d, n, m)
    kt = KernelTable.from_grid(grid, s)
    dis = sample_disorder(*grid.site_box(), seed=seed) if theta else None
    return Problem(grid, kt, POT, dis, theta, ConstantExterior(ext)), grid, kt, dis


# ---------------------------------------------------------------------------
# truncation


def test_truncate_noop_and_idempotent():
    grid = make_grid(1, 8, 1)
    f = ScalarField(grid, np.linspace(-0.9, 0.9, 8), ConstantExterior(0.5))
    t = truncate(f, 1.0)
    assert np.array_equal(t.values, f.values)
    rng = np.random.default_rng(0)
    g = ScalarField(grid, rng.uniform(-5, 5, 8), ConstantExterior(4.0))
    t1 = truncate(g, 1.5)
    t2 = truncate(t1, 1.5)
    assert np.array_equal(t1.values, t2.values)
    assert t1.exterior.value == 1.5
    assert t1.linf() <= 1.5


def test_truncate_window_exterior():
    big = make_grid(1, 16, 1)
    inner = make_grid(1, 8, 1)
    vals = np.linspace(-4, 4, big.npoints)
    f = ScalarField(inner, np.zeros(inner.npoints),
                    WindowExterior(big, vals, 3.0))
    t = truncate(f, 2.0)
    assert np.abs(t.exterior.values).max() <= 2.0
    assert t.exterior.tail == 2.0


def test_truncation_energy_decrease():
    # the interior part never increases under clamping at t >= 1 + C0 theta A,
    # with the per-term pieces of the bound holding sitewise
    theta = 1.0
    t = 1.0 + POT.c0 * theta * A
    grid = make_grid(1, 16, 1)
    kt = KernelTable.from_grid(grid, 0.5)
    dis = sample_disorder(*grid.site_box(), seed=3)
    g1 = g1_on_grid(dis, grid)
    rng = np.random.default_rng(3)
    for _ in range(20):
        vals = rng.uniform(-t - 3, t + 3, grid.npoints)
        f = ScalarField(grid, vals, ConstantExterior(0.0))
        fc = truncate(f, t)
        excess = np.abs(vals) - t
        over = excess > 0
        # kernel part decreases under clamping
        assert kt.pair_energy(fc.shaped()) <= kt.pair_energy(f.shaped()) + 1e-12
        # potential drop beats the linear lower bound sitewise
        drop = POT.w(vals[over]) - POT.w(t)
        assert np.all(drop >= (t - 1) / POT.c0 * excess[over] - 1e-12)
        # disorder change is bounded by the worst-case field
        dis_change = -theta * g1[over] * (vals[over] - np.sign(vals[over]) * t)
        assert np.all(dis_change >= -theta * A * excess[over] - 1e-12)
        # aggregate inequality with the stated right-hand side
        k1 = total_energy(f, g1, theta, kt, POT).k1
        k1c = total_energy(fc, g1, theta, kt, POT).k1
        rhs = grid.h * float(np.sum(
            ((t - 1) / POT.c0 - theta * A) * excess[over]))
        assert k1 - k1c >= rhs - 1e-10


# ---------------------------------------------------------------------------
# lattice operations


def test_min_max_ordered_fields():
    grid = make_grid(1, 8, 1)
    u = ScalarField(grid, np.full(8, -0.5), ConstantExterior(-1.0))
    v = ScalarField(grid, np.full(8, 0.5), ConstantExterior(1.0))
    top, bot = lattice_min_max(u, v)
    assert np.array_equal(top.values, v.values)
    assert np.array_equal(bot.values, u.values)
    assert top.exterior.value == 1.0 and bot.exterior.value == -1.0


def test_min_max_grid_mismatch():
    u = ScalarField(make_grid(1, 8, 1), np.zeros(8), ConstantExterior(0.0))
    v = ScalarField(make_grid(1, 16, 1), np.zeros(16), ConstantExterior(0.0))
    with pytest.raises(ValueError):
        lattice_min_max(u, v)


def test_rearrangement_strict_crossing():
    # a single crossing makes the inequality strict by the explicit deficit
    grid = make_grid(1, 4, 1)
    kt = KernelTable.from_grid(grid, 0.5)
    dis = sample_disorder(*grid.site_box(), seed=1)
    u = ScalarField(grid, np.array([1.0, 1.0, -1.0, -1.0]),
                    ConstantExterior(0.0))
    v = ScalarField(grid, np.array([-1.0, -1.0, 1.0, 1.0]),
                    ConstantExterior(0.0))
    top, bot = lattice_min_max(u, v)
    lhs = (total_energy(top, dis, 1.0, kt, POT).total
           + total_energy(bot, dis, 1.0, kt, POT).total)
    rhs = (total_energy(u, dis, 1.0, kt, POT).total
           + total_energy(v, dis, 1.0, kt, POT).total)
    assert lhs < rhs
    a = u.values - v.values
    deficit = 0.0
    for i in range(4):
        for j in range(4):
            if i != j and a[i] * a[j] < 0:
                deficit += -2.0 * kt.ker[abs(i - j)] * a[i] * a[j]
    assert rhs - lhs == pytest.approx(deficit, rel=1e-12)


# ---------------------------------------------------------------------------
# solver


def test_flat_minimum_at_plus_one():
    problem, grid, _, _ = _problem(theta=0.0, ext=1.0)
    res = minimize(problem, SolverConfig(init_policy="constant",
                                         init_value=1.0))
    assert res.converged
    assert res.energy == 0.0
    assert np.abs(res.field.values - 1.0).max() == 0.0


def test_barrier_profile_above_one():
    problem, grid, _, _ = _problem(n=32, s=0.6, theta=0.0, ext=KSTAR)
    res = minimize(problem, SolverConfig(init_policy="constant",
                                         init_value=KSTAR))
    v = res.field.values
    assert res.converged and res.energy > 0
    assert np.all(v > 1.0) and np.all(v < KSTAR)
    # decaying toward 1 away from the boundary
    mid = grid.npoints // 2
    assert v[0] > v[mid] and v[-1] > v[mid]


def test_descent_monotone_and_residual():
    problem, *_ = _problem(n=32, s=0.75, theta=1.0, ext=KSTAR, seed=5)
    res = minimize(problem, SolverConfig(init_policy="constant",
                                         init_value=KSTAR))
    e = np.asarray(res.energies)
    assert np.all(np.diff(e) <= 1e-12 * np.maximum(1.0, np.abs(e[:-1])))
    assert res.converged
    assert res.residual <= SolverConfig().tol
    # converged flag implies the reported residual honors the tolerance
    assert res.residual == problem.residual(res.field.values)


def test_multistart_beats_every_start():
    problem, *_ = _problem(n=24, s=0.4, theta=1.5, ext=0.0, seed=9)
    cfg = SolverConfig(init_policy="random", multistart=6, seed=4)
    res = minimize(problem, cfg)
    # energy at the returned point is the best over the multistart solves
    from fracwell.minimize import _descend, _initial_values
    for _, v0 in _initial_values(problem, cfg, None):
        v, *_rest = _descend(problem, v0, cfg)
        assert res.energy <= problem.energy(v) + 1e-10
        assert res.energy <= problem.energy(v0)


def test_against_scipy_bruteforce():
    # small nonconvex problem: dense multistart L-BFGS agrees on the optimum
    problem, grid, _, _ = _problem(n=8, s=0.5, theta=1.2, ext=0.4, seed=11)
    cfg = SolverConfig(init_policy="random", multistart=12, seed=0)
    ours = minimize(problem, cfg)
    best = np.inf
    rng = np.random.default_rng(1)
    for _ in range(40):
        x0 = rng.uniform(-2.5, 2.5, grid.npoints)
        out = scipy_minimize(problem.energy, x0, jac=problem.grad,
                             method="L-BFGS-B",
                             options={"maxiter": 2000, "ftol": 1e-15,
                                      "gtol": 1e-12})
        best = min(best, out.fun)
    assert ours.energy == pytest.approx(best, abs=1e-7)


def test_linf_bound_after_solve():
    for s, theta, ext, seed in [(0.25, 1.0, KSTAR, 1), (0.75, 0.5, 0.3, 2),
                                (0.5, 2.0, -1.0, 3)]:
        problem, grid, _, dis = _problem(n=32, s=s, theta=theta, ext=ext,
                                         seed=seed)
        res = minimize(problem, SolverConfig(init_policy="constant",
                                             init_value=ext))
        bound = max(abs(ext), 1.0 + POT.c0 * theta * A)
        assert res.field.linf() <= bound + 1e-6


def test_truncation_stability_of_minimizers():
    problem, grid, kt, dis = _problem(n=32, s=0.6, theta=1.0, ext=KSTAR,
                                      seed=7)
    res = minimize(problem, SolverConfig(init_policy="constant",
                                         init_value=KSTAR))
    t = max(KSTAR, 1.0 + POT.c0 * A)
    clipped = truncate(res.field, t)
    res2 = minimize(problem, SolverConfig(init_policy="given"),
                    initial=clipped.values)
    assert res2.energy >= res.energy - 1e-8 * max(1.0, abs(res.energy))


# ---------------------------------------------------------------------------
# extremal states


def test_extremal_pair_theta_zero():
    grid = make_grid(1, 32, 1)
    kt = KernelTable.from_grid(grid, 0.75)
    es = extremal_pair(KSTAR, None, 0.0, grid, 0.75, POT,
                       SolverConfig(), kt=kt, compute_k_gap=False)
    # no disorder: the pair is an exact mirror, bulk near the wells
    assert np.array_equal(es.plus.field.values, -es.minus.field.values)
    assert es.ordering_violation == 0.0
    mid = grid.npoints // 2
    assert es.plus.field.values[mid] == pytest.approx(1.0, abs=0.3)


def test_extremal_sign_flip_symmetry_bitexact():
    grid = make_grid(1, 64, 1)
    kt = KernelTable.from_grid(grid, 0.75)
    dis = sample_disorder(*grid.site_box(), seed=21)
    cfg = SolverConfig(multistart=5, seed=5)
    a = extremal_pair(KSTAR, dis, 1.0, grid, 0.75, POT, cfg, kt=kt,
                      compute_k_gap=False)
    b = extremal_pair(KSTAR, negate_disorder(dis), 1.0, grid, 0.75, POT, cfg,
                      kt=kt, compute_k_gap=False)
    assert np.array_equal(a.plus.field.values, -b.minus.field.values)
    assert np.array_equal(a.minus.field.values, -b.plus.field.values)


def test_extremal_ordering_and_kgap():
    grid = make_grid(1, 32, 1)
    kt = KernelTable.from_grid(grid, 0.5)
    dis = sample_disorder(*grid.site_box(), seed=13)
    es = extremal_pair(KSTAR, dis, 1.0, grid, 0.5, POT, SolverConfig(),
                       kt=kt, compute_k_gap=True)
    assert es.ordering_violation <= 1e-6
    assert es.k_gap is not None and es.k_gap >= 0.0
    assert es.plus.field.exterior.value == KSTAR
    assert es.minus.field.exterior.value == -KSTAR


# ---------------------------------------------------------------------------
# glue construction


def test_glue_cutoff_basic():
    grid = make_grid(1, 16, 1)
    vals = np.linspace(-1, 1, grid.npoints)
    vp = ScalarField(grid, vals + 0.5, ConstantExterior(KSTAR))
    vm = ScalarField(grid, vals - 0.5, ConstantExterior(-KSTAR))
    glued = glue_cutoff(vp, vm)
    # carries the lower state's exterior, equals v+ in the bulk
    assert glued.exterior.value == -KSTAR
    bulk = grid.boundary_distance() >= 1.0
    assert np.array_equal(glued.values[bulk], vp.values[bulk])
    same = glue_cutoff(vp, vp)
    assert np.array_equal(same.values, vp.values)


def test_glue_chain_identity_and_inequality():
    grid = make_grid(1, 32, 1)
    kt = KernelTable.from_grid(grid, 0.6)
    dis = sample_disorder(*grid.site_box(), seed=17)
    es = extremal_pair(KSTAR, dis, 1.0, grid, 0.6, POT, SolverConfig(),
                       kt=kt, compute_k_gap=False)
    rep = glue_chain_report(es.plus.field, es.minus.field, dis, 1.0, kt, POT)
    scale = max(1.0, abs(rep.glue_energy), abs(rep.base_energy))
    assert abs(rep.identity_error) <= 1e-10 * scale
    # minimality of the lower state against the interpolant, up to solver gap
    assert rep.chain_slack <= 1e-8 * scale
    # both directions bound the energy difference through the remainders
    dg = rep.base_energy - total_energy(es.minus.field, dis, 1.0, kt,
                                        POT).total
    assert -dg <= rep.r1 + rep.r2 + rep.r3 + 1e-8 * scale
