"""Quantitative structure of the energy as runnable experiments.

Covered here: boundary-interaction scaling, the conditional energy-difference
statistic F_n with its variance across disorder, envelope derivatives in a
single site value, volume-averaged means of the extremal states, the
central-window uniqueness gap, and cutoff diagnostics for the exterior term.

Every sweep derives per-realization streams from (base seed, indices) with a
pure hash, and aggregation is a deterministic fold over realization order, so
outputs are bit-identical regardless of the worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np
from scipy import stats

from .energy import (ConstantExterior, KernelTable, ScalarField,
                     WindowExterior, region_energy, total_energy, weight_mass)
from .lattice import DistSpec, Grid, make_grid, realization_seed
from .minimize import (ExtremalStates, Problem, SolverConfig, extremal_pair,
                       minimize)
from .potential import PotentialSpec, build_potential

__all__ = [
    "FitResult",
    "SweepRecord",
    "FnEstimate",
    "loglog_fit",
    "boundary_scaling_sweep",
    "estimate_Fn",
    "variance_sweep",
    "envelope_derivative_check",
    "ergodic_means",
    "uniqueness_gap_sweep",
    "cutoff_diagnostic",
    "holder_quotient",
]


# ---------------------------------------------------------------------------
# fitting helpers


@dataclass
class FitResult:
    slope: float
    intercept: float
    stderr: float
    ci_lo: float
    ci_hi: float
    r2: float

    def as_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept,
                "stderr": self.stderr, "ci_lo": self.ci_lo,
                "ci_hi": self.ci_hi, "r2": self.r2}


def loglog_fit(x, y) -> FitResult:
    """OLS slope of log y on log x with a 95% confidence interval."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 3:
        raise ValueError("need at least 3 points for a scaling fit")
    res = stats.linregress(np.log(x), np.log(y))
    dof = x.size - 2
    tcrit = stats.t.ppf(0.975, dof)
    return FitResult(slope=res.slope, intercept=res.intercept,
                     stderr=res.stderr,
                     ci_lo=res.slope - tcrit * res.stderr,
                     ci_hi=res.slope + tcrit * res.stderr,
                     r2=res.rvalue ** 2)


def _ols_ssr(design: np.ndarray, y: np.ndarray) -> float:
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    return float(np.dot(resid, resid))


@dataclass
class SweepRecord:
    experiment: str
    params: dict
    per_realization: list = dc_field(default_factory=list)
    aggregates: dict = dc_field(default_factory=dict)
    fits: dict = dc_field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"experiment": self.experiment, "params": self.params,
                "per_realization": self.per_realization,
                "aggregates": self.aggregates, "fits": self.fits}


# ---------------------------------------------------------------------------
# shared machinery


def _parallel(fn, tasks: list, jobs: int) -> list:
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks, chunksize=1))


def default_barrier(c0: float, theta: float, dist: DistSpec) -> float:
    return 1.0 + c0 * theta * dist.bound


def _pair_on_grid(d, n, m, s, theta, seed, pot, cfg, dist=None,
                  compute_k_gap=False) -> ExtremalStates:
    dist = dist or DistSpec()
    grid = make_grid(d, n, m)
    from .lattice import sample_disorder
    lo, hi = grid.site_box()
    dis = sample_disorder(lo, hi, dist=dist, seed=seed)
    K = default_barrier(pot.c0, theta, dist)
    return extremal_pair(K, dis, theta, grid, s, pot, cfg,
                         compute_k_gap=compute_k_gap)


# ---------------------------------------------------------------------------
# boundary-interaction scaling


def boundary_scaling_sweep(d: int, s_list, n_list, m: int = 1,
                           theta: float = 0.0, realizations: int = 0,
                           seed: int = 0, pot: Optional[PotentialSpec] = None,
                           cfg: SolverConfig = SolverConfig(),
                           jobs: int = 1) -> SweepRecord:
    """Exterior-weight mass versus volume, and (optionally, at theta > 0)
    the extremal-pair energy difference, with log-log exponent fits."""
    n_list = list(n_list)
    if len(n_list) < 3:
        raise ValueError("need at least 3 volume sizes for scaling fits")
    pot = pot or build_potential(1.0, 0.5)
    rec = SweepRecord("scaling", {"d": d, "s_list": list(s_list),
                                  "n_list": n_list, "m": m, "theta": theta,
                                  "realizations": realizations, "seed": seed})
    for s in s_list:
        masses = []
        for n in n_list:
            grid = make_grid(d, n, m)
            mass = weight_mass(grid, s)
            masses.append(mass)
            rec.per_realization.append(
                {"s": s, "n": n, "kind": "weight_mass", "value": mass})
        fit = loglog_fit(n_list, masses)
        rec.fits[f"weight_mass_s{s:g}"] = fit.as_dict()
        # log-factor diagnostic: residual improvement from a log-log regressor
        ln = np.log(np.asarray(n_list, dtype=np.float64))
        ly = np.log(np.asarray(masses))
        base = _ols_ssr(np.stack([np.ones_like(ln), ln], axis=1), ly)
        extra = _ols_ssr(np.stack([np.ones_like(ln), ln, np.log(ln)], axis=1), ly)
        rec.fits[f"weight_mass_s{s:g}"]["log_regressor_gain"] = (
            1.0 - extra / base if base > 0 else 0.0)

        if theta > 0.0 and realizations > 0:
            tasks = [(d, n, m, s, theta,
                      realization_seed(seed, hash_tag("scaling"), n, r),
                      pot, cfg)
                     for n in n_list for r in range(realizations)]
            outs = _parallel(_scaling_task, tasks, jobs)
            k = 0
            maxima = []
            for n in n_list:
                vals = []
                for _ in range(realizations):
                    dg, ok = outs[k]
                    k += 1
                    rec.per_realization.append(
                        {"s": s, "n": n, "kind": "abs_dG", "value": abs(dg),
                         "converged": ok})
                    vals.append(abs(dg))
                maxima.append(max(vals))
            rec.fits[f"abs_dG_max_s{s:g}"] = loglog_fit(n_list, maxima).as_dict()
    return rec


def hash_tag(name: str) -> int:
    return int.from_bytes(name.encode()[:8].ljust(8, b"\0"), "little")


def _scaling_task(args):
    d, n, m, s, theta, seed, pot, cfg = args
    es = _pair_on_grid(d, n, m, s, theta, seed, pot, cfg)
    dg = es.plus.energy - es.minus.energy
    return dg, es.plus.converged and es.minus.converged


# ---------------------------------------------------------------------------
# the conditional energy-difference statistic


@dataclass
class FnEstimate:
    n: int
    interior_seed: int
    resamples: int
    pad: int
    delta_g: list
    estimate: float
    se: float
    failures: int
    omega0: float

    def as_dict(self) -> dict:
        return {"n": self.n, "interior_seed": self.interior_seed,
                "resamples": self.resamples, "pad": self.pad,
                "delta_g": self.delta_g, "estimate": self.estimate,
                "se": self.se, "failures": self.failures,
                "omega0": self.omega0}


def _composite_g1(big: Grid, inner_half: int, dist: DistSpec,
                  seed_in: int, seed_out: int) -> np.ndarray:
    """Lifted disorder with interior sites from one stream, the rest from
    another; the interior block is exactly the sigma-algebra of the inner box."""
    sites = big.sites()
    inner = (np.abs(sites) <= inner_half).all(axis=1)
    g_in = dist._values(seed_in, sites)
    g_out = dist._values(seed_out, sites)
    return np.where(inner, g_in, g_out)


def estimate_Fn(d: int, n: int, pad: int, resamples: int, s: float,
                theta: float, interior_seed: int, base_seed: int = 0,
                pot: Optional[PotentialSpec] = None, m: int = 1,
                dist: Optional[DistSpec] = None,
                cfg: SolverConfig = SolverConfig()) -> FnEstimate:
    """Monte-Carlo conditional mean of the extremal energy difference.

    The disorder inside the inner box stays fixed while the annulus up to the
    padded box is resampled; each resample solves the extremal pair on the
    padded domain and evaluates the energy difference restricted to the inner
    domain (interior terms plus the interaction with everything outside it).
    """
    if resamples < 2:
        raise ValueError("need at least 2 exterior resamples")
    if pad < 1:
        raise ValueError("padding must be at least one cell")
    dist = dist or DistSpec()
    pot = pot or build_potential(1.0, 0.5)
    big = make_grid(d, n + 2 * pad, m)
    kt = KernelTable.from_grid(big, s)
    K = default_barrier(pot.c0, theta, dist)
    mask_in = big.inner_mask(n / 2.0)
    omega0 = float(dist._values(interior_seed,
                                np.zeros((1, d), dtype=np.int64))[0])
    deltas = []
    failures = 0
    for r in range(resamples):
        seed_out = realization_seed(base_seed, hash_tag("fn-ext"),
                                    interior_seed, r)
        g1 = _composite_g1(big, n // 2, dist, interior_seed, seed_out)
        pair = extremal_pair(K, g1, theta, big, s, pot, cfg, kt=kt,
                             compute_k_gap=False)
        if not (pair.plus.converged and pair.minus.converged):
            failures += 1
            continue
        ep = region_energy(pair.plus.field, mask_in, g1, theta, kt, pot).total
        em = region_energy(pair.minus.field, mask_in, g1, theta, kt, pot).total
        deltas.append(ep - em)
    if not deltas:
        raise RuntimeError("all exterior resamples failed to converge")
    arr = np.asarray(deltas)
    se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    return FnEstimate(n=n, interior_seed=interior_seed, resamples=resamples,
                      pad=pad, delta_g=[float(v) for v in arr],
                      estimate=float(arr.mean()), se=se, failures=failures,
                      omega0=omega0)


def _fn_task(args):
    (d, n, pad, resamples, s, theta, interior_seed, base_seed, pot, m,
     dist, cfg) = args
    est = estimate_Fn(d, n, pad, resamples, s, theta, interior_seed,
                      base_seed, pot, m, dist, cfg)
    return est.as_dict()


def anova_component(values: np.ndarray, keys: np.ndarray, bins: int):
    """Between-bin variance component of ``values`` after quantile-binning by
    ``keys`` (the moment estimator from one-way ANOVA; the raw variance of
    bin means would be biased upward by within-bin noise)."""
    r = values.size
    edges = np.quantile(keys, np.linspace(0, 1, bins + 1))
    idx = np.clip(np.searchsorted(edges, keys, side="right") - 1, 0, bins - 1)
    groups = [values[idx == b] for b in range(bins)]
    groups = [g for g in groups if g.size > 0]
    b_eff = len(groups)
    if b_eff < 2:
        return 0.0, 0.0
    grand = values.mean()
    ms_between = sum(g.size * (g.mean() - grand) ** 2 for g in groups) / (b_eff - 1)
    ms_within = (sum(((g - g.mean()) ** 2).sum() for g in groups)
                 / max(r - b_eff, 1))
    n0 = (r - sum(g.size ** 2 for g in groups) / r) / (b_eff - 1)
    naive = float(np.var([g.mean() for g in groups]))
    return float((ms_between - ms_within) / n0), naive


def _bootstrap_component(values, keys, bins, n_boot, seed):
    rng = np.random.default_rng(seed)
    out = np.empty(n_boot)
    r = values.size
    for b in range(n_boot):
        pick = rng.integers(0, r, r)
        out[b], _ = anova_component(values[pick], keys[pick], bins)
    return float(out.std(ddof=1))


def variance_sweep(d: int, n_list, R: int, resamples: int, s: float,
                   theta: float, seed: int = 0, pad_frac: float = 0.5,
                   pot: Optional[PotentialSpec] = None, m: int = 1,
                   dist: Optional[DistSpec] = None,
                   cfg: SolverConfig = SolverConfig(),
                   bins: int = 8, jobs: int = 1) -> SweepRecord:
    """Variance of the conditional statistic across disorder, with the
    single-site variance component and the theoretical variance ceiling."""
    if R < 30:
        raise ValueError("need at least 30 realizations")
    dist = dist or DistSpec()
    pot = pot or build_potential(1.0, 0.5)
    n_list = list(n_list)
    rec = SweepRecord("variance", {"d": d, "n_list": n_list, "R": R,
                                   "M": resamples, "s": s, "theta": theta,
                                   "seed": seed, "pad_frac": pad_frac,
                                   "bins": bins})
    ceiling = 4.0 * theta ** 2 * default_barrier(pot.c0, theta, dist) ** 2
    for n in n_list:
        pad = max(1, int(round(pad_frac * n)))
        tasks = [(d, n, pad, resamples, s, theta,
                  realization_seed(seed, hash_tag("fn-int"), n, r),
                  seed, pot, m, dist, cfg) for r in range(R)]
        outs = _parallel(_fn_task, tasks, jobs)
        for r, o in enumerate(outs):
            rec.per_realization.append(
                {"n": n, "r": r, "Fn": o["estimate"], "se": o["se"],
                 "omega0": o["omega0"], "failures": o["failures"]})
        fn = np.array([o["estimate"] for o in outs])
        om0 = np.array([o["omega0"] for o in outs])
        var = float(fn.var(ddof=1))
        d2, d2_naive = anova_component(fn, om0, bins)
        d2_se = _bootstrap_component(fn, om0, bins, 200,
                                     realization_seed(seed, hash_tag("boot"), n))
        sens = {str(b): anova_component(fn, om0, b)[0] for b in (4, 8, 16)}
        std_fn = (fn - fn.mean()) / max(fn.std(ddof=1), 1e-300)
        ad_stat = float(stats.anderson(std_fn, dist="norm").statistic)
        rec.aggregates[str(n)] = {
            "mean": float(fn.mean()),
            "se_mean": float(fn.std(ddof=1) / math.sqrt(R)),
            "var": var,
            "var_over_vol": var / n ** d,
            "ceiling": ceiling,
            "ceiling_ok": bool(var / n ** d <= ceiling),
            "D2": d2,
            "D2_naive": d2_naive,
            "D2_se": d2_se,
            "D2_bin_sensitivity": sens,
            "anderson_darling": ad_stat,
            "failures": int(sum(o["failures"] for o in outs)),
        }
    return rec


# ---------------------------------------------------------------------------
# envelope derivative in a single site value


def envelope_derivative_check(d: int, n: int, s: float, theta: float,
                              pairs: int, h_list, seed: int = 0,
                              pot: Optional[PotentialSpec] = None, m: int = 1,
                              dist: Optional[DistSpec] = None,
                              cfg: SolverConfig = SolverConfig(),
                              jobs: int = 1) -> SweepRecord:
    """Two-sided bounds and the derivative of the energy in one site value.

    For h > 0 and the maximal state: decreasing the site value by h changes
    the minimal energy by an amount sandwiched between ``theta h`` times the
    cell average of the state before and after the change; the derivative
    matches the negative cell average.
    """
    if theta <= 0:
        raise ValueError("the envelope check needs theta > 0")
    dist = dist or DistSpec()
    pot = pot or build_potential(1.0, 0.5)
    h_list = list(h_list)
    rec = SweepRecord("envelope", {"d": d, "n": n, "s": s, "theta": theta,
                                   "pairs": pairs, "h_list": h_list,
                                   "seed": seed})
    tasks = []
    rng = np.random.default_rng(seed)
    for p in range(pairs):
        # site drawn from the central half so its cell is fully collocated
        site = tuple(int(v) for v in rng.integers(-n // 4, n // 4 + 1, d))
        tasks.append((d, n, s, theta,
                      realization_seed(seed, hash_tag("envelope"), p),
                      site, tuple(h_list), pot, m, dist, cfg))
    outs = _parallel(_envelope_task, tasks, jobs)
    rec.per_realization = [row for rows in outs for row in rows]
    worst_upper = max(r["upper_slack"] for r in rec.per_realization)
    worst_lower = max(r["lower_slack"] for r in rec.per_realization)
    h_min = min(h_list)
    derivs = [r["deriv_err"] for r in rec.per_realization if r["h"] == h_min]
    rec.aggregates = {
        "max_upper_slack": worst_upper,
        "max_lower_slack": worst_lower,
        "max_deriv_err_at_hmin": max(derivs),
        "h_min": h_min,
    }
    return rec


def _envelope_task(args):
    d, n, s, theta, seed, site, h_list, pot, m, dist, cfg = args
    from .lattice import sample_disorder
    grid = make_grid(d, n, m)
    kt = KernelTable.from_grid(grid, s)
    lo, hi = grid.site_box()
    dis = sample_disorder(lo, hi, dist=dist, seed=seed)
    K = default_barrier(pot.c0, theta, dist)
    g1 = dis.value_at(grid.sites())
    cell = (grid.sites() == np.asarray(site)).all(axis=1)
    h_d = grid.h ** grid.d
    base = extremal_pair(K, g1, theta, grid, s, pot, cfg, kt=kt,
                         compute_k_gap=False)
    rows = []
    for h in h_list:
        g1_mod = g1 - h * cell
        mod = extremal_pair(K, g1_mod, theta, grid, s, pot, cfg, kt=kt,
                            compute_k_gap=False)
        for tag, state_a, state_b in (("plus", base.plus, mod.plus),
                                      ("minus", base.minus, mod.minus)):
            e_base = state_a.energy
            e_mod = total_energy(state_b.field, g1_mod, theta, kt, pot).total
            dg = e_mod - e_base
            cell_before = h_d * float(np.sum(state_a.field.values[cell]))
            cell_after = h_d * float(np.sum(state_b.field.values[cell]))
            upper = theta * h * cell_before   # >= dg
            lower = theta * h * cell_after    # <= dg
            deriv = dg / h
            scale = max(1.0, abs(theta * cell_before))
            rows.append({
                "seed": seed, "site": str(site), "state": tag, "h": h,
                "dG": dg, "upper": upper, "lower": lower,
                "upper_slack": max(0.0, dg - upper),
                "lower_slack": max(0.0, lower - dg),
                "deriv_err": abs(deriv - theta * cell_before) / scale,
            })
    return rows


# ---------------------------------------------------------------------------
# ergodic means of the extremal states


def ergodic_means(d: int, n: int, R: int, s: float, theta: float,
                  seed: int = 0, pot: Optional[PotentialSpec] = None,
                  m: int = 1, dist: Optional[DistSpec] = None,
                  cfg: SolverConfig = SolverConfig(),
                  jobs: int = 1) -> SweepRecord:
    """Volume averages of the extremal states across disorder realizations."""
    if R < 30:
        raise ValueError("need at least 30 realizations")
    dist = dist or DistSpec()
    pot = pot or build_potential(1.0, 0.5)
    rec = SweepRecord("ergodic", {"d": d, "n": n, "R": R, "s": s,
                                  "theta": theta, "seed": seed})
    tasks = [(d, n, m, s, theta,
              realization_seed(seed, hash_tag("ergodic"), r), pot, cfg, dist)
             for r in range(R)]
    outs = _parallel(_ergodic_task, tasks, jobs)
    for r, (mp, mm, ok) in enumerate(outs):
        rec.per_realization.append({"r": r, "mean_plus": mp, "mean_minus": mm,
                                    "converged": ok})
    mp = np.array([o[0] for o in outs])
    mm = np.array([o[1] for o in outs])
    # the two means come from the same realizations, so the antisymmetry
    # defect is tested against the paired standard error
    rec.aggregates = {
        "m_plus": float(mp.mean()),
        "m_minus": float(mm.mean()),
        "se_plus": float(mp.std(ddof=1) / math.sqrt(R)),
        "se_minus": float(mm.std(ddof=1) / math.sqrt(R)),
        "antisymmetry_defect": float(abs(mp.mean() + mm.mean())),
        "se_sum": float((mp + mm).std(ddof=1) / math.sqrt(R)),
        "failures": int(sum(0 if o[2] else 1 for o in outs)),
    }
    return rec


def _ergodic_task(args):
    d, n, m, s, theta, seed, pot, cfg, dist = args
    es = _pair_on_grid(d, n, m, s, theta, seed, pot, cfg, dist=dist)
    return (float(es.plus.field.values.mean()),
            float(es.minus.field.values.mean()),
            es.plus.converged and es.minus.converged)


# ---------------------------------------------------------------------------
# uniqueness gap


def _third_bc_exterior(grid: Grid) -> WindowExterior:
    """A fixed bounded, non-constant exterior: a cosine profile on a window
    one domain-width wide, constant beyond."""
    big = make_grid(grid.d, 2 * grid.n, grid.m)
    x = big.coords()
    vals = 0.6 * np.cos(2.0 * np.pi * x[:, 0] / max(grid.n / 4.0, 2.0))
    if grid.d == 2:
        vals = vals * np.cos(2.0 * np.pi * x[:, 1] / max(grid.n / 4.0, 2.0))
    return WindowExterior(big, vals, 0.25)


def uniqueness_gap_sweep(d: int, n_list, R: int, s: float, theta: float,
                         seed: int = 0, pot: Optional[PotentialSpec] = None,
                         m: int = 1, dist: Optional[DistSpec] = None,
                         cfg: SolverConfig = SolverConfig(),
                         third_bc: bool = True, jobs: int = 1) -> SweepRecord:
    """Central-window gap between the extremal states across volumes, plus a
    sandwich check for an arbitrary bounded boundary condition."""
    dist = dist or DistSpec()
    pot = pot or build_potential(1.0, 0.5)
    n_list = list(n_list)
    rec = SweepRecord("gap", {"d": d, "n_list": n_list, "R": R, "s": s,
                              "theta": theta, "seed": seed,
                              "third_bc": third_bc})
    for n in n_list:
        tasks = [(d, n, m, s, theta,
                  realization_seed(seed, hash_tag("gap"), n, r), pot, cfg,
                  dist, third_bc) for r in range(R)]
        outs = _parallel(_gap_task, tasks, jobs)
        gaps = np.array([o["gap"] for o in outs])
        for r, o in enumerate(outs):
            rec.per_realization.append({"n": n, "r": r, **o})
        agg = {
            "median_gap": float(np.median(gaps)),
            "mean_gap": float(gaps.mean()),
            "max_ordering_violation": float(max(o["ordering_violation"]
                                                for o in outs)),
            "failures": int(sum(0 if o["converged"] else 1 for o in outs)),
        }
        if third_bc:
            agg["max_sandwich_violation"] = float(
                max(o["sandwich_violation"] for o in outs))
            agg["median_central_dist"] = float(
                np.median([o["central_dist"] for o in outs]))
        rec.aggregates[str(n)] = agg
    return rec


def _gap_task(args):
    d, n, m, s, theta, seed, pot, cfg, dist, third_bc = args
    from .lattice import sample_disorder
    grid = make_grid(d, n, m)
    # one table on the widest lattice in play (the third-bc window) serves
    # the plain extremal solves as well
    kt = KernelTable.from_grid(make_grid(d, 2 * n, m) if third_bc else grid, s)
    lo, hi = grid.site_box()
    dis = sample_disorder(lo, hi, dist=dist, seed=seed)
    K = default_barrier(pot.c0, theta, dist)
    es = extremal_pair(K, dis, theta, grid, s, pot, cfg, kt=kt,
                       compute_k_gap=False)
    win = grid.inner_mask(grid.half / 2.0)
    gap_vals = es.gap_values()
    out = {
        "gap": float(gap_vals[win].max()),
        "gap_min": float(gap_vals.min()),
        "ordering_violation": es.ordering_violation,
        "converged": es.plus.converged and es.minus.converged,
    }
    if third_bc:
        ext = _third_bc_exterior(grid)
        problem = Problem(grid, kt, pot, dis, theta, ext)
        w_cfg = SolverConfig(tol=cfg.tol, max_iter=cfg.max_iter,
                             init_policy="informed", init_value=0.0,
                             multistart=cfg.multistart,
                             seed=cfg.seed)
        wres = minimize(problem, w_cfg)
        wv = wres.field.values
        viol = max(0.0, float((es.minus.field.values - wv).max()),
                   float((wv - es.plus.field.values).max()))
        dist_c = max(float(np.abs(wv - es.plus.field.values)[win].max()),
                     float(np.abs(wv - es.minus.field.values)[win].max()))
        out["sandwich_violation"] = viol
        out["central_dist"] = dist_c
        out["w_converged"] = wres.converged
    return out


# ---------------------------------------------------------------------------
# cutoff diagnostics


def cutoff_diagnostic(field: ScalarField, halves, kt: KernelTable) -> SweepRecord:
    """Exterior interaction of nested central cubes, per unit volume."""
    rec = SweepRecord("diagnostics", {"halves": list(halves)})
    for half in halves:
        if not 0 < half <= field.grid.half:
            raise ValueError("cutoff cube must sit inside the domain")
        mask = field.grid.inner_mask(half)
        w = region_energy(field, mask, None, 0.0, kt, None).exterior
        vol = (2.0 * half) ** field.grid.d
        rec.per_realization.append({"half": half, "W": w, "W_per_vol": w / vol})
    rec.aggregates["decreasing"] = bool(
        all(rec.per_realization[i]["W_per_vol"] >=
            rec.per_realization[i + 1]["W_per_vol"] - 1e-12
            for i in range(len(rec.per_realization) - 1)))
    return rec


def convest_ratio(u: ScalarField, u_n: ScalarField, kt: KernelTable,
                  alpha: float) -> dict:
    """Stability constant of the kernel double sum under uniform field
    perturbations: compares the energy difference against the product of
    volume, diameter^d and the discrete Hoelder distance (regression value)."""
    if u.grid != u_n.grid:
        raise ValueError("fields live on different grids")
    grid = u.grid
    i_diff = abs(kt.pair_energy(u.shaped()) - kt.pair_energy(u_n.shaped()))
    diff_field = ScalarField(grid, u.values - u_n.values, ConstantExterior(0.0))
    hnorm = holder_quotient(diff_field, alpha)
    knorm = holder_quotient(u, alpha) + holder_quotient(u_n, alpha)
    vol = grid.n ** grid.d
    diam = (grid.n * math.sqrt(grid.d)) ** grid.d
    bound = knorm * vol * diam * max(hnorm, 1e-300)
    return {"energy_diff": i_diff, "holder_dist": hnorm, "bound": bound,
            "ratio": i_diff / bound if bound > 0 else 0.0}


def holder_quotient(field: ScalarField, alpha: float) -> float:
    """Discrete Hoelder quotient ``max |v_i - v_j| / |x_i - x_j|^alpha``
    (qualitative smoothness diagnostic only)."""
    x = field.grid.coords()
    v = field.values
    quot = 0.0
    for i in range(v.size - 1):
        dx = np.sqrt(((x[i + 1:] - x[i]) ** 2).sum(axis=1))
        quot = max(quot, float((np.abs(v[i + 1:] - v[i]) / dx ** alpha).max()))
    return quot
