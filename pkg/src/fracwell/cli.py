"""Command-line front end: config parsing, dispatch, machine-readable output.

Configs are flat ``key = value`` text files (one key per line, ``#`` comments,
comma-separated lists); command-line flags override file values. Every run
writes its manifest before computing, so a crashed run still names its config
and seed. Exit codes: 0 success, 1 solver-failure quota breached, 2 config or
environment error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass, field as dc_field, fields as dc_fields

import numpy as np

from . import __version__
from .energy import ConstantExterior, KernelTable, ScalarField, total_energy
from .experiments import (boundary_scaling_sweep, convest_ratio,
                          cutoff_diagnostic, default_barrier,
                          envelope_derivative_check, ergodic_means,
                          estimate_Fn, holder_quotient, uniqueness_gap_sweep,
                          variance_sweep)
from .lattice import DistSpec, make_grid, sample_disorder
from .minimize import Problem, SolverConfig, extremal_pair, minimize
from .potential import build_potential
from .reporting import experiment_filename, fmt, write_csv, write_json

EXPERIMENTS = ("minimize", "extremal", "scaling", "fn", "variance", "ergodic",
               "gap", "diagnostics")

FAILURE_QUOTA = 0.10


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    experiment: str = ""
    d: int = 1
    s: float = 0.5
    theta: float = 1.0
    c0: float = 1.0
    delta0: float = 0.5
    k: float = float("nan")      # barrier; defaults to 1 + c0*theta*A
    n: list = dc_field(default_factory=lambda: [64])
    m: int = 1
    pad: int = 0                 # fn padding in cells; 0 -> pad_frac * n
    pad_frac: float = 0.5
    resamples: int = 20          # M
    realizations: int = 30       # R
    pairs: int = 20              # envelope (realization, site) pairs
    h_list: list = dc_field(default_factory=lambda: [1e-2, 1e-3])
    s_list: list = dc_field(default_factory=list)
    bins: int = 8
    v0: float = 1.0              # constant exterior for the minimize command
    dist: str = "uniform"
    tol: float = 1e-8
    max_iter: int = 20000
    multistart: int = 1
    third_bc: bool = True
    seed: int = 0
    out: str = "runs"
    jobs: int = 1
    overwrite: bool = False

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, "
                              f"got {self.experiment!r}")
        if self.d not in (1, 2):
            raise ConfigError(f"d out of range: {self.d}")
        if not 0.0 < self.s < 1.0:
            raise ConfigError(f"s out of range: {self.s}")
        for sv in self.s_list:
            if not 0.0 < sv < 1.0:
                raise ConfigError(f"s_list entry out of range: {sv}")
        if self.theta < 0:
            raise ConfigError(f"theta out of range: {self.theta}")
        if self.c0 <= 0:
            raise ConfigError(f"c0 out of range: {self.c0}")
        if not 0.0 < self.delta0 < 1.0:
            raise ConfigError(f"delta0 out of range: {self.delta0}")
        if not self.n:
            raise ConfigError("n list is empty")
        for nv in self.n:
            if nv < 2 or nv % 2:
                raise ConfigError(f"n must be even and >= 2, got {nv}")
        if self.m < 1:
            raise ConfigError(f"m out of range: {self.m}")
        if self.resamples < 2:
            raise ConfigError(f"resamples out of range: {self.resamples}")
        if self.realizations < 1:
            raise ConfigError(f"realizations out of range: {self.realizations}")
        if not self.h_list:
            raise ConfigError("h_list is empty")
        if self.dist not in ("uniform", "triangular"):
            raise ConfigError(f"unknown dist: {self.dist}")
        if self.tol <= 0:
            raise ConfigError(f"tol out of range: {self.tol}")
        if self.multistart < 1:
            raise ConfigError(f"multistart out of range: {self.multistart}")
        if self.jobs < 1:
            raise ConfigError(f"jobs out of range: {self.jobs}")

    def barrier(self) -> float:
        if math.isnan(self.k):
            return default_barrier(self.c0, self.theta, DistSpec(self.dist))
        return self.k

    def solver(self) -> SolverConfig:
        return SolverConfig(tol=self.tol, max_iter=self.max_iter,
                            multistart=self.multistart, seed=self.seed)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dc_fields(self)}


_INT_KEYS = {"d", "m", "pad", "resamples", "realizations", "pairs", "bins",
             "seed", "jobs", "max_iter", "multistart"}
_FLOAT_KEYS = {"s", "theta", "c0", "delta0", "k", "v0", "tol", "pad_frac"}
_LIST_INT_KEYS = {"n"}
_LIST_FLOAT_KEYS = {"h_list", "s_list"}
_BOOL_KEYS = {"third_bc", "overwrite"}
_STR_KEYS = {"experiment", "dist", "out"}
_ALL_KEYS = (_INT_KEYS | _FLOAT_KEYS | _LIST_INT_KEYS | _LIST_FLOAT_KEYS
             | _BOOL_KEYS | _STR_KEYS)


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _LIST_INT_KEYS:
            return [int(v) for v in raw.split(",") if v.strip()]
        if key in _LIST_FLOAT_KEYS:
            return [float(v) for v in raw.split(",") if v.strip()]
        if key in _BOOL_KEYS:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for key {key!r}: {raw!r}") from exc
    return raw


def parse_config(path: str = None, overrides: dict = None,
                 experiment: str = None) -> RunConfig:
    """Flat key-value file merged with command-line overrides (flags win)."""
    cfg = RunConfig()
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key = value")
                key, raw = (t.strip() for t in line.split("=", 1))
                if key not in _ALL_KEYS:
                    raise ConfigError(f"unknown config key: {key!r}")
                setattr(cfg, key, _parse_value(key, raw))
    for key, raw in (overrides or {}).items():
        if key not in _ALL_KEYS:
            raise ConfigError(f"unknown config key: {key!r}")
        value = _parse_value(key, raw) if isinstance(raw, str) else raw
        setattr(cfg, key, value)
    if experiment is not None:
        if cfg.experiment and cfg.experiment != experiment:
            raise ConfigError(
                f"config names experiment {cfg.experiment!r} but the "
                f"command is {experiment!r}")
        cfg.experiment = experiment
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# output helpers


def _stem(cfg: RunConfig) -> str:
    n = cfg.n[0] if len(cfg.n) == 1 else cfg.n
    return experiment_filename(cfg.experiment, cfg.d, cfg.s, cfg.theta,
                               n, "").rstrip(".")


def _prepare_out(cfg: RunConfig) -> str:
    try:
        os.makedirs(cfg.out, exist_ok=True)
        probe = os.path.join(cfg.out, ".write_probe")
        with open(probe, "w") as fh:
            fh.write("")
        os.remove(probe)
    except OSError as exc:
        raise ConfigError(f"output directory not writable: {cfg.out} ({exc})")
    manifest = os.path.join(cfg.out, _stem(cfg) + ".json")
    if os.path.exists(manifest) and not cfg.overwrite:
        raise ConfigError(
            f"output already exists (use overwrite = true): {manifest}")
    return manifest


def _write_manifest(path: str, cfg: RunConfig, extra: dict = None) -> None:
    payload = {"version": __version__, "config": cfg.as_dict(),
               "seed": cfg.seed, "argv": sys.argv}
    if extra:
        payload.update(extra)
    write_json(path, payload)


def _field_rows(fieldobj: ScalarField):
    x = fieldobj.grid.coords()
    for i in range(fieldobj.grid.npoints):
        yield list(x[i]) + [fieldobj.values[i]]


def _write_field_csv(path: str, fieldobj: ScalarField) -> None:
    header = [f"x{k}" for k in range(fieldobj.grid.d)] + ["value"]
    write_csv(path, header, _field_rows(fieldobj))


def _rows_from_dicts(dicts: list) -> tuple:
    keys = []
    for d in dicts:
        for k in d:
            if k not in keys:
                keys.append(k)
    return keys, [[d.get(k, "") for k in keys] for d in dicts]


# ---------------------------------------------------------------------------
# experiment runners (each returns a failure fraction for the exit code)


def _run_minimize(cfg: RunConfig, stem: str) -> float:
    grid = make_grid(cfg.d, cfg.n[0], cfg.m)
    pot = build_potential(cfg.c0, cfg.delta0)
    kt = KernelTable.from_grid(grid, cfg.s)
    dis = None
    if cfg.theta > 0:
        lo, hi = grid.site_box()
        dis = sample_disorder(lo, hi, dist=DistSpec(cfg.dist), seed=cfg.seed)
    problem = Problem(grid, kt, pot, dis, cfg.theta, ConstantExterior(cfg.v0))
    scfg = SolverConfig(tol=cfg.tol, max_iter=cfg.max_iter,
                        multistart=cfg.multistart, init_policy="constant",
                        init_value=cfg.v0, seed=cfg.seed)
    res = minimize(problem, scfg)
    write_json(os.path.join(cfg.out, stem + "_result.json"), res.as_dict())
    _write_field_csv(os.path.join(cfg.out, stem + ".csv"), res.field)
    return 0.0 if res.converged else 1.0


def _run_extremal(cfg: RunConfig, stem: str) -> float:
    grid = make_grid(cfg.d, cfg.n[0], cfg.m)
    pot = build_potential(cfg.c0, cfg.delta0)
    kt = KernelTable.from_grid(grid, cfg.s)
    lo, hi = grid.site_box()
    dis = sample_disorder(lo, hi, dist=DistSpec(cfg.dist), seed=cfg.seed)
    es = extremal_pair(cfg.barrier(), dis, cfg.theta, grid, cfg.s, pot,
                       cfg.solver(), kt=kt, compute_k_gap=True)
    write_json(os.path.join(cfg.out, stem + "_result.json"), es.as_dict())
    _write_field_csv(os.path.join(cfg.out, stem + "_plus.csv"), es.plus.field)
    _write_field_csv(os.path.join(cfg.out, stem + "_minus.csv"), es.minus.field)
    ok = es.plus.converged and es.minus.converged
    return 0.0 if ok else 1.0


def _record_outputs(cfg: RunConfig, stem: str, rec) -> None:
    keys, rows = _rows_from_dicts(rec.per_realization)
    write_csv(os.path.join(cfg.out, stem + ".csv"), keys, rows)
    agg = {"aggregates": rec.aggregates, "fits": rec.fits}
    agg_rows = []
    for name, block in rec.aggregates.items():
        if isinstance(block, dict):
            for k, v in block.items():
                if not isinstance(v, dict):
                    agg_rows.append([name, k, v])
        else:
            agg_rows.append(["", name, block])
    for name, block in rec.fits.items():
        for k, v in block.items():
            agg_rows.append([name, k, v])
    write_csv(os.path.join(cfg.out, stem + "_aggregates.csv"),
              ["group", "key", "value"], agg_rows)
    write_json(os.path.join(cfg.out, stem + "_aggregates.json"), agg)


def _failure_fraction(rec) -> float:
    total = max(len(rec.per_realization), 1)
    fails = 0
    for row in rec.per_realization:
        if row.get("converged") is False or row.get("w_converged") is False:
            fails += 1
        fails += row.get("failures", 0)
    return fails / total


def _run_scaling(cfg: RunConfig, stem: str) -> float:
    pot = build_potential(cfg.c0, cfg.delta0)
    s_list = cfg.s_list or [cfg.s]
    rec = boundary_scaling_sweep(cfg.d, s_list, cfg.n, m=cfg.m,
                                 theta=cfg.theta,
                                 realizations=cfg.realizations
                                 if cfg.theta > 0 else 0,
                                 seed=cfg.seed, pot=pot, cfg=cfg.solver(),
                                 jobs=cfg.jobs)
    _record_outputs(cfg, stem, rec)
    return _failure_fraction(rec)


def _run_fn(cfg: RunConfig, stem: str) -> float:
    pot = build_potential(cfg.c0, cfg.delta0)
    n = cfg.n[0]
    pad = cfg.pad if cfg.pad > 0 else max(1, int(round(cfg.pad_frac * n)))
    est = estimate_Fn(cfg.d, n, pad, cfg.resamples, cfg.s, cfg.theta,
                      interior_seed=cfg.seed, base_seed=cfg.seed, pot=pot,
                      m=cfg.m, dist=DistSpec(cfg.dist), cfg=cfg.solver())
    write_json(os.path.join(cfg.out, stem + "_result.json"), est.as_dict())
    write_csv(os.path.join(cfg.out, stem + ".csv"), ["resample", "delta_g"],
              [[i, v] for i, v in enumerate(est.delta_g)])
    return est.failures / cfg.resamples


def _run_variance(cfg: RunConfig, stem: str) -> float:
    pot = build_potential(cfg.c0, cfg.delta0)
    rec = variance_sweep(cfg.d, cfg.n, cfg.realizations, cfg.resamples,
                         cfg.s, cfg.theta, seed=cfg.seed,
                         pad_frac=cfg.pad_frac, pot=pot, m=cfg.m,
                         dist=DistSpec(cfg.dist), cfg=cfg.solver(),
                         bins=cfg.bins, jobs=cfg.jobs)
    _record_outputs(cfg, stem, rec)
    total = cfg.realizations * cfg.resamples * len(cfg.n)
    fails = sum(rec.aggregates[str(n)]["failures"] for n in cfg.n)
    return fails / total


def _run_ergodic(cfg: RunConfig, stem: str) -> float:
    pot = build_potential(cfg.c0, cfg.delta0)
    rec = ergodic_means(cfg.d, cfg.n[0], cfg.realizations, cfg.s, cfg.theta,
                        seed=cfg.seed, pot=pot, m=cfg.m,
                        dist=DistSpec(cfg.dist), cfg=cfg.solver(),
                        jobs=cfg.jobs)
    _record_outputs(cfg, stem, rec)
    return rec.aggregates["failures"] / cfg.realizations


def _run_gap(cfg: RunConfig, stem: str) -> float:
    pot = build_potential(cfg.c0, cfg.delta0)
    rec = uniqueness_gap_sweep(cfg.d, cfg.n, cfg.realizations, cfg.s,
                               cfg.theta, seed=cfg.seed, pot=pot, m=cfg.m,
                               dist=DistSpec(cfg.dist), cfg=cfg.solver(),
                               third_bc=cfg.third_bc, jobs=cfg.jobs)
    _record_outputs(cfg, stem, rec)
    return _failure_fraction(rec)


def _run_diagnostics(cfg: RunConfig, stem: str) -> float:
    # cutoff decay on a bounded slab profile plus smoothness diagnostics and,
    # at theta > 0, the single-site envelope-derivative check
    n = cfg.n[0]
    grid = make_grid(cfg.d, n, cfg.m)
    kt = KernelTable.from_grid(grid, cfg.s)
    x = grid.coords()
    r = np.sqrt((x ** 2).sum(axis=1))
    t = np.clip((n / 8.0 - r) / max(n / 16.0, 1.0) + 1.0, 0.0, 1.0)
    vals = -1.0 + 2.0 * t * t * (3.0 - 2.0 * t)
    slab = ScalarField(grid, vals, ConstantExterior(-1.0))
    halves = [h for h in (n / 16, n / 8, n / 4, n / 2 - 1) if h >= 1]
    rec = cutoff_diagnostic(slab, halves, kt)
    alpha = min(1.0, 2.0 * cfg.s) * 0.9
    rec.aggregates["holder_quotient"] = holder_quotient(slab, alpha)
    bumped = ScalarField(grid, vals + 1e-3 * np.cos(x[:, 0]),
                         ConstantExterior(-1.0))
    rec.aggregates["convest"] = convest_ratio(slab, bumped, kt, alpha)
    _record_outputs(cfg, stem, rec)
    if cfg.theta > 0:
        pot = build_potential(cfg.c0, cfg.delta0)
        env = envelope_derivative_check(cfg.d, n, cfg.s, cfg.theta, cfg.pairs,
                                        cfg.h_list, seed=cfg.seed, pot=pot,
                                        m=cfg.m, dist=DistSpec(cfg.dist),
                                        cfg=cfg.solver(), jobs=cfg.jobs)
        keys, rows = _rows_from_dicts(env.per_realization)
        write_csv(os.path.join(cfg.out, stem + "_envelope.csv"), keys, rows)
        write_json(os.path.join(cfg.out, stem + "_envelope.json"),
                   env.aggregates)
    return 0.0


_RUNNERS = {
    "minimize": _run_minimize,
    "extremal": _run_extremal,
    "scaling": _run_scaling,
    "fn": _run_fn,
    "variance": _run_variance,
    "ergodic": _run_ergodic,
    "gap": _run_gap,
    "diagnostics": _run_diagnostics,
}


def run(cfg: RunConfig) -> int:
    """Dispatch a validated config; manifest first, results after."""
    try:
        manifest = _prepare_out(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _write_manifest(manifest, cfg)
    stem = _stem(cfg)
    failure_fraction = _RUNNERS[cfg.experiment](cfg, stem)
    _write_manifest(manifest, cfg, extra={
        "status": "completed",
        "failure_fraction": failure_fraction,
        "failure_quota": FAILURE_QUOTA,
    })
    if failure_fraction > FAILURE_QUOTA:
        print(f"error: solver failure fraction {failure_fraction:.3f} "
              f"exceeds quota {FAILURE_QUOTA}", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fracwell",
        description="nonlocal double-well energy laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    flag_keys = sorted(_ALL_KEYS - {"experiment", "out", "seed", "jobs",
                                    "overwrite"})
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--seed", default=None)
        p.add_argument("--jobs", default=None)
        p.add_argument("--overwrite", default=None)
        p.add_argument("--set", action="append", default=[],
                       metavar="KEY=VALUE", help="override any config key")
        for key in flag_keys:
            p.add_argument(f"--{key.replace('_', '-')}", dest=f"kv_{key}",
                           default=None)
    args = parser.parse_args(argv)

    overrides = {}
    for key in _ALL_KEYS:
        val = getattr(args, f"kv_{key}", None)
        if val is not None:
            overrides[key] = val
    for item in args.set:
        if "=" not in item:
            print(f"error: --set expects KEY=VALUE, got {item!r}",
                  file=sys.stderr)
            return 2
        key, raw = item.split("=", 1)
        overrides[key.strip().replace("-", "_")] = raw
    for key in ("out", "seed", "jobs", "overwrite"):
        val = getattr(args, key)
        if val is not None:
            overrides[key] = val

    try:
        cfg = parse_config(args.config, overrides, experiment=args.command)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
