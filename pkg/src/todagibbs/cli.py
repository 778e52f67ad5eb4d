"""Batch command-line surface.

Five subcommands (sample, solve, dos, compare, checks) tie the samplers, the
equilibrium solver, the density of states and the metrics into reproducible
runs.  Each run reads one JSON config file, applies the common flag overrides
(--seed, --workers, --out), writes its outputs atomically and records a
manifest with the resolved config and per-file SHA-256 digests.  Reruns with
the same config and seed produce identical digests regardless of worker count.

Exit codes: 0 success, 1 validation error, 2 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .dos import (DosStepError, beta_mixture_check, d_lipschitz_sweep,
                  dos_from_equilibrium, fc_convexity_check,
                  free_energy_relation_check, mixture_over_profile,
                  nu_density_relation_check)
from .equilibrium import (DomainTooSmallError, Grid, GridDensity,
                          NonConvergedError, build_log_kernel, domain_auto,
                          solve_equilibrium)
from .matrices import EmpiricalSpectralMeasure, dump_matrix, eigenvalues, trace_power
from .metrics import bl_bv_distance, ks_distance, log_energy_distance, smooth_empirical
from .potentials import NonConfiningError, Potential, PotentialDomainError
from .sampling import (SeededStream, VarianceProfile, mcmc_toda, replica_map,
                       sample_beta_matrix, sample_profile_matrix,
                       sample_toda_matrix)


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


class NonConvergenceExit(RuntimeError):
    """Numerical non-convergence surfaced as exit code 2."""


# -- small helpers --------------------------------------------------------


def _atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _digest(path: str) -> str:
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _require(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"config missing required key {key!r}")
    return cfg[key]


def _run_context(cfg: dict, seed: int) -> dict:
    """Parameter echo embedded in every report for reproducibility.

    Worker count is deliberately excluded: it never affects results, and
    output digests must not depend on it.
    """
    return {"config": cfg, "master_seed": seed}


def _positive_int(cfg: dict, key: str, default=None) -> int:
    raw = cfg.get(key, default)
    if raw is None:
        raise ConfigError(f"config missing required key {key!r}")
    value = int(raw)
    if value <= 0:
        raise ConfigError(f"{key} must be a positive integer, got {raw}")
    return value


def _potential_from_config(cfg: dict) -> Potential:
    spec = cfg.get("potential", {"type": "zero"})
    try:
        return Potential.from_dict(spec)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"invalid potential spec: {exc}") from exc


def _grid_from_config(cfg: dict, p: float, w: Potential) -> Grid:
    gspec = cfg.get("grid", {})
    m = int(gspec.get("m", 2000))
    half = gspec.get("half_width", "auto")
    if half == "auto":
        half = domain_auto(p, w)
    try:
        return Grid(float(half), m)
    except ValueError as exc:
        raise ConfigError(f"invalid grid spec: {exc}") from exc


# -- experiment configs ------------------------------------------------------
#
# One validated record per command.  ``raw`` keeps the exact dict read from
# the JSON file, so the manifest snapshot round-trips losslessly.


@dataclass(frozen=True)
class SampleConfig:
    raw: dict = field(repr=False)
    source: str
    n: int
    p: float | None
    replicas: int | None
    profile: "VarianceProfile | None"
    potential: Potential
    sweeps: int | None
    thin: int
    proposal_scales: tuple
    dump_samples: bool

    @classmethod
    def from_dict(cls, cfg: dict) -> "SampleConfig":
        source = _require(cfg, "source")
        if source not in ("toda", "beta", "profile", "mcmc"):
            raise ConfigError(f"unknown sample source {source!r}")
        n = _positive_int(cfg, "n")
        p = replicas = sweeps = None
        profile = None
        if source == "profile":
            try:
                profile = VarianceProfile(tuple(_require(cfg, "profile")))
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        else:
            p = float(_require(cfg, "p"))
            if p <= 0:
                raise ConfigError("p must be positive")
        if source == "mcmc":
            sweeps = _positive_int(cfg, "sweeps")
        else:
            replicas = _positive_int(cfg, "replicas")
        return cls(raw=cfg, source=source, n=n, p=p, replicas=replicas,
                   profile=profile, potential=_potential_from_config(cfg),
                   sweeps=sweeps, thin=_positive_int(cfg, "thin", 1),
                   proposal_scales=tuple(cfg.get("proposal_scales", (0.5, 0.5))),
                   dump_samples=bool(cfg.get("dump_samples", False)))


@dataclass(frozen=True)
class SolveConfig:
    raw: dict = field(repr=False)
    p: float
    potential: Potential
    grid: Grid
    theta0: float
    tol: float
    max_iter: int

    @classmethod
    def from_dict(cls, cfg: dict) -> "SolveConfig":
        p = float(_require(cfg, "p"))
        if p < 0:
            raise ConfigError("p must be nonnegative")
        w = _potential_from_config(cfg)
        return cls(raw=cfg, p=p, potential=w,
                   grid=_grid_from_config(cfg, max(p, 0.5), w),
                   theta0=float(cfg.get("theta0", 0.5)),
                   tol=float(cfg.get("tol", 1e-8)),
                   max_iter=int(cfg.get("max_iter", 10000)))


@dataclass(frozen=True)
class DosConfig:
    raw: dict = field(repr=False)
    potential: Potential
    grid: Grid
    p: float | None
    profile: "VarianceProfile | None"
    n_nodes: int
    h_p: float | None
    tol: float

    @classmethod
    def from_dict(cls, cfg: dict) -> "DosConfig":
        w = _potential_from_config(cfg)
        p = profile = None
        if "profile" in cfg:
            try:
                profile = VarianceProfile(tuple(cfg["profile"]))
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
            grid = _grid_from_config(cfg, profile.maximum + 0.5, w)
        else:
            p = float(_require(cfg, "p"))
            if p <= 0:
                raise ConfigError("p must be positive")
            grid = _grid_from_config(cfg, p + 0.5, w)
        h_p = cfg.get("h_p")
        return cls(raw=cfg, potential=w, grid=grid, p=p, profile=profile,
                   n_nodes=_positive_int(cfg, "n_nodes", 15),
                   h_p=float(h_p) if h_p is not None else None,
                   tol=float(cfg.get("tol", 1e-8)))


@dataclass(frozen=True)
class CompareConfig:
    raw: dict = field(repr=False)
    eigenvalues_csv: str
    density_csv: str
    bandwidth: float | None

    @classmethod
    def from_dict(cls, cfg: dict) -> "CompareConfig":
        bw = cfg.get("bandwidth")
        return cls(raw=cfg, eigenvalues_csv=str(_require(cfg, "eigenvalues_csv")),
                   density_csv=str(_require(cfg, "density_csv")),
                   bandwidth=float(bw) if bw else None)


@dataclass(frozen=True)
class ChecksConfig:
    raw: dict = field(repr=False)
    p: float
    potential: Potential
    grid: Grid
    which: tuple
    n_nodes: int
    mixture_tol: float
    n: int
    sweeps: int
    tol: float

    @classmethod
    def from_dict(cls, cfg: dict) -> "ChecksConfig":
        p = float(cfg.get("p", 1.0))
        if p <= 0:
            raise ConfigError("p must be positive")
        w = _potential_from_config(cfg)
        return cls(raw=cfg, p=p, potential=w,
                   grid=_grid_from_config(cfg, p + 0.5, w),
                   which=tuple(cfg.get("checks", ("beta_mixture", "free_energy",
                                                  "nu_density", "d_lipschitz",
                                                  "fc_convexity"))),
                   n_nodes=int(cfg.get("n_nodes", 21)),
                   mixture_tol=float(cfg.get("mixture_tol", 1e-2)),
                   n=_positive_int(cfg, "n", 200),
                   sweeps=_positive_int(cfg, "sweeps", 500),
                   tol=float(cfg.get("tol", 1e-8)))


class RunManifest:
    """Written before the run starts, finalized with digests afterwards."""

    def __init__(self, out_dir: str, command: str, config: dict, seed: int, workers: int):
        self.path = os.path.join(out_dir, "manifest.json")
        self.record = {
            "command": command,
            "artifact_version": __version__,
            "config": config,
            "master_seed": seed,
            "workers": workers,
            "status": "running",
            "outputs": {},
        }
        self._t0 = time.time()
        _atomic_write(self.path, _json_text(self.record))

    def finalize(self, outputs: list[str]) -> None:
        self.record["outputs"] = {os.path.basename(p): _digest(p) for p in outputs}
        self.record["wall_clock_seconds"] = time.time() - self._t0
        self.record["status"] = "complete"
        _atomic_write(self.path, _json_text(self.record))


# -- sample ----------------------------------------------------------------


def cmd_sample(cfg: dict, seed: int, workers: int, out_dir: str) -> int:
    config = SampleConfig.from_dict(cfg)
    manifest = RunManifest(out_dir, "sample", cfg, seed, workers)
    rows = []
    trace2 = []
    extra: dict = {}

    if config.source == "mcmc":
        try:
            report = mcmc_toda(SeededStream(seed, 0), config.n, config.p,
                               config.potential, sweeps=config.sweeps,
                               thin=config.thin,
                               proposal_scales=config.proposal_scales)
        except (ValueError, NonConfiningError) as exc:
            raise ConfigError(str(exc)) from exc
        for k, sample in enumerate(report.samples):
            rows.append((k, eigenvalues(sample).values))
            trace2.append(trace_power(sample, 2))
        extra = {
            "acceptance": report.acceptance,
            "autocorr_time": report.autocorr_time,
            "ess": report.ess,
            "sweeps": report.sweeps,
        }
        if config.dump_samples:
            for k, sample in enumerate(report.samples):
                dump_matrix(sample, os.path.join(out_dir, f"sample_{k:05d}.txt"))
    else:
        if config.source == "toda":
            draw = lambda stream: sample_toda_matrix(stream, config.n, config.p)
        elif config.source == "beta":
            draw = lambda stream: sample_beta_matrix(stream, config.n, config.p)
        else:
            draw = lambda stream: sample_profile_matrix(stream, config.n, config.profile)

        def task(stream):
            m = draw(stream)
            return eigenvalues(m).values, trace_power(m, 2)

        results = replica_map(task, config.replicas, seed, workers=workers)
        for k, (vals, t2) in enumerate(results):
            rows.append((k, vals))
            trace2.append(t2)

    eig_path = os.path.join(out_dir, "eigenvalues.csv")
    lines = ["replica,lambda"]
    for k, vals in rows:
        lines.extend(f"{k},{v:.17g}" for v in vals)
    _atomic_write(eig_path, "\n".join(lines) + "\n")

    allvals = np.concatenate([vals for _, vals in rows])
    t2 = np.asarray(trace2)
    summary = {
        "source": config.source,
        "n": config.n,
        "replica_count": len(rows),
        "eigenvalue_count": int(allvals.size),
        "moments": {str(k): float(np.mean(allvals ** k)) for k in (1, 2, 3, 4)},
        "trace_power2_mean": float(t2.mean()),
        "trace_power2_stderr": float(t2.std(ddof=1) / np.sqrt(t2.size)) if t2.size > 1 else 0.0,
        "run": _run_context(cfg, seed),
        **extra,
    }
    summary_path = os.path.join(out_dir, "summary.json")
    _atomic_write(summary_path, _json_text(summary))
    outputs = [eig_path, summary_path]
    if config.source == "mcmc" and config.dump_samples:
        outputs += [os.path.join(out_dir, f"sample_{k:05d}.txt") for k in range(len(rows))]
    manifest.finalize(outputs)
    return 0


# -- solve -----------------------------------------------------------------


def cmd_solve(cfg: dict, seed: int, workers: int, out_dir: str) -> int:
    config = SolveConfig.from_dict(cfg)
    manifest = RunManifest(out_dir, "solve", cfg, seed, workers)
    solution = solve_equilibrium(config.p, config.potential, config.grid,
                                 theta0=config.theta0, tol=config.tol,
                                 max_iter=config.max_iter)
    density_path = os.path.join(out_dir, "density.csv")
    _atomic_write(density_path, solution.density.to_csv_text())
    solution_path = os.path.join(out_dir, "solution.json")
    record = solution.to_json_dict(density_file="density.csv")
    record["second_moment"] = solution.density.moment(2)
    _atomic_write(solution_path, _json_text(record))
    manifest.finalize([density_path, solution_path])
    if not solution.converged:
        raise NonConvergenceExit(
            f"equilibrium solve did not converge: residual {solution.residual:.3e}")
    return 0


# -- dos ---------------------------------------------------------------------


def cmd_dos(cfg: dict, seed: int, workers: int, out_dir: str) -> int:
    config = DosConfig.from_dict(cfg)
    manifest = RunManifest(out_dir, "dos", cfg, seed, workers)
    if config.profile is not None:
        nu = mixture_over_profile(config.profile, config.potential, config.grid,
                                  config.n_nodes, tol=config.tol)
        report = {"mode": "profile", "profile": list(config.profile.values),
                  "n_nodes": config.n_nodes}
    else:
        result = dos_from_equilibrium(config.p, config.potential, config.grid,
                                      h_p=config.h_p, tol=config.tol)
        nu = result.nu
        report = {
            "mode": "single",
            "P": config.p,
            "fd_step": result.fd_step,
            "negativity": result.negativity,
        }
    nu_path = os.path.join(out_dir, "nu.csv")
    _atomic_write(nu_path, nu.to_csv_text())
    report.update({
        "mass": nu.mass(),
        "moments": {str(k): nu.moment(k) for k in (1, 2, 3, 4)},
        "run": _run_context(cfg, seed),
    })
    report_path = os.path.join(out_dir, "report.json")
    _atomic_write(report_path, _json_text(report))
    manifest.finalize([nu_path, report_path])
    return 0


# -- compare -----------------------------------------------------------------


def _load_empirical_csv(path: str):
    """Eigenvalue list, or a density when the file carries an 'x,rho' header."""
    try:
        with open(path) as fh:
            header = fh.readline().strip()
    except OSError as exc:
        raise ConfigError(f"cannot read empirical CSV: {exc}") from exc
    if header == "x,rho":
        return GridDensity.from_csv(path)
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return EmpiricalSpectralMeasure(data[:, 1])


def cmd_compare(cfg: dict, seed: int, workers: int, out_dir: str) -> int:
    config = CompareConfig.from_dict(cfg)
    empirical_input = _load_empirical_csv(config.eigenvalues_csv)
    try:
        density = GridDensity.from_csv(config.density_csv)
    except OSError as exc:
        raise ConfigError(f"cannot read density CSV: {exc}") from exc
    manifest = RunManifest(out_dir, "compare", cfg, seed, workers)
    grid = density.grid
    kernel = build_log_kernel(grid)
    if isinstance(empirical_input, GridDensity):
        if empirical_input.grid != grid:
            raise ConfigError("density inputs live on different grids")
        es = None
        smoothed = empirical_input
        empirical = empirical_input.values
        count = grid.m
    else:
        es = empirical_input
        lo = grid.x[0] - grid.h / 2.0
        hi = grid.x[-1] + grid.h / 2.0
        if es.values[0] < lo or es.values[-1] > hi:
            raise ConfigError("eigenvalue range exceeds the density grid")
        smoothed = smooth_empirical(es, grid, bandwidth=config.bandwidth)
        hist, _ = np.histogram(es.values,
                               bins=np.concatenate((grid.x - grid.h / 2.0,
                                                    [grid.x[-1] + grid.h / 2.0])))
        empirical = hist / (es.values.size * grid.h)
        count = len(es)
    subject = es if es is not None else smoothed
    report = {
        "bl_bv_distance": bl_bv_distance(subject, density),
        "ks_distance": ks_distance(subject, density),
        "log_energy_distance": log_energy_distance(smoothed, density, kernel),
        "moments_empirical": {str(k): subject.moment(k) for k in (1, 2, 3, 4)},
        "moments_theoretical": {str(k): density.moment(k) for k in (1, 2, 3, 4)},
        "eigenvalue_count": count,
        "run": _run_context(cfg, seed),
    }
    overlay_path = os.path.join(out_dir, "overlay.csv")
    lines = ["x,rho_theory,rho_empirical"]
    lines.extend(f"{x:.17g},{r:.17g},{e:.17g}"
                 for x, r, e in zip(grid.x, density.values, empirical))
    _atomic_write(overlay_path, "\n".join(lines) + "\n")
    report_path = os.path.join(out_dir, "report.json")
    _atomic_write(report_path, _json_text(report))
    manifest.finalize([overlay_path, report_path])
    return 0


# -- checks ------------------------------------------------------------------


def cmd_checks(cfg: dict, seed: int, workers: int, out_dir: str) -> int:
    config = ChecksConfig.from_dict(cfg)
    manifest = RunManifest(out_dir, "checks", cfg, seed, workers)
    p, w, grid, tol = config.p, config.potential, config.grid, config.tol
    bundle = {}
    if "beta_mixture" in config.which:
        rep = beta_mixture_check(p, w, grid, n_nodes=config.n_nodes, tol=tol)
        rep["pass"] = bool(rep["sup_cdf_gap"] <= config.mixture_tol)
        bundle["beta_mixture"] = rep
    if "free_energy" in config.which:
        rep = free_energy_relation_check(p, w, n=config.n, mc_sweeps=config.sweeps,
                                         seed=seed, workers=workers, tol=tol)
        rep["pass"] = bool(rep["gap"] <= max(3.0 * rep["stderr"], 0.02))
        bundle["free_energy"] = rep
    if "nu_density" in config.which:
        rep = nu_density_relation_check(p, w, grid, tol=tol)
        rep["pass"] = bool(abs(rep["normalization"] - 1.0) <= 1e-3
                           and rep["min_density_factor"] >= -1e-6)
        bundle["nu_density"] = rep
    if "d_lipschitz" in config.which:
        ratios = d_lipschitz_sweep(w=w, grid=grid)
        ok = all(max(r) <= 1.5 * r[0] + 1e-9 for r in ratios.values())
        bundle["d_lipschitz"] = {"ratios": {str(k): v for k, v in ratios.items()},
                                 "pass": bool(ok)}
    if "fc_convexity" in config.which:
        rep = fc_convexity_check(w=w, grid=grid, tol=tol)
        rep["pass"] = bool(rep["min_second_difference"] >= -1e-6)
        bundle["fc_convexity"] = rep
    bundle["run"] = _run_context(cfg, seed)
    report_path = os.path.join(out_dir, "checks.json")
    _atomic_write(report_path, _json_text(bundle))
    manifest.finalize([report_path])
    return 0


# -- entry point ---------------------------------------------------------------


_COMMANDS = {
    "sample": cmd_sample,
    "solve": cmd_solve,
    "dos": cmd_dos,
    "compare": cmd_compare,
    "checks": cmd_checks,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="todagibbs",
        description="Toda generalized Gibbs ensembles: sampling, equilibrium "
                    "measures, density of states, comparisons.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        cp = sub.add_parser(name)
        cp.add_argument("--config", required=True, help="JSON config file")
        cp.add_argument("--seed", type=int, default=None, help="master seed override")
        cp.add_argument("--workers", type=int, default=None, help="worker count override")
        cp.add_argument("--out", default=None, help="output directory override")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: config={args.config} reason={exc}", file=sys.stderr)
        return 1
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    workers = args.workers if args.workers is not None else int(
        cfg.get("workers", os.cpu_count() or 1))
    out_dir = args.out if args.out is not None else cfg.get("out", ".")
    os.makedirs(out_dir, exist_ok=True)
    try:
        return _COMMANDS[args.command](cfg, seed, workers, out_dir)
    except (ConfigError, PotentialDomainError, NonConfiningError,
            DomainTooSmallError) as exc:
        print(f"error: command={args.command} reason={exc}", file=sys.stderr)
        return 1
    except (NonConvergenceExit, NonConvergedError, DosStepError) as exc:
        print(f"error: command={args.command} reason={exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        # parameter validation raised inside the library
        print(f"error: command={args.command} reason={exc}", file=sys.stderr)
        return 1


def script_entry() -> None:
    sys.exit(main())
