"""Toda density of states and its cross-identities.

The almost-sure limit of the Toda spectral measure at pressure P is obtained
from the log-gas equilibrium family by differentiating in the pressure,

    nu_P = d/dP ( P * mu_P ),

evaluated here with central differences.  On top of that single construction
the module verifies three structural identities at desk scale:

* the mixture identity  mu_P = int_0^1 nu_{sP} ds  (and its variance-profile
  generalization  nu_sigma = int_0^1 nu_{sigma(P)} dP),
* the free-energy derivative law linking the Toda log-moment-generating
  function of Tr V to the pressure derivative of the Coulomb free energy,
* the representation of nu_P as (C + 2P * log-potential of nu_P) * mu_P.

Free energies enter only through V-differences, where additive constants and
the overall sign convention of the log-partition limit cancel; the difference
used here is  F_C(V) - F_C(0) = -(inf F[V] - inf F[0])  with F the functional
minimized by the equilibrium solver.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .equilibrium import (EquilibriumSolution, Grid, GridDensity, LogKernel,
                          build_log_kernel, domain_auto, solve_equilibrium)
from .matrices import trace_potential
from .metrics import ks_distance, log_energy_distance
from .potentials import Potential
from .sampling import SeededStream, VarianceProfile, mcmc_toda

logger = logging.getLogger(__name__)

DEFAULT_NEGATIVITY_CEILING = 1e-3


class DosStepError(ValueError):
    """Differencing produced material negative mass; refine h_P or the grid."""


@dataclass(frozen=True)
class DosResult:
    """Density of states with its finite-difference provenance."""

    p: float
    potential: Potential
    nu: GridDensity
    fd_step: float
    negativity: float
    lower: EquilibriumSolution
    upper: EquilibriumSolution


def default_fd_step(p: float) -> float:
    return min(1e-3, p / 10.0)


def dos_from_equilibrium(p: float, w: Potential, grid: Grid,
                         h_p: float | None = None, tol: float = 1e-8,
                         kernel: LogKernel | None = None,
                         negativity_ceiling: float = DEFAULT_NEGATIVITY_CEILING) -> DosResult:
    """nu_P as the central difference of P' -> P' mu_{P'} at P.

    Pre-clip mass equals one up to rounding because each solve is normalized
    exactly; tiny negative cells are clipped and the clipped mass reported.
    """
    if not p > 0:
        raise ValueError("pressure must be positive")
    if h_p is None:
        h_p = default_fd_step(p)
    if not 0 < h_p < p / 2:
        raise ValueError("need 0 < h_p < p/2")
    if kernel is None:
        kernel = build_log_kernel(grid)
    lower = solve_equilibrium(p - h_p, w, grid, tol=tol, kernel=kernel, raise_on_failure=True)
    upper = solve_equilibrium(p + h_p, w, grid, tol=tol, kernel=kernel, raise_on_failure=True)
    raw = ((p + h_p) * upper.density.values - (p - h_p) * lower.density.values) / (2.0 * h_p)
    mass = float(np.sum(raw) * grid.h)
    if abs(mass - 1.0) > 1e-8:
        raise DosStepError(f"pre-clip mass {mass} deviates from 1 beyond 1e-8")
    negativity = float(-np.sum(np.minimum(raw, 0.0)) * grid.h)
    if negativity > negativity_ceiling:
        raise DosStepError(
            f"clipped negative mass {negativity:.3e} exceeds ceiling "
            f"{negativity_ceiling:.1e}; reduce h_p or refine the grid"
        )
    nu = GridDensity.from_unnormalized(grid, raw)
    return DosResult(p=p, potential=w, nu=nu, fd_step=h_p, negativity=negativity,
                     lower=lower, upper=upper)


def _gauss_legendre_01(n_nodes: int):
    nodes, weights = np.polynomial.legendre.leggauss(n_nodes)
    return 0.5 * (nodes + 1.0), 0.5 * weights


def mixture_over_profile(profile: VarianceProfile, w: Potential, grid: Grid,
                         n_nodes: int, tol: float = 1e-8,
                         kernel: LogKernel | None = None) -> GridDensity:
    """nu_sigma = int_0^1 nu_{sigma(P)} dP by Gauss-Legendre quadrature."""
    if n_nodes < 5:
        raise ValueError("need at least 5 quadrature nodes")
    if kernel is None:
        kernel = build_log_kernel(grid)
    nodes, weights = _gauss_legendre_01(n_nodes)
    mix = np.zeros(grid.m)
    for s, wt in zip(nodes, weights):
        result = dos_from_equilibrium(float(profile(s)), w, grid, tol=tol, kernel=kernel)
        mix += wt * result.nu.values
    return GridDensity.from_unnormalized(grid, mix)


def beta_mixture_check(p: float, w: Potential, grid: Grid, n_nodes: int = 21,
                       s_min: float = 1e-3, tol: float = 1e-8,
                       kernel: LogKernel | None = None) -> dict:
    """Compare mu_P against the pressure mixture int_0^1 nu_{sP} ds.

    Quadrature nodes below s_min are clamped there; the solver conditioning
    degrades toward P = 0 where both sides approach exp(-W)/Z anyway.
    """
    if n_nodes < 5:
        raise ValueError("need at least 5 quadrature nodes")
    if kernel is None:
        kernel = build_log_kernel(grid)
    nodes, weights = _gauss_legendre_01(n_nodes)
    mix = np.zeros(grid.m)
    for s, wt in zip(nodes, weights):
        s_eff = max(float(s), s_min)
        result = dos_from_equilibrium(s_eff * p, w, grid, tol=tol, kernel=kernel)
        mix += wt * result.nu.values
    mixture = GridDensity.from_unnormalized(grid, mix)
    mu = solve_equilibrium(p, w, grid, tol=tol, kernel=kernel, raise_on_failure=True).density
    gap = ks_distance(mixture, mu)
    return {
        "sup_cdf_gap": gap,
        "n_nodes": n_nodes,
        "s_min": s_min,
        "second_moment_mixture": mixture.moment(2),
        "second_moment_mu": mu.moment(2),
    }


# -- free-energy derivative check ----------------------------------------


def coulomb_free_energy_shift(p: float, v: Potential, grid: Grid, tol: float = 1e-8,
                              kernel: LogKernel | None = None) -> float:
    """F_C(V, P) - F_C(0, P): minus the difference of functional minima.

    The minimized functional is the large-N rate of the log partition with the
    opposite sign, so the V-difference of log-partition limits is
    -(inf F[V] - inf F[0]); constants independent of V cancel.
    """
    if kernel is None:
        kernel = build_log_kernel(grid)
    with_v = solve_equilibrium(p, v, grid, tol=tol, kernel=kernel, raise_on_failure=True)
    without = solve_equilibrium(p, Potential.zero(), grid, tol=tol, kernel=kernel,
                                raise_on_failure=True)
    return -(with_v.free_energy - without.free_energy)


def _ti_node_task(args):
    (seed, stream_id, n, p, v_dict, alpha, sweeps, thin) = args
    v = Potential.from_dict(v_dict)
    tilted = v.scaled(alpha)
    report = mcmc_toda(SeededStream(seed, stream_id), n, p, tilted,
                       sweeps=sweeps, thin=thin)
    vals = [trace_potential(m, v, method="eigen") for m in report.samples]
    return float(np.mean(vals)), float(report.ess), report.acceptance


def free_energy_relation_check(p: float, w: Potential, n: int, mc_sweeps: int,
                               seed: int = 0, n_alpha: int = 8, replicas: int = 4,
                               thin: int = 5, grid: Grid | None = None,
                               fd_step: float = 1e-2, tol: float = 1e-8,
                               workers: int = 1) -> dict:
    """Thermodynamic integration against the pressure-derivative identity.

    lhs: (1/N) log E[exp(-Tr V)] under the V = 0 ensemble, via
         -int_0^1 E_alpha[(1/N) Tr V] d(alpha) with E_alpha sampled by MCMC
         under the tilted potential alpha V (trapezoid over the alpha nodes,
         stderr from replica spread).
    rhs: d/dP ( P * [F_C(V, P) - F_C(0, P)] ) by central differences of
         equilibrium free energies.
    """
    if n_alpha < 8:
        raise ValueError("need at least 8 integration nodes")
    if replicas < 2:
        raise ValueError("need at least 2 replicas for a spread-based stderr")
    if w.is_zero:
        return {"lhs": 0.0, "rhs": 0.0, "stderr": 0.0, "gap": 0.0,
                "min_ess": float("inf"), "reliable": True, "alphas": [], "node_means": []}
    if not w.is_polynomial:
        raise TypeError("thermodynamic integration needs a polynomial potential")

    alphas = np.linspace(0.0, 1.0, n_alpha)
    tasks = []
    for k, alpha in enumerate(alphas):
        for r in range(replicas):
            tasks.append((seed, k * replicas + r, n, p, w.to_dict(), float(alpha),
                          mc_sweeps, thin))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_ti_node_task, tasks))
    else:
        results = [_ti_node_task(t) for t in tasks]

    node_means = np.zeros(n_alpha)
    node_se = np.zeros(n_alpha)
    min_ess = float("inf")
    for k in range(n_alpha):
        vals = np.array([results[k * replicas + r][0] for r in range(replicas)])
        node_means[k] = vals.mean()
        node_se[k] = vals.std(ddof=1) / np.sqrt(replicas)
        ess_node = sum(results[k * replicas + r][1] for r in range(replicas))
        min_ess = min(min_ess, ess_node)

    trap_w = np.full(n_alpha, 1.0 / (n_alpha - 1))
    trap_w[0] = trap_w[-1] = 0.5 / (n_alpha - 1)
    lhs = float(-np.sum(trap_w * node_means))
    stderr = float(np.sqrt(np.sum((trap_w * node_se) ** 2)))

    if grid is None:
        half = domain_auto(p + fd_step, Potential.zero())
        grid = Grid(half, 2000)
    kernel = build_log_kernel(grid)
    shift_up = coulomb_free_energy_shift(p + fd_step, w, grid, tol=tol, kernel=kernel)
    shift_dn = coulomb_free_energy_shift(p - fd_step, w, grid, tol=tol, kernel=kernel)
    rhs = float(((p + fd_step) * shift_up - (p - fd_step) * shift_dn) / (2.0 * fd_step))

    return {
        "lhs": lhs,
        "rhs": rhs,
        "stderr": stderr,
        "gap": abs(lhs - rhs),
        "min_ess": float(min_ess),
        "reliable": bool(min_ess >= 50.0),
        "alphas": alphas.tolist(),
        "node_means": node_means.tolist(),
        "node_stderr": node_se.tolist(),
    }


def nu_density_relation_check(p: float, w: Potential, grid: Grid,
                              tol: float = 1e-8,
                              kernel: LogKernel | None = None) -> dict:
    """Check nu_P = (C + 2P * log-potential of nu_P) * mu_P pointwise.

    C is fitted as the mu-weighted mean of nu/mu - 2P U_nu, which also pins
    the normalization  C + 2P int U_nu dmu = 1.
    """
    if kernel is None:
        kernel = build_log_kernel(grid)
    mu = solve_equilibrium(p, w, grid, tol=tol, kernel=kernel, raise_on_failure=True).density
    nu = dos_from_equilibrium(p, w, grid, tol=tol, kernel=kernel).nu
    h = grid.h
    u_nu = kernel.log_potential(nu.values)
    mask = mu.values > 0.0
    weight = float(np.sum(mu.values[mask]) * h)
    c_fit = float(np.sum(nu.values[mask] * h - 2.0 * p * u_nu[mask] * mu.values[mask] * h)
                  / weight)
    density_factor = c_fit + 2.0 * p * u_nu
    residual = float(np.max(np.abs(nu.values - density_factor * mu.values)))
    normalization = float(c_fit + 2.0 * p * np.sum(u_nu * mu.values) * h)
    min_factor = float(np.min(density_factor[mask]))
    return {
        "constant": c_fit,
        "sup_residual": residual,
        "normalization": normalization,
        "min_density_factor": min_factor,
    }


def d_lipschitz_sweep(ps=(0.5, 1.0, 2.0), deltas=(1e-1, 1e-2, 1e-3),
                      w: Potential | None = None, grid: Grid | None = None,
                      tol: float = 1e-9) -> dict:
    """Secant ratios D(mu_P, mu_{P+delta}) / delta as delta shrinks."""
    if w is None:
        w = Potential.zero()
    if grid is None:
        grid = Grid(domain_auto(max(ps) + max(deltas), w), 2000)
    kernel = build_log_kernel(grid)
    out = {}
    for p in ps:
        base = solve_equilibrium(p, w, grid, tol=tol, kernel=kernel,
                                 raise_on_failure=True).density
        ratios = []
        for delta in deltas:
            shifted = solve_equilibrium(p + delta, w, grid, tol=tol, kernel=kernel,
                                        raise_on_failure=True).density
            ratios.append(log_energy_distance(base, shifted, kernel) / delta)
        out[p] = ratios
    return out


def fc_convexity_check(p_grid=None, w: Potential | None = None,
                       grid: Grid | None = None, tol: float = 1e-8) -> dict:
    """Discrete convexity of the Coulomb free energy P -> F_C.

    F_C is the log-partition limit, i.e. minus the functional minimum; its
    convexity in P is the finite-N variance inequality surviving the limit.
    """
    if p_grid is None:
        p_grid = np.arange(0.4, 2.401, 0.2)
    p_grid = np.asarray(p_grid, dtype=float)
    if w is None:
        w = Potential.zero()
    if grid is None:
        grid = Grid(domain_auto(float(p_grid[-1]), w), 2000)
    kernel = build_log_kernel(grid)
    f_c = np.array([
        -solve_equilibrium(float(p), w, grid, tol=tol, kernel=kernel,
                           raise_on_failure=True).free_energy
        for p in p_grid
    ])
    second = f_c[2:] - 2.0 * f_c[1:-1] + f_c[:-2]
    return {
        "p_grid": p_grid.tolist(),
        "free_energies": f_c.tolist(),
        "second_differences": second.tolist(),
        "min_second_difference": float(np.min(second)),
    }
