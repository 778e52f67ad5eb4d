"""Equilibrium measures of the high-temperature log-gas.

For pressure P >= 0 and confinement W(x) = x^2/2 + V(x) the free-energy
functional over probability densities rho,

    F(rho) = int W rho - P * double-int log|x-y| rho(x) rho(y) + int rho log rho,

is strictly convex and has a unique minimizer with full support.  Its
stationarity condition

    W(x) - 2P * int log|x-y| rho(y) dy + log rho(x) = lambda

rearranges into the explicit fixed point rho = normalize(exp(-W + 2P * U_rho))
with U_rho the log-potential of rho.  ``solve_equilibrium`` runs a damped
Picard iteration on that map with a monotone free-energy safeguard.

Discretization: midpoint grid, with the logarithmic kernel integrated exactly
over cells so the singularity needs no regularization.  The kernel matrix is
Toeplitz; products use a circulant FFT embedding.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass

import numpy as np

from .potentials import NonConfiningError, Potential

logger = logging.getLogger(__name__)

DENSITY_FLOOR = 1e-300
# boundary cells above this fraction of the peak indicate mass escaping the box
_LEAK_RATIO = 1e-10


class DomainTooSmallError(ValueError):
    """Converged density does not vanish at the grid boundary."""


class NonConvergedError(RuntimeError):
    """Fixed-point iteration hit max_iter; carries the partial solution."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


@dataclass(frozen=True)
class Grid:
    """Uniform midpoint grid on [-L, L]: x_i = -L + (i + 1/2) h, h = 2L/M."""

    half_width: float
    m: int

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")
        if self.m < 16:
            raise ValueError("need at least 16 grid points")

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / self.m

    @property
    def x(self) -> np.ndarray:
        # centered construction keeps the grid exactly antisymmetric
        return (np.arange(self.m) - (self.m - 1) / 2.0) * self.h

    def refine(self) -> "Grid":
        return Grid(self.half_width, 2 * self.m)


@dataclass(frozen=True)
class GridDensity:
    """Nonnegative cell values integrating to one against the grid measure."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).copy()
        if vals.shape != (self.grid.m,):
            raise ValueError("values must match the grid size")
        if not np.all(np.isfinite(vals)):
            raise ValueError("density values must be finite")
        if np.any(vals < 0):
            raise ValueError("density values must be nonnegative")
        mass = float(np.sum(vals) * self.grid.h)
        if abs(mass - 1.0) > 1e-10:
            raise ValueError(f"density mass {mass} deviates from 1 beyond 1e-10")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_unnormalized(cls, grid: Grid, values) -> "GridDensity":
        vals = np.clip(np.asarray(values, dtype=float), 0.0, None)
        total = np.sum(vals) * grid.h
        if not total > 0:
            raise ValueError("cannot normalize a zero density")
        return cls(grid, vals / total)

    def mass(self) -> float:
        return float(np.sum(self.values) * self.grid.h)

    def moment(self, k: int) -> float:
        return float(np.sum(self.grid.x ** k * self.values) * self.grid.h)

    def cdf_breakpoints(self):
        """Cell edges and CDF values there (piecewise linear in between)."""
        edges = np.concatenate((self.grid.x - self.grid.h / 2.0,
                                [self.grid.x[-1] + self.grid.h / 2.0]))
        cums = np.concatenate(([0.0], np.cumsum(self.values) * self.grid.h))
        return edges, cums

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_csv_text())

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        buf.write("x,rho\n")
        for x, r in zip(self.grid.x, self.values):
            buf.write(f"{x:.17g},{r:.17g}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, path) -> "GridDensity":
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        xs, vals = data[:, 0], data[:, 1]
        h = xs[1] - xs[0]
        half_width = xs[-1] + h / 2.0
        grid = Grid(half_width, xs.size)
        if not np.allclose(grid.x, xs, atol=1e-9 * max(1.0, half_width)):
            raise ValueError("CSV grid is not a uniform midpoint grid about 0")
        return cls.from_unnormalized(grid, vals)


class LogKernel:
    """Cell-integrated logarithmic kernel on a grid.

    K[i, j] = (1/h) * int_{cell j} log|x_i - y| dy, which depends only on
    |i - j|.  The antiderivative G(t) = t log|t| - t handles the diagonal
    cell exactly (improper integral across the singularity).
    """

    def __init__(self, grid: Grid):
        self.grid = grid
        h = grid.h
        d = np.arange(grid.m, dtype=float)
        upper = (d + 0.5) * h
        lower = (d - 0.5) * h
        self.column = (_g(upper) - _g(lower)) / h
        # circulant embedding for fast symmetric-Toeplitz products
        c = np.concatenate((self.column, [0.0], self.column[:0:-1]))
        self._fft_len = c.size
        self._kernel_fft = np.fft.rfft(c)

    def entry(self, i: int, j: int) -> float:
        return float(self.column[abs(i - j)])

    def apply(self, vec: np.ndarray) -> np.ndarray:
        """Matrix-vector product K @ vec."""
        m = self.grid.m
        padded = np.zeros(self._fft_len)
        padded[:m] = vec
        out = np.fft.irfft(np.fft.rfft(padded) * self._kernel_fft, self._fft_len)
        return out[:m]

    def log_potential(self, values: np.ndarray) -> np.ndarray:
        """U(x_i) = int log|x_i - y| rho(y) dy for cellwise-constant rho."""
        return self.grid.h * self.apply(values)

    def quadratic_form(self, delta: np.ndarray) -> float:
        """h^2 * delta^T K delta."""
        return float(self.grid.h ** 2 * np.dot(delta, self.apply(delta)))


def _g(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    nz = t != 0.0
    out[nz] = t[nz] * np.log(np.abs(t[nz])) - t[nz]
    return out


def build_log_kernel(grid: Grid) -> LogKernel:
    return LogKernel(grid)


@dataclass(frozen=True)
class EquilibriumSolution:
    """Converged minimizer with its multiplier and diagnostics."""

    p: float
    potential: Potential
    density: GridDensity
    lam: float
    free_energy: float
    residual: float
    iterations: int
    converged: bool

    def to_json_dict(self, density_file: str | None = None) -> dict:
        rec = {
            "P": self.p,
            "potential": self.potential.to_dict(),
            "lambda": self.lam,
            "free_energy": self.free_energy,
            "residual": self.residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "grid": {"half_width": self.density.grid.half_width, "m": self.density.grid.m},
        }
        if density_file is not None:
            rec["density_file"] = density_file
        return rec


def free_energy(rho: GridDensity, p: float, w: Potential, kernel: LogKernel) -> float:
    """Discrete free-energy functional (potential - P log-energy + entropy)."""
    vals = rho.values
    h = rho.grid.h
    wx = w.confinement(rho.grid.x)
    pot = float(np.sum(wx * vals) * h)
    log_energy = kernel.quadratic_form(vals)
    mask = vals > DENSITY_FLOOR
    entropy = float(np.sum(vals[mask] * np.log(vals[mask])) * h)
    return pot - p * log_energy + entropy


def _normalized_exp(log_values: np.ndarray, h: float) -> np.ndarray:
    shifted = log_values - np.max(log_values)
    g = np.exp(shifted)
    return g / (np.sum(g) * h)


def _residual_and_lambda(wx, phi, rho, p, h):
    mask = rho > DENSITY_FLOOR
    r = np.where(mask, wx - 2.0 * p * phi + np.log(np.where(mask, rho, 1.0)), 0.0)
    lam = float(np.sum(r * rho) * h)
    resid = float(np.max(np.abs(r[mask] - lam))) if np.any(mask) else np.inf
    return resid, lam


def solve_equilibrium(p: float, w: Potential, grid: Grid, theta0: float = 0.5,
                      tol: float = 1e-8, max_iter: int = 10000,
                      kernel: LogKernel | None = None,
                      raise_on_failure: bool = False) -> EquilibriumSolution:
    """Minimize the free-energy functional by damped fixed-point iteration.

    The iterate is rho <- (1 - theta) rho + theta T(rho) with
    T(rho) = normalize(exp(-W + 2P U_rho)); theta starts at theta0 and halves
    whenever the free energy would increase.  Convergence is declared when the
    stationarity defect  sup |W - 2P U_rho + log rho - lambda|  drops below
    tol on cells above the density floor.

    P = 0 is allowed (entropy-only problem, minimizer exp(-W)/Z).  A solution
    that still leaks mass at the boundary raises ``DomainTooSmallError``.
    """
    if p < 0:
        raise ValueError("pressure must be nonnegative")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if not 0 < theta0 <= 1:
        raise ValueError("theta0 must lie in (0, 1]")
    if kernel is None:
        kernel = build_log_kernel(grid)
    elif kernel.grid != grid:
        raise ValueError("kernel was built for a different grid")
    _warn_weak_log_margin(p, w)

    h = grid.h
    x = grid.x
    wx = w.confinement(x)
    rho = _normalized_exp(-wx, h)
    phi = kernel.log_potential(rho)
    f_curr = _free_energy_parts(wx, phi, rho, p, h)
    theta = theta0
    residual, lam = np.inf, 0.0
    iterations = 0
    converged = False

    for iterations in range(max_iter + 1):
        residual, lam = _residual_and_lambda(wx, phi, rho, p, h)
        if residual <= tol:
            converged = True
            break
        if iterations == max_iter:
            break
        target = _normalized_exp(-wx + 2.0 * p * phi, h)
        # monotone safeguard: halve theta until the free energy does not rise
        while True:
            candidate = (1.0 - theta) * rho + theta * target
            phi_cand = kernel.log_potential(candidate)
            f_cand = _free_energy_parts(wx, phi_cand, candidate, p, h)
            if f_cand <= f_curr + 1e-14 * (1.0 + abs(f_curr)) or theta < 1e-8:
                break
            theta *= 0.5
        rho, phi, f_curr = candidate, phi_cand, f_cand

    density = GridDensity.from_unnormalized(grid, rho)
    if np.max(rho[[0, -1]]) > _LEAK_RATIO * np.max(rho):
        raise DomainTooSmallError(
            f"boundary density {np.max(rho[[0, -1]]):.3g} vs peak {np.max(rho):.3g}; "
            "enlarge the grid half-width"
        )
    solution = EquilibriumSolution(
        p=p, potential=w, density=density, lam=lam, free_energy=f_curr,
        residual=residual, iterations=iterations, converged=converged,
    )
    if not converged:
        logger.warning("equilibrium solve not converged: residual %.3e after %d iterations",
                       residual, iterations)
        if raise_on_failure:
            raise NonConvergedError(
                f"residual {residual:.3e} after {iterations} iterations", solution)
    return solution


def _free_energy_parts(wx, phi, rho, p, h) -> float:
    # same functional as free_energy(), reusing the precomputed log-potential
    pot = float(np.sum(wx * rho) * h)
    log_energy = float(np.sum(phi * rho) * h)
    mask = rho > DENSITY_FLOOR
    entropy = float(np.sum(rho[mask] * np.log(rho[mask])) * h)
    return pot - p * log_energy + entropy


def _warn_weak_log_margin(p: float, w: Potential) -> None:
    """Warn when W barely dominates (P+1) log(x^2+1).

    Quadratic-plus-even-polynomial confinements always hold this margin with
    room to spare; a violation signals an unusually weak tabulated envelope.
    The solve proceeds regardless.
    """
    probe = np.linspace(-80.0, 80.0, 801)
    margin = w.confinement_growth(probe) - (p + 1.0) * np.log(probe ** 2 + 1.0)
    interior = float(np.min(margin[200:-200]))
    if min(margin[0], margin[-1]) < interior - 1e-9:
        logger.warning(
            "confinement margin over (P+1) log(1+x^2) decreasing at |x| = 80; "
            "equilibrium tails may be heavy for P = %.3g", p)


def domain_auto(p: float, w: Potential, tail_log: float = np.log(1e-16),
                max_half_width: float = 1e9) -> float:
    """Smallest half-width L with exp(-W(L) + 2P log(2L)) <= 1e-16 exp(-min W).

    Doubling search brackets the crossing, bisection refines it.  The bound
    keeps the truncated tail mass of the fixed-point map below 1e-12.
    """
    if p < 0:
        raise ValueError("pressure must be nonnegative")
    probe = np.linspace(-20.0, 20.0, 2001)
    w_min = float(np.min(w.confinement_growth(probe)))

    def excess(length: float) -> float:
        # log of the tail envelope relative to the target, > 0 means too small
        w_edge = float(min(w.confinement_growth(np.array([length]))[0],
                           w.confinement_growth(np.array([-length]))[0]))
        log_gain = 2.0 * p * np.log(2.0 * length) if p > 0 else 0.0
        return (-w_edge + log_gain) - (tail_log - w_min)

    length = 1.0
    while excess(length) > 0:
        length *= 2.0
        if length > max_half_width:
            raise NonConfiningError("confinement too weak to bound the tail")
    if length == 1.0:
        return 1.0
    lo, hi = length / 2.0, length
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
    return hi
