"""Periodic Jacobi matrices, spectra and trace functionals.

The central object is a symmetric tridiagonal matrix stored as its diagonal
and off-diagonal sequences.  Periodic matrices carry one extra coupling in
the (1, N) / (N, 1) corner, the last entry of ``offdiag``.  Storage is
structure-of-sequences; a dense matrix is materialized only inside the
periodic eigensolver.

Single symmetric entry-pair updates enter the Monte Carlo samplers through
``local_trace_delta``, which evaluates the change of Tr V(M) for polynomial V
from a small window around the modified site.  The window trick is exact:
(M^m)_{jj} is a sum over closed length-m walks at j, and a walk of length m
never leaves the cyclic arc of radius m around its base point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .potentials import Potential


class InvalidMatrixError(ValueError):
    """Matrix violates a structural precondition (shape, finiteness)."""


@dataclass(frozen=True)
class PeriodicJacobiMatrix:
    """Symmetric tridiagonal matrix, optionally with periodic corner entries.

    ``diag`` has length N.  For periodic matrices ``offdiag`` also has
    length N and its last entry sits in the corner; for plain tridiagonal
    matrices ``offdiag`` has length N - 1.
    """

    diag: np.ndarray
    offdiag: np.ndarray
    periodic: bool = True

    def __post_init__(self):
        diag = np.atleast_1d(np.asarray(self.diag, dtype=float)).copy()
        off = np.atleast_1d(np.asarray(self.offdiag, dtype=float)).copy()
        n = diag.size
        if self.periodic:
            if n < 3:
                raise InvalidMatrixError("periodic matrices need N >= 3")
            if off.size != n:
                raise InvalidMatrixError(
                    f"periodic matrix expects {n} offdiagonal entries, got {off.size}"
                )
        else:
            if n < 2:
                raise InvalidMatrixError("need N >= 2")
            if off.size != n - 1:
                raise InvalidMatrixError(
                    f"tridiagonal matrix expects {n - 1} offdiagonal entries, got {off.size}"
                )
        diag.flags.writeable = False
        off.flags.writeable = False
        object.__setattr__(self, "diag", diag)
        object.__setattr__(self, "offdiag", off)

    @property
    def n(self) -> int:
        return self.diag.size

    @property
    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.diag)) and np.all(np.isfinite(self.offdiag)))

    def frobenius_norm(self) -> float:
        return float(np.sqrt(np.sum(self.diag ** 2) + 2.0 * np.sum(self.offdiag ** 2)))

    def to_dense(self) -> np.ndarray:
        n = self.n
        m = np.diag(self.diag)
        band = self.offdiag[: n - 1]
        idx = np.arange(n - 1)
        m[idx, idx + 1] = band
        m[idx + 1, idx] = band
        if self.periodic:
            m[0, n - 1] = self.offdiag[n - 1]
            m[n - 1, 0] = self.offdiag[n - 1]
        return m

    def with_entry(self, site: int, kind: str, value: float) -> "PeriodicJacobiMatrix":
        """Copy with one symmetric entry pair replaced."""
        if kind == "diag":
            d = self.diag.copy()
            d[site] = value
            return PeriodicJacobiMatrix(d, self.offdiag, self.periodic)
        if kind == "offdiag":
            o = self.offdiag.copy()
            o[site] = value
            return PeriodicJacobiMatrix(self.diag, o, self.periodic)
        raise ValueError(f"kind must be 'diag' or 'offdiag', got {kind!r}")


@dataclass(frozen=True)
class EmpiricalSpectralMeasure:
    """Sorted eigenvalue list carrying uniform weights 1/len."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.sort(np.atleast_1d(np.asarray(self.values, dtype=float)))
        if vals.size < 1:
            raise ValueError("empirical spectral measure needs at least one point")
        if not np.all(np.isfinite(vals)):
            raise ValueError("eigenvalues must be finite")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.values.size

    def moment(self, k: int) -> float:
        return float(np.mean(self.values ** k))

    @classmethod
    def merge(cls, measures) -> "EmpiricalSpectralMeasure":
        return cls(np.concatenate([m.values for m in measures]))


def _require_finite(m: PeriodicJacobiMatrix) -> None:
    if not m.is_finite:
        raise InvalidMatrixError("matrix has non-finite entries")


# Smaller requested tolerances than LAPACK can certify are rejected rather
# than silently under-delivered.
_EIG_TOL_FLOOR = 1e-14


def eigenvalues(m: PeriodicJacobiMatrix, tol: float = 1e-12) -> EmpiricalSpectralMeasure:
    """All eigenvalues, ascending.

    The residual of each returned pair is below ``tol * (1 + ||M||_F)``.
    Plain tridiagonal matrices go through the LAPACK implicit-shift
    symmetric-tridiagonal path; periodic matrices are densified, the corner
    breaks the banded structure.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if tol < _EIG_TOL_FLOOR:
        raise ValueError(f"tol below achievable accuracy {_EIG_TOL_FLOOR:g}")
    _require_finite(m)
    if m.periodic:
        vals = np.linalg.eigvalsh(m.to_dense())
    else:
        vals = eigh_tridiagonal(m.diag, m.offdiag, eigvals_only=True)
    return EmpiricalSpectralMeasure(vals)


def _banded_matmul(m: PeriodicJacobiMatrix, x: np.ndarray) -> np.ndarray:
    """M @ x using only the stored bands."""
    n = m.n
    y = m.diag[:, None] * x
    band = m.offdiag[: n - 1, None]
    y[:-1] += band * x[1:]
    y[1:] += band * x[:-1]
    if m.periodic:
        c = m.offdiag[n - 1]
        y[0] += c * x[n - 1]
        y[n - 1] += c * x[0]
    return y


def trace_power(m: PeriodicJacobiMatrix, power: int) -> float:
    """(1/N) Tr(M^power).

    ``power`` 1 and 2 use exact entry formulas; higher powers use repeated
    banded products against the identity.
    """
    if power < 1:
        raise ValueError("power must be >= 1")
    _require_finite(m)
    n = m.n
    if power == 1:
        return float(np.mean(m.diag))
    if power == 2:
        # offdiag stores exactly the entries in use, corner included iff periodic
        return float((np.sum(m.diag ** 2) + 2.0 * np.sum(m.offdiag ** 2)) / n)
    acc = np.eye(n)
    for _ in range(power):
        acc = _banded_matmul(m, acc)
    return float(np.trace(acc) / n)


def trace_potential(m: PeriodicJacobiMatrix, v: Potential, method: str = "eigen") -> float:
    """(1/N) Tr V(M).

    ``method='eigen'`` sums V over the spectrum; ``method='power'`` is the
    eigenvalue-free route through monomial traces, available for polynomial V.
    """
    _require_finite(m)
    if method == "eigen":
        es = eigenvalues(m)
        return float(np.mean(v(es.values)))
    if method == "power":
        if not v.is_polynomial:
            raise TypeError("power method needs a polynomial potential")
        if v.is_zero:
            return 0.0
        total = v.coeffs[0]
        for k, c in enumerate(v.coeffs[1:], start=1):
            if c != 0.0:
                total += c * trace_power(m, k)
        return float(total)
    raise ValueError(f"unknown method {method!r}")


def _window_indices(n: int, periodic: bool, center_lo: int, center_hi: int, radius: int):
    """Index arc [center_lo - radius, center_hi + radius] around a changed site.

    Cyclic for periodic matrices, clipped at the boundary otherwise.  Returns
    None when a cyclic arc cannot be embedded as a proper sub-arc.
    """
    if periodic:
        length = (center_hi - center_lo) + 2 * radius + 1
        if length > n - 1:
            return None
        start = (center_lo - radius) % n
        return (start + np.arange(length)) % n
    lo = max(0, center_lo - radius)
    hi = min(n - 1, center_hi + radius)
    return np.arange(lo, hi + 1)


def _arc_dense(diag: np.ndarray, off: np.ndarray, periodic: bool, idx: np.ndarray) -> np.ndarray:
    """Dense symmetric tridiagonal matrix of a contiguous cyclic arc."""
    k = idx.size
    w = np.zeros((k, k))
    w[np.arange(k), np.arange(k)] = diag[idx]
    # bond between arc positions t and t+1 is offdiag[idx[t]] in cyclic order
    bond_idx = idx[:-1]
    w[np.arange(k - 1), np.arange(1, k)] = off[bond_idx]
    w[np.arange(1, k), np.arange(k - 1)] = off[bond_idx]
    return w


def _trace_poly_dense(w: np.ndarray, coeffs: tuple[float, ...]) -> float:
    """Tr V(W) for a small dense symmetric W, V given by ascending coeffs."""
    k = w.shape[0]
    total = coeffs[0] * k if coeffs else 0.0
    acc = None
    for power, c in enumerate(coeffs[1:], start=1):
        acc = w if acc is None else acc @ w
        if c != 0.0:
            total += c * np.trace(acc)
    return float(total)


def local_trace_delta(m: PeriodicJacobiMatrix, site: int, kind: str,
                      new_value: float, v: Potential) -> float:
    """Tr V(M') - Tr V(M) where M' replaces one symmetric entry pair.

    Exact up to rounding for polynomial V.  When the polynomial degree
    exceeds N/2 the cyclic window no longer fits and the difference falls
    back to two full trace evaluations (documented slow path).
    """
    if not v.is_polynomial:
        raise TypeError("local_trace_delta needs a polynomial potential")
    _require_finite(m)
    n = m.n
    if kind == "diag":
        if not 0 <= site < n:
            raise ValueError("diag site out of range")
    elif kind == "offdiag":
        if not 0 <= site < m.offdiag.size:
            raise ValueError("offdiag site out of range")
    else:
        raise ValueError(f"kind must be 'diag' or 'offdiag', got {kind!r}")
    if v.is_zero:
        return 0.0
    old_value = m.diag[site] if kind == "diag" else m.offdiag[site]
    if new_value == old_value:
        return 0.0
    deg = v.degree
    if kind == "diag":
        idx = _window_indices(n, m.periodic, site, site, deg)
    else:
        idx = _window_indices(n, m.periodic, site, site + 1, deg)
    if idx is None:
        changed = m.with_entry(site, kind, new_value)
        return n * (trace_potential(changed, v, method="power")
                    - trace_potential(m, v, method="power"))
    return _delta_from_window(m.diag, m.offdiag, m.periodic, idx, site, kind,
                              new_value, v.coeffs)


def _delta_from_window(diag, off, periodic, idx, site, kind, new_value, coeffs) -> float:
    w_old = _arc_dense(diag, off, periodic, idx)
    w_new = w_old.copy()
    pos = int(np.nonzero(idx == site)[0][0])
    if kind == "diag":
        w_new[pos, pos] = new_value
    else:
        w_new[pos, pos + 1] = new_value
        w_new[pos + 1, pos] = new_value
    return _trace_poly_dense(w_new, coeffs) - _trace_poly_dense(w_old, coeffs)


# -- text dump format ---------------------------------------------------

def dump_matrix(m: PeriodicJacobiMatrix, path) -> None:
    """Plain-text dump: 'N periodic_flag' / diag / offdiag, full precision."""
    with open(path, "w") as fh:
        fh.write(f"{m.n} {1 if m.periodic else 0}\n")
        fh.write(" ".join(format(x, ".17g") for x in m.diag) + "\n")
        fh.write(" ".join(format(x, ".17g") for x in m.offdiag) + "\n")


def load_matrix(path) -> PeriodicJacobiMatrix:
    with open(path) as fh:
        header = fh.readline().split()
        n, flag = int(header[0]), int(header[1])
        diag = np.array([float(t) for t in fh.readline().split()])
        off = np.array([float(t) for t in fh.readline().split()])
    if diag.size != n:
        raise InvalidMatrixError("dump header inconsistent with diagonal length")
    return PeriodicJacobiMatrix(diag, off, periodic=bool(flag))
