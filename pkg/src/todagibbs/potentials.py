"""Confining potentials.

Every ensemble and variational problem in this package uses a confinement of
the form W(x) = x^2/2 + V(x).  The extra term V is one of

* the zero potential,
* an even polynomial with positive leading coefficient, or
* a tabulated continuous function together with an even-polynomial growth
  envelope that stands in for V outside the tabulated range.

Tabulated potentials refuse to extrapolate: evaluating outside the table
raises ``PotentialDomainError``.  Growth queries (domain sizing, confinement
checks) go through :meth:`Potential.growth` which substitutes the envelope
outside the table.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class PotentialDomainError(ValueError):
    """Tabulated potential evaluated outside its tabulation range."""


class NonConfiningError(ValueError):
    """Confinement W = x^2/2 + V does not dominate a positive quadratic."""


def _poly_eval(coeffs: tuple[float, ...], x):
    # ascending powers, evaluated with Horner
    acc = np.zeros_like(np.asarray(x, dtype=float))
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def _validate_even_poly(coeffs: tuple[float, ...]) -> tuple[float, ...]:
    arr = np.asarray(coeffs, dtype=float)
    if arr.size == 0:
        return ()
    if not np.all(np.isfinite(arr)):
        raise ValueError("polynomial coefficients must be finite")
    # trim trailing zeros
    nz = np.nonzero(arr)[0]
    if nz.size == 0:
        return ()
    arr = arr[: nz[-1] + 1]
    degree = arr.size - 1
    if degree % 2 != 0:
        raise ValueError(f"potential polynomial must have even degree, got {degree}")
    if degree > 0 and arr[-1] <= 0:
        raise ValueError("leading coefficient must be positive")
    if np.any(arr[1::2] != 0.0):
        raise ValueError("potential polynomial must be even (odd coefficients zero)")
    return tuple(float(c) for c in arr)


@dataclass(frozen=True)
class Potential:
    """The V part of the confinement W(x) = x^2/2 + V(x).

    Use the constructors :meth:`zero`, :meth:`polynomial`, :meth:`tabulated`
    rather than instantiating directly.
    """

    kind: str
    coeffs: tuple[float, ...] = ()
    table_x: tuple[float, ...] = field(default=(), repr=False)
    table_v: tuple[float, ...] = field(default=(), repr=False)
    envelope: tuple[float, ...] = ()
    slack: float = 0.0

    # -- constructors --------------------------------------------------

    @classmethod
    def zero(cls) -> "Potential":
        return cls(kind="zero")

    @classmethod
    def polynomial(cls, coeffs) -> "Potential":
        """Even polynomial, coefficients in ascending powers.

        An all-zero coefficient list collapses to the zero potential.
        """
        cleaned = _validate_even_poly(tuple(np.atleast_1d(coeffs)))
        if not cleaned:
            return cls.zero()
        return cls(kind="polynomial", coeffs=cleaned)

    @classmethod
    def tabulated(cls, xs, vs, envelope_coeffs=(), slack=1e-2) -> "Potential":
        xs = np.asarray(xs, dtype=float)
        vs = np.asarray(vs, dtype=float)
        if xs.ndim != 1 or xs.size < 2 or xs.shape != vs.shape:
            raise ValueError("tabulated potential needs matching 1-d x and v arrays")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(vs))):
            raise ValueError("tabulated potential entries must be finite")
        if np.any(np.diff(xs) <= 0):
            raise ValueError("tabulation grid must be strictly increasing")
        env = _validate_even_poly(tuple(np.atleast_1d(envelope_coeffs)))
        pot = cls(
            kind="tabulated",
            table_x=tuple(float(v) for v in xs),
            table_v=tuple(float(v) for v in vs),
            envelope=env,
            slack=float(slack),
        )
        # handoff consistency: table and envelope must agree at the edges
        for edge in (xs[0], xs[-1]):
            gap = abs(pot(edge) - _poly_eval(env, edge))
            if gap > pot.slack:
                raise ValueError(
                    f"tabulated V and envelope disagree by {gap:.3g} at x={edge:.3g}, "
                    f"exceeds slack {pot.slack:.3g}"
                )
        return pot

    # -- predicates ----------------------------------------------------

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero"

    @property
    def is_polynomial(self) -> bool:
        # the zero potential is the zero polynomial
        return self.kind in ("zero", "polynomial")

    @property
    def is_tabulated(self) -> bool:
        return self.kind == "tabulated"

    @property
    def degree(self) -> int:
        if self.kind == "polynomial":
            return len(self.coeffs) - 1
        if self.kind == "zero":
            return 0
        raise TypeError("tabulated potentials have no polynomial degree")

    # -- evaluation ----------------------------------------------------

    def __call__(self, x):
        """Evaluate V(x).  Tabulated potentials raise outside their range."""
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "polynomial":
            return _poly_eval(self.coeffs, x)
        xs = np.asarray(self.table_x)
        lo, hi = xs[0], xs[-1]
        if np.any(x < lo) or np.any(x > hi):
            raise PotentialDomainError(
                f"tabulated potential queried outside [{lo:.6g}, {hi:.6g}]"
            )
        return np.interp(x, xs, np.asarray(self.table_v))

    def growth(self, x):
        """V(x) with the envelope substituted outside a tabulated range."""
        x = np.asarray(x, dtype=float)
        if self.kind != "tabulated":
            return self(x)
        xs = np.asarray(self.table_x)
        inside = (x >= xs[0]) & (x <= xs[-1])
        out = _poly_eval(self.envelope, x)
        if np.any(inside):
            out = np.where(inside, np.interp(x, xs, np.asarray(self.table_v)), out)
        return out

    def confinement(self, x):
        """W(x) = x^2/2 + V(x)."""
        x = np.asarray(x, dtype=float)
        return 0.5 * x * x + self(x)

    def confinement_growth(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * x * x + self.growth(x)

    def scaled(self, factor: float) -> "Potential":
        """The potential factor * V.  Factor must be nonnegative."""
        if factor < 0:
            raise ValueError("scaling factor must be nonnegative")
        if factor == 0.0 or self.kind == "zero":
            return Potential.zero()
        if self.kind == "polynomial":
            return Potential.polynomial(tuple(factor * c for c in self.coeffs))
        return Potential(
            kind="tabulated",
            table_x=self.table_x,
            table_v=tuple(factor * v for v in self.table_v),
            envelope=tuple(factor * c for c in self.envelope),
            slack=self.slack * max(factor, 1.0),
        )

    # -- confinement check ----------------------------------------------

    def confinement_margin(self, quadratic_coefficient: float = 0.25,
                           half_width: float = 50.0, points: int = 4001):
        """Numerically check W(x) >= a' x^2 + C on a wide grid.

        Returns the constant C (finite minimum of W - a' x^2).  Raises
        ``NonConfiningError`` when the margin is still decreasing at the
        edge of the check grid, which signals growth slower than quadratic.
        """
        x = np.linspace(-half_width, half_width, points)
        margin = self.confinement_growth(x) - quadratic_coefficient * x * x
        c = float(np.min(margin))
        if not np.isfinite(c):
            raise NonConfiningError("confinement margin is not finite")
        edge = min(margin[0], margin[-1])
        interior = float(np.min(margin[points // 4: -points // 4]))
        if edge < interior - 1e-9:
            raise NonConfiningError(
                "W - a'x^2 decreases toward the grid edge; potential not confining"
            )
        return c

    def require_confining(self) -> None:
        if self.kind == "zero":
            return
        if self.kind == "polynomial":
            # even degree and positive leading coefficient already enforced
            return
        self.confinement_margin()

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        if self.kind == "zero":
            return {"type": "zero"}
        if self.kind == "polynomial":
            return {"type": "polynomial", "coeffs": list(self.coeffs)}
        return {
            "type": "tabulated",
            "x": list(self.table_x),
            "v": list(self.table_v),
            "envelope": list(self.envelope),
            "slack": self.slack,
        }

    @classmethod
    def from_dict(cls, spec: dict) -> "Potential":
        kind = spec.get("type")
        if kind == "zero":
            return cls.zero()
        if kind == "polynomial":
            return cls.polynomial(spec["coeffs"])
        if kind == "tabulated":
            return cls.tabulated(
                spec["x"], spec["v"],
                envelope_coeffs=spec.get("envelope", ()),
                slack=spec.get("slack", 1e-2),
            )
        raise ValueError(f"unknown potential type: {kind!r}")
