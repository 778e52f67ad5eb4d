import numpy as np
import pytest

from todagibbs import Potential, PotentialDomainError


def test_zero_potential():
    v = Potential.zero()
    assert v.is_zero and v.is_polynomial
    assert np.all(v(np.linspace(-3, 3, 7)) == 0.0)
    assert v.degree == 0


def test_polynomial_evaluation():
    v = Potential.polynomial([0.5, 0, 0.25, 0, 1.0])
    x = np.array([-2.0, 0.0, 1.5])
    assert np.allclose(v(x), 0.5 + 0.25 * x ** 2 + x ** 4)
    assert v.degree == 4


def test_polynomial_rejects_odd_degree_and_negative_leading():
    with pytest.raises(ValueError):
        Potential.polynomial([0, 0, 0, 1.0])
    with pytest.raises(ValueError):
        Potential.polynomial([0, 0, -1.0])
    with pytest.raises(ValueError):
        Potential.polynomial([0, 1.0, 0, 0, 1.0])  # odd coefficient


def test_all_zero_coefficients_collapse_to_zero():
    v = Potential.polynomial([0.0, 0.0, 0.0])
    assert v.is_zero


def test_confinement_and_margin():
    v = Potential.polynomial([0, 0, 1.0])
    x = np.array([2.0])
    assert v.confinement(x)[0] == pytest.approx(2.0 + 4.0)
    c = v.confinement_margin()
    assert np.isfinite(c)
    Potential.zero().require_confining()
    v.require_confining()


def test_tabulated_range_and_envelope():
    xs = np.linspace(-4, 4, 401)
    vs = 0.1 * xs ** 4
    v = Potential.tabulated(xs, vs, envelope_coeffs=[0, 0, 0, 0, 0.1], slack=1e-6)
    assert v(np.array([1.0]))[0] == pytest.approx(0.1, abs=1e-4)
    with pytest.raises(PotentialDomainError):
        v(np.array([5.0]))
    # growth falls back to the envelope outside the table
    assert v.growth(np.array([10.0]))[0] == pytest.approx(0.1 * 10.0 ** 4)


def test_tabulated_envelope_mismatch_rejected():
    xs = np.linspace(-2, 2, 41)
    with pytest.raises(ValueError):
        Potential.tabulated(xs, xs ** 2, envelope_coeffs=[0, 0, 5.0], slack=1e-3)


def test_tabulated_nonconfining_envelope():
    xs = np.linspace(-2, 2, 41)
    # envelope -x^2 falls outside the allowed class already at construction
    with pytest.raises(ValueError):
        Potential.tabulated(xs, -(xs ** 2), envelope_coeffs=[0, 0, -1.0])


def test_scaled():
    v = Potential.polynomial([0, 0, 0, 0, 0.4])
    half = v.scaled(0.5)
    assert half.coeffs[-1] == pytest.approx(0.2)
    assert v.scaled(0.0).is_zero
    assert Potential.zero().scaled(3.0).is_zero


def test_round_trip_dict():
    for v in (Potential.zero(),
              Potential.polynomial([1.0, 0, 2.0]),
              Potential.tabulated(np.linspace(-3, 3, 31),
                                  0.2 * np.linspace(-3, 3, 31) ** 2,
                                  envelope_coeffs=[0, 0, 0.2])):
        again = Potential.from_dict(v.to_dict())
        assert again == v
