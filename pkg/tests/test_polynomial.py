import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from sdc.errors import DegreeViolation, InconsistentDiophantine, SingularSylvester, ZeroPolynomial
from sdc.pencil import DescriptorSystem
from sdc.polynomial import (
    Polynomial,
    QuasiPolynomial,
    delay_hurwitz_certificate,
    delay_margin_ratio,
    delay_stability_margin,
    diophantine_residual,
    is_hurwitz,
    pencil_polynomials,
    solve_diophantine,
)

coeff = st.floats(-5, 5, allow_nan=False, allow_infinity=False)
poly = st.lists(coeff, min_size=1, max_size=5).map(Polynomial)


def test_arithmetic_and_trimming():
    p = Polynomial([1.0, 2.0, 0.0, 0.0])
    assert p.degree == 1
    q = Polynomial.from_roots([-1.0, -2.0])
    assert np.allclose(q.coeffs, [2.0, 3.0, 1.0])
    assert np.allclose((p * q).coeffs, np.polynomial.polynomial.polymul(p.coeffs, q.coeffs))
    quo, rem = q.divmod(Polynomial([1.0, 1.0]))
    assert np.allclose(quo.coeffs, [2.0, 1.0]) and rem.is_zero()
    assert Polynomial().is_zero()


@settings(max_examples=60)
@given(poly, poly, st.floats(-2, 2))
def test_evaluation_is_a_ring_homomorphism(p, q, s):
    assert math.isclose((p * q)(s), p(s) * q(s), rel_tol=1e-9, abs_tol=1e-6)
    assert math.isclose((p + q)(s), p(s) + q(s), rel_tol=1e-9, abs_tol=1e-9)


def test_pencil_polynomials_standard():
    sys_ = DescriptorSystem(np.eye(2), [[0, 1], [-2, -3]], [0, 1], [0, 0], [1, 0], 1.0)
    pp = pencil_polynomials(sys_)
    assert np.allclose(pp.M.coeffs, [2, 3, 1])
    assert np.allclose(pp.Delta0.coeffs, [1])
    assert pp.Delta1.is_zero()


def test_pencil_polynomials_s2(s2):
    pp = pencil_polynomials(s2)
    assert np.allclose(pp.M.coeffs, [-1, -1])
    # G(s) = Delta0 / M = s / -(s + 1); G(1) = -1/2
    assert np.allclose(pp.Delta0.coeffs, [0, 1], atol=1e-12)
    assert pp.Delta1.is_zero()
    n = pp.normalized()
    assert n.M.is_monic() and np.isclose(n.Delta0(1.0) / n.M(1.0), -0.5)


def test_delta1_from_d():
    sys_ = DescriptorSystem(np.diag([1.0, 0.0]), np.diag([-1.0, 1.0]), [1, 1], [0.1, 0], [4, -1], 1.0)
    n = pencil_polynomials(sys_).normalized()
    assert np.allclose(n.Delta1.coeffs, [0.4])
    assert np.allclose(n.Delta0.coeffs, [5, 1])


def test_diophantine_examples():
    A = Polynomial.from_roots([-1, -2])
    X, Y = solve_diophantine(A, Polynomial([1]), Polynomial.from_roots([-1, -2, -3]), 1, 0)
    assert np.allclose(X.coeffs, [3, 1]) and np.allclose(Y.padded(1), [0], atol=1e-12)
    X, Y = solve_diophantine(Polynomial([0, 1]), Polynomial([1]), Polynomial([1]), 0, 0)
    assert np.allclose(X.padded(1), [0], atol=1e-12) and np.allclose(Y.coeffs, [1])
    with pytest.raises(SingularSylvester):
        solve_diophantine(Polynomial([1, 1]), Polynomial([1, 1]), Polynomial([1]), 0, 0)


def test_diophantine_degree_too_small():
    with pytest.raises(InconsistentDiophantine):
        solve_diophantine(Polynomial([1, 1]), Polynomial([2]), Polynomial([1, 0, 0, 1]), 0, 0)


@settings(max_examples=60, deadline=None)
@given(st.lists(coeff, min_size=2, max_size=3), st.lists(coeff, min_size=1, max_size=2),
       st.lists(coeff, min_size=4, max_size=4))
def test_diophantine_residual_property(a, b, c):
    A = Polynomial(a + [1.0])
    B = Polynomial(b)
    C = Polynomial(c + [1.0])
    assume(not B.is_zero() and np.max(np.abs(B.coeffs)) > 0.1)
    try:
        X, Y = solve_diophantine(A, B, C, int(C.degree - A.degree), int(A.degree) - 1)
    except SingularSylvester:
        return
    assert diophantine_residual(A, B, C, X, Y) <= 1e-7 * max(1.0, X.norm_inf(), Y.norm_inf()) * C.norm_inf()


def test_is_hurwitz_examples():
    p = Polynomial.from_roots([-1, -2])
    assert is_hurwitz(p, 0.5)
    assert not is_hurwitz(p, 1.5)
    assert not is_hurwitz(Polynomial([-1, 1]), 0.0)


def test_margin_zero_numerator():
    assert delay_stability_margin(Polynomial.from_roots([-1, -1, -1]), Polynomial(), Polynomial(), 1.0, 0.5) == 0.0


def test_margin_closed_form():
    M0 = Polynomial.from_roots([-1, -1, -1])
    value = delay_stability_margin(M0, Polynomial(), Polynomial([0.1]), 1.0, 0.5)
    # |e^{2hs}| = e^{-1} on Re s = -1/2 and min |s + 1| = 1/2
    assert value == pytest.approx(0.1 * math.e * 8.0, rel=1e-9)
    grid = np.linspace(0, 100, 100_000)
    oracle = np.max(delay_margin_ratio(M0, Polynomial(), Polynomial([0.1]), 1.0, -0.5)(grid))
    assert abs(value - oracle) <= 1e-4


def test_margin_scaling_is_linear():
    M0 = Polynomial.from_roots([-1, -2, -3])
    M1 = Polynomial([0.1, 0.05])
    N = Polynomial([0.3, 0.2])
    a = delay_stability_margin(M0, M1, N, 1.0, 0.4)
    b = delay_stability_margin(M0, M1, N * 2.0, 1.0, 0.4)
    assert b == pytest.approx(2 * a, rel=1e-12)


def test_margin_line_sign():
    M0 = Polynomial.from_roots([-1, -2, -3])
    lo = delay_stability_margin(M0, Polynomial(), Polynomial([0.3]), 1.0, 0.4, line_sign=-1)
    hi = delay_stability_margin(M0, Polynomial(), Polynomial([0.3]), 1.0, 0.4, line_sign=+1)
    assert hi < lo


def test_margin_errors():
    with pytest.raises(DegreeViolation):
        delay_stability_margin(Polynomial([1, 1]), Polynomial(), Polynomial([1, 1]), 1.0, 0.5)
    with pytest.raises(ZeroPolynomial):
        delay_stability_margin(Polynomial(), Polynomial(), Polynomial([1]), 1.0, 0.5)


def test_delay_hurwitz_certificate():
    p0 = Polynomial.from_roots([-2, -3])
    assert delay_hurwitz_certificate(p0, Polynomial(), 1.0, 0.5) == 0.0
    assert delay_hurwitz_certificate(Polynomial([-1, 1]), Polynomial([0.1]), 1.0, 0.5) == math.inf
    small = delay_hurwitz_certificate(p0, Polynomial([0.1]), 1.0, 0.5)
    assert 0 < small < 1


def test_quasipolynomial_json_roundtrip():
    q = QuasiPolynomial({0: Polynomial([1, 2]), 2: Polynomial([0.5])}, 1.5)
    back = QuasiPolynomial.from_json(q.to_json(), 1.5)
    s = 0.3 + 0.7j
    assert np.isclose(back(s), q(s))
    assert np.isclose(q(s), (1 + 2 * s) + 0.5 * np.exp(-3.0 * s))
