"""Real polynomials, delay quasi-polynomials and the algebra built on them.

Coefficient arrays are stored in *ascending* order throughout
(``coeffs[k]`` multiplies ``s**k``), matching ``numpy.polynomial``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.optimize import minimize_scalar

from .errors import (
    DegreeViolation,
    InconsistentDiophantine,
    SamplePointFailure,
    SingularSylvester,
    ZeroPolynomial,
)

TRIM_TOL = 1e-12
ZERO_DEGREE = float("-inf")


def _trim(coeffs, tol=TRIM_TOL):
    c = np.atleast_1d(np.asarray(coeffs, dtype=float)).copy()
    if c.size == 0:
        return c
    if not np.all(np.isfinite(c)):
        raise ValueError("polynomial coefficients must be finite")
    scale = np.max(np.abs(c))
    if scale == 0.0:
        return c[:0]
    keep = np.nonzero(np.abs(c) > tol * scale)[0]
    return c[: keep[-1] + 1]


class Polynomial:
    """Real polynomial with ascending coefficients.

    Leading coefficients below ``TRIM_TOL`` relative to the largest magnitude
    are dropped on construction; the zero polynomial has no coefficients and
    ``degree == -inf``.
    """

    __slots__ = ("_c",)

    def __init__(self, coeffs=(), trim_tol: float = TRIM_TOL):
        if isinstance(coeffs, Polynomial):
            coeffs = coeffs.coeffs
        self._c = _trim(coeffs, trim_tol)
        self._c.setflags(write=False)

    # -- constructors ---------------------------------------------------
    @classmethod
    def from_descending(cls, coeffs) -> "Polynomial":
        return cls(np.asarray(coeffs, dtype=float)[::-1])

    @classmethod
    def from_roots(cls, roots, lead: float = 1.0) -> "Polynomial":
        c = P.polyfromroots(np.asarray(roots))
        return cls(np.real_if_close(c, tol=1e6).real * lead)

    @classmethod
    def constant(cls, value: float) -> "Polynomial":
        return cls([value])

    @classmethod
    def s(cls) -> "Polynomial":
        return cls([0.0, 1.0])

    # -- properties -----------------------------------------------------
    @property
    def coeffs(self) -> np.ndarray:
        return self._c

    @property
    def degree(self):
        return len(self._c) - 1 if len(self._c) else ZERO_DEGREE

    @property
    def lead(self) -> float:
        return float(self._c[-1]) if len(self._c) else 0.0

    def is_zero(self) -> bool:
        return len(self._c) == 0

    def is_monic(self, tol: float = 1e-12) -> bool:
        return not self.is_zero() and abs(self.lead - 1.0) <= tol

    def descending(self) -> np.ndarray:
        return self._c[::-1].copy()

    def padded(self, length: int) -> np.ndarray:
        """Ascending coefficients zero-padded (never truncated) to ``length``."""
        if len(self._c) > length:
            raise ValueError(f"degree {self.degree} does not fit in {length} coefficients")
        out = np.zeros(length)
        out[: len(self._c)] = self._c
        return out

    # -- algebra --------------------------------------------------------
    def __call__(self, s):
        if self.is_zero():
            return np.zeros_like(np.asarray(s, dtype=complex if np.iscomplexobj(s) else float))
        return P.polyval(s, self._c)

    def _coerce(self, other):
        if isinstance(other, Polynomial):
            return other
        if np.isscalar(other):
            return Polynomial([float(other)])
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return Polynomial(P.polyadd(self._c if len(self._c) else [0.0], other._c if len(other._c) else [0.0]))

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(-self._c)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        if self.is_zero() or other.is_zero():
            return Polynomial()
        return Polynomial(P.polymul(self._c, other._c))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return Polynomial(self._c / float(scalar))

    def __pow__(self, k: int):
        out = Polynomial([1.0])
        for _ in range(int(k)):
            out = out * self
        return out

    def divmod(self, other: "Polynomial"):
        if other.is_zero():
            raise ZeroPolynomial("division by the zero polynomial")
        if self.is_zero():
            return Polynomial(), Polynomial()
        q, r = P.polydiv(self._c, other._c)
        return Polynomial(q), Polynomial(r)

    def monic(self) -> "Polynomial":
        if self.is_zero():
            raise ZeroPolynomial("the zero polynomial has no monic form")
        return self / self.lead

    def deriv(self, m: int = 1) -> "Polynomial":
        if self.is_zero():
            return Polynomial()
        return Polynomial(P.polyder(self._c, m))

    def roots(self) -> np.ndarray:
        """Roots as eigenvalues of the companion matrix."""
        if self.is_zero():
            raise ZeroPolynomial("the zero polynomial has no finite root set")
        if self.degree < 1:
            return np.zeros(0, dtype=complex)
        return np.asarray(P.polyroots(self._c), dtype=complex)

    def allclose(self, other, atol: float = 1e-9) -> bool:
        other = self._coerce(other)
        n = max(len(self._c), len(other._c), 1)
        return bool(np.allclose(self.padded(n), other.padded(n), rtol=0.0, atol=atol))

    def norm_inf(self) -> float:
        return float(np.max(np.abs(self._c))) if len(self._c) else 0.0

    def to_list(self) -> list:
        return [float(c) for c in self._c]

    def __repr__(self):
        return f"Polynomial({self.to_list()})"


def as_poly(p) -> Polynomial:
    return p if isinstance(p, Polynomial) else Polynomial(p)


@dataclass(frozen=True)
class QuasiPolynomial:
    """Finite delay comb ``sum_k p_k(s) exp(-k h s)``."""

    terms: Mapping[int, Polynomial]
    h: float

    def __post_init__(self):
        clean = {}
        for k, p in self.terms.items():
            k = int(k)
            if k < 0:
                raise ValueError("delay multiples must be non-negative")
            p = as_poly(p)
            if not p.is_zero():
                clean[k] = clean[k] + p if k in clean else p
        object.__setattr__(self, "terms", dict(sorted(clean.items())))
        if not self.h > 0:
            raise ValueError("base delay h must be positive")

    def __call__(self, s):
        s = np.asarray(s, dtype=complex)
        out = np.zeros_like(s)
        for k, p in self.terms.items():
            out = out + p(s) * np.exp(-k * self.h * s)
        return out

    def term(self, k: int) -> Polynomial:
        return self.terms.get(int(k), Polynomial())

    def to_json(self) -> dict:
        return {str(k): p.to_list() for k, p in self.terms.items()}

    @classmethod
    def from_json(cls, data: Mapping, h: float) -> "QuasiPolynomial":
        return cls({int(k): Polynomial(v) for k, v in data.items()}, h)


@dataclass(frozen=True)
class PencilPolynomials:
    """``M = det(sE - A)``, ``Delta2^T = c^T adj(sE - A)``, ``Delta0 = Delta2^T b``,
    ``Delta1 = Delta2^T d``."""

    M: Polynomial
    Delta0: Polynomial
    Delta1: Polynomial
    Delta2: tuple

    def normalized(self) -> "PencilPolynomials":
        """All polynomials divided by the leading coefficient of ``M``."""
        lead = self.M.lead
        if lead == 0.0:
            raise ZeroPolynomial("M is identically zero")
        return PencilPolynomials(
            self.M / lead,
            self.Delta0 / lead,
            self.Delta1 / lead,
            tuple(p / lead for p in self.Delta2),
        )

    def to_json(self) -> dict:
        return {
            "M": self.M.to_list(),
            "Delta0": self.Delta0.to_list(),
            "Delta1": self.Delta1.to_list(),
            "Delta2": [p.to_list() for p in self.Delta2],
        }


def _circle_points(count: int, radius: float, phase: float) -> np.ndarray:
    k = np.arange(count)
    return radius * np.exp(1j * (2.0 * np.pi * k / count + phase))


def pencil_polynomials(sys, tol: float = 1e-10) -> PencilPolynomials:
    """Numerator and denominator polynomials of the pencil resolvent.

    ``c^T adj(s E - A)`` is evaluated as ``M(s) c^T (s E - A)^{-1}`` on ``n``
    points of a circle that keeps clear of the zeros of ``M``; interpolation on
    equispaced circle points is a discrete Fourier transform, which keeps the
    recovery well conditioned.
    """
    from .pencil import check_regularity

    from .errors import NotRegular

    reg = check_regularity(sys, tol)
    if not reg.regular:
        raise NotRegular("pencil (E, A) is singular")
    M = reg.M
    n = sys.n
    E, A, c = sys.E, sys.A, sys.c
    scale = max(np.linalg.norm(E, 2), np.linalg.norm(A, 2), 1e-300) ** n
    radii = (1.0, 1.37, 0.73, 1.91, 0.52, 2.63, 3.7)
    for radius in radii:
        for phase in (0.3183, 0.7071, 0.1234):
            pts = _circle_points(n, radius, phase)
            Ms = M(pts)
            if np.min(np.abs(Ms)) <= 1e3 * tol * scale * max(radius, 1.0) ** n:
                continue
            rows = np.empty((n, n), dtype=complex)
            for i, s in enumerate(pts):
                rows[i] = Ms[i] * np.linalg.solve((s * E - A).T, c.astype(complex))
            # rows[i, j] = sum_k coef[k, j] * pts[i]**k with pts = r w^i
            coefs = np.fft.fft(rows, axis=0) / n
            coefs = coefs / (radius ** np.arange(n) * np.exp(1j * phase * np.arange(n)))[:, None]
            coefs = np.real(coefs)
            Delta2 = tuple(Polynomial(coefs[:, j]) for j in range(n))
            Delta0 = _combine(Delta2, sys.b)
            Delta1 = _combine(Delta2, sys.d)
            return PencilPolynomials(M, Delta0, Delta1, Delta2)
    raise SamplePointFailure("could not find sample points away from the zeros of det(sE - A)")


def _combine(polys: Sequence[Polynomial], weights) -> Polynomial:
    out = Polynomial()
    for p, w in zip(polys, weights):
        if w != 0.0:
            out = out + p * float(w)
    return out


# ---------------------------------------------------------------------------
# Diophantine equations


def sylvester_matrix(A: Polynomial, B: Polynomial, degX: int, degY: int) -> np.ndarray:
    """Coefficient matrix of ``(X, Y) -> A X + B Y`` for ``deg X <= degX``,
    ``deg Y <= degY``.  Columns: X coefficients (ascending) then Y coefficients."""
    A, B = as_poly(A), as_poly(B)
    nx = degX + 1 if degX >= 0 else 0
    ny = degY + 1 if degY >= 0 else 0
    da = len(A.coeffs) - 1
    db = len(B.coeffs) - 1
    rows = max(da + nx, db + ny, 1)
    S = np.zeros((rows, nx + ny))
    for i in range(nx):
        S[i : i + len(A.coeffs), i] = A.coeffs
    for j in range(ny):
        S[j : j + len(B.coeffs), nx + j] = B.coeffs
    return S


def solve_diophantine(Apoly, Bpoly, Cpoly, degX, degY, rcond: float = 1e-12):
    """Solve ``A X + B Y = C`` with ``deg X <= degX`` and ``deg Y <= degY``.

    A negative degree (or ``-inf``) removes that unknown.  ``A`` and ``C`` are
    scaled to monic form for the solve and the result is scaled back.

    Returns
    -------
    X, Y : Polynomial

    Raises
    ------
    SingularSylvester
        The Sylvester matrix is rank deficient (common factor, or degrees too
        generous for a unique answer).
    InconsistentDiophantine
        Full column rank but the residual is not zero: the degrees cannot
        reach ``C``.
    """
    A, B, C = as_poly(Apoly), as_poly(Bpoly), as_poly(Cpoly)
    degX = int(degX) if degX != ZERO_DEGREE and degX >= 0 else -1
    degY = int(degY) if degY != ZERO_DEGREE and degY >= 0 else -1
    if A.is_zero() and B.is_zero():
        raise SingularSylvester("both A and B are zero")
    a_scale = A.lead if not A.is_zero() else 1.0
    c_scale = C.lead if not C.is_zero() else 1.0
    An, Cn = A / a_scale, C / c_scale
    Bn = B
    S = sylvester_matrix(An, Bn, degX, degY)
    rows = max(S.shape[0], len(Cn.coeffs))
    if rows > S.shape[0]:
        S = np.vstack([S, np.zeros((rows - S.shape[0], S.shape[1]))])
    rhs = Cn.padded(rows) if rows else np.zeros(0)
    nunk = S.shape[1]
    if nunk == 0:
        if not C.is_zero():
            raise InconsistentDiophantine("no unknowns but C is non-zero")
        return Polynomial(), Polynomial()
    sv = np.linalg.svd(S, compute_uv=False)
    if sv[-1] <= rcond * sv[0] or np.sum(sv > rcond * sv[0]) < nunk:
        raise SingularSylvester(
            f"Sylvester matrix rank deficient (sigma_min/sigma_max = {sv[-1] / sv[0]:.3g});"
            " A and B share a root or the degrees are inconsistent"
        )
    sol, *_ = np.linalg.lstsq(S, rhs, rcond=None)
    resid = np.max(np.abs(S @ sol - rhs)) if rows else 0.0
    if resid > 1e-9 * (1.0 + np.max(np.abs(rhs))):
        raise InconsistentDiophantine(
            f"no exact solution with deg X <= {degX}, deg Y <= {degY} (residual {resid:.3g})"
        )
    nx = degX + 1 if degX >= 0 else 0
    X = Polynomial(sol[:nx] * (c_scale / a_scale))
    Y = Polynomial(sol[nx:] * c_scale)
    return X, Y


def diophantine_residual(A, B, C, X, Y) -> float:
    r = as_poly(A) * as_poly(X) + as_poly(B) * as_poly(Y) - as_poly(C)
    return r.norm_inf()


# ---------------------------------------------------------------------------
# stability tests


def is_hurwitz(p, margin: float = 0.0) -> bool:
    """True iff every root of ``p`` has real part ``<= -margin``."""
    p = as_poly(p)
    if p.is_zero():
        raise ZeroPolynomial("stability of the zero polynomial is undefined")
    r = p.roots()
    return bool(np.all(r.real <= -margin)) if r.size else True


def _abs_bound_upper(p: Polynomial, rho: float) -> float:
    return float(np.sum(np.abs(p.coeffs) * rho ** np.arange(len(p.coeffs)))) if not p.is_zero() else 0.0


def _abs_bound_lower(p: Polynomial, rho: float) -> float:
    """Lower bound of ``|p(s)|`` on ``|s| >= rho`` for the monic-dominant regime."""
    c = np.abs(p.coeffs)
    m = len(c) - 1
    return float(c[-1] * rho**m - np.sum(c[:-1] * rho ** np.arange(m)))


def delay_margin_ratio(M0s, M1s, D1S1, h, sigma):
    """Callable ``w -> |D1S1(s)| / |M0s(s) e^{2hs} + M1s(s) e^{hs}|`` on ``s = sigma + i w``."""
    M0s, M1s, D1S1 = as_poly(M0s), as_poly(M1s), as_poly(D1S1)

    def ratio(w):
        s = sigma + 1j * np.asarray(w, dtype=float)
        den = M0s(s) * np.exp(2 * h * s) + M1s(s) * np.exp(h * s)
        return np.abs(D1S1(s)) / np.abs(den)

    return ratio


def delay_stability_margin(M0s, M1s, D1S1, h: float, v1: float, line_sign: int = -1) -> float:
    """Supremum of ``|D1S1| / |M0s e^{2hs} + M1s e^{hs}|`` on ``Re s = line_sign * v1``.

    The frequency axis is cut where an analytic tail bound falls below
    ``1e-3`` of the running maximum; the grid maximum is then polished by a
    bounded scalar search around every local maximum.  A value below one is
    the Rouche certificate for the delayed closed loop.
    """
    M0s, M1s, D1S1 = as_poly(M0s), as_poly(M1s), as_poly(D1S1)
    if M0s.is_zero():
        raise ZeroPolynomial("M0* must be non-zero")
    if D1S1.is_zero():
        return 0.0
    if D1S1.degree >= M0s.degree:
        raise DegreeViolation(
            f"deg(D1S1) = {D1S1.degree} >= deg(M0*) = {M0s.degree}: the ratio does not decay"
        )
    sigma = line_sign * float(v1)
    ratio = delay_margin_ratio(M0s, M1s, D1S1, h, sigma)
    # |e^{hs}| on the line; the denominator is e^{2 h sigma} |M0 + M1 e^{-hs}|
    decay = math.exp(-h * sigma)

    def tail_bound(w):
        rho = max(abs(w), 1e-12)
        lo = _abs_bound_lower(M0s, rho) - decay * _abs_bound_upper(M1s, math.hypot(rho, sigma))
        if lo <= 0:
            return math.inf
        return decay**2 * _abs_bound_upper(D1S1, math.hypot(rho, sigma)) / lo

    roots = M0s.roots()
    w_scale = 1.0 + (np.max(np.abs(roots)) if roots.size else 0.0) + abs(sigma)
    w_cut = w_scale
    running = float(np.max(ratio(np.linspace(0.0, w_cut, 2001))))
    while True:
        tb = tail_bound(w_cut)
        if tb <= 1e-3 * running and tail_bound(2 * w_cut) <= tb:
            break
        w_cut *= 2.0
        running = max(running, float(np.max(ratio(np.linspace(0.0, w_cut, 2001)))))
        if w_cut > 1e9:
            break
    grid = np.unique(
        np.concatenate(
            [np.linspace(0.0, w_cut, 4001), np.geomspace(1e-6, w_cut, 2001) if w_cut > 1e-6 else []]
        )
    )
    vals = ratio(grid)
    best = float(vals.max())
    interior = np.nonzero((vals[1:-1] >= vals[:-2]) & (vals[1:-1] >= vals[2:]))[0] + 1
    candidates = set(interior.tolist())
    candidates.add(int(np.argmax(vals)))
    for i in candidates:
        lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
        if hi <= lo:
            continue
        res = minimize_scalar(
            lambda w: -float(ratio(w)), bounds=(lo, hi), method="bounded", options={"xatol": 1e-12 * max(1.0, hi)}
        )
        best = max(best, -float(res.fun))
    return best


def delay_hurwitz_certificate(p0, p1, h: float, v1: float) -> float:
    """Rouche ratio certifying ``p0(s) + p1(s) e^{-hs}`` has no zero with ``Re s >= -v1``.

    Requires ``p0`` to have every root left of ``-v1`` (checked); returns
    ``sup |p1 e^{-hs}| / |p0|`` on ``Re s = -v1``, so a value below one
    certifies the quasi-polynomial.  ``inf`` signals the test is inapplicable.
    """
    p0, p1 = as_poly(p0), as_poly(p1)
    if p0.is_zero():
        raise ZeroPolynomial("p0 must be non-zero")
    r = p0.roots()
    if r.size and np.max(r.real) >= -v1:
        return math.inf
    if p1.is_zero():
        return 0.0
    try:
        # |p1 e^{-hs}| / |p0| is the margin ratio with a half delay and no M1 term
        return delay_stability_margin(p0, Polynomial(), p1, h / 2.0, v1)
    except DegreeViolation:
        return math.inf
