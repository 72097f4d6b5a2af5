"""Pole-placement synthesis and state-space realizations of the control law.

The two-degree-of-freedom law with input delay ``h`` reads

    F0 (R0 u + R1 u(t-h)) = T u_c - S0 y - S1 y(t-h) + L u0

and, combined with the plant ``M y = Delta0 u + Delta1 u(t-h) + Delta2^T v0``,
gives the closed loop

    M0* y + M1* y(t-h) + Delta1 S1 y(t-2h) = T Delta u_c + L Delta u0 + F0 R Delta2^T v0

with ``M0* = F0 M R0 + Delta0 S0`` and ``M1* = F0 M R1 + Delta0 S1 + Delta1 S0``.
The disturbance compensator ``u0`` cancels the last two right-hand terms and
the ``y(t-2h)`` term.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    DegreeConstraintViolated,
    DeltaNotStable,
    HistoryUnderflow,
    NonProperCompensator,
    NotCoprime,
    NotHurwitz,
    NotMinimal,
    NotMonic,
    SingularSylvester,
    StabilityMarginFailed,
    StepTooLarge,
    ValidationError,
)
from .polynomial import (
    PencilPolynomials,
    Polynomial,
    as_poly,
    delay_hurwitz_certificate,
    delay_stability_margin,
    is_hurwitz,
    solve_diophantine,
)

log = logging.getLogger(__name__)

MODES = ("full-delay", "delay-free", "model-matching")


# ---------------------------------------------------------------------------
# realizations


@dataclass
class FilterRealization:
    """Controllable canonical realization of ``1 / F(s)``.

    ``state[j]`` is the ``j``-th derivative of the filtered signal; the
    ``n_F``-th derivative follows from the input through :meth:`top_derivative`.
    """

    A_F: np.ndarray
    b_F: np.ndarray
    c_F: np.ndarray
    F: Polynomial
    state: np.ndarray

    @property
    def order(self) -> int:
        return len(self.b_F)

    def deriv(self, state, w: float) -> np.ndarray:
        return self.A_F @ state + self.b_F * w

    def top_derivative(self, state, w: float) -> float:
        """``D^{n_F} w_f = w - sum_j f_j D^j w_f``."""
        return float(w - self.F.coeffs[:-1] @ state)

    def derivatives(self, state, w: float) -> np.ndarray:
        """``(w_f, D w_f, ..., D^{n_F} w_f)``."""
        return np.append(state, self.top_derivative(state, w))

    def step(self, w0: float, wmid: float, w1: float, dt: float) -> np.ndarray:
        """Advance ``state`` one RK4 step given the input at ``t``, ``t + dt/2``, ``t + dt``."""
        x = self.state
        k1 = self.deriv(x, w0)
        k2 = self.deriv(x + dt / 2 * k1, wmid)
        k3 = self.deriv(x + dt / 2 * k2, wmid)
        k4 = self.deriv(x + dt * k3, w1)
        self.state = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        return self.state


def make_filter(F, state=None, check_hurwitz: bool = True) -> FilterRealization:
    """Realization of ``1/F`` for monic Hurwitz ``F`` of degree at least one."""
    F = as_poly(F)
    if F.is_zero() or F.degree < 1:
        raise ValidationError("filter polynomial must have degree >= 1")
    if not F.is_monic(1e-12):
        raise NotMonic(f"filter polynomial must be monic, leading coefficient {F.lead}")
    if check_hurwitz and not is_hurwitz(F, 0.0):
        raise NotHurwitz("filter polynomial must be Hurwitz")
    n = int(F.degree)
    A = np.zeros((n, n))
    A[:-1, 1:] = np.eye(n - 1)
    A[-1, :] = -F.coeffs[:-1]
    b = np.zeros(n)
    b[-1] = 1.0
    c = np.zeros(n)
    c[0] = 1.0
    x = np.zeros(n) if state is None else np.asarray(state, dtype=float).copy()
    return FilterRealization(A, b, c, F, x)


@dataclass(frozen=True)
class MisoRealization:
    """Observable canonical form of ``sum_j (num_j / den) w_j`` with monic ``den``.

    ``x' = A x + B w``, ``out = x[0] + D w``.
    """

    A: np.ndarray
    B: np.ndarray
    D: np.ndarray
    den: Polynomial

    @property
    def order(self) -> int:
        return self.A.shape[0]

    def deriv(self, x, w) -> np.ndarray:
        return self.A @ x + self.B @ w

    def output(self, x, w) -> float:
        return (x[0] if len(x) else 0.0) + float(self.D @ w)


def miso_realization(den, nums: Sequence) -> MisoRealization:
    """Realize ``sum_j nums[j](s) / den(s)``; every numerator must be proper."""
    den = as_poly(den)
    if not den.is_monic(1e-10):
        den = den.monic()
    m = int(den.degree)
    k = len(nums)
    A = np.zeros((m, m))
    if m:
        A[:, 0] = -den.coeffs[:-1][::-1]
        A[:-1, 1:] = np.eye(m - 1)
    B = np.zeros((m, k))
    D = np.zeros(k)
    for j, num in enumerate(nums):
        num = as_poly(num)
        if num.is_zero():
            continue
        if num.degree > m:
            raise NonProperCompensator(f"numerator degree {num.degree} exceeds denominator degree {m}")
        D[j] = num.coeffs[m] if num.degree == m else 0.0
        resid = num - den * D[j]
        # observable form: B[i] multiplies s^{m-1-i}
        B[:, j] = resid.padded(m + 1)[:m][::-1] if m else []
    return MisoRealization(A, B, D, den)


# ---------------------------------------------------------------------------
# parameters


def _poly_json(p: Polynomial) -> list:
    return p.to_list()


@dataclass(frozen=True)
class ControllerParams:
    """Controller polynomials plus the plant data the compensator needs.

    ``compensator`` selects whether the disturbance compensator ``u0`` is
    realized.  ``Delta0``, ``Delta1`` and ``Delta2`` are the (monic-``M``
    normalized) plant numerators the synthesis used.
    """

    F: Polynomial
    F0: Polynomial
    T: Polynomial
    L: Polynomial
    R0: Polynomial
    R1: Polynomial
    S0: Polynomial
    S1: Polynomial
    M0star: Polynomial
    M1star: Polynomial
    h: float
    v: float
    mode: str = "full-delay"
    v1: float = 0.0
    margin: float = 0.0
    compensator: bool = False
    Delta0: Polynomial = field(default_factory=Polynomial)
    Delta1: Polynomial = field(default_factory=Polynomial)
    Delta2: tuple = ()
    Mm: Polynomial = field(default_factory=Polynomial)
    Delta_minus: Polynomial = field(default_factory=lambda: Polynomial([1.0]))

    _POLYS = ("F", "F0", "T", "L", "R0", "R1", "S0", "S1", "M0star", "M1star", "Delta0", "Delta1", "Mm",
              "Delta_minus")

    def to_json(self) -> dict:
        out = {name: _poly_json(getattr(self, name)) for name in self._POLYS}
        out["Delta2"] = [_poly_json(p) for p in self.Delta2]
        out.update(h=self.h, v=self.v, v1=self.v1, mode=self.mode, margin=self.margin,
                   compensator=self.compensator)
        return out

    @classmethod
    def from_json(cls, data: dict) -> "ControllerParams":
        kw = {name: Polynomial(data.get(name, [])) for name in cls._POLYS}
        if not data.get("Delta_minus"):
            kw["Delta_minus"] = Polynomial([1.0])
        kw["Delta2"] = tuple(Polynomial(p) for p in data.get("Delta2", []))
        if data.get("mode", "full-delay") not in MODES:
            raise ValidationError(f"unknown controller mode {data.get('mode')!r}")
        def num(key, default):
            # non-finite values are written as null
            x = data.get(key, default)
            return math.nan if x is None else float(x)

        if "h" not in data:
            raise ValidationError("controller params need the delay h")
        return cls(h=float(data["h"]), v=num("v", 0.0), v1=num("v1", 0.0),
                   mode=data.get("mode", "full-delay"), margin=num("margin", 0.0),
                   compensator=bool(data.get("compensator", False)), **kw)

    # closed-loop bookkeeping
    def delta(self, s):
        return self.Delta0(s) + self.Delta1(s) * np.exp(-self.h * np.asarray(s, dtype=complex))


def _deg(p: Polynomial) -> int:
    return -1 if p.is_zero() else int(p.degree)


def check_degree_constraints(params: ControllerParams, n_M: int, ell: int) -> None:
    """Degree inequalities of the law; raises :class:`DegreeConstraintViolated`."""
    nF0 = _deg(params.F0)
    bound = nF0 + n_M - 1
    for name in ("R0", "R1", "S0", "S1"):
        if _deg(getattr(params, name)) > bound:
            raise DegreeConstraintViolated(f"deg {name} = {_deg(getattr(params, name))} exceeds nF0 + nM - 1 = {bound}")
    if params.mode != "model-matching" and _deg(params.R0) != bound:
        raise DegreeConstraintViolated(f"deg R0 = {_deg(params.R0)} must equal nF0 + nM - 1 = {bound}")
    if params.compensator and _deg(params.L) < max(0, nF0 + n_M - 2):
        raise DegreeConstraintViolated(f"n_L = {_deg(params.L)} < max(0, nF0 + nM - 2) = {max(0, nF0 + n_M - 2)}")
    nT = max(_deg(params.T), 0)
    if nF0 < max(0.0, (nT + ell - n_M) / 2.0):
        raise DegreeConstraintViolated(f"n_F0 = {nF0} < max(0, (n_T + ell - n_M) / 2) = {(nT + ell - n_M) / 2.0}")


def _check_filter_poly(F0: Polynomial, name: str = "F0"):
    if F0.is_zero() or not F0.is_monic(1e-10):
        raise NotMonic(f"{name} must be monic")
    if not is_hurwitz(F0, 0.0) or (F0.degree >= 1 and np.max(F0.roots().real) >= 0.0):
        raise NotHurwitz(f"{name} must be Hurwitz")


def _common_zero(F0: Polynomial, D0: Polynomial, D1: Polynomial, h: float, tol: float = 1e-6) -> bool:
    """Does ``Delta0 + Delta1 e^{-hs}`` vanish at a root of ``F0``?"""
    for r in F0.roots() if F0.degree >= 1 else []:
        val = D0(r) + D1(r) * np.exp(-h * r)
        scale = sum(np.sum(np.abs(p.coeffs) * abs(r) ** np.arange(len(p.coeffs))) for p in (D0, D1) if not p.is_zero())
        if abs(val) <= tol * max(scale, 1e-300):
            return True
    return False


def delta_is_stable(D0: Polynomial, D1: Polynomial, h: float) -> bool:
    """Sufficient test that ``Delta0 + Delta1 e^{-hs}`` has no zero in ``Re s >= 0``."""
    if D0.is_zero():
        return False
    if D0.degree < 1:
        return D1.is_zero() or (D1.degree < 1 and abs(D1.lead) < abs(D0.lead))
    r = D0.roots()
    if np.max(r.real) >= 0.0:
        return False
    if D1.is_zero():
        return True
    # Rouche on the imaginary axis itself: strict dominance there is enough
    return delay_hurwitz_certificate(D0, D1, h, 0.0) < 1.0


def default_T(M0s: Polynomial, M1s: Polynomial, D0: Polynomial, D1: Polynomial, D1S1: Polynomial,
              compensator: bool) -> Polynomial:
    """Constant ``T`` giving unit DC gain from ``u_c`` to ``y``."""
    delta0 = D0(0.0) + D1(0.0)
    num = M0s(0.0) + M1s(0.0) + (0.0 if compensator else D1S1(0.0))
    if abs(delta0) < 1e-12 * max(1.0, D0.norm_inf()):
        log.warning("Delta(0) = 0: the plant blocks constant references; using T = 1")
        return Polynomial([1.0])
    return Polynomial([num / delta0])


def default_L(F0: Polynomial, R0: Polynomial, R1: Polynomial, D0: Polynomial, D1: Polynomial, S1: Polynomial,
              Delta2: Sequence[Polynomial], n_M: int, compensator: bool) -> Polynomial:
    """Smallest power of ``F0`` meeting the degree rules of the law and the compensator."""
    nF0 = _deg(F0)
    need = max(0, nF0 + n_M - 2)
    if compensator:
        nums = [F0 * R0 * p for p in Delta2] + [F0 * R1 * p for p in Delta2] + [D1 * S1]
        top = max([_deg(p) for p in nums] + [0])
        need = max(need, top - _deg(D0))
    k = 0 if nF0 <= 0 else int(math.ceil(need / nF0))
    L = F0**k
    if _deg(L) > _deg(F0 * R0):
        raise NonProperCompensator(
            f"L = F0^{k} of degree {_deg(L)} exceeds deg(F0 R0) = {_deg(F0 * R0)}; the law would be improper"
        )
    return L


def synthesize_pole_placement(pp: PencilPolynomials, F0, M0star, M1star=None, T=None, L=None, h: float = 1.0,
                              v: float = 0.5, v1: float | None = None, ell: int = 1, compensator: bool = True,
                              check_margin: bool = True, line_sign: int = -1, minimal: bool | None = None,
                              F=None, mode: str = "full-delay", certify: bool = True) -> ControllerParams:
    """Pole placement for the delayed plant.

    Solves ``F0 M R0 + Delta0 S0 = M0*`` and
    ``F0 M R1 + Delta0 S1 = M1* - Delta1 S0`` and certifies the delayed
    closed loop.

    Parameters
    ----------
    pp : PencilPolynomials
        Plant polynomials; normalized internally to monic ``M``.
    F0, M0star, M1star : Polynomial
        Monic Hurwitz filter, monic target of degree ``2 (n_F0 + n_M) - 1``,
        and delayed target of lower degree (``None`` means zero).
    T, L : Polynomial, optional
        Feedforward and compensator polynomials; defaults give unit DC gain
        and the smallest admissible power of ``F0``.
    v, v1 : float
        Required stability abscissa of ``M0*`` and the line ``Re s = -v1``
        for the delay certificates (``v1`` defaults to ``v / 2``).
    ell : int
        Index of the plant, for the smoothness degree rule.
    compensator : bool
        Realize the disturbance compensator ``u0``.
    check_margin : bool
        Raise :class:`StabilityMarginFailed` when the delay margin is ``>= 1``.
    minimal : bool, optional
        Result of a minimality check; ``False`` raises :class:`NotMinimal`.
    mode : str
        ``"full-delay"`` or ``"delay-free"`` (``R1 = S1 = M1* = 0``).
    certify : bool
        Run the frequency-domain certificates.  Repeated syntheses with fixed
        targets (the adaptive loop) certify once and skip them; the margin is
        then reported as ``nan``.

    Returns
    -------
    ControllerParams
    """
    if minimal is False:
        raise NotMinimal("plant is not controllable and observable; pole placement is not well posed")
    if mode not in ("full-delay", "delay-free"):
        raise ValidationError(f"pole placement mode must be full-delay or delay-free, got {mode!r}")
    pp = pp.normalized()
    M, D0, D1 = pp.M, pp.Delta0, pp.Delta1
    F0 = as_poly(F0)
    M0s = as_poly(M0star)
    M1s = Polynomial() if M1star is None or mode == "delay-free" else as_poly(M1star)
    v1 = 0.5 * v if v1 is None else float(v1)
    if not 0.0 < v1 <= v or v <= 0.0:
        raise ValidationError(f"need 0 < v1 <= v, got v = {v}, v1 = {v1}")
    _check_filter_poly(F0)
    if not M0s.is_monic(1e-10):
        raise NotMonic("M0* must be monic")
    n_M = _deg(M)
    target = 2 * (_deg(F0) + n_M) - 1
    if _deg(M0s) != target:
        raise DegreeConstraintViolated(f"deg M0* = {_deg(M0s)} must equal 2 (n_F0 + n_M) - 1 = {target}")
    if _deg(M1s) >= _deg(M0s):
        raise DegreeConstraintViolated("deg M1* must be below deg M0* (equal degrees give a neutral loop)")
    if not is_hurwitz(M0s, v):
        raise NotHurwitz(f"M0* has a root to the right of -{v}")
    cert = delay_hurwitz_certificate(M0s, M1s, h, v1) if certify else 0.0
    if not cert < 1.0:
        raise StabilityMarginFailed(cert, f"M0* + M1* e^(-hs) not certified on Re s = -{v1} (ratio {cert:.6g})")
    if _common_zero(F0, D0, D1, h):
        raise NotCoprime("F0 shares a zero with Delta(s)")

    A = F0 * M
    degX = _deg(M0s) - _deg(A)
    degY = _deg(A) - 1
    try:
        R0, S0 = solve_diophantine(A, D0, M0s, degX, degY)
    except SingularSylvester as exc:
        raise NotCoprime(f"F0 M and Delta0 are not coprime: {exc}") from exc
    if mode == "delay-free":
        R1, S1 = Polynomial(), Polynomial()
    else:
        rhs = M1s - D1 * S0
        if rhs.is_zero():
            R1, S1 = Polynomial(), Polynomial()
        else:
            R1, S1 = solve_diophantine(A, D0, rhs, degX, degY)
    D1S1 = D1 * S1
    if not certify:
        margin = math.nan
    elif mode == "delay-free":
        # the uncancelled D1 S0 y(t-h) term is the only delayed term left
        margin = delay_hurwitz_certificate(M0s, D1 * S0, h, v1) if not (D1 * S0).is_zero() else 0.0
    else:
        margin = delay_stability_margin(M0s, M1s, D1S1, h, v1, line_sign)
    if certify and check_margin and not margin < 1.0:
        raise StabilityMarginFailed(margin)
    use_comp = bool(compensator)
    if use_comp and not (delta_is_stable(D0, D1, h) if certify else delta_is_stable(D0, Polynomial(), h)):
        raise DeltaNotStable("Delta(s) = Delta0 + Delta1 e^(-hs) is not certified Hurwitz; compensator unavailable")
    if T is None:
        T = default_T(M0s, M1s, D0, D1, D1S1, use_comp)
    T = as_poly(T)
    if L is None:
        L = default_L(F0, R0, R1, D0, D1, S1, pp.Delta2, n_M, use_comp)
    L = as_poly(L)
    params = ControllerParams(
        F=as_poly(F) if F is not None else F0, F0=F0, T=T, L=L, R0=R0, R1=R1, S0=S0, S1=S1,
        M0star=M0s, M1star=M1s, h=float(h), v=float(v), mode=mode, v1=v1, margin=float(margin),
        compensator=use_comp, Delta0=D0, Delta1=D1, Delta2=tuple(pp.Delta2),
    )
    check_degree_constraints(params, n_M, ell)
    control_realization(params)
    if use_comp:
        compensator_realization(params)
    return params


def split_delta0(D0: Polynomial, v: float, tol: float = 1e-7):
    """``Delta0 = Delta0^+ Delta0^-`` with the monic factor ``Delta0^+`` holding
    the roots with ``Re <= -v`` (roots within ``tol`` of the boundary stay in
    ``Delta0^-``)."""
    if D0.is_zero():
        raise ValidationError("Delta0 is identically zero")
    if D0.degree < 1:
        return Polynomial([1.0]), D0
    r = D0.roots()
    stable = r[r.real < -v - tol]
    if stable.size == 0:
        return Polynomial([1.0]), D0
    plus = Polynomial.from_roots(stable)
    minus, rem = D0.divmod(plus)
    if rem.norm_inf() > 1e-8 * max(1.0, D0.norm_inf()):
        raise ValidationError("Delta0 factorization left a remainder")
    return plus, minus


def model_matching_synthesis(pp: PencilPolynomials, F0, Mm, v: float, T=None, h: float = 1.0,
                             minimal: bool | None = None) -> ControllerParams:
    """Exact model matching of ``Delta0^- T / Mm`` for delay-free input paths.

    The stable part ``Delta0^+`` of the plant numerator is cancelled
    (``R0 = Delta0^+ R0'``) and ``F0 M R0' + Delta0^- S0 = Mm`` is solved.
    ``T`` defaults to the constant giving unit DC gain.
    """
    if minimal is False:
        raise NotMinimal("plant is not controllable and observable")
    pp = pp.normalized()
    if not pp.Delta1.is_zero():
        raise ValidationError("model matching requires a delay-free input path (Delta1 = 0)")
    F0 = as_poly(F0)
    Mm = as_poly(Mm)
    _check_filter_poly(F0)
    if not Mm.is_monic(1e-10):
        raise NotMonic("Mm must be monic")
    if not is_hurwitz(Mm, 0.0) or (Mm.degree >= 1 and np.max(Mm.roots().real) >= 0.0):
        raise NotHurwitz("reference model denominator must be Hurwitz")
    M, D0 = pp.M, pp.Delta0
    plus, minus = split_delta0(D0, v)
    n_M, nF0, n_minus = _deg(M), _deg(F0), _deg(minus)
    target = 2 * (nF0 + n_M) - n_minus - 1
    if _deg(Mm) != target:
        raise DegreeConstraintViolated(f"deg Mm = {_deg(Mm)} must equal 2 (n_F0 + n_M) - n_Delta0^- - 1 = {target}")
    A = F0 * M
    degX = _deg(Mm) - _deg(A)
    degY = _deg(A) - 1
    try:
        R0p, S0 = solve_diophantine(A, minus, Mm, degX, degY)
    except SingularSylvester as exc:
        raise NotCoprime(f"F0 M and Delta0^- are not coprime: {exc}") from exc
    if T is None:
        T = Polynomial([Mm(0.0) / minus(0.0)]) if abs(minus(0.0)) > 1e-12 else Polynomial([1.0])
    params = ControllerParams(
        F=F0, F0=F0, T=as_poly(T), L=Polynomial(), R0=plus * R0p, R1=Polynomial(), S0=S0, S1=Polynomial(),
        M0star=plus * Mm, M1star=Polynomial(), h=float(h), v=float(v), mode="model-matching", v1=0.5 * v,
        margin=0.0, compensator=False, Delta0=D0, Delta1=Polynomial(), Delta2=tuple(pp.Delta2), Mm=Mm,
        Delta_minus=minus,
    )
    control_realization(params)
    return params


# ---------------------------------------------------------------------------
# control law and compensator realizations

CONTROL_INPUTS = ("u_c", "y", "y_h", "u0", "u_h")
COMPENSATOR_INPUTS_TAIL = ("y_2h", "u0_h")


def control_realization(params: ControllerParams) -> MisoRealization:
    """``u = (T u_c - S0 y - S1 y(t-h) + L u0 - F0 R1 u(t-h)) / (F0 R0)``.

    Inputs are ordered as :data:`CONTROL_INPUTS`; the law must be strictly
    proper in the undelayed output ``y``.
    """
    den = params.F0 * params.R0
    nums = [params.T, -params.S0, -params.S1, params.L, -(params.F0 * params.R1)]
    real = miso_realization(den, nums)
    if real.D[1] != 0.0:
        raise NonProperCompensator("control law has direct feedthrough from y; increase deg F0")
    return real


def compensator_realization(params: ControllerParams, with_disturbance: bool = True) -> MisoRealization:
    """``L Delta0 u0 = -F0 R0 Delta2^T v0 - F0 R1 Delta2^T v0(t-h) + Delta1 S1 y(t-2h) - L Delta1 u0(t-h)``.

    Inputs: ``v0`` (``n`` entries), ``v0(t-h)`` (``n`` entries), ``y(t-2h)``,
    ``u0(t-h)``.  With ``with_disturbance=False`` the ``v0`` inputs are absent.
    """
    den = params.L * params.Delta0
    if den.is_zero():
        raise NonProperCompensator("L Delta0 is identically zero")
    lead = den.lead
    nums = []
    if with_disturbance:
        nums += [-(params.F0 * params.R0 * p) for p in params.Delta2]
        nums += [-(params.F0 * params.R1 * p) for p in params.Delta2]
    nums += [params.Delta1 * params.S1, -(params.L * params.Delta1)]
    return miso_realization(den / lead, [p / lead for p in nums])


class ControlLaw:
    """Stateful stepper for the control law with exogenous signals.

    ``u_c``, ``y`` and ``u0`` are callables of time; ``y`` is read at ``t``
    and ``t - h`` (``y(t) = 0`` for ``t < 0``).  Past control values come from
    the law's own half-step record, seeded with ``Psi`` on ``[-h, 0)``.
    """

    def __init__(self, params: ControllerParams, dt: float, Psi: Callable[[float], float] | None = None):
        self.params = params
        self.real = control_realization(params)
        self.dt = float(dt)
        self.x = np.zeros(self.real.order)
        self.t = 0.0
        self.Psi = Psi if Psi is not None else (lambda t: 0.0)
        self._u = {}
        ratio = params.h / dt
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio) or round(ratio) < 1:
            raise StepTooLarge("dt must divide h")

    def _key(self, t):
        return int(round(2.0 * t / self.dt))

    def u_past(self, t: float) -> float:
        if t < -1e-12:
            return float(self.Psi(t))
        key = self._key(t)
        if key not in self._u:
            raise HistoryUnderflow(f"u({t}) requested before it was computed")
        return self._u[key]

    def _inputs(self, t, u_c, y, u0):
        yt = lambda s: float(y(s)) if s >= 0 else 0.0
        return np.array([u_c(t), yt(t), yt(t - self.params.h), u0(t), self.u_past(t - self.params.h)])

    def output(self, t, x, u_c, y, u0) -> float:
        return self.real.output(x, self._inputs(t, u_c, y, u0))

    def step(self, u_c, y, u0) -> float:
        """Advance one step of size ``dt``; returns ``u`` at the new time."""
        t, dt, x = self.t, self.dt, self.x
        f = lambda s, xs: self.real.deriv(xs, self._inputs(s, u_c, y, u0))
        if self._key(t) not in self._u:
            self._u[self._key(t)] = self.output(t, x, u_c, y, u0)
        k1 = f(t, x)
        k2 = f(t + dt / 2, x + dt / 2 * k1)
        k3 = f(t + dt / 2, x + dt / 2 * k2)
        k4 = f(t + dt, x + dt * k3)
        x1 = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        f1 = f(t + dt, x1)
        xm = 0.5 * (x + x1) + dt / 8 * (k1 - f1)
        self._u[self._key(t + dt / 2)] = self.output(t + dt / 2, xm, u_c, y, u0)
        self.x, self.t = x1, t + dt
        u1 = self.output(self.t, x1, u_c, y, u0)
        self._u[self._key(self.t)] = u1
        return u1


def control_law_step(law: ControlLaw, u_c, y, u0) -> float:
    """Advance ``law`` by one step; see :class:`ControlLaw`."""
    return law.step(u_c, y, u0)


def compensator_u0(params: ControllerParams, v0, y, t_end: float, dt: float):
    """Known-parameter compensator output on the grid ``0, dt, ..., t_end``.

    ``v0`` is a vector callable (the additive plant disturbance), ``y`` a
    scalar callable read at ``t - 2h`` (zero for negative time).  Returns
    ``(t, u0)`` arrays.
    """
    if not params.compensator:
        raise ValidationError("parameters were synthesized without a compensator")
    if not delta_is_stable(params.Delta0, params.Delta1, params.h):
        raise DeltaNotStable("Delta(s) is not certified Hurwitz")
    real = compensator_realization(params)
    h = params.h
    n_steps = int(round(t_end / dt))
    hist = {}
    key = lambda s: int(round(2.0 * s / dt))

    def u0_past(s):
        if s < -1e-12:
            return 0.0
        return hist[key(s)]

    def inputs(s):
        v = np.asarray(v0(s), dtype=float)
        vh = np.asarray(v0(s - h), dtype=float) if s - h >= 0 else np.zeros_like(v)
        y2 = float(y(s - 2 * h)) if s - 2 * h >= 0 else 0.0
        return np.concatenate([v, vh, [y2, u0_past(s - h)]])

    x = np.zeros(real.order)
    t = dt * np.arange(n_steps + 1)
    out = np.zeros(n_steps + 1)
    hist[0] = out[0] = real.output(x, inputs(0.0))
    for i in range(n_steps):
        s = t[i]
        f = lambda tt, xx: real.deriv(xx, inputs(tt))
        k1 = f(s, x)
        k2 = f(s + dt / 2, x + dt / 2 * k1)
        k3 = f(s + dt / 2, x + dt / 2 * k2)
        k4 = f(s + dt, x + dt * k3)
        x1 = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        # output at t+dt first so the midpoint fill can use its derivative
        hist[key(s + dt)] = out[i + 1] = real.output(x1, inputs(s + dt))
        f1 = f(s + dt, x1)
        xm = 0.5 * (x + x1) + dt / 8 * (k1 - f1)
        hist[key(s + dt / 2)] = real.output(xm, inputs(s + dt / 2))
        x = x1
    return t, out
