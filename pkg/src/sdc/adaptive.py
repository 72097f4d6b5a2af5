"""Dead-zone least-squares estimation of the filtered plant model.

With ``F`` monic of degree ``n = deg M`` and ``w_f = w / F`` the plant reads

    y = (F - M)(D) y_f + Delta0(D) u_f + Delta1(D) u_f(t - h) + gamma0(t)

which is linear in ``theta = [F - M, Delta0, Delta1]`` (coefficients in
descending powers) against the regressor
``phi = [D^{n-1} y_f .. y_f, D^n u_f .. u_f, D^n u_f(t-h) .. u_f(t-h)]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .controller import ControllerParams, FilterRealization, synthesize_pole_placement
from .errors import ControllabilityLost, SDCError, ValidationError
from .polynomial import PencilPolynomials, Polynomial, as_poly, sylvester_matrix

P_MIN = 1e-8
SYLV_MIN = 1e-8


def theta_size(n: int) -> int:
    return n + 2 * (n + 1)


def theta_from_polynomials(F, M, Delta0, Delta1, n: int) -> np.ndarray:
    """Stack ``F - M`` (degrees ``n-1..0``), ``Delta0`` and ``Delta1`` (``n..0``)."""
    F, M = as_poly(F), as_poly(M)
    ty = (F - M).padded(n + 1)
    if abs(ty[n]) > 1e-9 * max(1.0, F.norm_inf()):
        raise ValidationError("F and M must share the same monic leading term")
    return np.concatenate([ty[:n][::-1], as_poly(Delta0).padded(n + 1)[::-1], as_poly(Delta1).padded(n + 1)[::-1]])


def polynomials_from_theta(theta, F, n: int):
    """Inverse of :func:`theta_from_polynomials`: returns ``(M, Delta0, Delta1)``."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (theta_size(n),):
        raise ValidationError(f"theta must have {theta_size(n)} entries")
    ty = Polynomial(theta[:n][::-1])
    M = as_poly(F) - ty
    D0 = Polynomial(theta[n : 2 * n + 1][::-1])
    D1 = Polynomial(theta[2 * n + 1 :][::-1])
    return M, D0, D1


def regressor(yf_state, uf_derivs, uf_derivs_delayed) -> np.ndarray:
    """``phi`` from the ``y`` filter state and the ``u`` filter derivative stacks.

    ``yf_state[j] = D^j y_f``; ``uf_derivs[j] = D^j u_f`` for ``j = 0..n``.
    """
    return np.concatenate([np.asarray(yf_state)[::-1], np.asarray(uf_derivs)[::-1],
                           np.asarray(uf_derivs_delayed)[::-1]])


def regressor_update(yfilter: FilterRealization, ufilter: FilterRealization, u: float, uf_delayed) -> np.ndarray:
    """Regressor from live filters; ``uf_delayed`` is the stored ``u``-filter
    derivative stack at ``t - h``."""
    return regressor(yfilter.state, ufilter.derivatives(ufilter.state, u), uf_delayed)


def predict_and_error(theta_hat, phi, y: float) -> tuple[float, float]:
    y_hat = float(np.dot(theta_hat, phi))
    return y_hat, float(y - y_hat)


@dataclass(frozen=True)
class EstimatorState:
    """Estimate, covariance and dead-zone constants.

    ``Omega`` is an ``(n_theta, 2)`` array of box bounds.  ``floor_count``
    counts covariance floorings, ``steps`` the updates performed.
    """

    theta: np.ndarray
    P: np.ndarray
    Omega: np.ndarray
    alpha1: float = 1.0
    g: float = 2.0
    rho0: float = 0.1
    eps1: float = 0.0
    eps2: float = 0.0
    gamma_sup: float = 0.0
    p_min: float = P_MIN
    floor_count: int = 0
    steps: int = 0

    def __post_init__(self):
        th = np.asarray(self.theta, dtype=float)
        P = np.asarray(self.P, dtype=float)
        Om = np.asarray(self.Omega, dtype=float)
        k = th.shape[0]
        if P.shape != (k, k) or Om.shape != (k, 2):
            raise ValidationError("estimator dimensions are inconsistent")
        if np.any(Om[:, 0] > Om[:, 1]):
            raise ValidationError("Omega lower bounds exceed upper bounds")
        if not (self.alpha1 > 0 and self.g > 1 and self.rho0 > 0 and self.eps1 >= 0 and self.eps2 >= 0):
            raise ValidationError("need alpha1 > 0, g > 1, rho0 > 0, eps1 >= 0, eps2 >= 0")
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "Omega", Om)

    @classmethod
    def initial(cls, theta0, Omega, k0: float = 1.0, **constants) -> "EstimatorState":
        theta0 = np.asarray(theta0, dtype=float)
        Om = np.asarray(Omega, dtype=float)
        if np.any(theta0 < Om[:, 0]) or np.any(theta0 > Om[:, 1]):
            raise ValidationError("initial estimate lies outside Omega")
        if not k0 > 0:
            raise ValidationError("P(0) = k0 I needs k0 > 0")
        return cls(theta0, k0 * np.eye(len(theta0)), Om, **constants)


def disturbance_bound_update(state: EstimatorState, phi, dt: float) -> tuple[EstimatorState, float]:
    """Decayed supremum ``max(sup e^{-2 rho0 dt}, |phi|^2)``; returns the new
    state and ``gamma = eps1 sup + eps2``."""
    sup = max(state.gamma_sup * math.exp(-2.0 * state.rho0 * dt), float(np.dot(phi, phi)))
    return replace(state, gamma_sup=sup), state.eps1 * sup + state.eps2


def dead_zone_gate(e: float, gamma: float, state: EstimatorState, phi) -> tuple[float, float]:
    """Relative dead zone ``s`` and adaptation gain ``b``."""
    thresh = state.g * math.sqrt(max(gamma, 0.0))
    if abs(e) <= thresh:
        return 0.0, 0.0
    s = 1.0 - thresh / abs(e)
    b = state.alpha1 * s / (1.0 + float(phi @ state.P @ phi))
    return s, b


def project(theta, Omega) -> np.ndarray:
    return np.minimum(np.maximum(theta, Omega[:, 0]), Omega[:, 1])


def estimator_step(state: EstimatorState, phi, e: float, dt: float, b: float) -> EstimatorState:
    """Euler step of the normalized least-squares update with box projection.

    ``b == 0`` returns ``state`` itself, so frozen steps are bitwise no-ops.
    """
    if b == 0.0:
        return replace(state, steps=state.steps + 1)
    P = state.P
    Pphi = P @ phi
    P_new = P - dt * b * np.outer(Pphi, Pphi)
    P_new = 0.5 * (P_new + P_new.T)
    floors = state.floor_count
    w, V = np.linalg.eigh(P_new)
    if w[0] < state.p_min:
        P_new = (V * np.maximum(w, state.p_min)) @ V.T
        floors += 1
    theta = project(state.theta + dt * b * e * Pphi, state.Omega)
    return replace(state, theta=theta, P=P_new, floor_count=floors, steps=state.steps + 1)


@dataclass(frozen=True)
class AdaptiveConfig:
    """Design data for the adaptive loop.

    ``F`` is the estimation filter (monic, degree ``n``); ``F0``, ``M0star``,
    ``M1star``, ``T`` and ``L`` feed the per-step pole placement.
    """

    F: Polynomial
    F0: Polynomial
    M0star: Polynomial
    M1star: Polynomial
    theta0: np.ndarray
    Omega: np.ndarray
    k0: float = 1.0
    alpha1: float = 1.0
    g: float = 2.0
    rho0: float = 0.1
    eps1: float = 1e-3
    eps2: float = 1e-4
    k_syn: int = 10
    v: float = 0.5
    v1: float | None = None
    T: Polynomial | None = None
    L: Polynomial | None = None
    compensator: bool = True
    floor_fraction: float = 0.5

    @property
    def n(self) -> int:
        return int(self.F.degree)

    def initial_state(self) -> EstimatorState:
        return EstimatorState.initial(self.theta0, self.Omega, self.k0, alpha1=self.alpha1, g=self.g,
                                      rho0=self.rho0, eps1=self.eps1, eps2=self.eps2)


def sylvester_determinant(A: Polynomial, B: Polynomial, degX: int, degY: int) -> float:
    S = sylvester_matrix(A / A.lead, B, degX, degY)
    if S.shape[0] != S.shape[1]:
        return 0.0
    return float(np.linalg.det(S))


def adaptive_resynthesis(theta_hat, cfg: AdaptiveConfig, h: float, ell: int = 1,
                         sylv_min: float = SYLV_MIN, certify: bool = False) -> ControllerParams:
    """Pole placement with the plant replaced by the current estimates.

    Raises
    ------
    ControllabilityLost
        The Sylvester determinant of ``(F0 M_hat, Delta0_hat)`` is below
        ``sylv_min`` or the synthesis fails for the estimate.
    """
    M, D0, D1 = polynomials_from_theta(theta_hat, cfg.F, cfg.n)
    A = cfg.F0 * M
    degY = int(A.degree) - 1
    degX = int(cfg.M0star.degree) - int(A.degree)
    det = sylvester_determinant(A, D0, degX, degY)
    if abs(det) < sylv_min:
        raise ControllabilityLost(f"Sylvester determinant {det:.3g} below {sylv_min:.3g}")
    pp = PencilPolynomials(M, D0, D1, ())
    if cfg.compensator and (D0.degree < 1 or np.max(D0.roots().real) >= 0.0):
        raise ControllabilityLost("estimated Delta0 is not Hurwitz; compensator unavailable")
    try:
        return synthesize_pole_placement(
            pp, cfg.F0, cfg.M0star, cfg.M1star, T=cfg.T, L=cfg.L, h=h, v=cfg.v, v1=cfg.v1, ell=ell,
            compensator=cfg.compensator, check_margin=False, F=cfg.F, certify=certify,
        )
    except SDCError as exc:
        raise ControllabilityLost(f"resynthesis failed for the current estimate: {exc}") from exc
