"""Trajectories, structural tests and transfer functions of the Weierstrass form.

In Weierstrass coordinates ``x = P z`` the plant splits into

    z1' = W z1 + alpha1 u(t) + beta1 u(t - h) + eta1(t)
    N z2' = z2 + alpha2 u(t) + beta2 u(t - h) + eta2(t)
    y = gamma1^T z1 + gamma2^T z2

where ``eta = Q v0`` collects an additive disturbance ``v0``.  The fast block
has the explicit solution ``z2 = -sum_i N^i (alpha2 u^(i) + beta2 u^(i)(t-h) + eta2^(i))``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InsufficientSmoothness, PoleEvaluation, StepTooLarge, ValidationError
from .pencil import DescriptorSystem, WeierstrassForm
from .polynomial import Polynomial, pencil_polynomials
from .signals import SmoothSignal, zero


@dataclass(frozen=True)
class AdmissibleData:
    """Initial data: slow state, control history ``Psi`` on ``[-h, 0]`` and the
    fast disturbance ``Psi_v02`` near ``t = 0``.  ``z20`` is derived."""

    z10: np.ndarray
    Psi: SmoothSignal
    Psi_v02: SmoothSignal
    z20: np.ndarray


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled simulation output.

    ``extra`` holds additional named columns written after the state blocks.
    """

    t: np.ndarray
    y: np.ndarray
    u: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        m = len(self.t)
        for name in ("y", "u"):
            if len(getattr(self, name)) != m:
                raise ValidationError(f"trajectory column {name} has the wrong length")
        for name, col in self.extra.items():
            if len(col) != m:
                raise ValidationError(f"trajectory column {name} has the wrong length")

    def columns(self) -> tuple[list, np.ndarray]:
        names = ["t", "y", "u"]
        cols = [self.t, self.y, self.u]
        for j in range(self.z1.shape[1] if self.z1.ndim == 2 else 0):
            names.append(f"z1_{j + 1}")
            cols.append(self.z1[:, j])
        for j in range(self.z2.shape[1] if self.z2.ndim == 2 else 0):
            names.append(f"z2_{j + 1}")
            cols.append(self.z2[:, j])
        for name, col in self.extra.items():
            names.append(name)
            cols.append(np.asarray(col))
        return names, np.column_stack(cols)

    def to_csv(self, path=None) -> str:
        """Write comma separated values with 15 significant digits; returns the text."""
        names, data = self.columns()
        return write_csv(path, names, data)


def write_csv(path, names: Sequence[str], data: np.ndarray) -> str:
    buf = io.StringIO()
    # adding zero maps -0.0 to 0.0
    np.savetxt(buf, np.asarray(data, dtype=float) + 0.0, fmt="%.15g", delimiter=",",
               header=",".join(names), comments="", newline="\n")
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return text


def _fast_sum(wf: WeierstrassForm, terms) -> np.ndarray:
    """``-sum_i N^i v_i`` for the list of vectors ``v_0, v_1, ...``."""
    out = np.zeros(wf.n2)
    Ni = np.eye(wf.n2)
    for v in terms:
        out -= Ni @ v
        Ni = Ni @ wf.N
    return out


def _ell_terms(wf: WeierstrassForm) -> int:
    return max(wf.ell, 1) if wf.n2 else 0


def _check_order(sig: SmoothSignal, need: int, name: str):
    if need > 0 and sig.max_order < need:
        raise InsufficientSmoothness(f"{name} must have {need} derivatives, has {sig.max_order}")


def admissible_initial_state(wf: WeierstrassForm, Psi: SmoothSignal, Psi_v02: SmoothSignal,
                             u0_derivs: Sequence[float], h: float = 1.0) -> np.ndarray:
    """Consistent fast state ``z2(0)``.

    Parameters
    ----------
    u0_derivs : sequence of float
        ``u(0), u'(0), ..., u^(ell-1)(0)``.
    h : float
        Input delay, to read ``Psi`` at ``-h``.
    """
    if wf.n2 == 0:
        return np.zeros(0)
    k = _ell_terms(wf)
    _check_order(Psi, k - 1, "Psi")
    _check_order(Psi_v02, k - 1, "Psi_v02")
    if len(u0_derivs) < k:
        raise InsufficientSmoothness(f"need {k} derivatives of u at 0, got {len(u0_derivs)}")
    terms = [
        wf.alpha2 * u0_derivs[i] + wf.beta2 * Psi(-h, i) + np.asarray(Psi_v02(0.0, i), dtype=float)
        for i in range(k)
    ]
    return _fast_sum(wf, terms)


def fast_state(wf: WeierstrassForm, t: float, u: SmoothSignal, Psi: SmoothSignal, eta2: SmoothSignal,
               h: float) -> np.ndarray:
    """Pointwise ``z2(t)`` from the nilpotent derivative sum."""
    if wf.n2 == 0:
        return np.zeros(0)
    k = _ell_terms(wf)
    ud = Psi if t - h < 0 else u
    terms = [wf.alpha2 * u(t, i) + wf.beta2 * ud(t - h, i) + np.asarray(eta2(t, i), dtype=float)
             for i in range(k)]
    return _fast_sum(wf, terms)


def _steps_per(h: float, dt: float) -> int:
    ratio = h / dt
    m = int(round(ratio))
    if m < 1 or abs(ratio - m) > 1e-9 * max(1.0, ratio):
        raise StepTooLarge(f"dt = {dt} must divide the delay h = {h} exactly")
    return m


def simulate_weierstrass(wf: WeierstrassForm, data: AdmissibleData, u: SmoothSignal, eta1: SmoothSignal,
                         eta2: SmoothSignal, t_end: float, dt: float, h: float) -> Trajectory:
    """Open-loop trajectory of the Weierstrass form.

    The slow block is integrated with classical RK4; the delayed input is
    read from ``Psi`` while ``t < h`` and from ``u`` afterwards.  The fast
    block is evaluated pointwise from analytic derivatives of the inputs.
    """
    _steps_per(h, dt)
    k = _ell_terms(wf)
    _check_order(u, k - 1, "u")
    _check_order(data.Psi, k - 1, "Psi")
    _check_order(eta2, k - 1, "eta2")
    n_steps = int(round(t_end / dt))
    t = dt * np.arange(n_steps + 1)

    def ud(s):
        return data.Psi(s - h) if s - h < 0 else u(s - h)

    W, a1, b1 = wf.W, wf.alpha1, wf.beta1

    def f(s, z):
        return W @ z + a1 * u(s) + b1 * ud(s) + np.asarray(eta1(s), dtype=float)

    z1 = np.zeros((n_steps + 1, wf.n1))
    z1[0] = data.z10
    for i in range(n_steps):
        s, z = t[i], z1[i]
        k1 = f(s, z)
        k2 = f(s + dt / 2, z + dt / 2 * k1)
        k3 = f(s + dt / 2, z + dt / 2 * k2)
        k4 = f(s + dt, z + dt * k3)
        z1[i + 1] = z + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    z2 = np.array([fast_state(wf, s, u, data.Psi, eta2, h) for s in t]).reshape(n_steps + 1, wf.n2)
    if wf.n2:
        z2[0] = data.z20
    y = z1 @ wf.gamma1 + z2 @ wf.gamma2
    uu = np.array([u(s) for s in t], dtype=float)
    return Trajectory(t=t, y=y, u=uu, z1=z1, z2=z2)


# ---------------------------------------------------------------------------
# structural tests


def _krylov(M, vecs, k):
    cols = []
    for v in vecs:
        w = np.asarray(v, dtype=float)
        for _ in range(k):
            cols.append(w)
            w = M @ w
    return np.column_stack(cols) if cols else np.zeros((M.shape[0], 0))


def _full_rank(M, n, tol) -> bool:
    if n == 0:
        return True
    sv = np.linalg.svd(M, compute_uv=False)
    scale = max(1.0, sv[0]) if sv.size else 1.0
    return int(np.sum(sv > tol * scale)) >= n


def controllability_test(wf: WeierstrassForm, tol: float = 1e-9) -> dict:
    """Eigenvalue (PBH) and Krylov tests on both blocks.

    Returns ``{"controllable": bool, "failures": [...]}``; failures name the
    eigenvalues of ``W`` (or the fast block) where the rank drops.
    """
    n1, n2 = wf.n1, wf.n2
    failures = []
    for lam in np.linalg.eigvals(wf.W) if n1 else []:
        M = np.column_stack([lam * np.eye(n1) - wf.W, wf.alpha1, wf.beta1])
        if not _full_rank(M, n1, tol):
            failures.append({"block": "slow", "eigenvalue": complex(lam)})
    if n2 and not _full_rank(np.column_stack([wf.N, wf.alpha2, wf.beta2]), n2, tol):
        failures.append({"block": "fast", "eigenvalue": 0j})
    pbh = not failures
    kalman = _full_rank(_krylov(wf.W, [wf.alpha1, wf.beta1], n1), n1, tol) and _full_rank(
        _krylov(wf.N, [wf.alpha2, wf.beta2], n2), n2, tol
    )
    if pbh != kalman:
        failures.append({"block": "disagreement", "eigenvalue": None})
    return {"controllable": pbh and kalman, "failures": failures}


def observability_test(wf: WeierstrassForm, tol: float = 1e-9) -> bool:
    """Krylov test on ``(Wbar^T, gamma)`` cross-checked with the eigenvector test."""
    n = wf.n
    if n == 0:
        return True
    Wb, g = wf.Wbar, wf.gamma
    krylov = _full_rank(_krylov(Wb.T, [g], n), n, tol)
    eigs = list(np.linalg.eigvals(wf.W)) if wf.n1 else []
    if wf.n2:
        eigs.append(0.0)
    pbh = all(_full_rank(np.vstack([lam * np.eye(n) - Wb, g[None, :]]), n, tol) for lam in eigs)
    if krylov != pbh:
        raise ValidationError("observability tests disagree; decomposition is near a boundary")
    return krylov


def transfer_function_eval(sys: DescriptorSystem, wf: WeierstrassForm, s: complex, tol: float = 1e-12,
                           check: float = 1e-7) -> complex:
    """``G(s) = c^T (sE - A)^{-1} (b + d e^{-hs})``, checked against the
    Weierstrass expansion."""
    s = complex(s)
    K = s * sys.E - sys.A
    scale = max(np.linalg.norm(sys.E, 2) * max(abs(s), 1.0), np.linalg.norm(sys.A, 2), 1.0) ** sys.n
    if abs(np.linalg.det(K)) < tol * scale:
        raise PoleEvaluation(f"s = {s} is (numerically) a zero of det(sE - A)")
    delay = np.exp(-sys.h * s)
    g_pencil = complex(sys.c @ np.linalg.solve(K, sys.b + sys.d * delay))
    g_weier = 0j
    if wf.n1:
        g_weier += wf.gamma1 @ np.linalg.solve(s * np.eye(wf.n1) - wf.W, wf.alpha1 + wf.beta1 * delay)
    if wf.n2:
        v = wf.alpha2 + wf.beta2 * delay
        Ni = np.eye(wf.n2)
        for i in range(max(wf.ell, 1)):
            g_weier -= (wf.gamma2 @ Ni @ v) * s**i
            Ni = Ni @ wf.N
    if abs(g_pencil - g_weier) > check * max(abs(g_pencil), 1.0):
        raise ValidationError(f"transfer function representations disagree at s = {s}: "
                              f"{g_pencil} vs {g_weier}")
    return g_pencil


def _near_root(p: Polynomial, r: complex, tol: float) -> bool:
    if p.is_zero():
        return True
    scale = np.sum(np.abs(p.coeffs) * abs(r) ** np.arange(len(p.coeffs)))
    return abs(p(r)) <= tol * max(scale, 1e-300)


def minimality_check(sys: DescriptorSystem, wf: WeierstrassForm, tol: float = 1e-6) -> dict:
    """Controllable, observable and ``deg M <= n``; lists zero-pole cancellations.

    A root of ``M`` is reported as cancelled when both ``Delta0`` and
    ``Delta1`` vanish there to relative accuracy ``tol``.
    """
    ctrb = controllability_test(wf)
    obs = observability_test(wf)
    pp = pencil_polynomials(sys)
    deg_ok = pp.M.degree <= sys.n
    cancellations = []
    for r in pp.M.roots():
        if _near_root(pp.Delta0, r, tol) and _near_root(pp.Delta1, r, tol):
            cancellations.append(complex(r))
    return {
        "minimal": bool(ctrb["controllable"] and obs and deg_ok),
        "controllable": bool(ctrb["controllable"]),
        "observable": bool(obs),
        "cancellations": cancellations,
        "failures": ctrb["failures"],
    }


def admissible_data(wf: WeierstrassForm, z10, Psi: SmoothSignal | None = None, Psi_v02: SmoothSignal | None = None,
                    u: SmoothSignal | None = None, h: float = 1.0) -> AdmissibleData:
    """Bundle initial data with the consistent ``z2(0)`` for input ``u``."""
    Psi = Psi if Psi is not None else zero()
    Psi_v02 = Psi_v02 if Psi_v02 is not None else zero(wf.n2)
    u = u if u is not None else zero()
    k = _ell_terms(wf)
    derivs = [u(0.0, i) for i in range(k)]
    z20 = admissible_initial_state(wf, Psi, Psi_v02, derivs, h)
    return AdmissibleData(np.asarray(z10, dtype=float).reshape(wf.n1), Psi, Psi_v02, z20)
