"""Closed-loop simulation of the delayed descriptor plant.

The plant is integrated in Weierstrass coordinates: the slow block jointly
with the controller, compensator and estimator filters by classical RK4,
the fast block pointwise.  Delayed signals are stored on the half-step grid
``t = j dt / 2`` (RK4 evaluates at ``t``, ``t + dt/2`` and ``t + dt``), so a
delay that is a multiple of ``dt`` always lands on a stored sample.  The
half-step samples come from cubic Hermite interpolation of the state.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .adaptive import (
    AdaptiveConfig,
    adaptive_resynthesis,
    dead_zone_gate,
    disturbance_bound_update,
    estimator_step,
    predict_and_error,
    regressor,
)
from .controller import ControllerParams, compensator_realization, control_realization, make_filter, miso_realization
from .errors import (
    ControllabilityLost,
    HistoryUnderflow,
    NotImpulseFree,
    NotStable,
    NumericalBlowup,
    StepTooLarge,
    ValidationError,
)
from .pencil import TOL_DECOMP, TOL_RANK, DescriptorSystem, weierstrass_decompose
from .polynomial import QuasiPolynomial, as_poly, delay_hurwitz_certificate
from .signals import SmoothSignal, zero
from .system import Trajectory, write_csv

log = logging.getLogger(__name__)

BLOWUP = 1e9
MODES = ("known", "adaptive", "open-loop")


def steps_per_delay(h: float, dt: float) -> int:
    ratio = h / dt
    m = int(round(ratio))
    if m < 1 or abs(ratio - m) > 1e-9 * max(1.0, ratio):
        raise StepTooLarge(f"dt = {dt} must divide the delay h = {h} exactly")
    return m


@dataclass(frozen=True)
class Scenario:
    """Everything one simulation needs.

    ``mode`` is ``"known"`` (fixed ``params``), ``"adaptive"`` (``adaptive``
    config, resynthesized every ``k_syn`` steps) or ``"open-loop"`` (the
    reference drives the plant input directly; an ``adaptive`` config, if
    given, runs the estimator without closing the loop).  ``eta1``/``eta2``
    are the disturbance in Weierstrass coordinates.
    """

    sys: DescriptorSystem
    mode: str
    reference: SmoothSignal
    eta1: SmoothSignal | None = None
    eta2: SmoothSignal | None = None
    params: ControllerParams | None = None
    adaptive: AdaptiveConfig | None = None
    t_end: float = 10.0
    dt: float = 0.01
    z10: np.ndarray | None = None
    Psi: SmoothSignal | None = None
    seed: int = 0
    blowup: float = BLOWUP
    name: str = "scenario"
    tol_rank: float = TOL_RANK
    tol_decomp: float = TOL_DECOMP

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "known" and self.params is None:
            raise ValidationError("known mode needs controller params")
        if self.mode == "adaptive" and self.adaptive is None:
            raise ValidationError("adaptive mode needs an adaptive config")
        steps_per_delay(self.sys.h, self.dt)
        if self.t_end < 2 * self.sys.h:
            raise ValidationError("t_end must be at least 2h")
        ratio = self.t_end / self.dt
        if abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise StepTooLarge("dt must divide t_end")


@dataclass
class RunResult:
    trajectory: Trajectory
    estimator_names: list = field(default_factory=list)
    estimator_trace: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def write(self, outdir) -> list:
        """Write ``trajectory.csv``, ``estimator.csv`` (when present) and
        ``diagnostics.json``; returns the paths."""
        os.makedirs(outdir, exist_ok=True)
        paths = [os.path.join(outdir, "trajectory.csv")]
        self.trajectory.to_csv(paths[0])
        if self.estimator_trace is not None:
            paths.append(os.path.join(outdir, "estimator.csv"))
            write_csv(paths[-1], self.estimator_names, self.estimator_trace)
        paths.append(os.path.join(outdir, "diagnostics.json"))
        with open(paths[-1], "w", encoding="utf-8", newline="\n") as fh:
            fh.write(dumps(self.diagnostics))
        return paths


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return None
        return float(f"{x:.15g}")
    if isinstance(obj, complex):
        return [_clean(obj.real), _clean(obj.imag)]
    return obj


def dumps(obj) -> str:
    """JSON with 15 significant digits, sorted keys and a trailing newline."""
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


class _Engine:
    def __init__(self, sc: Scenario):
        self.sc = sc
        sys = sc.sys
        wf = weierstrass_decompose(sys, sc.tol_decomp, sc.tol_rank)
        if wf.ell > 1:
            raise NotImpulseFree(f"closed-loop simulation needs an impulse-free plant, index is {wf.ell}")
        self.wf = wf
        self.h, self.dt = sys.h, sc.dt
        self.m = steps_per_delay(self.h, self.dt)
        self.N = int(round(sc.t_end / sc.dt))
        self.off = 4 * self.m
        size = self.off + 2 * self.N + 3
        self.hu = np.zeros(size)
        self.hy = np.zeros(size)
        self.hu0 = np.zeros(size)
        self.Psi = sc.Psi if sc.Psi is not None else zero()
        for j in range(self.off):
            self.hu[j] = self.Psi((j - self.off) * self.dt / 2)
        self.eta1 = sc.eta1
        self.eta2 = sc.eta2
        if self.eta1 is not None and self.eta1.dim != wf.n1:
            raise ValidationError(f"eta1 must have {wf.n1} components")
        if self.eta2 is not None and self.eta2.dim != wf.n2:
            raise ValidationError(f"eta2 must have {wf.n2} components")
        self.Qinv = np.linalg.inv(wf.Q)
        self.uc = sc.reference
        self.closed = sc.mode != "open-loop"
        self.adaptive = sc.adaptive if sc.mode in ("adaptive", "open-loop") else None
        self.resynth = sc.mode == "adaptive"

        # realizations
        self.params = None
        self.creal = self.qreal = None
        self.q_disturbance = False
        if sc.mode == "known":
            self._set_params(sc.params, with_disturbance=True)
        elif sc.mode == "adaptive":
            self.est = self.adaptive.initial_state()
            p = adaptive_resynthesis(self.est.theta, self.adaptive, self.h, certify=False)
            if self.adaptive.L is None:
                self.adaptive = replace(self.adaptive, L=p.L)
                p = replace(p, L=p.L)
            self._set_params(p, with_disturbance=False)
        if self.adaptive is not None and sc.mode == "open-loop":
            self.est = self.adaptive.initial_state()

        n1 = wf.n1
        nc = self.creal.order if self.creal is not None else 0
        nq = self.qreal.order if self.qreal is not None else 0
        nf = self.adaptive.n if self.adaptive is not None else 0
        self.sl_z1 = slice(0, n1)
        self.sl_c = slice(n1, n1 + nc)
        self.sl_q = slice(n1 + nc, n1 + nc + nq)
        self.sl_yf = slice(n1 + nc + nq, n1 + nc + nq + nf)
        self.sl_uf = slice(n1 + nc + nq + nf, n1 + nc + nq + 2 * nf)
        self.nx = n1 + nc + nq + 2 * nf
        if self.adaptive is not None:
            self.filt = make_filter(self.adaptive.F)
            self.fcoef = self.adaptive.F.coeffs[:-1]
            # u-filter derivative stacks on the grid, with [-h, 0] pre-roll
            self.phiU = np.zeros((self.m + self.N + 1, nf + 1))
            self.uf0 = self._preroll()

    # -- parameters -----------------------------------------------------
    def _set_params(self, params: ControllerParams, with_disturbance: bool):
        creal = control_realization(params)
        qreal = compensator_realization(params, with_disturbance) if params.compensator else None
        if self.creal is not None:
            if creal.order != self.creal.order or (qreal is None) != (self.qreal is None) or (
                qreal is not None and qreal.order != self.qreal.order
            ):
                raise ControllabilityLost("controller order changed; keeping previous parameters")
        self.params, self.creal, self.qreal = params, creal, qreal
        self.q_disturbance = with_disturbance

    def _preroll(self) -> np.ndarray:
        """Run the ``u`` filter over ``[-h, 0]`` driven by ``Psi``."""
        A, b, dt = self.filt.A_F, self.filt.b_F, self.dt
        x = np.zeros(self.adaptive.n)
        for k in range(self.m + 1):
            t = -self.h + k * dt
            w = float(self.Psi(t))
            self.phiU[k] = np.append(x, w - self.fcoef @ x)
            if k == self.m:
                break
            wm, w1 = float(self.Psi(t + dt / 2)), float(self.Psi(t + dt))
            k1 = A @ x + b * w
            k2 = A @ (x + dt / 2 * k1) + b * wm
            k3 = A @ (x + dt / 2 * k2) + b * wm
            k4 = A @ (x + dt * k3) + b * w1
            x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        return x

    # -- history ----------------------------------------------------------
    def _idx(self, t: float) -> int:
        j = int(round(2.0 * t / self.dt)) + self.off
        if j < 0:
            raise HistoryUnderflow(f"history requested at t = {t}, before -2h")
        return j

    def _v0(self, t):
        parts = []
        parts.append(np.asarray(self.eta1(t), dtype=float) if self.eta1 is not None else np.zeros(self.wf.n1))
        parts.append(np.asarray(self.eta2(t), dtype=float) if self.eta2 is not None else np.zeros(self.wf.n2))
        return self.Qinv @ np.concatenate(parts)

    # -- right-hand side -------------------------------------------------
    def evaluate(self, t: float, X: np.ndarray):
        """Signals ``(u, y, u0, u_c)`` and the state derivative at ``t``."""
        wf, h = self.wf, self.h
        z1 = X[self.sl_z1]
        ref = float(self.uc(t))
        j = self._idx(t - h)
        uh = self.hu[j]
        dX = np.empty(self.nx)
        u0 = 0.0
        if self.closed:
            if self.qreal is not None:
                y2h = self.hy[self._idx(t - 2 * h)]
                u0h = self.hu0[j]
                if self.q_disturbance:
                    wq = np.concatenate([self._v0(t), self._v0(t - h), [y2h, u0h]])
                else:
                    wq = np.array([y2h, u0h])
                xq = X[self.sl_q]
                u0 = self.qreal.output(xq, wq)
                dX[self.sl_q] = self.qreal.deriv(xq, wq)
            wc = np.array([ref, 0.0, self.hy[j], u0, uh])
            xc = X[self.sl_c]
            u = self.creal.output(xc, wc)
        else:
            u = ref
        e1 = self.eta1(t) if self.eta1 is not None else 0.0
        y = float(wf.gamma1 @ z1)
        if wf.n2:
            e2 = self.eta2(t) if self.eta2 is not None else 0.0
            z2 = -(wf.alpha2 * u + wf.beta2 * uh + e2)
            y += float(wf.gamma2 @ z2)
        dX[self.sl_z1] = wf.W @ z1 + wf.alpha1 * u + wf.beta1 * uh + e1
        if self.closed:
            wc[1] = y
            dX[self.sl_c] = self.creal.deriv(xc, wc)
        if self.adaptive is not None:
            A, b = self.filt.A_F, self.filt.b_F
            dX[self.sl_yf] = A @ X[self.sl_yf] + b * y
            dX[self.sl_uf] = A @ X[self.sl_uf] + b * u
        return (u, y, u0, ref), dX

    def z2_at(self, t, u, uh):
        wf = self.wf
        if not wf.n2:
            return np.zeros(0)
        e2 = self.eta2(t) if self.eta2 is not None else 0.0
        return -(wf.alpha2 * u + wf.beta2 * uh + e2)

    # -- main loop --------------------------------------------------------
    def run(self) -> RunResult:
        sc, dt, N, h = self.sc, self.dt, self.N, self.h
        X = np.zeros(self.nx)
        if sc.z10 is not None:
            X[self.sl_z1] = np.asarray(sc.z10, dtype=float).reshape(self.wf.n1)
        if self.adaptive is not None:
            X[self.sl_uf] = self.uf0
        t_grid = dt * np.arange(N + 1)
        cols = {k: np.zeros(N + 1) for k in ("y", "u", "u0", "u_c")}
        Z1 = np.zeros((N + 1, self.wf.n1))
        Z2 = np.zeros((N + 1, self.wf.n2))
        est_rows = []
        diag = {"resynthesis_failures": 0, "resyntheses": 0, "blowup": False}
        cached = None
        for k in range(N + 1):
            t = t_grid[k]
            if self.resynth and k % self.adaptive.k_syn == 0 and k > 0:
                try:
                    p = adaptive_resynthesis(self.est.theta, self.adaptive, h, certify=False)
                    self._set_params(p, with_disturbance=False)
                    diag["resyntheses"] += 1
                    cached = None
                except ControllabilityLost as exc:
                    diag["resynthesis_failures"] += 1
                    log.debug("t=%g: %s", t, exc)
            if cached is None:
                sig0, f0 = self.evaluate(t, X)
            else:
                sig0, f0 = cached
            u, y, u0, ref = sig0
            j = self._idx(t)
            self.hu[j], self.hy[j], self.hu0[j] = u, y, u0
            cols["y"][k], cols["u"][k], cols["u0"][k], cols["u_c"][k] = y, u, u0, ref
            Z1[k] = X[self.sl_z1]
            Z2[k] = self.z2_at(t, u, self.hu[self._idx(t - h)])
            if self.adaptive is not None:
                est_rows.append(self._estimate(k, t, X, u, y))
            if k == N:
                break
            k1 = f0
            _, k2 = self.evaluate(t + dt / 2, X + dt / 2 * k1)
            _, k3 = self.evaluate(t + dt / 2, X + dt / 2 * k2)
            _, k4 = self.evaluate(t + dt, X + dt * k3)
            X1 = X + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            sig1, f1 = self.evaluate(t + dt, X1)
            j1 = self._idx(t + dt)
            self.hu[j1], self.hy[j1], self.hu0[j1] = sig1[0], sig1[1], sig1[2]
            Xm = 0.5 * (X + X1) + dt / 8 * (k1 - f1)
            sigm, _ = self.evaluate(t + dt / 2, Xm)
            jm = self._idx(t + dt / 2)
            self.hu[jm], self.hy[jm], self.hu0[jm] = sigm[0], sigm[1], sigm[2]
            X = X1
            cached = (sig1, f1)
            norm = float(np.max(np.abs(X))) if X.size else 0.0
            if not math.isfinite(norm) or norm > sc.blowup or not math.isfinite(sig1[0]) or abs(sig1[0]) > sc.blowup:
                diag["blowup"] = True
                diag["blowup_step"] = k + 1
                diag["blowup_t"] = float(t + dt)
                res = self._result(t_grid[: k + 1], cols, Z1[: k + 1], Z2[: k + 1], est_rows, diag, k + 1)
                raise NumericalBlowup(k + 1, t + dt, norm, res)
        return self._result(t_grid, cols, Z1, Z2, est_rows, diag, N + 1)

    def _estimate(self, k, t, X, u, y):
        uf = X[self.sl_uf]
        stack = np.append(uf, u - self.fcoef @ uf)
        self.phiU[self.m + k] = stack
        phi = regressor(X[self.sl_yf], stack, self.phiU[k])
        y_hat, e = predict_and_error(self.est.theta, phi, y)
        self.est, gamma = disturbance_bound_update(self.est, phi, self.dt)
        s, b = dead_zone_gate(e, gamma, self.est, phi)
        self.est = estimator_step(self.est, phi, e, self.dt, b)
        return [t, y_hat, e, s, b, gamma, *self.est.theta, 1.0 if b == 0.0 else 0.0]

    def _result(self, t, cols, Z1, Z2, est_rows, diag, count) -> RunResult:
        extra = {"u0": cols["u0"][:count], "u_c": cols["u_c"][:count]}
        traj = Trajectory(t=t[:count], y=cols["y"][:count], u=cols["u"][:count], z1=Z1[:count], z2=Z2[:count],
                          extra=extra)
        diag = dict(diag)
        diag["scenario"] = self.sc.name
        diag["mode"] = self.sc.mode
        diag["steps"] = count - 1
        diag["dt"] = self.dt
        diag["h"] = self.h
        diag["max_abs_y"] = float(np.max(np.abs(traj.y))) if count else 0.0
        diag["max_abs_u"] = float(np.max(np.abs(traj.u))) if count else 0.0
        diag["weierstrass_residuals"] = self.wf.residuals
        if self.params is not None:
            diag["margin"] = self.params.margin
            diag["params"] = self.params.to_json()
        names, trace = [], None
        if self.adaptive is not None:
            k = len(self.est.theta)
            names = ["t", "y_hat", "e", "s", "b", "gamma"] + [f"theta_{i + 1}" for i in range(k)] + ["frozen"]
            trace = np.array(est_rows, dtype=float).reshape(-1, len(names))
            diag["theta_final"] = self.est.theta
            diag["theta_sup"] = float(np.max(np.linalg.norm(trace[:, 6 : 6 + k], axis=1))) if len(trace) else 0.0
            diag["frozen_fraction"] = float(np.mean(trace[:, -1])) if len(trace) else 1.0
            diag["covariance_floorings"] = self.est.floor_count
            steps = max(self.est.steps, 1)
            diag["covariance_degenerate"] = self.est.floor_count > self.adaptive.floor_fraction * steps
            if diag["covariance_degenerate"]:
                log.warning("covariance floor hit on %d of %d steps", self.est.floor_count, steps)
        return RunResult(traj, names, trace, diag)


def run_closed_loop(sc: Scenario) -> RunResult:
    """Simulate a scenario; see :class:`Scenario` for the modes.

    Raises
    ------
    NumericalBlowup
        A state exceeded ``sc.blowup``; the partial run is attached.
    """
    return _Engine(sc).run()


def run_reference_model(Mm0, Mm1, D1S1, numerator: QuasiPolynomial, h: float, u_c, t_end: float,
                        dt: float) -> Trajectory:
    """Reference model ``Mm0 y + Mm1 y(t-h) + D1S1 y(t-2h) = sum_k N_k u_c(t - k h)``.

    Zero initial conditions; ``u_c`` is taken as zero for negative time.

    Raises
    ------
    NotStable
        ``Mm0`` is not Hurwitz or the delayed terms are not dominated on the
        imaginary axis.
    """
    Mm0, Mm1, D1S1 = as_poly(Mm0), as_poly(Mm1), as_poly(D1S1)
    m = steps_per_delay(h, dt)
    if Mm0.is_zero() or Mm0.degree < 1 or np.max(Mm0.roots().real) >= 0.0:
        raise NotStable("reference model denominator is not Hurwitz")
    cert = 0.0
    if not Mm1.is_zero():
        cert += delay_hurwitz_certificate(Mm0, Mm1, h, 0.0)
    if not D1S1.is_zero():
        cert += delay_hurwitz_certificate(Mm0, D1S1, 2 * h, 0.0)
    if not cert < 1.0:
        raise NotStable(f"delayed reference model not certified (ratio {cert:.3g})")
    ks = sorted(numerator.terms)
    lead = Mm0.lead
    real = miso_realization(Mm0 / lead, [numerator.terms[k] / lead for k in ks] + [-Mm1 / lead, -D1S1 / lead])
    N = int(round(t_end / dt))
    off = 4 * m
    hy = np.zeros(off + 2 * N + 3)
    idx = lambda t: int(round(2.0 * t / dt)) + off
    uc = lambda t: float(u_c(t)) if t >= 0 else 0.0

    def inputs(t):
        return np.array([uc(t - k * h) for k in ks] + [hy[idx(t - h)], hy[idx(t - 2 * h)]])

    x = np.zeros(real.order)
    t_grid = dt * np.arange(N + 1)
    y = np.zeros(N + 1)
    for k in range(N + 1):
        t = t_grid[k]
        w0 = inputs(t)
        y[k] = hy[idx(t)] = real.output(x, w0)
        if k == N:
            break
        f = lambda s, xs: real.deriv(xs, inputs(s))
        k1 = real.deriv(x, w0)
        k2 = f(t + dt / 2, x + dt / 2 * k1)
        k3 = f(t + dt / 2, x + dt / 2 * k2)
        k4 = f(t + dt, x + dt * k3)
        x1 = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        f1 = f(t + dt, x1)
        xm = 0.5 * (x + x1) + dt / 8 * (k1 - f1)
        hy[idx(t + dt / 2)] = real.output(xm, inputs(t + dt / 2))
        x = x1
    u = np.array([uc(t) for t in t_grid])
    return Trajectory(t=t_grid, y=y, u=u, z1=np.zeros((N + 1, 0)), z2=np.zeros((N + 1, 0)))
