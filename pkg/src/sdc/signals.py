"""Input and disturbance signals with analytic derivatives.

A :class:`SmoothSignal` wraps ``f(t, k)`` returning the ``k``-th time
derivative.  Scalar and vector signals share the class; ``dim`` is ``None``
for scalars.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InsufficientSmoothness, ValidationError

INF_ORDER = 10**6


@dataclass(frozen=True)
class SmoothSignal:
    """Signal ``t -> f^{(k)}(t)`` with derivatives up to ``max_order``.

    Parameters
    ----------
    evaluator : callable
        ``evaluator(t, k)`` returns the ``k``-th derivative at ``t``.
    max_order : int
        Highest derivative the evaluator supports.
    dim : int or None
        Vector length, or ``None`` for a scalar signal.
    support : tuple
        Interval on which the signal is defined.
    """

    evaluator: Callable[[float, int], object]
    max_order: int = INF_ORDER
    dim: int | None = None
    support: tuple = (-math.inf, math.inf)
    label: str = field(default="signal", compare=False)

    def __call__(self, t: float, k: int = 0):
        if k > self.max_order:
            raise InsufficientSmoothness(
                f"{self.label}: derivative of order {k} requested, only {self.max_order} available"
            )
        lo, hi = self.support
        if not lo - 1e-12 <= t <= hi + 1e-12:
            raise ValidationError(f"{self.label}: t = {t} outside support [{lo}, {hi}]")
        return self.evaluator(t, k)

    def value(self, t: float) -> float | np.ndarray:
        return self(t, 0)


def zero(dim: int | None = None) -> SmoothSignal:
    if dim is None:
        return SmoothSignal(lambda t, k: 0.0, dim=None, label="zero")
    z = np.zeros(dim)
    z.setflags(write=False)
    return SmoothSignal(lambda t, k: z, dim=dim, label="zero")


def constant(value: float) -> SmoothSignal:
    value = float(value)
    return SmoothSignal(lambda t, k: value if k == 0 else 0.0, label="constant")


def step(amplitude: float = 1.0, t0: float = 0.0) -> SmoothSignal:
    """``amplitude`` for ``t >= t0`` and zero before; only the value is defined."""
    amplitude, t0 = float(amplitude), float(t0)
    return SmoothSignal(lambda t, k: amplitude if t >= t0 else 0.0, max_order=0, label="step")


def multisine(amplitudes: Sequence[float], omegas: Sequence[float], phases: Sequence[float] | None = None,
              offset: float = 0.0) -> SmoothSignal:
    """``offset + sum_j a_j sin(w_j t + p_j)``, differentiable to any order."""
    a = np.asarray(amplitudes, dtype=float)
    w = np.asarray(omegas, dtype=float)
    p = np.zeros_like(a) if phases is None else np.asarray(phases, dtype=float)
    if not (a.shape == w.shape == p.shape):
        raise ValidationError("multisine amplitudes, omegas and phases must have equal length")
    offset = float(offset)

    def ev(t, k):
        # d^k/dt^k sin(x) = sin(x + k pi / 2)
        val = float(np.sum(a * w**k * np.sin(w * t + p + k * math.pi / 2)))
        return val + offset if k == 0 else val

    return SmoothSignal(ev, label="multisine")


def sinusoid(amplitude: float, omega: float, phase: float = 0.0, offset: float = 0.0) -> SmoothSignal:
    return multisine([amplitude], [omega], [phase], offset)


def bounded_noise(amplitude: float, bandwidth: float, seed: int, tones: int = 16) -> SmoothSignal:
    """Band-limited random signal with ``|f(t)| <= amplitude`` for all ``t``.

    A sum of ``tones`` sinusoids with frequencies spread over
    ``(0, bandwidth]``, random phases drawn from ``seed`` and random weights
    normalized so the weights sum to ``amplitude``.
    """
    rng = np.random.default_rng(seed)
    omegas = bandwidth * (np.arange(1, tones + 1) - rng.uniform(0.0, 0.5, tones)) / tones
    weights = rng.uniform(0.5, 1.0, tones)
    weights *= amplitude / weights.sum()
    phases = rng.uniform(0.0, 2 * math.pi, tones)
    sig = multisine(weights, omegas, phases)
    return SmoothSignal(sig.evaluator, label="bounded_noise")


def stack(signals: Sequence[SmoothSignal]) -> SmoothSignal:
    """Vector signal whose components are the given scalar signals."""
    signals = tuple(signals)
    order = min((s.max_order for s in signals), default=INF_ORDER)
    if not signals:
        return zero(0)

    def ev(t, k):
        return np.array([s(t, k) for s in signals], dtype=float)

    return SmoothSignal(ev, max_order=order, dim=len(signals), label="stack")


def from_spec(spec: dict | None, seed: int = 0) -> SmoothSignal:
    """Scalar signal from its JSON description.

    ``{"type": "zero"}``, ``{"type": "constant", "value": v}``,
    ``{"type": "step", "amplitude": a, "t0": t0}``,
    ``{"type": "sinusoid", "amplitude": a, "omega": w, "phase": p, "offset": o}``,
    ``{"type": "multisine", "amplitudes": [...], "omegas": [...], "phases": [...], "offset": o}``,
    ``{"type": "noise", "amplitude": a, "bandwidth": w, "tones": k, "seed": s}``.
    """
    if spec is None:
        return zero()
    kind = spec.get("type", "zero")
    if kind == "zero":
        return zero()
    if kind == "constant":
        return constant(spec["value"])
    if kind == "step":
        return step(spec.get("amplitude", 1.0), spec.get("t0", 0.0))
    if kind == "sinusoid":
        return sinusoid(spec["amplitude"], spec["omega"], spec.get("phase", 0.0), spec.get("offset", 0.0))
    if kind == "multisine":
        return multisine(spec["amplitudes"], spec["omegas"], spec.get("phases"), spec.get("offset", 0.0))
    if kind == "noise":
        return bounded_noise(spec["amplitude"], spec.get("bandwidth", 2.0), spec.get("seed", seed),
                             spec.get("tones", 16))
    raise ValidationError(f"unknown signal type {kind!r}")


def vector_from_spec(specs: Sequence[dict] | None, dim: int, seed: int = 0) -> SmoothSignal:
    """Vector signal from a list of per-component specs (missing list means zero)."""
    if specs is None:
        return zero(dim)
    if len(specs) != dim:
        raise ValidationError(f"expected {dim} signal components, got {len(specs)}")
    # each noise component gets its own stream unless it names a seed
    return stack([from_spec(s, seed + 7919 * (i + 1)) for i, s in enumerate(specs)])
