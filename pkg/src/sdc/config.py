"""Scenario files: loading, validation and construction of library objects."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import jsonschema
import numpy as np

from .adaptive import AdaptiveConfig, adaptive_resynthesis, theta_from_polynomials
from .controller import ControllerParams, model_matching_synthesis, synthesize_pole_placement
from .errors import ValidationError
from .pencil import (
    TOL_DECOMP,
    TOL_RANK,
    DescriptorSystem,
    check_regularity,
    index_of,
    is_impulse_free,
    pencil_index,
    solvability_rank_test,
    weierstrass_decompose,
)
from .polynomial import Polynomial, pencil_polynomials
from .signals import from_spec, vector_from_spec, zero
from .sim import Scenario
from .system import controllability_test, minimality_check, observability_test


@dataclass(frozen=True)
class Options:
    """Command-line overrides; ``None`` keeps the file's value."""

    tol_rank: float | None = None
    tol_decomp: float | None = None
    line_sign: int | None = None
    k_syn: int | None = None
    seed: int | None = None


def schema() -> dict:
    text = resources.files("sdc").joinpath("data/scenario.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def parse_document(text: str, source: str = "<string>") -> dict:
    """Parse and schema-validate a scenario document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{source}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    validator = jsonschema.Draft202012Validator(schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"{source}: /{'/'.join(str(p) for p in e.absolute_path)}: {e.message}" for e in errors]
        raise ValidationError("\n".join(lines))
    return doc


def load_document(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ValidationError(f"{path}: cannot read: {exc.strerror}") from exc
    return parse_document(text, str(path))


def tolerances(doc: dict, opts: Options) -> tuple[float, float, int]:
    tol = doc.get("tolerances", {})
    rank = opts.tol_rank if opts.tol_rank is not None else tol.get("rank", TOL_RANK)
    decomp = opts.tol_decomp if opts.tol_decomp is not None else tol.get("decomp", TOL_DECOMP)
    sign = opts.line_sign if opts.line_sign is not None else tol.get("margin_line_sign", -1)
    return float(rank), float(decomp), int(sign)


def build_system(doc: dict) -> DescriptorSystem:
    s = doc["system"]
    E = np.asarray(s["E"], dtype=float)
    A = np.asarray(s["A"], dtype=float)
    if E.ndim != 2 or A.ndim != 2:
        raise ValidationError("system matrices must be rectangular")
    n = E.shape[0]
    d = s.get("d", [0.0] * n)
    return DescriptorSystem(E, A, s["b"], d, s["c"], s.get("h", 1.0))


def analyze(sys: DescriptorSystem, tol_rank: float = TOL_RANK, tol_decomp: float = TOL_DECOMP) -> dict:
    """Structural report of a plant (regular pencils get the full analysis)."""
    reg = check_regularity(sys, tol_rank)
    report = {
        "regular": reg.regular,
        "solvable": solvability_rank_test(sys, tol_rank),
        "M": reg.M.to_list(),
        "index_E": index_of(sys.E, tol_rank),
        "n": sys.n,
    }
    if not reg.regular:
        return report
    wf = weierstrass_decompose(sys, tol_decomp, tol_rank)
    pp = pencil_polynomials(sys, tol_rank)
    mini = minimality_check(sys, wf)
    report.update(
        ell=wf.ell,
        pencil_index=pencil_index(sys, tol_rank),
        impulse_free=is_impulse_free(sys, tol_rank),
        n1=wf.n1,
        n2=wf.n2,
        controllable=controllability_test(wf)["controllable"],
        observable=observability_test(wf),
        minimal=mini["minimal"],
        cancellations=mini["cancellations"],
        Delta0=pp.Delta0.to_list(),
        Delta1=pp.Delta1.to_list(),
        Delta2=[p.to_list() for p in pp.Delta2],
        residuals=wf.residuals,
        shift=wf.shift,
        w_invertible=wf.w_invertible,
    )
    return report


def _poly(ctrl: dict, key: str, required: bool = True):
    if key not in ctrl:
        if required:
            raise ValidationError(f"controller.{key} is required for mode {ctrl.get('mode')!r}")
        return None
    return Polynomial(ctrl[key])


def _ell(sys, tol_rank, tol_decomp) -> int:
    return weierstrass_decompose(sys, tol_decomp, tol_rank).ell


def _minimal(sys, tol_rank, tol_decomp) -> bool:
    wf = weierstrass_decompose(sys, tol_decomp, tol_rank)
    return minimality_check(sys, wf)["minimal"]


def synthesize(doc: dict, sys: DescriptorSystem, opts: Options = Options()) -> ControllerParams:
    """Controller parameters for the ``controller`` section of ``doc``."""
    ctrl = doc.get("controller")
    if ctrl is None or ctrl["mode"] == "none":
        raise ValidationError("scenario has no controller to synthesize")
    tol_rank, tol_decomp, sign = tolerances(doc, opts)
    mode = ctrl["mode"]
    pp = pencil_polynomials(sys, tol_rank)
    minimal = _minimal(sys, tol_rank, tol_decomp)
    if mode == "matching":
        return model_matching_synthesis(pp, _poly(ctrl, "F0"), _poly(ctrl, "Mm"), ctrl.get("v", 0.5),
                                        T=_poly(ctrl, "T", False), h=sys.h, minimal=minimal)
    if mode == "adaptive":
        cfg = adaptive_config(doc, sys, opts)
        return adaptive_resynthesis(cfg.theta0, cfg, sys.h, certify=True)
    return synthesize_pole_placement(
        pp, _poly(ctrl, "F0"), _poly(ctrl, "M0star"), _poly(ctrl, "M1star", False), T=_poly(ctrl, "T", False),
        L=_poly(ctrl, "L", False), h=sys.h, v=ctrl.get("v", 0.5), v1=ctrl.get("v1"),
        ell=_ell(sys, tol_rank, tol_decomp), compensator=ctrl.get("compensator", True),
        check_margin=ctrl.get("check_margin", True), line_sign=sign, minimal=minimal,
        mode="delay-free" if mode == "delay-free" else "full-delay",
    )


def true_theta(sys: DescriptorSystem, F: Polynomial, tol_rank: float = TOL_RANK) -> np.ndarray:
    pp = pencil_polynomials(sys, tol_rank).normalized()
    return theta_from_polynomials(F, pp.M, pp.Delta0, pp.Delta1, int(F.degree))


def default_omega(theta) -> np.ndarray:
    """Box of half-width ``50%`` of each entry (at least ``0.1``) around ``theta``."""
    theta = np.asarray(theta, dtype=float)
    pad = np.maximum(0.5 * np.abs(theta), 0.1)
    return np.column_stack([theta - pad, theta + pad])


def adaptive_config(doc: dict, sys: DescriptorSystem, opts: Options = Options()) -> AdaptiveConfig:
    ctrl = doc.get("controller") or {}
    tol_rank, _, _ = tolerances(doc, opts)
    F = _poly(ctrl, "F")
    theta_true = true_theta(sys, F, tol_rank)
    theta0 = np.asarray(ctrl["theta0"], dtype=float) if "theta0" in ctrl else theta_true
    Omega = np.asarray(ctrl["Omega"], dtype=float) if "Omega" in ctrl else default_omega(theta_true)
    if theta0.shape != theta_true.shape or Omega.shape != (len(theta_true), 2):
        raise ValidationError(f"theta0 and Omega must have {len(theta_true)} entries")
    M1 = _poly(ctrl, "M1star", False)
    return AdaptiveConfig(
        F=F, F0=_poly(ctrl, "F0"), M0star=_poly(ctrl, "M0star"), M1star=M1 if M1 is not None else Polynomial(),
        theta0=theta0, Omega=Omega, k0=ctrl.get("k0", 1.0), alpha1=ctrl.get("alpha1", 1.0), g=ctrl.get("g", 2.0),
        rho0=ctrl.get("rho0", 0.1), eps1=ctrl.get("eps1", 1e-3), eps2=ctrl.get("eps2", 1e-4),
        k_syn=opts.k_syn if opts.k_syn is not None else ctrl.get("k_syn", 10), v=ctrl.get("v", 0.5),
        v1=ctrl.get("v1"), T=_poly(ctrl, "T", False), L=_poly(ctrl, "L", False),
        compensator=ctrl.get("compensator", True),
    )


def build_scenario(doc: dict, sys: DescriptorSystem | None = None, opts: Options = Options(),
                   params: ControllerParams | None = None, open_loop: bool = False) -> Scenario:
    """Scenario object for ``doc``; ``params`` overrides synthesis in known modes."""
    sys = sys if sys is not None else build_system(doc)
    tol_rank, tol_decomp, _ = tolerances(doc, opts)
    simd = doc.get("sim", {})
    seed = opts.seed if opts.seed is not None else simd.get("seed", 0)
    wf = weierstrass_decompose(sys, tol_decomp, tol_rank)
    dist = doc.get("disturbance", {})
    eta1 = vector_from_spec(_reseed(dist.get("eta1"), opts.seed), wf.n1, seed) if "eta1" in dist else None
    eta2 = vector_from_spec(_reseed(dist.get("eta2"), opts.seed), wf.n2, seed + 104729) if "eta2" in dist else None
    ref = from_spec(doc.get("reference", {"type": "zero"}), seed)
    init = doc.get("initial", {})
    z10 = init.get("z10")
    Psi = from_spec(init["Psi"], seed) if "Psi" in init else zero()
    ctrl = doc.get("controller", {"mode": "none"})
    mode = ctrl["mode"]
    common = dict(sys=sys, reference=ref, eta1=eta1, eta2=eta2, t_end=simd.get("t_end", 10.0),
                  dt=simd.get("dt", 0.01), z10=None if z10 is None else np.asarray(z10, dtype=float), Psi=Psi,
                  seed=seed, name=doc.get("name", "scenario"), tol_rank=tol_rank, tol_decomp=tol_decomp)
    if open_loop or mode == "none":
        cfg = adaptive_config(doc, sys, opts) if mode == "adaptive" else None
        return Scenario(mode="open-loop", adaptive=cfg, **common)
    if mode == "adaptive":
        return Scenario(mode="adaptive", adaptive=adaptive_config(doc, sys, opts), **common)
    if params is None:
        params = synthesize(doc, sys, opts)
    return Scenario(mode="known", params=params, **common)


def _reseed(specs, seed):
    """A command-line seed replaces the seeds of noise components (offset by index)."""
    if specs is None or seed is None:
        return specs
    out = []
    for i, s in enumerate(specs):
        s = dict(s)
        if s.get("type") == "noise":
            s["seed"] = int(seed) + i
        out.append(s)
    return out
