"""Analysis, pole-placement synthesis and adaptive simulation of impulse-free
singular SISO systems with one external input delay."""

from .adaptive import AdaptiveConfig, EstimatorState, estimator_step
from .controller import ControllerParams, model_matching_synthesis, synthesize_pole_placement
from .errors import SDCError
from .pencil import (
    DescriptorSystem,
    WeierstrassForm,
    check_regularity,
    drazin_inverse,
    index_of,
    is_impulse_free,
    solvability_rank_test,
    weierstrass_decompose,
)
from .polynomial import (
    PencilPolynomials,
    Polynomial,
    QuasiPolynomial,
    delay_stability_margin,
    is_hurwitz,
    pencil_polynomials,
    solve_diophantine,
)
from .sim import RunResult, Scenario, run_closed_loop, run_reference_model
from .system import controllability_test, minimality_check, observability_test, simulate_weierstrass

__version__ = "0.1.0"

__all__ = [
    "AdaptiveConfig",
    "EstimatorState",
    "estimator_step",
    "ControllerParams",
    "model_matching_synthesis",
    "synthesize_pole_placement",
    "SDCError",
    "DescriptorSystem",
    "WeierstrassForm",
    "check_regularity",
    "drazin_inverse",
    "index_of",
    "is_impulse_free",
    "solvability_rank_test",
    "weierstrass_decompose",
    "PencilPolynomials",
    "Polynomial",
    "QuasiPolynomial",
    "delay_stability_margin",
    "is_hurwitz",
    "pencil_polynomials",
    "solve_diophantine",
    "RunResult",
    "Scenario",
    "run_closed_loop",
    "run_reference_model",
    "controllability_test",
    "minimality_check",
    "observability_test",
    "simulate_weierstrass",
]
