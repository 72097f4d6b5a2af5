"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`SDCError`
so callers (the CLI in particular) can map families of failures to exit codes.
"""


class SDCError(Exception):
    """Base class for all package errors."""


class ValidationError(SDCError):
    """Malformed input data (dimensions, non-finite entries, bad schema)."""


# pencil
class NotRegular(SDCError):
    pass


class IllConditioned(SDCError):
    pass


# polynomial
class ZeroPolynomial(SDCError):
    pass


class SingularSylvester(SDCError):
    """The Sylvester system of a Diophantine equation is rank deficient."""


class InconsistentDiophantine(SingularSylvester):
    """Full column rank, but the requested degrees cannot reach the target."""


class SamplePointFailure(SDCError):
    pass


class DegreeViolation(SDCError):
    pass


# system
class InsufficientSmoothness(SDCError):
    pass


class StepTooLarge(SDCError):
    pass


class PoleEvaluation(SDCError):
    pass


class HistoryUnderflow(SDCError):
    pass


# controller
class NotMonic(SDCError):
    pass


class NotHurwitz(SDCError):
    pass


class NotMinimal(SDCError):
    pass


class NotCoprime(SingularSylvester):
    pass


class StabilityMarginFailed(SDCError):
    def __init__(self, margin, message=None):
        self.margin = float(margin)
        super().__init__(message or f"delay stability margin {margin:.6g} >= 1")


class DegreeConstraintViolated(SDCError):
    pass


class DeltaNotStable(SDCError):
    pass


class NonProperCompensator(SDCError):
    pass


class NotImpulseFree(SDCError):
    pass


# adaptive
class ControllabilityLost(SDCError):
    pass


class CovarianceDegenerate(SDCError):
    pass


# sim
class NotStable(SDCError):
    pass


class NumericalBlowup(SDCError):
    """Raised when a state norm exceeds the blowup threshold.

    The partially filled run is attached as ``result`` so the caller can still
    write it out.
    """

    def __init__(self, step, t, norm, result=None):
        self.step = int(step)
        self.t = float(t)
        self.norm = float(norm)
        self.result = result
        super().__init__(f"state norm {norm:.3g} exceeded threshold at step {step} (t={t:.6g})")
