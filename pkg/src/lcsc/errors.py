"""Exception hierarchy for integration, sensitivity and phase computations."""


class LcscError(Exception):
    """Base class for all numerical failures raised by the package."""

    def diagnostic(self) -> dict:
        info = {"error": type(self).__name__, "message": str(self)}
        info.update(getattr(self, "details", {}) or {})
        return info

    def __init__(self, message="", **details):
        super().__init__(message)
        self.details = details


class ContractError(LcscError, ValueError):
    """Invalid input: wrong dimension, bad period, malformed configuration."""


class DomainError(LcscError):
    """Model evaluated outside its physical operating range."""


class GrazingError(LcscError):
    """Trajectory meets a boundary tangentially; the landing is not resolved."""


class DriftError(LcscError):
    """State left the admissible domain by more than the tolerance."""


class NoCycleError(LcscError):
    """Anchor states did not converge within the cycle budget."""


class AnchorError(LcscError):
    """The requested anchor event never occurred."""


class TopologyChangeError(LcscError):
    """Perturbed and unperturbed cycles have different event sequences."""


class RegionTopologyError(LcscError):
    """A timing region is not entered and exited exactly once per period."""


class NonTransversalError(LcscError):
    """Crossing velocity is tangent to the switching surface."""


class MonodromyError(LcscError):
    """No real eigenvalue of the backward monodromy lies near 1."""


class NonConverged(LcscError):
    """Asymptotic phase did not converge within the period budget."""


class DesynchronizationError(LcscError):
    """An oscillator stopped producing liftoff events."""
