"""Exception types shared across the package.

Everything raised on purpose derives from NeedleGuideError so callers (CLI,
service) can map failures to one-line machine-readable messages without
catching bare Exception.
"""


class NeedleGuideError(Exception):
    """Base class for all package errors."""


class FrameMismatch(NeedleGuideError):
    """Geometric quantities expressed in different frames were combined."""


class InsufficientPairs(NeedleGuideError):
    """Fewer than three fiducial pairs were supplied to the registration."""


class DegenerateFiducials(NeedleGuideError):
    """Fiducial constellation is (near) collinear; rotation is unobservable."""


class ParallelToPlane(NeedleGuideError):
    """Line direction has no component along the plane normal."""


class DegeneratePlan(NeedleGuideError):
    """Entry and target coincide (or nearly so); no needle axis is defined."""


class OutOfTravel(NeedleGuideError):
    """Required carriage position lies outside the stage travel."""

    def __init__(self, msg: str, violations=None):
        super().__init__(msg)
        self.violations = violations or []


class InclineExceeded(NeedleGuideError):
    """Required needle incline exceeds the spherical-bearing limit."""

    def __init__(self, msg: str, incline_deg: float = float("nan")):
        super().__init__(msg)
        self.incline_deg = incline_deg


class TargetOutOfTravel(NeedleGuideError):
    """Axis setpoint outside the commandable travel range."""


class SettleTimeout(NeedleGuideError):
    """Axis failed to settle within the simulated time budget."""


class PlanTimeout(NeedleGuideError):
    """Planner exceeded its iteration or simulated-time budget."""


class Stalled(NeedleGuideError):
    """Planner made no progress over a full parity cycle."""


class EmptyWorkspace(NeedleGuideError):
    """Workspace sampling produced no feasible pose."""


class OpenMesh(NeedleGuideError):
    """Surface mesh is not watertight (some edge not shared by 2 faces)."""


class ZeroVolume(NeedleGuideError):
    """Mesh encloses (numerically) no volume."""


class PlaneMismatch(NeedleGuideError):
    """Points compared for in-plane error do not lie on a common z-plane."""


class NoRegistration(NeedleGuideError):
    """Operation requires a registration that has not been supplied."""


class PlanActive(NeedleGuideError):
    """A plan is already executing; concurrent execution is refused."""
