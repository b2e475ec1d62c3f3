"""Exception hierarchy shared by the whole package."""


class ZoomTowerError(Exception):
    """Base class for every error raised by :mod:`zoomtower`."""


class BranchCollision(ZoomTowerError):
    pass


class NewtonDivergence(ZoomTowerError):
    pass


class ConstraintViolation(ZoomTowerError):
    pass


class BudgetExceeded(ZoomTowerError):
    def __init__(self, message, largest_feasible=None):
        super().__init__(message)
        self.largest_feasible = largest_feasible


class Inconclusive(ZoomTowerError):
    pass


class OrbitEntersU0(ZoomTowerError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class AxiomViolation(ZoomTowerError):
    def __init__(self, axiom, witness):
        super().__init__(f"zooming axiom '{axiom}' violated at {witness}")
        self.axiom = axiom
        self.witness = witness


class NotASource(ZoomTowerError):
    pass


class DeltaNotFound(ZoomTowerError):
    pass


class BranchUndefined(ZoomTowerError):
    """A one-step inverse branch is not injective on the ball it must cover."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ContractionFailed(ZoomTowerError):
    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class RadiusTooLarge(ZoomTowerError):
    pass


class NoCellsFound(ZoomTowerError):
    pass


class MarkovViolation(ZoomTowerError):
    def __init__(self, message, cell_id=None, witness=None):
        super().__init__(message)
        self.cell_id = cell_id
        self.witness = witness


class EmptyPartition(ZoomTowerError):
    pass


class BadParam(ZoomTowerError):
    pass


class UnknownCell(ZoomTowerError):
    pass


class SignalBelowNoise(ZoomTowerError):
    """Raised when too few lags carry a correlation above the noise floor.

    The partially filled curve is attached as ``curve`` so callers can still
    report it.
    """

    def __init__(self, message, curve=None):
        super().__init__(message)
        self.curve = curve


class ConfigError(ZoomTowerError):
    pass
