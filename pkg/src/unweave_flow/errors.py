"""Exception hierarchy shared by every stage of the unweaving loop."""


class UnweaveError(Exception):
    """Root of all errors raised by unweave_flow."""


class StateInvariantError(UnweaveError, ValueError):
    """A CableState (or one of its graphs) violates a named invariant."""


class StateDocumentError(UnweaveError):
    """A serialized state or world document is malformed or invalid."""


class DegenerateOverlapError(UnweaveError):
    """Two polylines share a collinear segment of positive length."""


class PerceptionError(UnweaveError):
    """The image could not be turned into a valid cable state."""


class CableNotVisibleError(PerceptionError):
    pass


class EmptyWindowError(PerceptionError):
    pass


class TraceBrokeError(PerceptionError):
    def __init__(self, message: str, last_position: tuple[float, float] | None = None):
        super().__init__(message)
        self.last_position = last_position


class TraceRunawayError(PerceptionError):
    pass


class CableTooShortError(PerceptionError):
    pass


class OrphanUndercrossingError(PerceptionError):
    pass


class TransitionError(UnweaveError):
    """The transition model cannot be applied to the requested action."""


class CableTooShortToPivotError(TransitionError):
    pass


class InvalidGraspError(TransitionError):
    pass


class ThetaOutOfBoundsError(TransitionError):
    pass


class PlanningError(UnweaveError):
    pass


class DeadlockError(PlanningError):
    """No valid action exists for the selected primitive."""


class NoCandidateActionsError(PlanningError):
    pass


class GenerationBudgetExceededError(UnweaveError):
    pass
