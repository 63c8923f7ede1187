"""Exception hierarchy shared across the toolkit.

Every error carries a stable ``code`` (the class name) so batch drivers and
foreign-language callers can match on it without parsing messages.
"""


class BraidkitError(Exception):
    """Base class for all toolkit errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


class SceneFormatError(BraidkitError):
    """Interchange file violates the documented schema."""


class MissingCurrentState(BraidkitError):
    """Agent has no valid state at the current timestep (t = 0)."""


class InsufficientOverlap(BraidkitError):
    """Fewer than two shared valid future samples between two trajectories."""


class AmbiguousCrossing(BraidkitError):
    """Lateral separation at the crossing point is below the decidability
    threshold; over vs. below cannot be resolved."""


class IncompleteWindow(BraidkitError):
    """Whole-scene braid extraction requires every agent to be valid over the
    full window (t = 0 .. future horizon)."""


class StrandCountMismatch(BraidkitError):
    """Braid words over different strand counts cannot be composed."""


class MissingAgent(BraidkitError):
    """Prediction set does not cover an evaluated agent."""


class HorizonMismatch(BraidkitError):
    """Predicted trajectory length disagrees with the scene's future horizon."""


class WidthMismatch(BraidkitError):
    """Feature/embedding widths disagree."""


class NonFiniteLoss(BraidkitError):
    """Training loss became NaN/inf; aborts with diagnostics in the message."""


class InfeasibleParameters(BraidkitError):
    """Scenario template could not produce a collision-free scene within the
    retry budget."""


class UnmatchedScene(BraidkitError):
    """Scene/prediction pairing by scene_id failed."""


class ConfigError(BraidkitError):
    """Run configuration failed validation; message names the field."""
