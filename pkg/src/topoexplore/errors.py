"""Exception types shared across the package."""


class ExploreError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(ExploreError, ValueError):
    """An argument is outside its valid domain."""


class StateError(ExploreError, RuntimeError):
    """An operation was invoked on an object in the wrong state."""


class CollisionError(StateError):
    """The robot was driven into an occupied voxel."""


class ConsistencyError(ExploreError, RuntimeError):
    """Internal data structures disagree with each other."""


class ScenarioError(ExploreError, ValueError):
    """A scenario file failed to parse or validate."""

    def __init__(self, message: str, problems: list[str] | None = None):
        self.problems = problems or [message]
        super().__init__(message if problems is None else message + "\n  " + "\n  ".join(problems))
