"""Exception types shared across the package."""


class InvalidState(ValueError):
    """Actuator state cannot be mapped to a robot configuration."""


class KinematicLimit(ValueError):
    """Requested configuration exceeds a physical limit (e.g. curvature)."""


class MeshInvalid(ValueError):
    """Mesh is not a watertight, consistently oriented triangle mesh."""

    def __init__(self, message, edges=None):
        super().__init__(message)
        self.edges = list(edges) if edges is not None else []


class InvalidInput(ValueError):
    """Controller inputs are malformed (e.g. shape length mismatch)."""


class Infeasible(RuntimeError):
    """The current nominal state violates hard constraints; no input may be applied."""
