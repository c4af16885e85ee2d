"""Exceptions raised by the solver layers."""

from typing import TYPE_CHECKING, Optional

if TYPE_CHECKING:
    from ale_fsi.models import NewtonStats


class FsiError(Exception):
    """Base class for all solver failures."""


class GeometryInvalid(FsiError):
    """Open loop, self-intersection or misplaced particle."""


class RefinementStall(FsiError):
    """Size field cannot be met without violating the angle floor."""


class ProjectionDiverged(FsiError):
    """A node could not be projected onto its curve."""


class InvertedElement(FsiError):
    """Snapping produced a non-positive Jacobian."""


class EmptySubdomain(FsiError):
    """A solid space was requested but the mesh has no solid elements."""


class NonPositiveJacobian(FsiError):
    """Reference or ALE Jacobian is not positive at a quadrature point."""


class DimensionMismatch(FsiError, ValueError):
    """Array shapes do not match the DOF layout."""


class MeshTangled(FsiError):
    """Mesh update produced a non-positive Jacobian."""


class NonConvergence(FsiError):
    """Newton iteration did not converge."""

    def __init__(self, message: str, stats: Optional["NewtonStats"] = None) -> None:
        super().__init__(message)
        self.stats = stats


class LinearSolveFailed(FsiError):
    """Sparse direct solve failed."""


class SingularPivot(LinearSolveFailed):
    """LU factorization hit an exactly singular pivot."""


class SingularSystem(FsiError):
    """Harmonic extension system is singular."""


class BackgroundNotConverged(FsiError):
    """Pseudo-time stepping did not reach a steady background flow."""

    def __init__(self, message: str, history: Optional[list[float]] = None) -> None:
        super().__init__(message)
        self.history = history or []


class ParticleTooCloseToBoundary(FsiError):
    """Local domain cannot enclose the particle and its travel margin."""


class TransferFailure(FsiError):
    """A solid node of a new mesh could not be located in the old mesh."""


class EmptyTrajectory(FsiError, ValueError):
    """Trajectory has no records."""


class NonPositiveError(FsiError, ValueError):
    """Convergence rates need strictly positive errors."""
