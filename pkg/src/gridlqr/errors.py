"""Exception hierarchy shared by all gridlqr stages."""


class GridLqrError(Exception):
    """Base class for all solver and validation failures."""


class CaseFormatError(GridLqrError):
    """Case or machine file violates the expected text format."""


class NonConvergence(GridLqrError):
    """An iterative solver exhausted its iteration budget."""


class SingularJacobian(GridLqrError):
    """A Newton Jacobian is numerically singular (condition estimate > 1e12)."""


class SingularAlgebraicJacobian(GridLqrError):
    """The algebraic Jacobian of the network layer cannot be inverted,
    so the reduction to a proper state-space model is unavailable."""


class UnstabilizablePair(GridLqrError):
    """The Hamiltonian has the wrong stable/antistable split: (A, B) is not
    stabilizable (or a mode sits on the imaginary axis)."""


class IllConditionedU11(GridLqrError):
    """The stable invariant subspace basis cannot be inverted reliably."""


class Infeasible(GridLqrError):
    """The quadratic program has no feasible point."""


class MaxIterations(GridLqrError):
    """The interior-point loop hit its iteration cap before converging."""


class AlgebraicSolveFailure(GridLqrError):
    """The per-stage algebraic solve failed during time integration.

    Carries the partial trajectory accumulated before the failure in
    ``trajectory`` when raised by the simulator.
    """

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class NonFiniteState(GridLqrError):
    """Integration produced NaN or Inf entries in the state."""


class StageError(GridLqrError):
    """Wraps a failure with the workflow stage where it occurred."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
