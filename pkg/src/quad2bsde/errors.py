"""Exception types raised by the solvers."""


class Quad2BsdeError(Exception):
    """Base class for all package errors."""


class ConfigurationError(Quad2BsdeError, ValueError):
    """Invalid numerical configuration (CFL violation, bad grid, ...)."""


class DomainError(Quad2BsdeError, ValueError):
    """A control value lies outside the admissible volatility band."""


class EvaluationError(Quad2BsdeError, ArithmeticError):
    """A generator returned a non-finite value."""


class RangeError(Quad2BsdeError, OverflowError):
    """Exponential transform would overflow; rescale the terminal or gamma."""


class ConvergenceError(Quad2BsdeError, RuntimeError):
    """Picard iteration failed to contract within the iteration budget."""

    def __init__(self, step, node, residual, kmax):
        self.step = step
        self.node = node
        self.residual = residual
        self.kmax = kmax
        super().__init__(
            f"Picard iteration did not converge at step n={step}, node j={node} "
            f"after {kmax} iterations (last residual {residual:.3e}); "
            "reduce dt or check the declared Lipschitz constant in y"
        )
