"""Exception types shared across the package."""


class CpmError(Exception):
    """Base class; ``code`` is the short tag printed by the command line."""

    code = "error"


class DomainError(CpmError, ValueError):
    code = "domain"


class NotOnVarietyError(CpmError, ValueError):
    code = "not-on-variety"


class SingularPointError(CpmError, ValueError):
    code = "singular-point"


class QuadratureError(CpmError, RuntimeError):
    code = "quadrature"


class NonProjectableError(CpmError, ValueError):
    code = "non-projectable"


class NonConvergenceError(CpmError, RuntimeError):
    code = "non-convergence"


class BandConfigurationError(CpmError, ValueError):
    code = "band-config"


class StencilError(CpmError, ValueError):
    code = "stencil"


class InfeasibleRunError(CpmError, RuntimeError):
    code = "infeasible"


class SolverError(CpmError, RuntimeError):
    code = "solver"


class ConfigError(CpmError, ValueError):
    code = "config"
