"""Exception hierarchy.

Every error carries a short ``category`` string; the CLI prints it as the
machine-parseable part of its one-line failure message.
"""


class MmeqdError(Exception):
    category = "error"


class DomainError(MmeqdError, ValueError):
    category = "domain"


class DataError(MmeqdError, ValueError):
    category = "data"


class DegenerateCovarianceError(MmeqdError, ArithmeticError):
    category = "degenerate-covariance"


class QuadratureError(MmeqdError, ArithmeticError):
    category = "quadrature"

    def __init__(self, message, tau=None):
        super().__init__(message)
        self.tau = tau


class BracketError(MmeqdError, ValueError):
    category = "bracketing"


class TruncationError(MmeqdError, ArithmeticError):
    category = "truncation"


class DesignError(MmeqdError, ValueError):
    category = "design"


class BoundUndefinedError(MmeqdError, ArithmeticError):
    category = "bound-undefined"


class EstimationError(MmeqdError, ValueError):
    category = "estimation"


class ConfigError(MmeqdError, ValueError):
    category = "config"
