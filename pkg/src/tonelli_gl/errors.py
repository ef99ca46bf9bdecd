"""Exception hierarchy shared by all modules.

Every error carries a ``module`` tag and a ``context`` dict so the CLI can
emit machine-readable error JSON without knowing the concrete class.
"""


class TonelliError(Exception):
    exit_code = 4
    module = "core"

    def __init__(self, message, module=None, **context):
        super().__init__(message)
        if module is not None:
            self.module = module
        self.context = context

    def to_json(self):
        return {
            "code": type(self).__name__,
            "module": self.module,
            "message": str(self),
            "context": {k: _jsonable(v) for k, v in self.context.items()},
        }


def _jsonable(v):
    try:
        return float(v)
    except (TypeError, ValueError):
        return str(v)


class InvalidSpecError(TonelliError, ValueError):
    """Metric not SPD, Randers smallness violated, or unsupported variant."""

    exit_code = 3


class ConvexityViolation(InvalidSpecError):
    pass


class NumericFailure(TonelliError, ArithmeticError):
    """An iterative solve did not converge; ``context['residual']`` is set."""

    exit_code = 4

    @property
    def residual(self):
        return self.context.get("residual")


class BoxTooSmall(TonelliError):
    exit_code = 4


class ConfigRejected(TonelliError, ValueError):
    exit_code = 3


class SingularConfiguration(TonelliError, ValueError):
    exit_code = 3


class PreconditionViolation(TonelliError, ValueError):
    exit_code = 3


class EnvelopeInvalid(TonelliError):
    exit_code = 4


class ConfigParseError(TonelliError, ValueError):
    exit_code = 2
    module = "scenario"
