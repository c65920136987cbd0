"""Exception hierarchy.  ``exit_code`` feeds the CLI exit status."""


class IonHeatError(Exception):
    exit_code = 1
    module = "ionheat"

    def __init__(self, message, module=None):
        super().__init__(message)
        if module is not None:
            self.module = module

    @property
    def code(self):
        """Module-qualified error code, e.g. ``recool.data_quality``."""
        return f"{self.module}.{self.kind}"

    kind = "error"


class ConfigError(IonHeatError, ValueError):
    exit_code = 2
    kind = "config"


class DataQualityError(IonHeatError, ValueError):
    """Input data cannot support the requested estimate (degenerate, empty, ...)."""

    exit_code = 3
    kind = "data_quality"


class FitError(IonHeatError, RuntimeError):
    """Numerical failure: non-convergence, singular Jacobian, pole in an estimator."""

    exit_code = 4
    kind = "fit"
