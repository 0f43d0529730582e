"""Exception types shared across the package."""


class SurvProbeError(Exception):
    """Base class for all package-specific errors."""


class SchemaError(SurvProbeError):
    """CSV is missing a required column or has an unusable layout."""


class ParseError(SurvProbeError):
    """A cell could not be parsed; message carries the row index."""


class ValidationError(SurvProbeError):
    """Input values violate a documented precondition."""


class ConfigurationError(SurvProbeError):
    """An experiment or censoring configuration is infeasible."""


class DegenerateBinsError(SurvProbeError):
    """Too few distinct event times to build the requested bins."""


class BudgetExceededError(SurvProbeError):
    """A probe request would overdraw the ledger; nothing was executed."""


class DegenerateRowError(SurvProbeError):
    """A probability row has (numerically) no mass past the censor bin."""


class ConfigSpaceOverflow(SurvProbeError):
    """Exact joint enumeration would exceed the configuration limit.

    Callers should retry with mode="sampled".
    """


class TrainingError(SurvProbeError):
    """Model training diverged (non-finite objective)."""


class MetricUndefinedError(SurvProbeError):
    """A metric has no defined value on the given inputs."""
