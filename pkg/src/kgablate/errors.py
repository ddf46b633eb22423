"""Exception taxonomy shared across the package."""


class KgablateError(Exception):
    """Base class for all errors raised by this package."""


class UnknownEntity(KgablateError):
    """Entity id does not resolve under the active view.

    Raised both for ids that never existed and for ids removed by the
    view; callers cannot distinguish the two cases.
    """


class UnknownTextUnit(KgablateError):
    """Text-unit id does not exist in the graph."""


class TextBlocked(KgablateError):
    """Text unit exists but has no readable entity linkage under the view."""


class DimensionMismatch(KgablateError):
    """Vector dimension differs from what the index was created with."""


class ProviderError(KgablateError):
    """Embedding provider failed after exhausting retries."""


class InsufficientPool(KgablateError):
    """Not enough eligible items to satisfy a requested sample size."""


class ExtractorFailure(KgablateError):
    """Entity extraction failed for a text unit; carries the unit id."""

    def __init__(self, textunit_id: str, reason: str):
        super().__init__(f"extraction failed for {textunit_id}: {reason}")
        self.textunit_id = textunit_id
        self.reason = reason


class BackendFailure(KgablateError):
    """Chat backend failed after exhausting retries."""


class BackendTimeout(BackendFailure):
    """Chat backend timed out."""


class RateLimited(BackendFailure):
    """Chat backend reported rate limiting and retries were exhausted."""


class ScriptExhausted(KgablateError):
    """Scripted backend ran out of canned turns for the session."""


class MalformedToolCall(KgablateError):
    """Tool call failed schema validation; reported back to the model."""


class EmptyCitedSet(KgablateError):
    """Ablation condition is degenerate because no entities were cited."""


class MissingTrace(KgablateError):
    """No baseline trace found for a question that requires one."""


class CoverageGap(KgablateError):
    """A filtered question is missing from a result set being compared."""


class ConfigError(KgablateError):
    """Invalid configuration value or file."""
