"""Exception types shared across the toolkit."""


class ReviewBenchError(Exception):
    """Base class for all toolkit errors."""


class ParseError(ReviewBenchError):
    """A corpus line could not be parsed; carries the 1-based line offset."""

    def __init__(self, message: str, line_no: int = 0):
        super().__init__(f"line {line_no}: {message}" if line_no else message)
        self.line_no = line_no


class ValidationError(ReviewBenchError):
    """A parsed record violates a field invariant (e.g. rating out of range)."""


class ConfigError(ReviewBenchError):
    """Invalid configuration value or combination."""


class TemporalViolation(ReviewBenchError):
    """Evidence with timestamp >= the instance cutoff reached a bundle."""


class PromptError(ReviewBenchError):
    """A prompt could not be rendered (e.g. no evidence blocks at all)."""


class TransportError(ReviewBenchError):
    """An HTTP endpoint failed after the configured retries."""

    def __init__(self, message: str, prompt_id: str | None = None):
        super().__init__(message)
        self.prompt_id = prompt_id
