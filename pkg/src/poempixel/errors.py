"""Exception hierarchy shared across the package.

`exit_code` is what the CLI returns when the exception escapes: 1 for
validation-class failures, 2 for provider-class failures.
"""

from __future__ import annotations


class PoemPixelError(Exception):
    exit_code = 1


class FormatError(PoemPixelError):
    """A file failed to parse in its declared format."""


class ValidationError(PoemPixelError):
    """An input violated a documented invariant or value domain."""


class RegistryError(PoemPixelError):
    """A prompt/theme/emotion registry is malformed."""


class TemplateKindError(PoemPixelError):
    """A template of the wrong kind was passed to a renderer."""


class StateError(PoemPixelError):
    """A tuning-session operation was attempted in an invalid state."""


class ProviderError(PoemPixelError):
    """A model provider call failed.

    `retryable` distinguishes transient transport faults (timeouts, 5xx,
    rate limits) from permanent ones (auth, validation).
    """

    exit_code = 2

    def __init__(self, message: str, *, retryable: bool = False):
        super().__init__(message)
        self.retryable = retryable


class EmptyResponseError(ProviderError):
    """The provider returned an empty completion."""

    def __init__(self, message: str = "provider returned an empty completion"):
        super().__init__(message, retryable=False)


class GenerationError(ProviderError):
    """The image provider rejected or failed a generation request."""
