"""Exception hierarchy shared by the library, the service and the CLI."""


class GdlabError(Exception):
    """Base class for all gdlab errors."""

    code = "error"
    exit_code = 1


class ParseError(GdlabError):
    """Syntax error in the set-description language, with source position."""

    code = "parse"
    exit_code = 2

    def __init__(self, message, line=None, col=None):
        self.line = line
        self.col = col
        if line is not None:
            message = f"{message} (line {line}, column {col})"
        super().__init__(message)


class ValidationError(GdlabError):
    """A structurally well-formed description violates a semantic invariant."""

    code = "validation"
    exit_code = 2


class DimensionMismatchError(ValidationError):
    code = "dimension_mismatch"


class SqrtInImplicitError(ValidationError):
    code = "sqrt_in_implicit"


class EvalDomainError(GdlabError):
    """sqrt of a negative radicand during expression evaluation."""

    code = "eval_domain"


class UnknownCatalogError(ValidationError):
    code = "unknown_catalog"


class StarvationError(GdlabError):
    """A sampling band received less than 5% of its quota within the retry budget."""

    code = "starvation"
    exit_code = 3

    def __init__(self, band_index, radius, got, quota):
        self.band_index = band_index
        self.radius = radius
        self.got = got
        self.quota = quota
        super().__init__(
            f"band {band_index} (r={radius:g}) starved: {got}/{quota} points "
            "after retry budget; the germ may be empty or badly conditioned"
        )


class EmptyConeError(GdlabError):
    code = "empty_cone"


class AcceptanceFailure(GdlabError):
    code = "acceptance"
    exit_code = 4


class ReportIOError(GdlabError):
    code = "io"
    exit_code = 5
