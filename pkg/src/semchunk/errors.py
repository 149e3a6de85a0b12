"""Exception hierarchy shared by every semchunk module."""

from __future__ import annotations


class SemchunkError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateClamp(SemchunkError, ValueError):
    """Clamping a box to its page left zero area."""


class EmptyCorpus(SemchunkError, ValueError):
    pass


class EmptyInput(SemchunkError, ValueError):
    pass


class DuplicateId(SemchunkError, ValueError):
    pass


class DimensionMismatch(SemchunkError, ValueError):
    pass


# -- loaders ---------------------------------------------------------------


class ParseError(SemchunkError, ValueError):
    """File could not be parsed, or a value is outside its legal range."""

    def __init__(self, message: str, *, path=None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class SchemaError(ParseError):
    """A required field is missing or has the wrong type."""


class GeometryError(ParseError):
    """A box has x1 <= x0 or y1 <= y0."""


class CategoryError(ParseError):
    """A category label is not one of the known tags."""


class UnmappedLabel(ParseError):
    """A detector label has no entry in the label map."""


# -- endpoint --------------------------------------------------------------


class EndpointError(SemchunkError):
    def __init__(self, status: int | None, body: str, url: str = ""):
        self.status = status
        self.body = body
        self.url = url
        super().__init__(f"endpoint {url or '?'} returned {status}: {body[:500]}")


class ConvertTimeout(SemchunkError, TimeoutError):
    pass


class MixedPages(SemchunkError, ValueError):
    pass


class JudgeParseError(SemchunkError, ValueError):
    pass


class ScoreRangeError(SemchunkError, ValueError):
    pass


class MissingStageOutput(SemchunkError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""
