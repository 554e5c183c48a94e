"""Shared exception types with CLI exit-code groupings."""


class LangCnnError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(LangCnnError, ValueError):
    """Operand or parameter shapes do not line up."""


class ParseError(LangCnnError, ValueError):
    """A delimited input file is malformed.

    Carries the 1-based line number when one is known.
    """

    def __init__(self, message, path=None, line_no=None):
        self.path = path
        self.line_no = line_no
        where = ""
        if path is not None:
            where = f"{path}:"
        if line_no is not None:
            where = f"{where}{line_no}: "
        elif where:
            where = f"{where} "
        super().__init__(f"{where}{message}")


class VocabularyError(LangCnnError, ValueError):
    """Vocabulary construction cannot proceed (for example an empty corpus)."""


class MissingFeatureError(LangCnnError, KeyError):
    """An image id has no feature vector in the loaded store."""

    def __init__(self, image_id):
        self.image_id = image_id
        super().__init__(f"no feature vector for image id {image_id!r}")

    def __str__(self):
        # KeyError would quote the whole message otherwise.
        return self.args[0]


class GradientError(LangCnnError, ArithmeticError):
    """A gradient became non-finite; names the offending parameter."""

    def __init__(self, name):
        self.name = name
        super().__init__(f"non-finite gradient in parameter {name!r}")


class DivergenceError(LangCnnError, ArithmeticError):
    """Training loss became non-finite."""

    def __init__(self, message, best_checkpoint=None):
        self.best_checkpoint = best_checkpoint
        super().__init__(message)


class UsageError(LangCnnError, ValueError):
    """Command-line arguments or config keys are invalid."""
