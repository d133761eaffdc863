"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`IgnnetError`,
so the command-line layer can map domain failures to exit code 1 without
swallowing programming errors.
"""


class IgnnetError(Exception):
    """Base class for domain errors. ``module`` tags the raising subsystem."""

    module = "ignnet"

    def __str__(self) -> str:
        return f"[{self.module}] {super().__str__()}"


class ShapeError(IgnnetError, ValueError):
    module = "autodiff"


class StructureError(IgnnetError):
    module = "autodiff"


class NumericError(IgnnetError, ArithmeticError):
    module = "autodiff"


class DegenerateBatchError(IgnnetError, ValueError):
    module = "autodiff"


class SchemaError(IgnnetError, ValueError):
    module = "data"


class FormatError(IgnnetError, ValueError):
    module = "data"


class RowError(FormatError):
    """Unparseable CSV row; ``line`` is the 1-based line number in the file."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class FetchError(IgnnetError, OSError):
    module = "data"


class IntegrityError(IgnnetError):
    module = "data"


class ConfigurationError(IgnnetError, ValueError):
    module = "config"


class ClassCoverageError(IgnnetError, ValueError):
    module = "data"


class SampleSizeError(IgnnetError, ValueError):
    module = "graph"


class DegreeError(IgnnetError, ValueError):
    module = "graph"

    def __init__(self, message: str, node: int):
        super().__init__(message)
        self.node = node


class LabelError(IgnnetError, ValueError):
    module = "training"


class EvaluationError(IgnnetError, ValueError):
    module = "training"


class UnsupportedVersionError(IgnnetError):
    module = "model"


class UnsupportedHeadError(IgnnetError):
    module = "explain"


class AlignmentError(IgnnetError, ValueError):
    module = "explain"


class RankError(IgnnetError, ArithmeticError):
    module = "shap"


class SizeError(IgnnetError, ValueError):
    module = "shap"


class UndefinedAUCError(IgnnetError, ValueError):
    module = "metrics"
