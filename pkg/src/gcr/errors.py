"""Exception types shared across the package."""


class GcrError(Exception):
    pass


class ShapeMismatchError(GcrError):
    pass


class DegenerateInputError(GcrError):
    pass


class NumericsError(GcrError):
    """NaN/Inf appeared where finite values are required."""


class ParseError(GcrError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = f"{path}:{line}: " if path is not None and line is not None else ""
        super().__init__(f"{where}{message}")


class SaturationError(GcrError):
    """Negative sampling could not find an unknown triple."""


class ClauseConstructionError(GcrError):
    pass


class CheckpointError(GcrError):
    pass


class GenerationError(GcrError):
    pass
