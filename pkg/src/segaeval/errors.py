"""Exception hierarchy shared by all segaeval modules."""


class SegaEvalError(Exception):
    """Base class for every error raised by segaeval."""


class UnsupportedFormat(SegaEvalError):
    pass


class CorruptFile(SegaEvalError):
    pass


class InvalidGeometry(SegaEvalError):
    pass


class GeometryMismatch(SegaEvalError):
    pass


class EmptyMask(SegaEvalError):
    pass


class DomainError(SegaEvalError, ValueError):
    pass


class DegenerateOutput(SegaEvalError):
    """Model output has zero variance, so Sobol' indices are undefined."""


class IncompleteRecord(SegaEvalError):
    pass


class IncompleteDesign(SegaEvalError):
    def __init__(self, missing):
        self.missing = list(missing)
        shown = ", ".join(str(m) for m in self.missing[:10])
        more = "" if len(self.missing) <= 10 else f" (+{len(self.missing) - 10} more)"
        super().__init__(f"design rows without outputs: {shown}{more}")


class EmptyField(SegaEvalError):
    """No teams to rank."""


class IoError(SegaEvalError, OSError):
    pass
