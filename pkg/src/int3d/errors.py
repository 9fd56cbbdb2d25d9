"""Exception hierarchy shared across the package.

The CLI maps ``Int3DError`` subclasses to exit codes: numeric failures exit
with 3, everything else with 2.
"""


class Int3DError(Exception):
    exit_code = 2


class ArgumentError(Int3DError, ValueError):
    pass


class DegenerateInputError(Int3DError, ValueError):
    pass


class DegenerateLabelError(DegenerateInputError):
    pass


class SplitError(Int3DError, ValueError):
    pass


class UsageError(Int3DError, RuntimeError):
    pass


class KernelError(Int3DError, RuntimeError):
    """Attention feature map produced a non-positive value."""


class FormatError(Int3DError, ValueError):
    def __init__(self, path, offset, reason):
        self.path = str(path)
        self.offset = offset
        self.reason = reason
        where = f" at byte offset {offset}" if offset is not None else ""
        super().__init__(f"{self.path}{where}: {reason}")


class NumericError(Int3DError, ArithmeticError):
    exit_code = 3
