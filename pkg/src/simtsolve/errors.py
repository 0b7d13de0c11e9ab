"""Exception types shared across the simulator and solver layers."""


class SimtError(Exception):
    """Base class for all simtsolve errors."""


class CapacityError(SimtError):
    """Device memory allocation would exceed the configured capacity."""


class UseAfterFreeError(SimtError):
    """An operation touched a device buffer that has been freed."""


class LengthMismatchError(SimtError):
    """Buffer lengths or operand dimensions do not agree."""


class KindMismatchError(SimtError):
    """Operands have different element kinds (f32 vs f64)."""


class LaunchConfigError(SimtError):
    """Invalid launch geometry: block too large or shared memory over limit."""


class DataRaceError(SimtError):
    """The debug race checker observed conflicting accesses within a phase."""


class DiagonalError(SimtError):
    """A matrix row is missing its diagonal entry or the entry is zero."""

    def __init__(self, row, message=None):
        self.row = row
        super().__init__(message or f"zero or missing diagonal entry in row {row}")


class BreakdownError(SimtError):
    """A Krylov recurrence hit a division by (near-)zero and cannot proceed."""
