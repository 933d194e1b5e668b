"""Error taxonomy shared by all modules.

Every error names the module it came from and the process exit code the CLI
uses for it: validation errors exit 2, numeric and size-cap errors exit 3,
I/O errors exit 4.
"""


class BridgeError(Exception):
    """Base exception for trotterbridge errors."""

    exit_code = 1
    module = "trotterbridge"

    def __str__(self) -> str:
        return f"[{self.module}] {super().__str__()}"


class BridgeValidationError(BridgeError, ValueError):
    """Invalid input: parameters, configs or observables."""

    exit_code = 2


class BridgeNumericError(BridgeError, ArithmeticError):
    """Numerical failure or size cap exceeded."""

    exit_code = 3


class BridgeIOError(BridgeError, OSError):
    """Error reading or writing files."""

    exit_code = 4
