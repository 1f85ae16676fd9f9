class Quasi2DError(Exception):
    """Base class for every error raised by the toolkit."""


class InputError(Quasi2DError, ValueError):
    """Bad parameters or violated preconditions. The CLI exits with code 2."""


class NumericalError(Quasi2DError, RuntimeError):
    """A solver failed or a numerical assertion did not hold. The CLI exits with code 1."""


class SweepError(NumericalError):
    """One or more points of a parameter sweep failed."""

    def __init__(self, failures: dict):
        self.failures = failures
        keys = ", ".join(str(k) for k in sorted(failures, key=str))
        super().__init__(f"{len(failures)} sweep point(s) failed: {keys}")
