"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid dimensions, lengths, bands or step sizes."""


class DivergenceError(RuntimeError):
    """Adaptation produced a non-finite value.

    ``sample`` is the sample index at which the run was aborted when the
    caller knows it, ``mu`` the step size in use.
    """

    def __init__(self, message, sample=None, mu=None):
        super().__init__(message)
        self.sample = sample
        self.mu = mu

    def __str__(self):
        msg = super().__str__()
        if self.sample is not None:
            msg += f" (sample {self.sample}"
            if self.mu is not None:
                msg += f", mu={self.mu:.6g}"
            msg += ")"
        return msg


class SnapshotParseError(ValueError):
    """A filter-bank or plant snapshot file is malformed."""
