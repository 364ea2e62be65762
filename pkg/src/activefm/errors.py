"""Exception types shared across the package.

The CLI maps these onto process exit codes: configuration problems exit
with 2, numeric failures with 3, and resource (atom cap) failures with 4.
"""


class ActiveFMError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(ActiveFMError):
    """Invalid configuration, parameter domain, or input file."""


class DimensionMismatchError(ActiveFMError):
    """Atoms or fields of different spatial dimension were combined."""


class SingularSymbolError(ActiveFMError):
    """A Fourier-multiplier symbol is undefined at an occupied wavevector."""


class LatticeError(ActiveFMError):
    """An atom does not lie on the required wavevector lattice."""


class InvalidStateError(ActiveFMError):
    """Steady-state data inconsistent with the model parameters."""


class AtomCapError(ActiveFMError):
    """An operation would exceed the configured atom budget."""

    def __init__(self, would_be: int, cap: int):
        self.would_be = would_be
        self.cap = cap
        super().__init__(f"atom cap exceeded: operation would produce {would_be} atoms (cap {cap})")


class NumericError(ActiveFMError):
    """A numerical procedure failed to converge or violated a bound."""


class ExperimentError(ActiveFMError):
    """A measurement experiment could not produce a usable result."""
