"""Exception types shared across modules.

Each error carries the data needed to report it (indices, pairs, degrees);
the CLI maps them to exit codes.
"""

from __future__ import annotations

from .scalars import DivisionByZero, PolicyMismatch, ScalarParseError


class SimlinError(Exception):
    """Base class for precondition failures."""


class DimensionMismatch(SimlinError, ValueError):
    pass


class SingularMatrix(SimlinError, ValueError):
    pass


class NotJordanForm(SimlinError):
    def __init__(self, message: str, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class NotCommuting(SimlinError):
    """Two germs (or matrices) fail to commute.

    ``pair`` holds 0-based indices, ``degree`` the first degree where the
    commutator is nonzero (1 for linear parts).
    """

    def __init__(self, pair, degree: int, magnitude=None, near_misses=()):
        self.pair = tuple(pair)
        self.degree = degree
        self.magnitude = magnitude
        self.near_misses = list(near_misses)
        super().__init__(f"germs {self.pair[0] + 1} and {self.pair[1] + 1} do not commute at degree {degree}")


class SimultaneouslyResonant(SimlinError):
    def __init__(self, Q):
        self.Q = tuple(Q)
        super().__init__(f"multi-index {self.Q} is resonant for every tuple and every coordinate")


class NoAdmissibleIndex(SimlinError):
    pass


class NonMonotoneOmega(SimlinError, ValueError):
    def __init__(self, position: int):
        self.position = position
        super().__init__(f"omega must be positive and non-increasing (fails at m={position})")


class ThetaOutOfRange(SimlinError):
    def __init__(self, min_modulus):
        self.min_modulus = min_modulus
        super().__init__(
            f"min |lambda| = {float(min_modulus):.6g} > 1; replace the germs by their inverses "
            "(germ_inverse) before running the counting check"
        )


class NotNormalized(SimlinError):
    def __init__(self, index, value):
        self.index = index
        self.value = value
        super().__init__(f"coefficient norm {float(value):.6g} > 1 at {index}; apply sigma_normalize first")


__all__ = [
    "SimlinError",
    "DimensionMismatch",
    "SingularMatrix",
    "NotJordanForm",
    "NotCommuting",
    "SimultaneouslyResonant",
    "NoAdmissibleIndex",
    "NonMonotoneOmega",
    "ThetaOutOfRange",
    "NotNormalized",
    "DivisionByZero",
    "PolicyMismatch",
    "ScalarParseError",
]
