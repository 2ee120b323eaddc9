"""Complex scalars with two interchangeable backends.

``ExactField`` works over the Gaussian rationals Q(i) and never rounds.
``BigFloatField`` wraps MPC complex numbers (via gmpy2) at a configurable
binary precision, every operation correctly rounded.  Everything else in the
package is written against the small interface both fields share: ``zero``,
``one``, ``convert``, ``is_zero``, ``abs`` and ``working()``, plus the usual
Python arithmetic operators on the elements themselves.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Iterator, Union

import gmpy2
from gmpy2 import mpc, mpfr, mpq, mpz

__all__ = [
    "DivisionByZero",
    "PolicyMismatch",
    "ScalarParseError",
    "ZeroPolicy",
    "GaussianRational",
    "ExactField",
    "BigFloatField",
    "make_field",
    "add",
    "mul",
    "neg",
    "inv",
    "power",
    "modulus",
    "is_zero",
]

DEFAULT_PRECISION = 256


class DivisionByZero(ZeroDivisionError):
    """Inversion of a value that the active zero policy treats as zero."""


class PolicyMismatch(ValueError):
    """A zero policy was used with a backend it does not apply to."""


class ScalarParseError(ValueError):
    pass


@dataclass(frozen=True)
class ZeroPolicy:
    """How a field decides that a value is zero.

    ``mode="exact"`` means structural zero and is only meaningful for the
    exact backend; ``mode="tolerance"`` treats ``|a| <= tol`` as zero.
    """

    mode: str = "exact"
    tol: Any = None

    def __post_init__(self):
        if self.mode not in ("exact", "tolerance"):
            raise ValueError(f"unknown zero policy mode {self.mode!r}")
        if self.mode == "tolerance":
            if self.tol is None or not self.tol > 0:
                raise ValueError("tolerance policy needs tol > 0")
            object.__setattr__(self, "tol", mpfr(self.tol, 64) if isinstance(self.tol, str) else self.tol)


def _q(x) -> mpq:
    if isinstance(x, mpq):
        return x
    if isinstance(x, Fraction):
        return mpq(x.numerator, x.denominator)
    if isinstance(x, (int, type(mpz(0)))):
        return mpq(x)
    if isinstance(x, str):
        s = x.strip()
        try:
            if "/" in s:
                p, d = s.split("/")
                return mpq(int(p), int(d))
            return mpq(Fraction(s))
        except (ValueError, ZeroDivisionError) as exc:
            raise ScalarParseError(f"not a rational literal: {x!r}") from exc
    raise TypeError(f"cannot convert {type(x).__name__} to a rational")


class GaussianRational:
    """Exact complex number ``re + im*i`` with rational parts."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        self.re = _q(re)
        self.im = _q(im)

    @classmethod
    def _raw(cls, re: mpq, im: mpq) -> "GaussianRational":
        obj = object.__new__(cls)
        obj.re = re
        obj.im = im
        return obj

    def _coerce(self, other):
        if isinstance(other, GaussianRational):
            return other
        if isinstance(other, (int, mpq, Fraction, type(mpz(0)))):
            return GaussianRational._raw(_q(other), mpq(0))
        return NotImplemented

    def __add__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return GaussianRational._raw(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return GaussianRational._raw(self.re - o.re, self.im - o.im)

    def __rsub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return o - self

    def __mul__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        a, b, c, d = self.re, self.im, o.re, o.im
        if not b and not d:
            return GaussianRational._raw(a * c, mpq(0))
        return GaussianRational._raw(a * c - b * d, a * d + b * c)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return self * o.inverse()

    def __rtruediv__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return o * self.inverse()

    def __neg__(self):
        return GaussianRational._raw(-self.re, -self.im)

    def __pos__(self):
        return self

    def __pow__(self, q: int):
        return power(self, q)

    def __eq__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return False
        return self.re == o.re and self.im == o.im

    def __hash__(self):
        return hash((self.re, self.im))

    def __bool__(self):
        return bool(self.re) or bool(self.im)

    def __repr__(self):
        return f"GaussianRational({self.re}, {self.im})"

    def __str__(self):
        if not self.im:
            return str(self.re)
        return f"{self.re}{'+' if self.im >= 0 else '-'}{abs(self.im)}i"

    def conjugate(self) -> "GaussianRational":
        return GaussianRational._raw(self.re, -self.im)

    def norm2(self) -> mpq:
        """Exact squared modulus."""
        return self.re * self.re + self.im * self.im

    def inverse(self) -> "GaussianRational":
        n = self.norm2()
        if not n:
            raise DivisionByZero("inverse of exact zero")
        return GaussianRational._raw(self.re / n, -self.im / n)


def _sqrt_rational(r: mpq, bits: int) -> tuple[mpfr, mpfr]:
    """sqrt(r) rounded to ``bits`` bits with a rigorous absolute error bound."""
    if r == 0:
        return mpfr(0, bits), mpfr(0, bits)
    # floor(sqrt(floor(r * 4**k))) / 2**k is within 2**-k of sqrt(r)
    num, den = int(r.numerator), int(r.denominator)
    mag = max(0, (num.bit_length() - den.bit_length()) // 2)
    k = bits + 8 - mag + 2
    k = max(k, bits + 8)
    scaled = (num << (2 * k)) // den
    s = int(gmpy2.isqrt(scaled))
    with gmpy2.context(gmpy2.get_context(), precision=bits):
        value = mpfr(mpq(s, 1 << k))
        ulp = mpfr(2) ** (gmpy2.get_exp(value) - bits) if value else mpfr(0)
        err = mpfr(mpq(1, 1 << k)) + ulp
    return value, err


class _FieldBase:
    kind: str
    policy: ZeroPolicy

    def is_zero(self, a) -> bool:
        return is_zero(a, self.policy)

    def abs(self, a, out_precision: int | None = None) -> mpfr:
        return modulus(a, out_precision or self.report_precision)

    def inv(self, a):
        return inv(a, self.policy)

    def matrix(self, rows) -> tuple:
        return tuple(tuple(self.convert(x) for x in row) for row in rows)

    def vector(self, values) -> tuple:
        return tuple(self.convert(x) for x in values)


class ExactField(_FieldBase):
    """Gaussian rationals; structural zero test unless a tolerance is given."""

    kind = "exact"
    precision = None
    report_precision = 128

    def __init__(self, policy: ZeroPolicy | None = None):
        self.policy = policy or ZeroPolicy("exact")
        self.zero = GaussianRational(0, 0)
        self.one = GaussianRational(1, 0)
        self.i = GaussianRational(0, 1)

    def __repr__(self):
        return f"ExactField({self.policy})"

    def __eq__(self, other):
        return isinstance(other, ExactField) and other.policy == self.policy

    def __hash__(self):
        return hash(("exact", self.policy))

    def working(self, extra_bits: int = 0):
        return contextlib.nullcontext()

    def convert(self, x) -> GaussianRational:
        if isinstance(x, GaussianRational):
            return x
        if isinstance(x, complex):
            return GaussianRational(Fraction(x.real), Fraction(x.imag))
        if isinstance(x, float):
            return GaussianRational(Fraction(x), 0)
        if isinstance(x, (tuple, list)) and len(x) == 2:
            return GaussianRational(_q(x[0]), _q(x[1]))
        return GaussianRational(_q(x), 0)

    def real(self, x) -> GaussianRational:
        return GaussianRational(_q(x), 0)

    def parse(self, literal) -> GaussianRational:
        """Parse ``"p/q"`` or ``["p/q", "r/s"]`` (real, imaginary)."""
        if isinstance(literal, (list, tuple)):
            if len(literal) != 2:
                raise ScalarParseError(f"complex literal needs [re, im]: {literal!r}")
            return GaussianRational(_parse_rational(literal[0]), _parse_rational(literal[1]))
        return GaussianRational(_parse_rational(literal), 0)

    def format(self, a: GaussianRational) -> list[str]:
        return [_fmt_q(a.re), _fmt_q(a.im)]

    def to_mpc(self, a: GaussianRational, bits: int) -> mpc:
        with gmpy2.context(gmpy2.get_context(), precision=bits):
            return mpc(mpfr(a.re), mpfr(a.im))

    def config(self) -> dict:
        return {"mode": "exact", "precision_bits": None, "zero_tol": None}


def _parse_rational(x) -> mpq:
    if isinstance(x, bool):
        raise ScalarParseError(f"not a rational literal: {x!r}")
    if isinstance(x, int):
        return mpq(x)
    if isinstance(x, str):
        s = x.strip()
        parts = s.split("/")
        try:
            if len(parts) == 2:
                d = int(parts[1])
                if d == 0:
                    raise ScalarParseError(f"zero denominator in {x!r}")
                return mpq(int(parts[0]), d)
            if len(parts) == 1:
                return mpq(int(parts[0]))
        except ValueError:
            pass
    raise ScalarParseError(f"exact mode expects rational strings 'p/q', got {x!r}")


def _fmt_q(x: mpq) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


class BigFloatField(_FieldBase):
    """MPC complex numbers at ``precision_bits`` bits (default 256).

    Arithmetic on the elements must happen inside ``with field.working():``
    so that gmpy2 rounds results at this field's precision.
    """

    kind = "bigfloat"

    def __init__(self, precision_bits: int = DEFAULT_PRECISION, zero_tol=None, policy: ZeroPolicy | None = None):
        if precision_bits < 64:
            raise ValueError("precision_bits must be >= 64")
        self.precision = int(precision_bits)
        self.report_precision = self.precision
        if policy is None:
            tol = zero_tol if zero_tol is not None else mpfr(2, 64) ** (-(3 * self.precision) // 4)
            policy = ZeroPolicy("tolerance", mpfr(tol, 64) if not isinstance(tol, mpfr) else tol)
        if policy.mode == "exact":
            raise PolicyMismatch("exact zero policy is only valid with the exact backend")
        self.policy = policy
        with self.working():
            self.zero = mpc(0)
            self.one = mpc(1)
            self.i = mpc(0, 1)

    def __repr__(self):
        return f"BigFloatField(precision_bits={self.precision}, tol={float(self.policy.tol):.3g})"

    def __eq__(self, other):
        return isinstance(other, BigFloatField) and (other.precision, other.policy) == (self.precision, self.policy)

    def __hash__(self):
        return hash(("bigfloat", self.precision, self.policy))

    def working(self, extra_bits: int = 0):
        return gmpy2.context(gmpy2.get_context(), precision=self.precision + extra_bits)

    def convert(self, x) -> mpc:
        with self.working():
            if isinstance(x, GaussianRational):
                return mpc(mpfr(x.re), mpfr(x.im))
            if isinstance(x, (tuple, list)) and len(x) == 2:
                return mpc(_to_mpfr(x[0]), _to_mpfr(x[1]))
            if isinstance(x, mpc):
                return mpc(x)
            if isinstance(x, complex):
                return mpc(x)
            return mpc(_to_mpfr(x), 0)

    def real(self, x) -> mpc:
        return self.convert(x)

    def parse(self, literal) -> mpc:
        """Parse ``"decimal"`` or ``["re", "im"]`` decimal strings."""
        with self.working():
            if isinstance(literal, (list, tuple)):
                if len(literal) != 2:
                    raise ScalarParseError(f"complex literal needs [re, im]: {literal!r}")
                return mpc(_parse_decimal(literal[0]), _parse_decimal(literal[1]))
            return mpc(_parse_decimal(literal), 0)

    def digits(self) -> int:
        # enough significant digits to round-trip at this precision
        return int(self.precision * 0.30103) + 3

    def format(self, a: mpc) -> list[str]:
        d = self.digits()
        return [_fmt_mpfr(a.real, d), _fmt_mpfr(a.imag, d)]

    def to_mpc(self, a: mpc, bits: int) -> mpc:
        with gmpy2.context(gmpy2.get_context(), precision=bits):
            return mpc(a)

    def config(self) -> dict:
        return {
            "mode": "bigfloat",
            "precision_bits": self.precision,
            "zero_tol": _fmt_mpfr(mpfr(self.policy.tol, 64), 6),
        }


def _to_mpfr(x):
    if isinstance(x, str):
        return _parse_decimal(x)
    if isinstance(x, (mpq, Fraction)):
        return mpfr(_q(x))
    return mpfr(x)


def _parse_decimal(x) -> mpfr:
    if isinstance(x, bool):
        raise ScalarParseError(f"not a decimal literal: {x!r}")
    if isinstance(x, (int, float)):
        return mpfr(x)
    if isinstance(x, str):
        s = x.strip()
        if "/" in s:
            return mpfr(_parse_rational(s))
        try:
            return mpfr(s)
        except ValueError as exc:
            raise ScalarParseError(f"not a decimal literal: {x!r}") from exc
    raise ScalarParseError(f"not a decimal literal: {x!r}")


def _fmt_mpfr(x: mpfr, digits: int) -> str:
    """Scientific notation with ``digits`` significant digits (round-trippable)."""
    if not x:
        return "0"
    if gmpy2.is_infinite(x) or gmpy2.is_nan(x):
        return str(x)
    mant, exp, _ = x.digits(10, digits)
    sign = ""
    if mant.startswith("-"):
        sign, mant = "-", mant[1:]
    body = mant.rstrip("0") or "0"
    frac = body[1:]
    return f"{sign}{body[0]}{'.' + frac if frac else ''}e{exp - 1}"


Number = Union[GaussianRational, mpc]


def make_field(mode: str = "exact", precision_bits: int = DEFAULT_PRECISION, zero_tol=None):
    """Build a field from CLI/file style configuration."""
    if mode == "exact":
        policy = ZeroPolicy("tolerance", zero_tol) if zero_tol is not None else None
        return ExactField(policy)
    if mode in ("bigfloat", "float", "floating"):
        return BigFloatField(precision_bits, zero_tol)
    raise ValueError(f"unknown scalar mode {mode!r}")


# -- generic operations ---------------------------------------------------

def add(a, b):
    return a + b


def mul(a, b):
    return a * b


def neg(a):
    return -a


def inv(a, policy: ZeroPolicy | None = None):
    if is_zero(a, policy or _default_policy(a)):
        raise DivisionByZero(f"cannot invert {a!r}: zero under {policy}")
    if isinstance(a, GaussianRational):
        return a.inverse()
    return 1 / a


def power(a, q: int):
    """``a**q`` by repeated squaring, with ``0**0 == 1``."""
    if q < 0:
        raise ValueError("negative exponent")
    one = GaussianRational(1, 0) if isinstance(a, GaussianRational) else mpc(1)
    result = one
    base = a
    while q:
        if q & 1:
            result = result * base
        q >>= 1
        if q:
            base = base * base
    return result


def modulus(a, out_precision: int = 128) -> mpfr:
    """|a| as an mpfr with ``out_precision`` bits.

    Exact inputs get a certified approximation (see ``modulus_certified``).
    """
    return modulus_certified(a, out_precision)[0]


def modulus_certified(a, out_precision: int = 128) -> tuple[mpfr, mpfr]:
    """Return ``(value, err)`` with ``| |a| - value | <= err``."""
    if isinstance(a, GaussianRational):
        return _sqrt_rational(a.norm2(), out_precision)
    with gmpy2.context(gmpy2.get_context(), precision=out_precision):
        value = abs(a)
        ulp = mpfr(2) ** (gmpy2.get_exp(value) - out_precision) if value else mpfr(0)
    return value, ulp


def _default_policy(a) -> ZeroPolicy:
    if isinstance(a, GaussianRational):
        return ZeroPolicy("exact")
    raise PolicyMismatch("floating values need an explicit tolerance policy")


def is_zero(a, policy: ZeroPolicy) -> bool:
    if policy.mode == "exact":
        if not isinstance(a, GaussianRational):
            raise PolicyMismatch("exact zero policy applied to a floating value")
        return not a
    if isinstance(a, GaussianRational):
        return a.norm2() <= mpq(policy.tol) ** 2
    return not a or abs(a) <= policy.tol


def iter_parts(a) -> Iterator:
    yield a.real if isinstance(a, mpc) else a.re
    yield a.imag if isinstance(a, mpc) else a.im
