"""Truncated multivariate power series and germs fixing the origin.

Multi-indices are plain tuples of nonnegative ints.  The canonical order is
graded lexicographic: by total degree, then by Python tuple order.

Internally every computation works on a *graded* layout: one dict per total
degree, keyed by a Kronecker code ``sum(q_i * B**(n-1-i))`` with ``B = N+1``.
Because no exponent exceeds N, adding two codes adds the multi-indices
without carries, and inside one degree code order is lex order.

Composition is evaluated degree by degree through a table of powers
``g^L``: ``[g^L]_d`` only needs the parts of ``g`` below degree ``d`` when
``|L| >= 2``.  The same table drives composition, inversion, conjugation
and the homological solvers in :mod:`simlin.linearize`, where the inner
series is only known up to the previous degree.
"""

from __future__ import annotations

import functools
import itertools
from typing import Callable, Iterable, Iterator, Sequence

from . import matrices as mx
from .errors import DimensionMismatch, SingularMatrix

MultiIndex = tuple


def degree(Q: Sequence[int]) -> int:
    return sum(Q)


def gradlex_key(Q: Sequence[int]):
    return (sum(Q), tuple(Q))


def unit(n: int, i: int) -> MultiIndex:
    return tuple(1 if k == i else 0 for k in range(n))


def multi_indices(n: int, d: int) -> list[MultiIndex]:
    """All Q in N^n with |Q| = d, ascending lex."""
    if n == 1:
        return [(d,)]
    out = []
    for first in range(d + 1):
        for rest in multi_indices(n - 1, d - first):
            out.append((first,) + rest)
    return out


def multi_indices_upto(n: int, lo: int, hi: int) -> list[MultiIndex]:
    """All Q with lo <= |Q| <= hi in graded-lex order."""
    return [Q for d in range(lo, hi + 1) for Q in multi_indices(n, d)]


def _check_index(Q, n):
    if len(Q) != n or any((not isinstance(q, int)) or q < 0 for q in Q):
        raise DimensionMismatch(f"bad multi-index {Q!r} for n={n}")


class Codec:
    """Kronecker coding of multi-indices with entries <= N."""

    def __init__(self, n: int, N: int):
        self.n = n
        self.N = N
        self.base = N + 1
        self.weights = tuple(self.base ** (n - 1 - i) for i in range(n))
        self.units = tuple(self.weights)
        self._decoded: dict[int, MultiIndex] = {}

    def encode(self, Q: Sequence[int]) -> int:
        return sum(q * w for q, w in zip(Q, self.weights))

    def decode(self, code: int) -> MultiIndex:
        got = self._decoded.get(code)
        if got is None:
            digits = []
            c = code
            for _ in range(self.n):
                c, r = divmod(c, self.base)
                digits.append(r)
            got = tuple(reversed(digits))
            self._decoded[code] = got
        return got


@functools.lru_cache(maxsize=64)
def codec(n: int, N: int) -> Codec:
    return Codec(n, N)


# -- plain power series -----------------------------------------------------

class PowerSeries:
    """Sparse scalar series in n variables truncated at total degree N."""

    __slots__ = ("n", "N", "field", "coeffs")

    def __init__(self, n: int, N: int, coeffs: dict | None = None, field=None):
        if n < 1 or N < 0:
            raise ValueError("need n >= 1 and N >= 0")
        if field is None:
            from .scalars import ExactField

            field = ExactField()
        self.n, self.N, self.field = n, N, field
        clean = {}
        for Q, c in (coeffs or {}).items():
            Q = tuple(Q)
            _check_index(Q, n)
            if sum(Q) > N:
                continue
            c = field.convert(c)
            if not field.is_zero(c):
                clean[Q] = c
        self.coeffs = dict(sorted(clean.items(), key=lambda kv: gradlex_key(kv[0])))

    def __getitem__(self, Q):
        return self.coeffs.get(tuple(Q), self.field.zero)

    def __eq__(self, other):
        return (
            isinstance(other, PowerSeries)
            and (self.n, self.N) == (other.n, other.N)
            and self.coeffs == other.coeffs
        )

    def __repr__(self):
        return f"PowerSeries(n={self.n}, N={self.N}, {self.coeffs})"

    def is_zero(self) -> bool:
        return not self.coeffs

    def __add__(self, other):
        return ps_add(self, other)

    def __mul__(self, other):
        return ps_mul(self, other)


def ps_add(a: PowerSeries, b: PowerSeries) -> PowerSeries:
    if a.n != b.n:
        raise DimensionMismatch(f"dimension {a.n} vs {b.n}")
    N = min(a.N, b.N)
    field = a.field
    out = {}
    with field.working():
        for Q, c in itertools.chain(a.coeffs.items(), b.coeffs.items()):
            if sum(Q) <= N:
                out[Q] = out[Q] + c if Q in out else c
    return PowerSeries(a.n, N, out, field)


def ps_mul(a: PowerSeries, b: PowerSeries) -> PowerSeries:
    if a.n != b.n:
        raise DimensionMismatch(f"dimension {a.n} vs {b.n}")
    N = min(a.N, b.N)
    field = a.field
    cd = codec(a.n, max(N, 1))
    A = [(sum(Q), cd.encode(Q), c) for Q, c in a.coeffs.items() if sum(Q) <= N]
    Bt = [(sum(Q), cd.encode(Q), c) for Q, c in b.coeffs.items() if sum(Q) <= N]
    acc: dict[int, object] = {}
    with field.working():
        for da, ka, x in A:
            for db, kb, y in Bt:
                if da + db <= N:
                    k = ka + kb
                    acc[k] = acc[k] + x * y if k in acc else x * y
    return PowerSeries(a.n, N, {cd.decode(k): v for k, v in acc.items()}, field)


# -- graded layout helpers --------------------------------------------------

def _empty_parts(N: int) -> list[dict]:
    return [dict() for _ in range(N + 1)]


def _clean(field, part: dict) -> dict:
    is_zero = field.is_zero
    return {k: v for k, v in part.items() if not is_zero(v)}


def _mul_into(out: dict, a: dict, b: dict) -> None:
    """out += a * b for homogeneous coded parts (caller sets the context)."""
    if not a or not b:
        return
    get = out.get
    for ka, xa in a.items():
        for kb, xb in b.items():
            k = ka + kb
            v = get(k)
            out[k] = xa * xb if v is None else v + xa * xb


def _axpy_into(out: dict, c, a: dict) -> None:
    get = out.get
    for k, x in a.items():
        v = get(k)
        out[k] = c * x if v is None else v + c * x


class PowerTable:
    """Degree-by-degree powers ``inner^L`` for a closed set of exponents.

    ``inner`` is a list (one entry per coordinate) of graded parts that the
    caller may still be filling in; ``advance(d)`` computes the degree-``d``
    part of every stored power with ``2 <= |L| <= d``, reading only degrees
    ``< d`` of ``inner``.
    """

    def __init__(self, field, n: int, N: int, inner: list[list[dict]], exponents: Iterable[MultiIndex]):
        self.field = field
        self.n, self.N = n, N
        self.inner = inner
        parent: dict[MultiIndex, tuple[MultiIndex, int]] = {}
        for L in exponents:
            L = tuple(L)
            while sum(L) >= 2 and L not in parent:
                i = max(k for k in range(n) if L[k] > 0)
                Lp = L[:i] + (L[i] - 1,) + L[i + 1 :]
                parent[L] = (Lp, i)
                L = Lp
        self.order = sorted(parent, key=gradlex_key)
        self.parent = parent
        self.parts: dict[MultiIndex, list[dict]] = {L: _empty_parts(N) for L in self.order}

    def of(self, L: MultiIndex) -> list[dict]:
        if sum(L) == 1:
            return self.inner[L.index(1)]
        return self.parts[L]

    def advance(self, d: int) -> None:
        field = self.field
        for L in self.order:
            dl = sum(L)
            if dl > d:
                break
            Lp, i = self.parent[L]
            src = self.of(Lp)
            gi = self.inner[i]
            out: dict = {}
            for b in range(1, d - (dl - 1) + 1):
                _mul_into(out, src[d - b], gi[b])
            self.parts[L][d] = _clean(field, out)


# -- germs ------------------------------------------------------------------

class Germ:
    """Truncated germ ``z -> linear z + sum_Q higher[j][Q] z^Q`` of C^n at 0.

    ``higher`` is a tuple of n dicts (one per coordinate, 0-based) mapping
    multi-indices with ``2 <= |Q| <= N`` to nonzero coefficients.
    """

    __slots__ = ("n", "N", "field", "linear", "higher", "_graded")

    def __init__(self, n: int, N: int, field, linear, higher=None, *, check_invertible: bool = True):
        if n < 1 or N < 1:
            raise ValueError("need n >= 1 and N >= 1")
        self.n, self.N, self.field = n, N, field
        lin = tuple(tuple(field.convert(x) for x in row) for row in linear)
        if len(lin) != n or any(len(r) != n for r in lin):
            raise DimensionMismatch(f"linear part must be {n}x{n}")
        if check_invertible and not mx.is_invertible(field, lin):
            raise SingularMatrix("linear part of a germ must be invertible")
        self.linear = lin
        comps = []
        higher = higher if higher is not None else [{} for _ in range(n)]
        if len(higher) != n:
            raise DimensionMismatch(f"higher part needs {n} coordinates")
        for comp in higher:
            clean = {}
            for Q, c in comp.items():
                Q = tuple(Q)
                _check_index(Q, n)
                if sum(Q) < 2:
                    raise ValueError(f"higher-order index {Q} has degree < 2")
                if sum(Q) > N:
                    continue
                c = field.convert(c)
                if not field.is_zero(c):
                    clean[Q] = c
            comps.append(dict(sorted(clean.items(), key=lambda kv: gradlex_key(kv[0]))))
        self.higher = tuple(comps)
        self._graded = None

    # construction helpers
    @classmethod
    def identity(cls, n: int, N: int, field) -> "Germ":
        return cls(n, N, field, mx.identity(field, n))

    @classmethod
    def from_linear(cls, A, N: int, field) -> "Germ":
        return cls(len(A), N, field, A)

    @classmethod
    def from_terms(cls, n: int, N: int, field, linear, terms: Iterable[tuple[int, Sequence[int], object]]) -> "Germ":
        """Build from ``(j, Q, c)`` triples, j 0-based; repeated terms add up."""
        higher = [{} for _ in range(n)]
        with field.working():
            for j, Q, c in terms:
                Q = tuple(Q)
                c = field.convert(c)
                higher[j][Q] = higher[j][Q] + c if Q in higher[j] else c
        return cls(n, N, field, linear, higher)

    # access
    def coeff(self, Q: Sequence[int], j: int):
        Q = tuple(Q)
        if sum(Q) == 1:
            return self.linear[j][Q.index(1)]
        return self.higher[j].get(Q, self.field.zero)

    def vector_coeff(self, Q: Sequence[int]) -> tuple:
        return tuple(self.coeff(Q, j) for j in range(self.n))

    def terms(self) -> Iterator[tuple[int, MultiIndex, object]]:
        """Higher-order terms as (j, Q, c), by coordinate then graded-lex."""
        for j, comp in enumerate(self.higher):
            for Q, c in comp.items():
                yield j, Q, c

    def support(self) -> list[MultiIndex]:
        keys = set()
        for comp in self.higher:
            keys.update(comp)
        return sorted(keys, key=gradlex_key)

    def is_linear(self) -> bool:
        return not any(self.higher)

    def max_degree(self) -> int:
        return max((sum(Q) for comp in self.higher for Q in comp), default=1)

    def linear_germ(self) -> "Germ":
        return Germ(self.n, self.N, self.field, self.linear)

    def truncate(self, N: int) -> "Germ":
        return Germ(self.n, min(N, self.N), self.field, self.linear, self.higher)

    def map_coeffs(self, fn: Callable) -> "Germ":
        """Apply ``fn(Q, c)`` to every higher-order coefficient."""
        with self.field.working():
            higher = [{Q: fn(Q, c) for Q, c in comp.items()} for comp in self.higher]
        return Germ(self.n, self.N, self.field, self.linear, higher)

    def __eq__(self, other):
        return (
            isinstance(other, Germ)
            and (self.n, self.N) == (other.n, other.N)
            and self.linear == other.linear
            and self.higher == other.higher
        )

    def __hash__(self):
        return hash((self.n, self.N, self.linear, tuple(tuple(c.items()) for c in self.higher)))

    def __repr__(self):
        return f"Germ(n={self.n}, N={self.N}, linear={self.linear}, higher={self.higher})"

    # graded layout (cached; germs are immutable)
    def graded(self) -> list[list[dict]]:
        if self._graded is None:
            cd = codec(self.n, self.N)
            comps = []
            for j in range(self.n):
                parts = _empty_parts(self.N)
                parts[1] = {cd.units[i]: self.linear[j][i] for i in range(self.n) if not self.field.is_zero(self.linear[j][i])}
                for Q, c in self.higher[j].items():
                    parts[sum(Q)][cd.encode(Q)] = c
                comps.append(parts)
            self._graded = comps
        return self._graded

    def outer_terms(self) -> list[tuple[MultiIndex, list[tuple[int, object]]]]:
        """Higher-order terms grouped by exponent: [(L, [(j, c), ...])]."""
        by_L: dict[MultiIndex, list] = {}
        for j, Q, c in self.terms():
            by_L.setdefault(Q, []).append((j, c))
        return sorted(by_L.items(), key=lambda kv: gradlex_key(kv[0]))


def germ_from_graded(n: int, N: int, field, comps: list[list[dict]], check_invertible: bool = True) -> Germ:
    cd = codec(n, N)
    linear = [[field.zero] * n for _ in range(n)]
    higher = [{} for _ in range(n)]
    for j in range(n):
        for k, c in comps[j][1].items():
            linear[j][cd.decode(k).index(1)] = c
        for d in range(2, N + 1):
            for k, c in comps[j][d].items():
                higher[j][cd.decode(k)] = c
    return Germ(n, N, field, linear, higher, check_invertible=check_invertible)


def _check_pair(f: Germ, g: Germ):
    if f.n != g.n:
        raise DimensionMismatch(f"dimension {f.n} vs {g.n}")
    if f.N != g.N:
        raise DimensionMismatch(f"truncation {f.N} vs {g.N}")


def outer_higher_at(field, n: int, outer_terms, table: PowerTable, d: int) -> list[dict]:
    """Degree-d part of ``sum_{|L|>=2} f_L inner^L`` (table advanced to d)."""
    acc = [dict() for _ in range(n)]
    for L, entries in outer_terms:
        if sum(L) > d:
            break
        part = table.of(L)[d]
        if not part:
            continue
        for j, c in entries:
            _axpy_into(acc[j], c, part)
    return acc


def _linear_apply(A, vec_parts: list[dict], n: int) -> list[dict]:
    """(A v) for a vector of homogeneous coded parts."""
    out = [dict() for _ in range(n)]
    for j in range(n):
        for i in range(n):
            a = A[j][i]
            if a and vec_parts[i]:
                _axpy_into(out[j], a, vec_parts[i])
    return out


def germ_compose(f: Germ, g: Germ) -> Germ:
    """f o g up to degree N."""
    _check_pair(f, g)
    n, N, field = f.n, f.N, f.field
    inner = g.graded()
    terms = f.outer_terms()
    with field.working():
        table = PowerTable(field, n, N, inner, (L for L, _ in terms))
        out = [_empty_parts(N) for _ in range(n)]
        for d in range(1, N + 1):
            table.advance(d)
            lin = _linear_apply(f.linear, [inner[i][d] for i in range(n)], n)
            hi = outer_higher_at(field, n, terms, table, d) if d >= 2 else [dict() for _ in range(n)]
            for j in range(n):
                part = lin[j]
                for k, v in hi[j].items():
                    part[k] = part[k] + v if k in part else v
                out[j][d] = _clean(field, part)
    return germ_from_graded(n, N, field, out)


def left_solve(outer: Germ, target: Germ) -> Germ:
    """The germ c with ``outer o c == target`` up to degree N."""
    _check_pair(outer, target)
    n, N, field = outer.n, outer.N, outer.field
    Binv = mx.inverse(field, outer.linear)
    rhs = target.graded()
    terms = outer.outer_terms()
    with field.working():
        inner = [_empty_parts(N) for _ in range(n)]
        table = PowerTable(field, n, N, inner, (L for L, _ in terms))
        for d in range(1, N + 1):
            table.advance(d)
            hi = outer_higher_at(field, n, terms, table, d) if d >= 2 else [dict() for _ in range(n)]
            resid = []
            for j in range(n):
                part = dict(rhs[j][d])
                for k, v in hi[j].items():
                    part[k] = part[k] - v if k in part else -v
                resid.append(part)
            sol = _linear_apply(Binv, resid, n)
            for j in range(n):
                inner[j][d] = _clean(field, sol[j])
    return germ_from_graded(n, N, field, inner)


def germ_inverse(f: Germ) -> Germ:
    """Compositional inverse: solves f o g = id degree by degree."""
    return left_solve(f, Germ.identity(f.n, f.N, f.field))


def germ_conjugate(f: Germ, phi: Germ) -> Germ:
    """phi^{-1} o f o phi, computed as the solution c of phi o c = f o phi."""
    _check_pair(f, phi)
    return left_solve(phi, germ_compose(f, phi))


def linear_change(f: Germ, A) -> Germ:
    """A^{-1} o f o A for an invertible matrix A."""
    field = f.field
    A = field.matrix(A)
    if len(A) != f.n:
        raise DimensionMismatch("matrix size does not match the germ")
    Ainv = mx.inverse(field, A)
    inner = germ_compose(f, Germ(f.n, f.N, field, A))
    return germ_compose(Germ(f.n, f.N, field, Ainv), inner)


def coeff_norm(f: Germ, Q: Sequence[int], norm: str = "sup", out_precision: int | None = None):
    """Norm of the vector coefficient f_Q; sup over coordinates by default."""
    Q = tuple(Q)
    vals = [f.field.abs(f.coeff(Q, j), out_precision) for j in range(f.n)]
    if norm == "sup":
        return max(vals)
    if norm == "l1":
        total = vals[0]
        for v in vals[1:]:
            total = total + v
        return total
    raise ValueError(f"unknown norm {norm!r}")


def germ_difference(a: Germ, b: Germ) -> dict:
    """Nonzero coefficients of a - b keyed by (Q, j), linear ones included."""
    _check_pair(a, b)
    field = a.field
    out = {}
    with field.working():
        for j in range(a.n):
            for i in range(a.n):
                Q = unit(a.n, i)
                dlt = a.linear[j][i] - b.linear[j][i]
                if not field.is_zero(dlt):
                    out[(Q, j)] = dlt
            for Q in set(a.higher[j]) | set(b.higher[j]):
                dlt = a.higher[j].get(Q, field.zero) - b.higher[j].get(Q, field.zero)
                if not field.is_zero(dlt):
                    out[(Q, j)] = dlt
    return out


def max_coeff_difference(a: Germ, b: Germ, out_precision: int | None = None):
    """sup over all coefficients (linear included) of |a - b|, without zero dropping."""
    _check_pair(a, b)
    field = a.field
    best = field.abs(field.zero, out_precision)
    with field.working():
        for j in range(a.n):
            for i in range(a.n):
                v = field.abs(a.linear[j][i] - b.linear[j][i], out_precision)
                best = v if v > best else best
            for Q in set(a.higher[j]) | set(b.higher[j]):
                v = field.abs(a.higher[j].get(Q, field.zero) - b.higher[j].get(Q, field.zero), out_precision)
                best = v if v > best else best
    return best


def scale_germ(f: Germ, sigma) -> Germ:
    """z -> sigma f(z / sigma): coefficients of degree d get sigma^(1-d)."""
    field = f.field
    s = field.convert(sigma)
    with field.working():
        sinv = field.one / s
        return f.map_coeffs(lambda Q, c: c * _pow(sinv, sum(Q) - 1, field))


def _pow(x, k, field):
    r = field.one
    for _ in range(k):
        r = r * x
    return r


def random_germ(field, n: int, N: int, linear, rng, terms_per_coord: int = 3, max_degree: int | None = None, scale: float = 1.0) -> Germ:
    """Germ with a few random higher-order terms (test and fixture helper).

    Coefficients are dyadic rationals so the same germ is exactly
    representable in both backends.
    """
    top = min(max_degree or N, N)
    pool = multi_indices_upto(n, 2, top)
    higher = [{} for _ in range(n)]
    for j in range(n):
        for Q in rng.sample(pool, min(terms_per_coord, len(pool))):
            re = round(rng.uniform(-scale, scale) * 1024) / 1024
            im = round(rng.uniform(-scale, scale) * 1024) / 1024
            higher[j][Q] = field.convert((_dyadic(re), _dyadic(im)))
    return Germ(n, N, field, linear, higher)


def _dyadic(x: float) -> str:
    from fractions import Fraction

    fr = Fraction(x).limit_denominator(1 << 20)
    return f"{fr.numerator}/{fr.denominator}"
