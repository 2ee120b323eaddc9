"""Multiplicative resonances ``Lambda^Q = lambda_j`` and the small divisors
built from them.

A family of eigenvalue tuples ``Lambda_1..Lambda_h`` (each of length n) is
passed around as a list of lists of field scalars.  For a multi-index Q and
a coordinate j, the divisor of tuple k is ``|Lambda_k^Q - lambda_{k,j}|``.

Coordinate j is *admissible* at Q when Q is not resonant for j in every
tuple.  ``eps_Q`` minimises over admissible j only; see ``eps_Q``.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from enum import Enum
from typing import Iterator, Sequence

import gmpy2

from . import matrices as mx
from .errors import DimensionMismatch, NoAdmissibleIndex, NotCommuting, NotJordanForm, SimultaneouslyResonant
from .series import Germ, germ_compose, germ_difference, gradlex_key, multi_indices, unit

Tuples = Sequence[Sequence]


class OmegaVariant(str, Enum):
    SimultaneousMinMax = "SimultaneousMinMax"  # min_Q min_j max_k
    BarMinMaxMin = "BarMinMaxMin"  # min_Q max_k min_j
    TildeMaxMinMin = "TildeMaxMinMin"  # max_k min_Q min_j
    RussmannMaxMin = "RussmannMaxMin"  # max_k min_{Q, j}, no exclusions by default


EXCLUDE = "exclude_simultaneous"
NO_CONSTRAINT = "none"


def default_constraint(variant: OmegaVariant) -> str:
    return NO_CONSTRAINT if OmegaVariant(variant) is OmegaVariant.RussmannMaxMin else EXCLUDE


def _check_tuples(tuples: Tuples) -> int:
    if not tuples:
        raise ValueError("need at least one eigenvalue tuple")
    n = len(tuples[0])
    if any(len(t) != n for t in tuples):
        raise DimensionMismatch("eigenvalue tuples of different lengths")
    return n


def monomial_value(lam: Sequence, Q: Sequence[int], field):
    with field.working():
        acc = field.one
        for x, q in zip(lam, Q):
            for _ in range(q):
                acc = acc * x
    return acc


def iter_powers(tuples: Tuples, mMax: int, field, lo: int = 2, extra_bits: int = 0) -> Iterator[tuple[int, list]]:
    """Yield ``(d, [(Q, [Lambda_k^Q for k])...])`` for d = lo..mMax, lex order
    inside each degree.  Powers are built incrementally from degree d-1."""
    n = _check_tuples(tuples)
    h = len(tuples)
    with field.working(extra_bits):
        tup = [[field.convert(x) for x in t] for t in tuples]
        prev = {unit(n, i): [tup[k][i] for k in range(h)] for i in range(n)}
        for d in range(2, mMax + 1):
            cur = {}
            for Q in multi_indices(n, d):
                i = max(k for k in range(n) if Q[k] > 0)
                Qp = Q[:i] + (Q[i] - 1,) + Q[i + 1 :]
                base = prev[Qp]
                cur[Q] = [base[k] * tup[k][i] for k in range(h)]
            prev = cur
            if d >= lo:
                yield d, list(cur.items())


@dataclass
class DivisorRow:
    """Divisor data for one multi-index.

    ``a[k][j] = |Lambda_k^Q - lambda_{k,j}|``; ``res[k][j]`` the resonance flag.
    """

    Q: tuple
    a: list
    res: list

    @property
    def admissible_coords(self) -> list[int]:
        n = len(self.a[0])
        return [j for j in range(n) if not all(r[j] for r in self.res)]

    def coords(self, constraint: str) -> list[int]:
        if constraint == NO_CONSTRAINT:
            return list(range(len(self.a[0])))
        return self.admissible_coords


def divisor_rows(tuples: Tuples, mMax: int, field, out_precision: int | None = None, extra_bits: int = 0, lo: int = 2):
    """Yield ``(d, [DivisorRow...])`` per degree."""
    prec = out_precision or field.report_precision
    tup = [[field.convert(x) for x in t] for t in tuples]
    for d, items in iter_powers(tuples, mMax, field, lo, extra_bits):
        rows = []
        with field.working(extra_bits):
            for Q, powers in items:
                a, res = [], []
                for k, pk in enumerate(powers):
                    ak, rk = [], []
                    for lam in tup[k]:
                        diff = pk - lam
                        rk.append(field.is_zero(diff))
                        ak.append(field.abs(diff, prec))
                    a.append(ak)
                    res.append(rk)
                rows.append(DivisorRow(Q, a, res))
        yield d, rows


def res_set(lam: Sequence, j: int, mMax: int, field) -> set:
    """{Q : 2 <= |Q| <= mMax, Lambda^Q == lambda_j} (j is 0-based)."""
    if mMax < 2:
        raise ValueError("mMax must be >= 2")
    lam = [field.convert(x) for x in lam]
    if any(field.is_zero(x) for x in lam):
        raise ValueError("eigenvalues must be nonzero")
    out = set()
    for _, items in iter_powers([lam], mMax, field):
        with field.working():
            for Q, (p,) in items:
                if field.is_zero(p - lam[j]):
                    out.add(Q)
    return out


def sim_res_set(tuples: Tuples, j: int, mMax: int, field) -> set:
    _check_tuples(tuples)
    sets = [res_set(t, j, mMax, field) for t in tuples]
    out = sets[0]
    for s in sets[1:]:
        out = out & s
    return out


@dataclass
class ResonanceTable:
    tuples: list
    mMax: int
    per_tuple_per_coord: list  # [k][j] -> sorted list of Q
    simultaneous: list  # [j] -> sorted list of Q
    near: list = dc_field(default_factory=list)  # (k, j, Q, |diff|) within 10x tol, not resonant

    def is_resonant(self, k: int, Q, j: int) -> bool:
        return tuple(Q) in self._sets[k][j]

    def is_sim_resonant(self, Q, j: int, among: Sequence[int] | None = None) -> bool:
        ks = range(len(self.tuples)) if among is None else among
        return all(tuple(Q) in self._sets[k][j] for k in ks)

    def __post_init__(self):
        self._sets = [[set(s) for s in per_k] for per_k in self.per_tuple_per_coord]

    def check(self, field) -> bool:
        """Re-evaluate every stored resonance directly and re-derive intersections."""
        for k, per_k in enumerate(self.per_tuple_per_coord):
            for j, Qs in enumerate(per_k):
                for Q in Qs:
                    with field.working():
                        if not field.is_zero(monomial_value(self.tuples[k], Q, field) - self.tuples[k][j]):
                            return False
        for j, Qs in enumerate(self.simultaneous):
            inter = set(self.per_tuple_per_coord[0][j])
            for per_k in self.per_tuple_per_coord[1:]:
                inter &= set(per_k[j])
            if inter != set(Qs):
                return False
        return True


def resonance_table(tuples: Tuples, mMax: int, field) -> ResonanceTable:
    n = _check_tuples(tuples)
    h = len(tuples)
    tup = [[field.convert(x) for x in t] for t in tuples]
    per = [[[] for _ in range(n)] for _ in range(h)]
    near = []
    tol = field.policy.tol if field.policy.mode == "tolerance" else None
    for _, items in iter_powers(tup, mMax, field):
        with field.working():
            for Q, powers in items:
                for k in range(h):
                    for j in range(n):
                        diff = powers[k] - tup[k][j]
                        if field.is_zero(diff):
                            per[k][j].append(Q)
                        elif tol is not None:
                            v = field.abs(diff)
                            if v <= 10 * tol:
                                near.append((k, j, Q, v))
    sim = []
    for j in range(n):
        inter = set(per[0][j])
        for k in range(1, h):
            inter &= set(per[k][j])
        sim.append(sorted(inter, key=gradlex_key))
    return ResonanceTable(tup, mMax, per, sim, near)


@dataclass(frozen=True)
class EpsValue:
    value: object
    k: int  # tuple achieving the max (0-based)
    j: int  # coordinate achieving the min (0-based)


def eps_from_row(row: DivisorRow) -> EpsValue:
    """min over admissible j of max over k; ties -> smallest j, then smallest k."""
    best = None
    for j in row.admissible_coords:
        kmax, vmax = 0, row.a[0][j]
        for k in range(1, len(row.a)):
            if row.a[k][j] > vmax:
                kmax, vmax = k, row.a[k][j]
        if best is None or vmax < best.value:
            best = EpsValue(vmax, kmax, j)
    if best is None:
        raise SimultaneouslyResonant(row.Q)
    return best


def eps_Q(tuples: Tuples, Q: Sequence[int], field, out_precision: int | None = None, extra_bits: int = 0) -> EpsValue:
    """Small divisor of Q with its witnesses (k_Q, i_Q)."""
    Q = tuple(Q)
    n = _check_tuples(tuples)
    if len(Q) != n or sum(Q) < 2:
        raise ValueError(f"need a multi-index of length {n} and degree >= 2")
    prec = out_precision or field.report_precision
    a, res = [], []
    with field.working(extra_bits):
        for t in tuples:
            t = [field.convert(x) for x in t]
            p = monomial_value(t, Q, field)
            diffs = [p - lam for lam in t]
            a.append([field.abs(x, prec) for x in diffs])
            res.append([field.is_zero(x) for x in diffs])
    return eps_from_row(DivisorRow(Q, a, res))


def _row_value(row: DivisorRow, variant: OmegaVariant, constraint: str):
    """Per-Q aggregate; for the Tilde/Russmann variants a per-tuple list."""
    js = row.coords(constraint)
    if not js:
        return None
    h = len(row.a)
    if variant is OmegaVariant.SimultaneousMinMax:
        return min(max(row.a[k][j] for k in range(h)) for j in js)
    if variant is OmegaVariant.BarMinMaxMin:
        return max(min(row.a[k][j] for j in js) for k in range(h))
    return [min(row.a[k][j] for j in js) for k in range(h)]


def omega_profile(
    tuples: Tuples,
    mMax: int,
    field,
    variant: OmegaVariant | str = OmegaVariant.SimultaneousMinMax,
    constraint: str | None = None,
    out_precision: int | None = None,
    extra_bits: int = 0,
) -> dict[int, object]:
    """{m: omega(m)} for m = 2..mMax (cumulative minima over degrees)."""
    variant = OmegaVariant(variant)
    constraint = constraint or default_constraint(variant)
    if constraint not in (EXCLUDE, NO_CONSTRAINT):
        raise ValueError(f"unknown resonance constraint {constraint!r}")
    h = len(tuples)
    out: dict[int, object] = {}
    running = None
    per_k = [None] * h
    for d, rows in divisor_rows(tuples, mMax, field, out_precision, extra_bits):
        for row in rows:
            v = _row_value(row, variant, constraint)
            if v is None:
                continue
            if isinstance(v, list):
                per_k = [x if (p is None or x < p) else p for x, p in zip(v, per_k)]
            elif running is None or v < running:
                running = v
        if per_k[0] is not None:
            # all tuples get a value from the same rows
            running = max(per_k)
        if running is None:
            continue
        out[d] = running
    if not out:
        raise NoAdmissibleIndex(f"every multi-index with |Q| <= {mMax} is simultaneously resonant")
    return out


def omega(
    tuples: Tuples,
    m: int,
    field,
    variant: OmegaVariant | str = OmegaVariant.SimultaneousMinMax,
    constraint: str | None = None,
    out_precision: int | None = None,
):
    if m < 2:
        raise ValueError("m must be >= 2")
    prof = omega_profile(tuples, m, field, variant, constraint, out_precision)
    if m not in prof:
        raise NoAdmissibleIndex(f"every multi-index with |Q| <= {m} is simultaneously resonant")
    return prof[m]


def omega_reduced(lam: Sequence, mMax: int, field, out_precision: int | None = None) -> dict[int, object]:
    """Single-tuple omega: min over Q and j with Q not in Res_j."""
    return omega_profile([lam], mMax, field, OmegaVariant.SimultaneousMinMax, EXCLUDE, out_precision)


def cremer_indicator(profile: dict[int, object]) -> dict[int, object]:
    """Running max of (1/m) log(1/omega(m)); a growth proxy, not a verdict."""
    out = {}
    best = None
    for m in sorted(profile):
        w = profile[m]
        v = gmpy2.log(1 / w) / m if w > 0 else gmpy2.inf()
        best = v if best is None or v > best else best
        out[m] = best
    return out


def sum_vs_max(tuples: Tuples, Q: Sequence[int], field, out_precision: int | None = None) -> tuple:
    """(min_j sum_k, sum_k min_j, h * min_j max_k) over admissible j."""
    Q = tuple(Q)
    prec = out_precision or field.report_precision
    a, res = [], []
    with field.working():
        for t in tuples:
            t = [field.convert(x) for x in t]
            p = monomial_value(t, Q, field)
            diffs = [p - lam for lam in t]
            a.append([field.abs(x, prec) for x in diffs])
            res.append([field.is_zero(x) for x in diffs])
    row = DivisorRow(Q, a, res)
    js = row.admissible_coords
    if not js:
        raise SimultaneouslyResonant(Q)
    h = len(a)
    with gmpy2.context(gmpy2.get_context(), precision=prec):
        min_sum = min(sum((a[k][j] for k in range(h)), gmpy2.mpfr(0)) for j in js)
        sum_min = sum((min(a[k][j] for j in js) for k in range(h)), gmpy2.mpfr(0))
        bound = h * min(max(a[k][j] for k in range(h)) for j in js)
    return min_sum, sum_min, bound


def resonant_support_check(f: Germ, Lam) -> list[tuple[tuple, int]]:
    """Violations (Q, j) of 'f only has monomials resonant for Lam's eigenvalues'.

    Refuses (NotJordanForm) unless Lam is lower bidiagonal with equal
    eigenvalues under every nonzero subdiagonal entry, and raises
    NotCommuting unless f o Lam == Lam o f up to degree N.
    """
    from .jordan import check_form

    field = f.field
    Lam = field.matrix(Lam)
    if len(Lam) != f.n:
        raise DimensionMismatch("matrix size does not match the germ")
    report = check_form([Lam], field)
    if not report.is_almost_sim_jordan:
        raise NotJordanForm("matrix is not in Jordan form", report.violations)
    L = Germ(f.n, f.N, field, Lam)
    diff = germ_difference(germ_compose(f, L), germ_compose(L, f))
    if diff:
        deg = min(sum(Q) for Q, _ in diff)
        raise NotCommuting((0, 1), deg)
    lam = mx.diagonal(Lam)
    violations = []
    for j, Q, c in f.terms():
        with field.working():
            if not field.is_zero(monomial_value(lam, Q, field) - lam[j]):
                violations.append((Q, j))
    return sorted(violations, key=lambda t: (gradlex_key(t[0]), t[1]))
