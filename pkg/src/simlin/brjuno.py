"""Brjuno-type series, majorant sequences and coefficient-growth checks.

Series are evaluated in MPFR regardless of the scalar backend.  A
non-increasing function omega on 1, 2, 3, ... is stored as runs of equal
values (``OmegaSequence``) so that sums over very long ranges with few
distinct values stay cheap:

    B_nu  = sum_{v<=nu} 2^-v log(1/omega(2^(v+1)))
    R_K   = sum_{k<=K} k^-2 log(1/omega(k))
    Gamma_K = sum_{k<=K} log(1/omega(k)) / (k(k+1))
"""

from __future__ import annotations

import bisect
import functools
import itertools
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import gmpy2
import mpmath
from gmpy2 import mpfr, mpq

from .errors import NonMonotoneOmega, NotNormalized, SimultaneouslyResonant, ThetaOutOfRange
from .resonance import (
    OmegaVariant,
    cremer_indicator,
    divisor_rows,
    eps_from_row,
    omega_profile,
)
from .series import Germ, coeff_norm, gradlex_key, multi_indices_upto

SERIES_PRECISION = 128


def _ctx(prec: int = SERIES_PRECISION):
    return gmpy2.context(gmpy2.get_context(), precision=prec)


class OmegaSequence:
    """Positive non-increasing omega(k), k = 1..length, as runs of equal values."""

    def __init__(self, starts: Sequence[int], values: Sequence, length: int, prec: int = SERIES_PRECISION):
        if not starts or starts[0] != 1:
            raise ValueError("omega must be defined from k = 1")
        self.prec = prec
        self.starts = list(starts)
        with _ctx(prec):
            self.values = [mpfr(v) for v in values]
        self.length = length
        for idx, v in enumerate(self.values):
            if not v > 0 or (idx and v > self.values[idx - 1]):
                raise NonMonotoneOmega(self.starts[idx])

    @classmethod
    def from_values(cls, values: Sequence, prec: int = SERIES_PRECISION) -> "OmegaSequence":
        """values[k-1] = omega(k)."""
        starts, vals = [], []
        with _ctx(prec):
            for k, v in enumerate(values, start=1):
                v = mpfr(v)
                if not v > 0:
                    raise NonMonotoneOmega(k)
                if vals and v > vals[-1]:
                    raise NonMonotoneOmega(k)
                if not vals or v != vals[-1]:
                    starts.append(k)
                    vals.append(v)
        return cls(starts, vals, len(values), prec)

    @classmethod
    def from_profile(cls, profile: Mapping[int, object], prec: int = SERIES_PRECISION) -> "OmegaSequence":
        """From {m: omega(m)} for m = 2..M; omega(1) is taken equal to omega(2)."""
        ms = sorted(profile)
        if not ms or ms[0] != 2 or ms != list(range(2, ms[-1] + 1)):
            raise ValueError("profile must cover m = 2..M without gaps")
        return cls.from_values([profile[2]] + [profile[m] for m in ms], prec)

    @classmethod
    def constant(cls, c, length: int, prec: int = SERIES_PRECISION) -> "OmegaSequence":
        return cls([1], [c], length, prec)

    def __call__(self, k: int):
        if not 1 <= k <= self.length:
            raise IndexError(f"omega({k}) outside 1..{self.length}")
        return self.values[bisect.bisect_right(self.starts, k) - 1]

    def runs(self, lo: int, hi: int):
        """Yield (a, b, value) with a <= k <= b covering lo..hi."""
        if hi > self.length:
            raise IndexError(f"omega needed up to {hi}, defined up to {self.length}")
        i = bisect.bisect_right(self.starts, lo) - 1
        a = lo
        while a <= hi:
            nxt = self.starts[i + 1] if i + 1 < len(self.starts) else self.length + 1
            b = min(hi, nxt - 1)
            yield a, b, self.values[i]
            a = b + 1
            i += 1


def _inv_square_sum(a: int, b: int, prec: int):
    """sum_{k=a}^{b} 1/k^2 (caller's context for short runs)."""
    if b - a < 64:
        s = mpfr(0)
        for k in range(a, b + 1):
            s += mpfr(1) / (k * k)
        return s
    # trigamma difference for long runs
    with mpmath.workprec(prec + 32):
        man, exp = (mpmath.psi(1, a) - mpmath.psi(1, b + 1)).man_exp
    return gmpy2.mul_2exp(mpfr(int(man)), int(exp))


def _rg_accumulate(omega: OmegaSequence, lo: int, hi: int, r, g, prec: int):
    """Add the R and Gamma terms for k = lo..hi to (r, g); call inside a context."""
    for a, b, v in omega.runs(lo, hi):
        lv = -gmpy2.log(v)
        r += _inv_square_sum(a, b, prec) * lv
        # telescoping: sum_{k=a}^{b} 1/(k(k+1)) = 1/a - 1/(b+1)
        g += mpfr(b + 1 - a) / (a * (b + 1)) * lv
    return r, g


def series_partial_sum(omega: OmegaSequence, variant: str, truncation: int, prec: int = SERIES_PRECISION):
    """Partial sum of the B (truncation = nu_max), R or Gamma (truncation = K) series."""
    key = variant.lower()
    with _ctx(prec + 16):
        if key == "b":
            total = b_trajectory(omega, truncation, prec)[-1]
        elif key in ("r", "gamma", "g"):
            r, g = _rg_accumulate(omega, 1, truncation, mpfr(0), mpfr(0), prec)
            total = r if key == "r" else g
        else:
            raise ValueError(f"unknown series {variant!r}")
    with _ctx(prec):
        return +total


def b_trajectory(omega: OmegaSequence, nu_max: int, prec: int = SERIES_PRECISION) -> list:
    out = []
    with _ctx(prec + 16):
        total = mpfr(0)
        for nu in range(nu_max + 1):
            total += -gmpy2.log(omega(2 ** (nu + 1))) / (1 << nu)
            out.append(+total)
    return out


def rg_trajectory(omega: OmegaSequence, checkpoints: Iterable[int], prec: int = SERIES_PRECISION) -> list[tuple]:
    """[(k, R_k, Gamma_k)] at increasing checkpoints."""
    out = []
    with _ctx(prec + 16):
        r = g = mpfr(0)
        done = 0
        for k in sorted(checkpoints):
            r, g = _rg_accumulate(omega, done + 1, k, r, g, prec)
            done = k
            out.append((k, +r, +g))
    return out


@dataclass
class InequalityReport:
    nu_max: int
    K: int
    B: object
    R: object
    Gamma: object
    log_inv_omega1: object
    checks: dict  # name -> (ok, margin)
    slack: float
    omega_at_most_one: bool  # the first pair needs log(1/omega) >= 0

    @property
    def all_pass(self) -> bool:
        return all(ok for ok, _ in self.checks.values())


def appendix_inequalities(omega: OmegaSequence, nu_max: int, slack: float = 1e-12, prec: int = SERIES_PRECISION) -> InequalityReport:
    """Gamma <= R <= 2 Gamma and Gamma <= B/2 <= 2 Gamma - log(1/omega(1)),
    with B at nu_max and R, Gamma at K = 2^(nu_max+1) - 1."""
    K = 2 ** (nu_max + 1) - 1
    if omega.length < K + 1:
        raise IndexError(f"omega needed up to {K + 1}")
    B = b_trajectory(omega, nu_max, prec)[-1]
    _, R, G = rg_trajectory(omega, [K], prec)[0]
    with _ctx(prec):
        l1 = gmpy2.log(1 / omega(1))
        sides = {
            "Gamma<=R": (G, R),
            "R<=2Gamma": (R, 2 * G),
            "Gamma<=B/2": (G, B / 2),
            "B/2<=2Gamma-log(1/omega(1))": (B / 2, 2 * G - l1),
        }
        checks = {name: (bool(lhs <= rhs + slack), rhs - lhs) for name, (lhs, rhs) in sides.items()}
    return InequalityReport(nu_max, K, B, R, G, l1, checks, slack, bool(omega.values[0] <= 1))


def russmann_lemma_sides(Omega, q: int, nu_max: int, prec: int = SERIES_PRECISION) -> tuple:
    """Both sides of  sum_nu s_nu^-1 log Omega(s_{nu+1})  vs
    sum_{k >= 2^(q+1)} k^-2 log Omega(k),  s_nu = 2^(q+nu).

    ``Omega(k)`` is a callable (non-decreasing, >= 1).  The left sum stops
    at nu_max; the right one at 2^(q+nu_max+2) - 1 (whole dyadic blocks,
    each dominating one left term when the inequality holds blockwise).
    """
    with _ctx(prec + 16):
        lhs = mpfr(0)
        for nu in range(nu_max + 1):
            lhs += mpfr(1) / 2 ** (q + nu) * gmpy2.log(mpfr(Omega(2 ** (q + nu + 1))))
        rhs = mpfr(0)
        for k in range(2 ** (q + 1), 2 ** (q + nu_max + 2)):
            rhs += gmpy2.log(mpfr(Omega(k))) / (k * k)
    with _ctx(prec):
        return +lhs, +rhs


# -- majorant sequences -------------------------------------------------------

@functools.lru_cache(maxsize=None)
def _alpha_cached(mMax: int) -> tuple[int, ...]:
    alpha = [0, 1]  # alpha[0] unused
    total = [0, 1]  # sum over compositions into >= 1 parts
    for m in range(2, mMax + 1):
        a = sum(alpha[k] * total[m - k] for k in range(1, m))
        alpha.append(a)
        total.append(2 * a)
    return tuple(alpha[1:])


def alpha_seq(mMax: int) -> list[int]:
    """[alpha_1, ..., alpha_mMax] as exact integers."""
    if mMax < 1:
        raise ValueError("mMax must be >= 1")
    return list(_alpha_cached(mMax))


@dataclass
class DeltaEntry:
    value: object  # mpfr
    eps: object
    k: int  # witness tuple k_Q (0-based)
    i: int  # witness coordinate i_Q (0-based)
    parts: tuple  # the maximizing composition (>= 2 parts)
    factors: tuple  # L_0 = Q, then every L with eps_L^{-1} in the product


@dataclass
class MajorantData:
    alpha: list
    delta: dict  # Q -> DeltaEntry (admissible Q with 2 <= |Q| <= mMax)
    skipped: list  # simultaneously resonant Q
    eps: dict  # Q -> EpsValue (admissible Q)
    tuples: list
    mMax: int
    prec: int


def _sub_indices(Q):
    """Nonzero P <= Q (componentwise), P != Q, graded-lex order."""
    ranges = [range(q + 1) for q in Q]
    out = [P for P in itertools.product(*ranges) if any(P) and P != tuple(Q)]
    out.sort(key=gradlex_key)
    return out


def delta_map(tuples, mMax: int, field, prec: int | None = None) -> MajorantData:
    """delta_Q = eps_Q^{-1} max over compositions (>= 2 parts) of prod delta_part,
    delta_E = 1 for |E| = 1, simultaneously resonant Q skipped.

    Uses C(Q) = best product over compositions of Q into >= 1 admissible
    parts; the max over >= 2 parts is then max_P delta_P C(Q - P) over the
    first part P.  Ties keep the graded-lex smallest first part.  Divisors
    are evaluated with twice the working precision.
    """
    prec = prec or max(2 * (field.precision or SERIES_PRECISION), 256)
    n = len(tuples[0])
    eps: dict = {}
    skipped: list = []
    for d, rows in divisor_rows(tuples, mMax, field, prec, extra_bits=field.precision or 0):
        for row in rows:
            try:
                eps[row.Q] = eps_from_row(row)
            except SimultaneouslyResonant:
                skipped.append(row.Q)
    delta: dict = {}
    best: dict = {}  # Q -> (value, parts) for compositions into >= 1 parts
    with _ctx(prec):
        one = mpfr(1)
        for i in range(n):
            E = tuple(1 if k == i else 0 for k in range(n))
            best[E] = (one, (E,))
        for Q in multi_indices_upto(n, 2, mMax):
            top, top_parts = None, None
            for P in _sub_indices(Q):
                dP = one if sum(P) == 1 else (delta[P].value if P in delta else None)
                if dP is None:
                    continue
                rest = tuple(q - p for q, p in zip(Q, P))
                if rest not in best:
                    continue
                cv, cparts = best[rest]
                v = dP * cv
                if top is None or v > top:
                    top, top_parts = v, (P,) + cparts
            if Q in eps and top is not None:
                e = eps[Q]
                value = top / e.value
                delta[Q] = DeltaEntry(value, e.value, e.k, e.j, top_parts, ())
                cand = (value, (Q,))
                if cand[0] > top:
                    best[Q] = cand
                else:
                    best[Q] = (top, top_parts)
            elif top is not None:
                best[Q] = (top, top_parts)
    for Q in delta:
        delta[Q].factors = tuple(_factors(Q, delta))
    return MajorantData(alpha_seq(mMax), delta, skipped, eps, [list(t) for t in tuples], mMax, prec)


def _factors(Q, delta) -> list:
    """Q followed by every L whose eps^{-1} enters delta_Q, degree descending."""
    out = []
    stack = [p for p in delta[Q].parts if sum(p) >= 2]
    while stack:
        L = stack.pop()
        out.append(L)
        stack.extend(p for p in delta[L].parts if sum(p) >= 2)
    out.sort(key=lambda L: (-sum(L), tuple(-x for x in L)))
    return [Q] + out


def delta_product(entry: DeltaEntry, majorant: MajorantData):
    with _ctx(majorant.prec):
        v = mpfr(1)
        for L in entry.factors:
            v = v / majorant.eps[L].value
    return v


def theta_of(tuples, field):
    """theta with 4 theta = min |lambda_{k,p}|."""
    m = min(field.abs(field.convert(x)) for t in tuples for x in t)
    return m / 4, m


@dataclass
class CountingReport:
    m: int
    j: int
    omega_m: object
    theta: object
    rows: list  # (Q, count, bound, ok)
    siegel_pairs: list  # (Q, L, |Q-L|, ok)

    @property
    def violations(self) -> int:
        return sum(1 for r in self.rows if not r[3]) + sum(1 for p in self.siegel_pairs if not p[3])


def counting_check(majorant: MajorantData, tuples, m: int, j: int, field) -> CountingReport:
    """Count factors with eps_L < theta omega(m) and i_L = j in every stored
    decomposition and compare with 0 (|Q| <= m) or 2|Q|/m - 1; check that
    comparable counted factors with admissible difference are >= m apart."""
    theta, min_mod = theta_of(tuples, field)
    if min_mod > 1:
        raise ThetaOutOfRange(min_mod)
    prof = omega_profile(tuples, max(m, 2), field, OmegaVariant.SimultaneousMinMax, out_precision=majorant.prec,
                         extra_bits=field.precision or 0)
    w = prof[m]
    with _ctx(majorant.prec):
        thr = mpfr(theta) * w
    rows, pairs = [], []
    for Q, entry in sorted(majorant.delta.items(), key=lambda kv: gradlex_key(kv[0])):
        counted = [L for L in entry.factors if majorant.eps[L].value < thr and majorant.eps[L].j == j]
        dq = sum(Q)
        if dq <= m:
            ok = len(counted) == 0
            bound = 0
        else:
            bound = mpq(2 * dq, m) - 1
            ok = len(counted) <= bound
        rows.append((Q, len(counted), bound, ok))
        for A, B in itertools.permutations(counted, 2):
            diff = tuple(a - b for a, b in zip(A, B))
            if any(x < 0 for x in diff) or not any(diff):
                continue
            if sum(diff) >= 2 and diff not in majorant.eps:
                continue  # resonant difference: no separation claimed
            pairs.append((A, B, sum(diff), sum(diff) >= m))
    return CountingReport(m, j, w, theta, rows, pairs)


@dataclass
class CertificationReport:
    rows: list  # (Q, ||phi_Q||, bound or None, ok)
    norm: str

    @property
    def all_pass(self) -> bool:
        return all(r[3] for r in self.rows)


def certify_coefficients(result, normalized_germs: Sequence[Germ], majorant: MajorantData, norm: str = "sup",
                         rel_slack: float = 1e-30) -> CertificationReport:
    """||phi_Q|| <= alpha_{|Q|} delta_Q for every admissible Q; simultaneously
    resonant Q must carry a zero coefficient."""
    with _ctx(majorant.prec):
        factor = 1 + mpfr(rel_slack)  # in MPFR: 1 + 1e-30 is 1.0 as a float
    for k, g in enumerate(normalized_germs):
        for L in g.support():
            v = coeff_norm(g, L, norm)
            if v > factor:
                raise NotNormalized((k, L), v)
    phi = result.phi if hasattr(result, "phi") else result
    field = phi.field
    rows = []
    top = min(phi.N, majorant.mMax)
    with _ctx(majorant.prec):
        for Q in multi_indices_upto(phi.n, 2, top):
            v = coeff_norm(phi, Q, norm, majorant.prec)
            if Q in majorant.delta:
                bound = majorant.alpha[sum(Q) - 1] * majorant.delta[Q].value
                rows.append((Q, v, bound, bool(v <= bound * factor)))
            else:
                rows.append((Q, v, None, all(field.is_zero(phi.coeff(Q, j)) for j in range(phi.n))))
    return CertificationReport(rows, norm)


# -- report -----------------------------------------------------------------

@dataclass
class BrjunoReport:
    omega_tables: dict  # variant -> {m: omega(m)}
    b_partials: list  # [(nu, B_nu)]
    rg_partials: list  # [(k, R_k, Gamma_k)]
    theta: object
    cremer_indicator: dict
    inequality_checks: InequalityReport | None
    nu_max: int


def brjuno_report(tuples, field, mMax: int, nu_max: int | None = None, variants: Sequence[str] = ("SimultaneousMinMax",),
                  omega_override=None, prec: int = SERIES_PRECISION) -> BrjunoReport:
    """Omega tables, B/R/Gamma partial sums and the inequality block.

    ``omega_override`` (a constant) replaces the computed omega for the
    series part.  Divisors are evaluated at twice the working precision.
    """
    if nu_max is None:
        nu_max = max(0, mMax.bit_length() - 2)
    M = max(mMax, 2 ** (nu_max + 1))
    extra = field.precision or 0
    tables = {}
    for v in variants:
        prof = omega_profile(tuples, M, field, v, out_precision=prec, extra_bits=extra)
        tables[OmegaVariant(v).value] = prof
    main = tables[OmegaVariant(variants[0]).value]
    if omega_override is not None:
        seq = OmegaSequence.constant(omega_override, M, prec)
    else:
        seq = OmegaSequence.from_profile(main, prec)
    b = list(enumerate(b_trajectory(seq, nu_max, prec)))
    cps = [2 ** (i + 1) - 1 for i in range(nu_max + 1)]
    rg = rg_trajectory(seq, cps, prec)
    theta = theta_of(tuples, field)[0]
    ineq = appendix_inequalities(seq, nu_max, prec=prec) if seq.length >= 2 ** (nu_max + 1) else None
    return BrjunoReport(tables, b, rg, theta, cremer_indicator(main), ineq, nu_max)
