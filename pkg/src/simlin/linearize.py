"""Formal linearization of one germ and of commuting families.

Everything is solved degree by degree.  At degree d the known part of the
conjugacy equation ``f o phi = phi o Lambda`` is

    R_d = [ sum_{|L|>=2} f_L phi^L ]_d

(the powers of phi only need degrees < d), and the unknown phi_d satisfies

    phi_d(Lambda z) - Lambda phi_d = R_d.

For a lower-bidiagonal Lambda the left side is triangular in lex order
(substituting ``Lambda z`` only moves weight towards earlier coordinates),
so the coefficients are found by forward substitution over (Q, j).
A position that must stay zero (resonant, or outside the current stage of
the sequential algorithm) is checked afterwards through the residual of the
full equation; a nonzero residual is an obstruction.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import gmpy2

from . import matrices as mx
from .errors import DimensionMismatch, NotCommuting, NotJordanForm
from .jordan import check_form
from .resonance import ResonanceTable, resonance_table
from .series import (
    Germ,
    PowerTable,
    _axpy_into,
    _clean,
    _empty_parts,
    codec,
    germ_compose,
    germ_conjugate,
    germ_from_graded,
    multi_indices,
    outer_higher_at,
    scale_germ,
    coeff_norm,
)

LINEARIZED = "Linearized"
OBSTRUCTED = "Obstructed"


@dataclass(frozen=True)
class Obstruction:
    Q: tuple
    j: int  # 0-based coordinate
    residual: object
    germ: int | None = None  # 0-based germ index whose equation fails
    stage: int | None = None  # sequential stage (0-based), if any


@dataclass
class LinearizationResult:
    phi: Germ
    status: str
    obstructions: list = dc_field(default_factory=list)
    degree_reached: int = 1
    near_misses: list = dc_field(default_factory=list)

    @property
    def linearized(self) -> bool:
        return self.status == LINEARIZED


class HomologicalOperator:
    """``T(phi_d) = phi_d(Lambda z) - Lambda phi_d`` for lower-bidiagonal Lambda."""

    def __init__(self, Lam, field, n: int, N: int):
        self.field = field
        self.n, self.N = n, N
        self.lam = [Lam[i][i] for i in range(n)]
        self.sub = [Lam[i][i - 1] if i > 0 else field.zero for i in range(n)]
        self.jordan = any(not field.is_zero(s) for s in self.sub)
        self.cd = codec(n, N)
        self._expand: dict[int, dict] = {}
        self._mono: dict[int, object] = {}

    def monomial(self, code: int):
        """Lambda^Q (diagonal part)."""
        v = self._mono.get(code)
        if v is None:
            Q = self.cd.decode(code)
            v = self.field.one
            for x, q in zip(self.lam, Q):
                for _ in range(q):
                    v = v * x
            self._mono[code] = v
        return v

    def expand(self, code: int) -> dict:
        """Coefficients of (Lambda z)^P by monomial code (P included)."""
        got = self._expand.get(code)
        if got is not None:
            return got
        if not self.jordan:
            got = {code: self.monomial(code)}
        else:
            P = self.cd.decode(code)
            got = {0: self.field.one}
            units = self.cd.units
            for i, p in enumerate(P):
                factor = {units[i]: self.lam[i]}
                if i > 0 and not self.field.is_zero(self.sub[i]):
                    factor[units[i - 1]] = self.sub[i]
                for _ in range(p):
                    nxt: dict = {}
                    for ka, xa in got.items():
                        for kb, xb in factor.items():
                            k = ka + kb
                            nxt[k] = nxt[k] + xa * xb if k in nxt else xa * xb
                    got = nxt
        self._expand[code] = got
        return got

    def apply(self, phi_d: list[dict]) -> list[dict]:
        out = [dict() for _ in range(self.n)]
        for j in range(self.n):
            for code, c in phi_d[j].items():
                for k, s in self.expand(code).items():
                    out[j][k] = out[j][k] + c * s if k in out[j] else c * s
            _axpy_into(out[j], -self.lam[j], phi_d[j])
            if j > 0 and not self.field.is_zero(self.sub[j]):
                _axpy_into(out[j], -self.sub[j], phi_d[j - 1])
        return out


def _solve_degree(field, n: int, d: int, ops: list[HomologicalOperator], rhs: list[list[dict]], choose: Callable):
    """Forward substitution for phi_d.

    ``choose(Q, j)`` names the germ whose equation determines phi_{Q,j}, or
    None to force the coefficient to zero.  Returns phi_d and, per germ, the
    residual ``R - T(phi_d)`` (nonzero entries only).
    """
    cd = ops[0].cd
    phi = [dict() for _ in range(n)]
    # contributions of already-fixed phi_{P,j} to later monomials, per germ
    pushed = [[dict() for _ in range(n)] for _ in ops]
    zero = field.zero
    for Q in multi_indices(n, d):
        code = cd.encode(Q)
        for j in range(n):
            k = choose(Q, j)
            if k is None:
                continue
            op = ops[k]
            val = rhs[k][j].get(code, zero) - pushed[k][j].get(code, zero)
            if j > 0 and op.jordan:
                prev = phi[j - 1].get(code)
                if prev is not None:
                    val = val + op.sub[j] * prev
            val = val / (op.monomial(code) - op.lam[j])
            if field.is_zero(val):
                continue
            phi[j][code] = val
            for kk, o in enumerate(ops):
                if not o.jordan:
                    continue
                acc = pushed[kk][j]
                for c2, s in o.expand(code).items():
                    if c2 != code:
                        acc[c2] = acc[c2] + val * s if c2 in acc else val * s
    residuals = []
    for k, op in enumerate(ops):
        T = op.apply(phi)
        res = []
        for j in range(n):
            part = dict(rhs[k][j])
            for c2, v in T[j].items():
                part[c2] = part[c2] - v if c2 in part else -v
            res.append(_clean(field, part))
        residuals.append(res)
    return phi, residuals


def _check_family(germs: Sequence[Germ]):
    if not germs:
        raise ValueError("need at least one germ")
    g0 = germs[0]
    for g in germs[1:]:
        if (g.n, g.N) != (g0.n, g0.N):
            raise DimensionMismatch("germs must share n and N")
        if g.field != g0.field:
            raise DimensionMismatch("germs must share the scalar field")
    report = check_form([g.linear for g in germs], g0.field)
    if not report.is_almost_sim_jordan:
        raise NotJordanForm("linear parts are not almost in simultaneous Jordan form", report.violations)


def _resonances(germs: Sequence[Germ], resonances: ResonanceTable | None) -> ResonanceTable:
    tuples = [list(mx.diagonal(g.linear)) for g in germs]
    if resonances is not None:
        if len(resonances.tuples) != len(tuples) or resonances.mMax < germs[0].N:
            raise ValueError("resonance table does not cover these germs up to their truncation degree")
        return resonances
    if germs[0].N < 2:
        return ResonanceTable(tuples, 1, [[[] for _ in range(germs[0].n)] for _ in tuples], [[] for _ in range(germs[0].n)])
    return resonance_table(tuples, germs[0].N, germs[0].field)


def commutation_report(germs: Sequence[Germ]) -> tuple[list, list]:
    """(failures, near_misses) for all pairs.

    failures: (p, q, degree, max |coefficient|) for non-commuting pairs.
    near_misses: (p, q, Q, j, |c|) for commutator coefficients with
    tol/10 < |c| <= 10 tol (floating mode only).
    """
    field = germs[0].field
    tol = field.policy.tol if field.policy.mode == "tolerance" else None
    failures, near = [], []
    for p, q in itertools.combinations(range(len(germs)), 2):
        a = germ_compose(germs[p], germs[q])
        b = germ_compose(germs[q], germs[p])
        worst, first_deg = None, None
        with field.working():
            for j in range(a.n):
                keys = [(Q, a.linear[j][Q.index(1)], b.linear[j][Q.index(1)]) for Q in _units(a.n)]
                keys += [(Q, a.higher[j].get(Q, field.zero), b.higher[j].get(Q, field.zero)) for Q in set(a.higher[j]) | set(b.higher[j])]
                for Q, x, y in keys:
                    diff = x - y
                    v = field.abs(diff)
                    if tol is not None and tol / 10 < v <= 10 * tol:
                        near.append((p, q, Q, j, v))
                    if not field.is_zero(diff):
                        if first_deg is None or sum(Q) < first_deg:
                            first_deg = sum(Q)
                        if worst is None or v > worst:
                            worst = v
        if first_deg is not None:
            failures.append((p, q, first_deg, worst))
    return failures, near


def _units(n):
    return [tuple(1 if k == i else 0 for k in range(n)) for i in range(n)]


def _precheck_commuting(germs):
    if len(germs) < 2:
        return []
    failures, near = commutation_report(germs)
    if failures:
        p, q, deg, worst = min(failures, key=lambda t: (t[2], t[0], t[1]))
        raise NotCommuting((p, q), deg, worst, near)
    return near


def _phi_graded(n, N, field):
    cd = codec(n, N)
    inner = [_empty_parts(N) for _ in range(n)]
    for j in range(n):
        inner[j][1] = {cd.units[j]: field.one}
    return inner


def _record(obs, residuals, germ_ids, stage=None, cd=None):
    for k, res in enumerate(residuals):
        for j, part in enumerate(res):
            for code, v in sorted(part.items()):
                obs.append(Obstruction(cd.decode(code), j, v, germ_ids[k], stage))


def _linearize_with(germs: Sequence[Germ], free: Callable, choose_for: Callable, on_obstruction: str, germ_ids, stage=None):
    """Run the degree loop for ``germs`` sharing one unknown phi."""
    if on_obstruction not in ("stop", "continue"):
        raise ValueError("on_obstruction must be 'stop' or 'continue'")
    g0 = germs[0]
    n, N, field = g0.n, g0.N, g0.field
    cd = codec(n, N)
    inner = _phi_graded(n, N, field)
    ops = [HomologicalOperator(g.linear, field, n, N) for g in germs]
    terms = [g.outer_terms() for g in germs]
    exps = {L for t in terms for L, _ in t}
    obs: list[Obstruction] = []
    reached = 1
    with field.working():
        table = PowerTable(field, n, N, inner, exps)
        for d in range(2, N + 1):
            table.advance(d)
            rhs = [outer_higher_at(field, n, t, table, d) for t in terms]
            phi_d, residuals = _solve_degree(field, n, d, ops, rhs, choose_for)
            for j in range(n):
                inner[j][d] = _clean(field, phi_d[j])
            reached = d
            if any(any(part for part in res) for res in residuals):
                _record(obs, residuals, germ_ids, stage, cd)
                if on_obstruction == "stop":
                    break
    phi = germ_from_graded(n, N, field, inner)
    return phi, obs, reached


def formal_linearize(f: Germ, resonances: ResonanceTable | None = None, on_obstruction: str = "stop") -> LinearizationResult:
    """Non-resonant formal linearization of a single germ.

    The linear part must be diagonal or lower bidiagonal with repeated
    eigenvalues under nonzero subdiagonal entries.  With
    ``on_obstruction="continue"`` resonant coefficients stay zero and the
    recursion goes on past obstructed degrees (the conjugacy then fails
    there, but the resulting phi is still defined degree by degree).
    """
    _check_family([f])
    table = _resonances([f], resonances)

    def choose(Q, j):
        return None if table.is_resonant(0, Q, j) else 0

    phi, obs, reached = _linearize_with([f], None, choose, on_obstruction, [0])
    _assert_non_resonant(phi, table, [0])
    return LinearizationResult(phi, OBSTRUCTED if obs else LINEARIZED, obs, reached)


def simul_linearize_sequential(
    germs: Sequence[Germ],
    resonances: ResonanceTable | None = None,
    on_obstruction: str = "stop",
) -> LinearizationResult:
    """Linearize f_1 non-resonantly, conjugate the rest, then linearize the
    conjugated f_s using only monomials resonant for all earlier linear
    parts and not for Lambda_s; the product phi_1 o ... o phi_h is returned."""
    germs = list(germs)
    _check_family(germs)
    near = _precheck_commuting(germs)
    table = _resonances(germs, resonances)
    g0 = germs[0]
    n, N, field = g0.n, g0.N, g0.field
    Phi = Germ.identity(n, N, field)
    current = list(germs)
    obs: list[Obstruction] = []
    reached = N
    for s in range(len(germs)):
        earlier = list(range(s))

        def choose(Q, j, s=s, earlier=earlier):
            if table.is_sim_resonant(Q, j, earlier) and not table.is_resonant(s, Q, j):
                return 0
            return None

        phi_s, obs_s, reached_s = _linearize_with([current[s]], None, choose, on_obstruction, [s], stage=s)
        obs.extend(obs_s)
        if obs_s:
            reached = min(reached, reached_s)
            if on_obstruction == "stop":
                Phi = germ_compose(Phi, phi_s)
                break
        if phi_s.is_linear():
            continue
        Phi = germ_compose(Phi, phi_s)
        for t in range(s + 1, len(germs)):
            current[t] = germ_conjugate(current[t], phi_s)
    _assert_non_resonant(Phi, table, range(len(germs)))
    return LinearizationResult(Phi, OBSTRUCTED if obs else LINEARIZED, obs, reached, near)


def simul_linearize_direct(
    germs: Sequence[Germ],
    resonances: ResonanceTable | None = None,
    on_obstruction: str = "stop",
) -> LinearizationResult:
    """One degree-by-degree pass: each non simultaneously resonant (Q, j)
    is solved from the germ with the largest divisor |Lambda_k^Q - lambda_{k,j}|
    (smallest k on ties); afterwards every germ's residual must vanish."""
    germs = list(germs)
    _check_family(germs)
    near = _precheck_commuting(germs)
    table = _resonances(germs, resonances)
    field = germs[0].field
    h = len(germs)
    ops_lam = [[g.linear[i][i] for i in range(g.n)] for g in germs]
    cache: dict = {}

    def choose(Q, j):
        key = (Q, j)
        if key in cache:
            return cache[key]
        if table.is_sim_resonant(Q, j):
            cache[key] = None
            return None
        best, best_v = 0, None
        with field.working():
            for k in range(h):
                p = field.one
                for x, q in zip(ops_lam[k], Q):
                    for _ in range(q):
                        p = p * x
                v = field.abs(p - ops_lam[k][j])
                if best_v is None or v > best_v:
                    best, best_v = k, v
        cache[key] = best
        return best

    phi, obs, reached = _linearize_with(germs, None, choose, on_obstruction, list(range(h)))
    _assert_non_resonant(phi, table, range(h))
    return LinearizationResult(phi, OBSTRUCTED if obs else LINEARIZED, obs, reached, near)


def _assert_non_resonant(phi: Germ, table: ResonanceTable, among):
    among = list(among)
    for j, Q, c in phi.terms():
        if table.is_sim_resonant(Q, j, among):
            raise AssertionError(f"linearization has a coefficient at simultaneously resonant {(Q, j)}")


def verify_conjugacy(germs: Sequence[Germ], phi: Germ, out_precision: int | None = None) -> list:
    """Per germ, sup over coefficients of |phi^{-1} o f_k o phi - Lambda_k z|."""
    out = []
    for f in germs:
        field = f.field
        c = germ_conjugate(f, phi)
        worst = field.abs(field.zero, out_precision)
        with field.working():
            for j in range(f.n):
                for i in range(f.n):
                    v = field.abs(c.linear[j][i] - f.linear[j][i], out_precision)
                    worst = v if v > worst else worst
                for Q, x in c.higher[j].items():
                    v = field.abs(x, out_precision)
                    worst = v if v > worst else worst
        out.append(worst)
    return out


# -- sigma rescaling ------------------------------------------------------------

def _root_upper(r, m: int):
    """Smallest convenient rational >= r**(1/m) (exact when r is a perfect power)."""
    r = gmpy2.mpq(r)
    if m == 1 or r == 0:
        return r
    a, ea = gmpy2.iroot(gmpy2.mpz(r.numerator), m)
    b, eb = gmpy2.iroot(gmpy2.mpz(r.denominator), m)
    if ea and eb:
        return gmpy2.mpq(a, b)
    with gmpy2.context(gmpy2.get_context(), precision=160, round=gmpy2.RoundUp):
        v = gmpy2.root(gmpy2.mpfr(r), m)
    q = gmpy2.mpq(v) * (1 + gmpy2.mpq(1, 1 << 100))
    while q**m < r:
        q *= 1 + gmpy2.mpq(1, 1 << 60)
    return q


def _sigma_of(f: Germ, norm: str = "sup"):
    """sigma = max(1, rho^2), rho = max_L ||f_L||^{1/|L|}."""
    field = f.field
    if field.kind == "exact":
        best = gmpy2.mpq(1)
        for L in f.support():
            if norm == "sup":
                n2 = max(f.coeff(L, j).norm2() for j in range(f.n))
                cand = _root_upper(n2, sum(L))  # (||f_L||^2)^{1/|L|} = rho_L^2
            else:
                v = coeff_norm(f, L, norm, 200)
                cand = _root_upper(gmpy2.mpq(v) ** 2 * (1 + gmpy2.mpq(1, 1 << 150)), sum(L))
            best = max(best, cand)
        return field.convert(best)
    with field.working():
        best = gmpy2.mpfr(1)
        for L in f.support():
            v = coeff_norm(f, L, norm, field.precision)
            cand = v ** (gmpy2.mpfr(2) / sum(L))
            best = max(best, cand)
        return field.convert(best)


def sigma_normalize(f: Germ, norm: str = "sup") -> tuple[Germ, object]:
    """(sigma f(z/sigma), sigma) with sigma = max(1, rho^2)."""
    sigma = _sigma_of(f, norm)
    if sigma == f.field.one:
        return f, sigma
    return scale_germ(f, sigma), sigma


def sigma_normalize_family(germs: Sequence[Germ], norm: str = "sup") -> tuple[list[Germ], object]:
    """Common sigma for a family (the largest individual one)."""
    sigmas = [_sigma_of(g, norm) for g in germs]
    field = germs[0].field
    sigma = sigmas[0]
    for s in sigmas[1:]:
        if _real(s) > _real(sigma):
            sigma = s
    if sigma == field.one:
        return list(germs), sigma
    return [scale_germ(g, sigma) for g in germs], sigma


def _real(x):
    return x.re if hasattr(x, "re") else x.real
