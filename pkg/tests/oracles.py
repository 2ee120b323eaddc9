"""Independent reference implementations used by the tests.

Everything here is deliberately naive: dense dict polynomials, explicit
enumeration of compositions and partitions, plain linear algebra.
"""

from __future__ import annotations

import itertools
import random
from fractions import Fraction

import gmpy2

from simlin import matrices as mx
from simlin.resonance import eps_Q, resonance_table
from simlin.scalars import GaussianRational
from simlin.series import Germ, germ_compose, germ_inverse, multi_indices_upto


# -- polynomial maps as {Q: c} per component --------------------------------

def poly_mul(field, a: dict, b: dict, N: int) -> dict:
    out: dict = {}
    with field.working():
        for P, x in a.items():
            for R, y in b.items():
                Q = tuple(p + r for p, r in zip(P, R))
                if sum(Q) > N:
                    continue
                out[Q] = out[Q] + x * y if Q in out else x * y
    return out


def germ_to_polys(g: Germ) -> list[dict]:
    polys = [dict() for _ in range(g.n)]
    for j in range(g.n):
        for i in range(g.n):
            e = tuple(1 if k == i else 0 for k in range(g.n))
            if not g.field.is_zero(g.linear[j][i]):
                polys[j][e] = g.linear[j][i]
    for j, Q, c in g.terms():
        polys[j][Q] = c
    return polys


def polys_to_germ(field, n: int, N: int, polys: list[dict]) -> Germ:
    linear = [[field.zero] * n for _ in range(n)]
    terms = []
    for j, p in enumerate(polys):
        for Q, c in p.items():
            if field.is_zero(c):
                continue
            if sum(Q) == 1:
                linear[j][Q.index(1)] = c
            elif 2 <= sum(Q) <= N:
                terms.append((j, Q, c))
    return Germ.from_terms(n, N, field, linear, terms)


def naive_compose(f: Germ, g: Germ) -> Germ:
    """f(g(z)) by expanding every monomial of f with repeated products."""
    field, n, N = f.field, f.n, min(f.N, g.N)
    gp = germ_to_polys(g)
    out = [dict() for _ in range(n)]
    for j, fp in enumerate(germ_to_polys(f)):
        for L, c in fp.items():
            term = {tuple([0] * n): field.one}
            for i, e in enumerate(L):
                for _ in range(e):
                    term = poly_mul(field, term, gp[i], N)
            with field.working():
                for Q, x in term.items():
                    out[j][Q] = out[j][Q] + c * x if Q in out[j] else c * x
    return polys_to_germ(field, n, N, out)


def naive_inverse(f: Germ) -> Germ:
    """Fixed-point iteration psi <- A^{-1}(z - h(psi)), f = Az + h."""
    field, n, N = f.field, f.n, f.N
    Ainv = mx.inverse(field, f.linear)
    h = Germ(n, N, field, mx.identity(field, n), [dict(c) for c in f.higher], check_invertible=False)
    psi = Germ.from_linear(Ainv, N, field)
    for _ in range(N):
        hp = naive_compose(h, psi)  # psi + h(psi)
        with field.working():
            comps = [dict() for _ in range(n)]
            for j in range(n):
                for Q in set(hp.higher[j]) | set(psi.higher[j]):
                    v = hp.higher[j].get(Q, field.zero) - psi.higher[j].get(Q, field.zero)
                    comps[j][Q] = -v
        corr = [dict() for _ in range(n)]
        with field.working():
            for j in range(n):
                for i in range(n):
                    for Q, c in comps[i].items():
                        v = Ainv[j][i] * c
                        corr[j][Q] = corr[j][Q] + v if Q in corr[j] else v
        psi = Germ(n, N, field, Ainv, corr)
    return psi


# -- majorant oracles --------------------------------------------------------

def compositions(m: int, min_parts: int = 1):
    """All ordered compositions of m, via cut-point subsets."""
    for r in range(m):
        for cuts in itertools.combinations(range(1, m), r):
            bounds = (0,) + cuts + (m,)
            parts = tuple(bounds[i + 1] - bounds[i] for i in range(len(bounds) - 1))
            if len(parts) >= min_parts:
                yield parts


def alpha_bruteforce(mMax: int) -> list[int]:
    alpha = {1: 1}
    for m in range(2, mMax + 1):
        total = 0
        for parts in compositions(m, 2):
            prod = 1
            for p in parts:
                prod *= alpha[p]
            total += prod
        alpha[m] = total
    return [alpha[m] for m in range(1, mMax + 1)]


def vector_partitions(Q: tuple, smallest=None):
    """Multisets of nonzero vectors summing to Q, parts in non-increasing
    (degree, lex) order."""
    if not any(Q):
        yield ()
        return
    ranges = [range(q + 1) for q in Q]
    cands = [P for P in itertools.product(*ranges) if any(P)]
    key = lambda P: (sum(P), P)
    for P in cands:
        if smallest is not None and key(P) > key(smallest):
            continue
        rest = tuple(q - p for q, p in zip(Q, P))
        for tail in vector_partitions(rest, P):
            yield (P,) + tail


def delta_bruteforce(tuples, mMax: int, field) -> dict:
    """delta_Q by maximizing over all multiset partitions into >= 2 parts."""
    n = len(tuples[0])
    eps = {}
    for Q in multi_indices_upto(n, 2, mMax):
        try:
            eps[Q] = eps_Q(tuples, Q, field, out_precision=256, extra_bits=field.precision or 0).value
        except Exception:  # simultaneously resonant
            pass
    delta: dict = {}
    with gmpy2.context(gmpy2.get_context(), precision=256):
        for Q in sorted(eps, key=lambda Q: (sum(Q), Q)):
            best = None
            for parts in vector_partitions(Q):
                if len(parts) < 2:
                    continue
                prod = gmpy2.mpfr(1)
                ok = True
                for P in parts:
                    if sum(P) == 1:
                        continue
                    if P not in delta:
                        ok = False
                        break
                    prod *= delta[P]
                if ok and (best is None or prod > best):
                    best = prod
            if best is not None:
                delta[Q] = best / eps[Q]
    return delta


# -- germs commuting with a Jordan matrix ------------------------------------

def commutant_basis(field, Lam, d: int) -> list[list[dict]]:
    """Basis of degree-d homogeneous maps p with p(Lam z) = Lam p(z)."""
    n = len(Lam)
    monos = multi_indices_upto(n, d, d)
    basis = [(j, Q) for j in range(n) for Q in monos]
    index = {b: i for i, b in enumerate(basis)}
    lin = [{tuple(1 if k == i else 0 for k in range(n)): Lam[r][i] for i in range(n) if not field.is_zero(Lam[r][i])} for r in range(n)]
    cols = []
    for j, Q in basis:
        # (Lam z)^Q placed in coordinate j, minus Lam applied to z^Q e_j
        mono = {tuple([0] * n): field.one}
        for i, e in enumerate(Q):
            for _ in range(e):
                mono = poly_mul(field, mono, lin[i], d)
        col = [field.zero] * len(basis)
        with field.working():
            for P, c in mono.items():
                col[index[(j, P)]] = col[index[(j, P)]] + c
            for r in range(n):
                col[index[(r, Q)]] = col[index[(r, Q)]] - Lam[r][j]
        cols.append(col)
    T = tuple(tuple(cols[c][r] for c in range(len(basis))) for r in range(len(basis)))
    out = []
    for v in mx.nullspace(field, T):
        comps = [dict() for _ in range(n)]
        for (j, Q), x in zip(basis, v):
            if not field.is_zero(x):
                comps[j][Q] = x
        out.append(comps)
    return out


def commuting_germ(field, Lam, N: int, rng: random.Random) -> Germ:
    n = len(Lam)
    higher = [dict() for _ in range(n)]
    for d in range(2, N + 1):
        for comps in commutant_basis(field, Lam, d):
            c = field.convert(Fraction(rng.choice([-3, -2, -1, 1, 2, 3]), rng.choice([1, 2, 4])))
            with field.working():
                for j in range(n):
                    for Q, x in comps[j].items():
                        higher[j][Q] = higher[j][Q] + c * x if Q in higher[j] else c * x
    return Germ(n, N, field, Lam, higher)


# -- roundtrip fixtures -------------------------------------------------------

def random_eigen(rng: random.Random) -> GaussianRational:
    """Gaussian rational with denominator 16 and modulus in [0.6, 1.4]."""
    while True:
        re, im = rng.randint(-22, 22), rng.randint(-22, 22)
        r2 = Fraction(re * re + im * im, 256)
        if Fraction(36, 100) <= r2 <= Fraction(196, 100):
            return GaussianRational(Fraction(re, 16), Fraction(im, 16))


def nonresonant_tuples(exact, n: int, h: int, N: int, rng: random.Random) -> list:
    while True:
        tuples = [[random_eigen(rng) for _ in range(n)] for _ in range(h)]
        table = resonance_table(tuples, N, exact)
        if all(not Qs for per in table.per_tuple_per_coord for Qs in per):
            return tuples


def roundtrip_fixture(field, exact, n: int, h: int, N: int, seed: int):
    """(phi, tuples, germs) with germs f_k = phi o Lambda_k o phi^{-1}."""
    from simlin.series import random_germ

    rng = random.Random(seed)
    tuples = nonresonant_tuples(exact, n, h, N, rng)
    phi = random_germ(field, n, N, mx.identity(field, n), rng, terms_per_coord=3, max_degree=5)
    pinv = germ_inverse(phi)
    germs = [germ_compose(phi, germ_compose(Germ(n, N, field, mx.diag(field, [field.convert(x) for x in t])), pinv)) for t in tuples]
    return phi, tuples, germs


# -- random omega sequences ---------------------------------------------------

OMEGA_KINDS = ("drift", "power", "steps", "rotation")


def _geometric_points(rng: random.Random, length: int) -> list[int]:
    out, k = [], 2
    while k <= length:
        out.append(k)
        k = max(k + 1, int(k * (1 + rng.uniform(0.0, 0.08))))
    return out


def random_omega(rng: random.Random, length: int, kind: str | None = None, prec: int = 128):
    """Positive non-increasing omega on 1..length with omega(1) <= 1.

    Mixture (kind chosen uniformly when not given):
      drift     drops exp(-Exp(r)) with probability p at geometric positions
      power     staircase of omega(1) k^-a, a in (0, 3)
      steps     1 to 20 drops at log-uniform positions
      rotation  running min of 2|sin(pi k theta)| / 2, theta uniform
    Returned as an ``OmegaSequence`` (runs of equal values).
    """
    import math

    from simlin.brjuno import OmegaSequence

    kind = kind or rng.choice(OMEGA_KINDS)
    w1 = rng.uniform(0.05, 1.0)
    starts, values = [1], [w1]
    if kind == "drift":
        # drops at geometrically spaced candidates, dense near k=1
        p, r = rng.uniform(0.2, 1.0), rng.uniform(0.5, 50.0)
        logv = math.log(w1)
        for k in _geometric_points(rng, length):
            if rng.random() < p:
                logv -= rng.expovariate(r)
                starts.append(k)
                with gmpy2.context(gmpy2.get_context(), precision=prec):
                    values.append(gmpy2.exp(gmpy2.mpfr(logv)))
    elif kind == "power":
        # staircase sampled from w1 k^-a
        a = rng.uniform(0.01, 3.0)
        for k in _geometric_points(rng, length):
            starts.append(k)
            values.append(w1 * k ** -a)
    elif kind == "steps":
        pos = sorted({int(math.exp(rng.uniform(0, math.log(length)))) for _ in range(rng.randint(1, 20))} - {0, 1})
        v = w1
        for k in pos:
            v *= math.exp(-rng.expovariate(1.0))
            starts.append(k)
            values.append(v)
    elif kind == "rotation":
        theta = rng.random()
        v = w1
        for k in range(2, length + 1):
            s = abs(math.sin(math.pi * k * theta))
            if 0 < s < v:
                v = s
                starts.append(k)
                values.append(v)
    else:
        raise ValueError(kind)
    return OmegaSequence(starts, values, length, prec)


# -- unit-circle eigenvalues --------------------------------------------------

def rotation(field, theta):
    """exp(2 pi i theta) in the bigfloat field; theta an mpfr/float/str."""
    with field.working():
        return gmpy2.exp(2 * gmpy2.const_pi() * gmpy2.mpc(0, 1) * gmpy2.mpfr(theta))


def golden_lambda(field):
    with field.working():
        gamma = (gmpy2.sqrt(gmpy2.mpfr(5)) - 1) / 2
    return rotation(field, gamma)


def unit_circle_tuples(field, rng: random.Random, n: int, h: int) -> list:
    return [[rotation(field, rng.random()) for _ in range(n)] for _ in range(h)]
