"""Commuting matrix families: commutation, Jordan-shape checks and
simultaneous diagonalization."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from typing import Sequence

import mpmath

from . import matrices as mx
from .errors import SimlinError, SingularMatrix


class EigenvaluesUnavailable(SimlinError):
    """Exact mode met a characteristic root outside the Gaussian rationals."""


@dataclass
class CommuteReport:
    commute: bool
    pair: tuple[int, int] | None = None
    magnitude: object = None

    def __bool__(self):
        return self.commute


@dataclass
class JordanFormReport:
    is_almost_sim_jordan: bool
    is_sim_jordan: bool
    violations: list = dc_field(default_factory=list)
    epsilon: object = None


@dataclass
class DiagonalizationResult:
    status: str  # "Diagonalized" | "NotDiagonalizable" | "NotCommuting"
    A: tuple | None = None
    index: int | None = None
    pair: tuple[int, int] | None = None
    eigenvalues: list | None = None

    @property
    def ok(self) -> bool:
        return self.status == "Diagonalized"


def _scale(field, mats) -> object:
    best = field.abs(field.one)
    for M in mats:
        v = mx.max_abs(field, M)
        if v > best:
            best = v
    return best


def _zero_tol(field, mats):
    """Scale-aware zero threshold, or None for structural zero."""
    if field.policy.mode == "exact":
        return None
    return field.policy.tol * _scale(field, mats)


def commute_check(fam: Sequence, field) -> CommuteReport:
    """First pair (p, q), p < q, with M_p M_q != M_q M_p."""
    fam = [field.matrix(M) for M in fam]
    tol = _zero_tol(field, fam)
    for p in range(len(fam)):
        for q in range(p + 1, len(fam)):
            C = mx.sub(field, mx.matmul(field, fam[p], fam[q]), mx.matmul(field, fam[q], fam[p]))
            if not mx.is_zero_matrix(field, C, tol):
                return CommuteReport(False, (p, q), mx.max_abs(field, C))
    return CommuteReport(True)


def _same(field, a, b, tol) -> bool:
    with field.working():
        d = a - b
    return field.is_zero(d) if tol is None else field.abs(d) <= tol


def check_form(fam: Sequence, field) -> JordanFormReport:
    """Lower-bidiagonal shape with repeated eigenvalues under nonzero
    subdiagonal entries; ``is_sim_jordan`` also needs one common value for
    all nonzero subdiagonal entries.

    Violations are dicts with 0-based ``matrix``, ``row``, ``col`` and a
    ``reason`` string.
    """
    fam = [field.matrix(M) for M in fam]
    tol = _zero_tol(field, fam)
    violations = []
    sub_values = []

    def nonzero(x):
        return not field.is_zero(x) if tol is None else field.abs(x) > tol

    for k, M in enumerate(fam):
        n = len(M)
        for i in range(n):
            for j in range(n):
                x = M[i][j]
                if j > i and nonzero(x):
                    violations.append({"matrix": k, "row": i, "col": j, "reason": "nonzero entry above the diagonal"})
                elif j < i - 1 and nonzero(x):
                    violations.append({"matrix": k, "row": i, "col": j, "reason": "nonzero entry below the subdiagonal"})
                elif j == i - 1 and nonzero(x):
                    sub_values.append(x)
                    if not _same(field, M[i][i], M[j][j], tol):
                        violations.append(
                            {"matrix": k, "row": i, "col": j, "reason": "nonzero subdiagonal entry between distinct eigenvalues"}
                        )
    is_almost = not violations
    eps = sub_values[0] if sub_values else None
    is_sim = is_almost and all(_same(field, x, eps, tol) for x in sub_values)
    return JordanFormReport(is_almost, is_sim, violations, eps)


def conjugate_family(fam: Sequence, A, field) -> list:
    """[A^{-1} M A for M in fam]."""
    A = field.matrix(A)
    Ainv = mx.inverse(field, A)
    return [mx.matmul(field, Ainv, mx.matmul(field, field.matrix(M), A)) for M in fam]


def verify_conjugation(fam: Sequence, A, field) -> JordanFormReport:
    A = field.matrix(A)
    if not mx.is_invertible(field, A):
        raise SingularMatrix("conjugating matrix is singular")
    return check_form(conjugate_family(fam, A, field), field)


# -- eigenvalues --------------------------------------------------------------

def _to_mp(x):
    """gmpy2 / Gaussian rational scalar -> mpmath mpc (exact conversion)."""
    if hasattr(x, "re") and hasattr(x, "im"):
        re, im = x.re, x.im
        return mpmath.mpc(mpmath.mpf(int(re.numerator)) / int(re.denominator), mpmath.mpf(int(im.numerator)) / int(im.denominator))
    rp, rq = x.real.as_integer_ratio()
    ip, iq = x.imag.as_integer_ratio()
    return mpmath.mpc(mpmath.mpf(int(rp)) / int(rq), mpmath.mpf(int(ip)) / int(iq))


def _poly_roots(coeffs, prec: int):
    """Roots of sum c_k x^k (c_n = 1) at ``prec`` bits."""
    with mpmath.workprec(prec):
        cs = [_to_mp(c) for c in reversed(coeffs)]
        if len(cs) == 2:
            return [-cs[1] / cs[0]]
        steps = 100
        while True:
            try:
                return list(mpmath.polyroots(cs, maxsteps=steps, extraprec=2 * prec))
            except mpmath.libmp.NoConvergence:
                if steps > 3200:
                    raise
                steps *= 2


def _horner(field, coeffs, x):
    acc = field.zero
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def _rationalize(v, max_den=10**12) -> Fraction:
    return Fraction(mpmath.nstr(v, 60, min_fixed=-1, max_fixed=1)).limit_denominator(max_den) if v else Fraction(0)


def eigenvalues(M, field) -> list[tuple[object, int]]:
    """Distinct eigenvalues with algebraic multiplicities, sorted by (re, im).

    Floating mode clusters the characteristic roots (repeated roots are
    only resolved to about ``prec/m`` bits) and takes cluster means.  Exact
    mode rationalizes each root and verifies it by exact deflation.
    """
    M = field.matrix(M)
    n = len(M)
    coeffs = mx.charpoly(field, M)
    if field.kind == "exact":
        return _exact_eigenvalues(field, coeffs, n)
    prec = field.precision
    roots = _poly_roots(coeffs, prec + 32)
    scale = max(1, float(mx.max_abs(field, M)))
    with mpmath.workprec(prec + 32):
        ctol = mpmath.mpf(2) ** (-(prec // (2 * n))) * scale
        clusters: list[list] = []
        for r in roots:
            for cl in clusters:
                if any(abs(r - s) <= ctol for s in cl):
                    cl.append(r)
                    break
            else:
                clusters.append([r])
        out = []
        for cl in clusters:
            mean = sum(cl) / len(cl)
            out.append((mean, len(cl)))
    values = []
    for mean, mult in out:
        values.append((field.convert((_mp_to_str(mean.real), _mp_to_str(mean.imag))), mult))
    values.sort(key=lambda t: (float(t[0].real), float(t[0].imag)))
    return values


def _mp_to_str(x) -> str:
    return mpmath.nstr(x, 90, min_fixed=1, max_fixed=0) if x else "0"


def _exact_eigenvalues(field, coeffs, n):
    approx = _poly_roots(coeffs, 256)
    remaining = list(coeffs)
    found: list[tuple[object, int]] = []
    for r in approx:
        cand = field.convert((_rationalize(r.real), _rationalize(r.imag)))
        if any(cand == v for v, _ in found):
            continue
        mult = 0
        while len(remaining) > 1 and field.is_zero(_horner(field, remaining, cand)):
            remaining = _deflate(field, remaining, cand)
            mult += 1
        if mult:
            found.append((cand, mult))
    if sum(m for _, m in found) != n:
        raise EigenvaluesUnavailable(
            "characteristic polynomial has roots outside Q(i); supply eigenvalues explicitly"
        )
    found.sort(key=lambda t: (t[0].re, t[0].im))
    return found


def _deflate(field, coeffs, root):
    """Divide sum c_k x^k by (x - root); remainder assumed zero."""
    n = len(coeffs) - 1
    out = [field.zero] * n
    acc = field.zero
    for k in range(n, 0, -1):
        acc = acc * root + coeffs[k]
        out[k - 1] = acc
    return out


# -- simultaneous diagonalization ----------------------------------------------

def simultaneous_diagonalize(fam: Sequence, field, eigen_hint: Sequence | None = None) -> DiagonalizationResult:
    """Common eigenbasis A (columns) of a commuting diagonalizable family.

    Splits by eigenspaces of M_1, restricts M_2..M_h to each eigenspace and
    recurses.  ``eigen_hint[k]`` may give the distinct eigenvalues of M_k
    (needed in exact mode when they are not Gaussian rationals).
    Failures are reported in the result, not raised.
    """
    fam = [field.matrix(M) for M in fam]
    if not fam:
        raise ValueError("empty family")
    n = len(fam[0])
    rep = commute_check(fam, field)
    if not rep.commute:
        return DiagonalizationResult("NotCommuting", pair=rep.pair)
    tol = _zero_tol(field, fam)
    ident = mx.identity(field, n)
    columns: list[tuple] = []
    eig_diag: list[list] = [[None] * 0 for _ in fam]
    try:
        blocks = _split(field, fam, 0, list(ident), tol, eigen_hint)
    except _NotDiag as exc:
        return DiagonalizationResult("NotDiagonalizable", index=exc.index)
    for cols, _ in blocks:
        columns.extend(cols)
    # order columns by leading row so an already diagonal family gets A = I
    columns.sort(key=lambda col: next((i for i, x in enumerate(col) if not field.is_zero(x)), n))
    A = mx.transpose(tuple(columns))
    conj = conjugate_family(fam, A, field)
    for k, C in enumerate(conj):
        if not mx.is_diagonal(field, C, tol):
            return DiagonalizationResult("NotDiagonalizable", index=k)
        eig_diag[k] = list(mx.diagonal(C))
    return DiagonalizationResult("Diagonalized", A=A, eigenvalues=eig_diag)


class _NotDiag(Exception):
    def __init__(self, index):
        self.index = index


def _split(field, mats, depth, basis, tol, hint):
    """Return [(columns, eigen-tuple)] spanning span(basis)."""
    if depth >= len(mats):
        return [(basis, ())]
    M = mats[depth]
    m = len(basis)
    # matrix of M restricted to span(basis), in basis coordinates
    R = _restrict(field, M, basis)
    if hint is not None and hint[depth] is not None:
        eig = [(field.convert(v), None) for v in hint[depth]]
    else:
        eig = eigenvalues(R, field)
    out = []
    total = 0
    rtol = None if tol is None else tol * max(1, _scale(field, [R]))
    for lam, mult in eig:
        with field.working():
            S = tuple(tuple(R[i][j] - (lam if i == j else field.zero) for j in range(m)) for i in range(m))
        K = mx.nullspace(field, S, rtol)
        if mult is not None and len(K) != mult:
            raise _NotDiag(depth)
        if not K:
            continue
        total += len(K)
        with field.working():
            sub_basis = [
                tuple(sum((v[c] * basis[c][r] for c in range(m)), field.zero) for r in range(len(basis[0])))
                for v in K
            ]
        out.extend(_split(field, mats, depth + 1, sub_basis, tol, hint))
    if total != m:
        raise _NotDiag(depth)
    return out


def _restrict(field, M, basis):
    """Matrix R with M B = B R for the column basis B (least-effort solve)."""
    B = mx.transpose(tuple(basis))  # n x m
    n, m = mx.shape(B)
    MB = mx.matmul(field, M, B)
    if m == n:
        return mx.matmul(field, mx.inverse(field, B), MB)
    # pick m independent rows of B and solve there
    rows, piv = mx.rref(field, mx.transpose(B))
    sel = piv[:m]
    Bs = tuple(B[i] for i in sel)
    MBs = tuple(MB[i] for i in sel)
    return mx.matmul(field, mx.inverse(field, Bs), MBs)


# -- the two reference pairs --------------------------------------------------

def commuting_pair_not_jordanizable(field, lam=2, eps=1, mu=3, delta=1, beta=1):
    """Lambda, M that commute but admit no common almost-Jordan form."""
    z = 0
    L = [[lam, z, z], [eps, lam, z], [z, z, lam]]
    M = [[mu, z, z], [delta, mu, z], [beta, z, mu]]
    return field.matrix(L), field.matrix(M)


def jordan_pair_not_commuting(field, lam=2, eps=1, mu=3, delta=1, eta=5):
    """Two matrices already in almost simultaneous Jordan form that do not commute."""
    z = 0
    L = [[lam, z, z], [eps, lam, z], [z, eps, lam]]
    M = [[mu, z, z], [delta, mu, z], [z, z, eta]]
    return field.matrix(L), field.matrix(M)
