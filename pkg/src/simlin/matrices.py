"""Small dense matrices over a scalar field, stored as tuples of row tuples."""

from __future__ import annotations

from typing import Sequence

from .errors import SingularMatrix

Matrix = tuple  # tuple[tuple[scalar, ...], ...]


def identity(field, n: int) -> Matrix:
    return tuple(tuple(field.one if i == j else field.zero for j in range(n)) for i in range(n))


def zeros(field, rows: int, cols: int) -> Matrix:
    return tuple(tuple(field.zero for _ in range(cols)) for _ in range(rows))


def diag(field, values: Sequence) -> Matrix:
    n = len(values)
    return tuple(tuple(values[i] if i == j else field.zero for j in range(n)) for i in range(n))


def shape(a: Matrix) -> tuple[int, int]:
    return len(a), (len(a[0]) if a else 0)


def matmul(field, a: Matrix, b: Matrix) -> Matrix:
    with field.working():
        bt = tuple(zip(*b))
        out = []
        for row in a:
            r = []
            for col in bt:
                acc = field.zero
                for x, y in zip(row, col):
                    acc = acc + x * y
                r.append(acc)
            out.append(tuple(r))
    return tuple(out)


def matvec(field, a: Matrix, v: Sequence) -> tuple:
    with field.working():
        out = []
        for row in a:
            acc = field.zero
            for x, y in zip(row, v):
                acc = acc + x * y
            out.append(acc)
    return tuple(out)


def sub(field, a: Matrix, b: Matrix) -> Matrix:
    with field.working():
        return tuple(tuple(x - y for x, y in zip(ra, rb)) for ra, rb in zip(a, b))


def scale(field, c, a: Matrix) -> Matrix:
    with field.working():
        return tuple(tuple(c * x for x in row) for row in a)


def transpose(a: Matrix) -> Matrix:
    return tuple(zip(*a))


def max_abs(field, a: Matrix):
    """Largest entry modulus (0 for an empty matrix)."""
    best = None
    for row in a:
        for x in row:
            v = field.abs(x)
            if best is None or v > best:
                best = v
    return best if best is not None else field.abs(field.zero)


def is_zero_matrix(field, a: Matrix, tol=None) -> bool:
    if tol is None:
        return all(field.is_zero(x) for row in a for x in row)
    return all(field.abs(x) <= tol for row in a for x in row)


def _pivot(field, rows, col, start, tol):
    """Row index of the pivot in ``col`` from ``start`` on, or None."""
    if field.kind == "exact" and tol is None:
        for r in range(start, len(rows)):
            if not field.is_zero(rows[r][col]):
                return r
        return None
    best, best_val = None, None
    for r in range(start, len(rows)):
        v = field.abs(rows[r][col])
        if best_val is None or v > best_val:
            best, best_val = r, v
    if best is None:
        return None
    if tol is not None:
        if best_val <= tol:
            return None
    elif field.is_zero(rows[best][col]):
        return None
    return best


def rref(field, a: Matrix, tol=None) -> tuple[list[list], list[int]]:
    """Reduced row echelon form and pivot columns.

    ``tol`` overrides the field's zero policy for pivot decisions (used for
    scale-aware rank decisions).
    """
    rows = [list(r) for r in a]
    m, n = shape(a)
    pivots: list[int] = []
    r = 0
    with field.working():
        for c in range(n):
            if r >= m:
                break
            p = _pivot(field, rows, c, r, tol)
            if p is None:
                continue
            rows[r], rows[p] = rows[p], rows[r]
            inv = field.one / rows[r][c]
            rows[r] = [x * inv for x in rows[r]]
            rows[r][c] = field.one
            for i in range(m):
                if i != r:
                    f = rows[i][c]
                    if f != field.zero:
                        rows[i] = [x - f * y for x, y in zip(rows[i], rows[r])]
                        rows[i][c] = field.zero
            pivots.append(c)
            r += 1
    return rows, pivots


def rank(field, a: Matrix, tol=None) -> int:
    return len(rref(field, a, tol)[1])


def nullspace(field, a: Matrix, tol=None) -> list[tuple]:
    """Basis of {x : a x = 0}; each basis vector has a 1 in one free coordinate."""
    m, n = shape(a)
    rows, pivots = rref(field, a, tol)
    free = [c for c in range(n) if c not in pivots]
    basis = []
    with field.working():
        for fcol in free:
            v = [field.zero] * n
            v[fcol] = field.one
            for i, pc in enumerate(pivots):
                v[pc] = -rows[i][fcol]
            basis.append(tuple(v))
    return basis


def inverse(field, a: Matrix) -> Matrix:
    n, n2 = shape(a)
    if n != n2:
        raise ValueError("inverse of a non-square matrix")
    aug = tuple(tuple(row) + tuple(identity(field, n)[i]) for i, row in enumerate(a))
    rows, pivots = rref(field, aug)
    if pivots[:n] != list(range(n)) or len(pivots) < n:
        raise SingularMatrix("matrix is singular under the active zero policy")
    return tuple(tuple(rows[i][n:]) for i in range(n))


def det(field, a: Matrix):
    n = len(a)
    rows = [list(r) for r in a]
    result = field.one
    with field.working():
        for c in range(n):
            p = _pivot(field, rows, c, c, None)
            if p is None:
                return field.zero
            if p != c:
                rows[c], rows[p] = rows[p], rows[c]
                result = -result
            piv = rows[c][c]
            result = result * piv
            inv = field.one / piv
            for i in range(c + 1, n):
                f = rows[i][c] * inv
                if f != field.zero:
                    rows[i] = [x - f * y for x, y in zip(rows[i], rows[c])]
    return result


def is_invertible(field, a: Matrix) -> bool:
    return not field.is_zero(det(field, a))


def is_diagonal(field, a: Matrix, tol=None) -> bool:
    for i, row in enumerate(a):
        for j, x in enumerate(row):
            if i != j:
                if tol is None:
                    if not field.is_zero(x):
                        return False
                elif field.abs(x) > tol:
                    return False
    return True


def diagonal(a: Matrix) -> tuple:
    return tuple(a[i][i] for i in range(len(a)))


def charpoly(field, a: Matrix) -> list:
    """Coefficients c_0..c_n of det(xI - a), c_n = 1 (Faddeev-LeVerrier)."""
    n = len(a)
    coeffs = [field.zero] * (n + 1)
    coeffs[n] = field.one
    m = zeros(field, n, n)
    with field.working():
        for k in range(1, n + 1):
            # M_k = A M_{k-1} + c_{n-k+1} I
            prev = matmul(field, a, m)
            c = coeffs[n - k + 1]
            m = tuple(tuple(prev[i][j] + (c if i == j else field.zero) for j in range(n)) for i in range(n))
            am = matmul(field, a, m)
            tr = field.zero
            for i in range(n):
                tr = tr + am[i][i]
            coeffs[n - k] = -tr / field.convert(k)
    return coeffs
