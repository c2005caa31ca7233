"""Exact linear algebra over the rationals (and a little over polynomials).

Matrices are plain lists of rows of Fractions. Everything is done by
fraction-free-enough Gaussian elimination on exact rationals; there is no
pivoting heuristic to worry about because there is no rounding.
"""

from __future__ import annotations

from fractions import Fraction

from .poly import Poly

__all__ = [
    "identity",
    "mat_mul",
    "mat_vec",
    "rref",
    "rank",
    "nullspace",
    "solve",
    "right_inverse",
    "left_inverse",
    "inverse",
    "poly_mat_inverse",
]


def identity(n):
    return [[Fraction(int(i == j)) for j in range(n)] for i in range(n)]


def mat_mul(a, b):
    if a and b and len(a[0]) != len(b):
        raise ValueError("matrix shape mismatch")
    cols = len(b[0]) if b else 0
    return [
        [sum((row[k] * b[k][j] for k in range(len(b))), Fraction(0)) for j in range(cols)]
        for row in a
    ]


def mat_vec(a, v):
    return [sum((row[k] * v[k] for k in range(len(v))), Fraction(0)) for row in a]


def rref(a):
    """Reduced row echelon form. Returns (rows, pivot column indices)."""
    rows = [[Fraction(x) for x in row] for row in a]
    nrows = len(rows)
    ncols = len(rows[0]) if rows else 0
    pivots = []
    r = 0
    for c in range(ncols):
        pivot_row = next((i for i in range(r, nrows) if rows[i][c] != 0), None)
        if pivot_row is None:
            continue
        rows[r], rows[pivot_row] = rows[pivot_row], rows[r]
        inv = 1 / rows[r][c]
        rows[r] = [x * inv for x in rows[r]]
        for i in range(nrows):
            if i != r and rows[i][c] != 0:
                factor = rows[i][c]
                rows[i] = [x - factor * y for x, y in zip(rows[i], rows[r])]
        pivots.append(c)
        r += 1
        if r == nrows:
            break
    return rows, pivots


def rank(a):
    if not a or not a[0]:
        return 0
    return len(rref(a)[1])


def nullspace(a):
    """Basis of the right kernel, one vector per free column."""
    if not a:
        return []
    ncols = len(a[0])
    rows, pivots = rref(a)
    free = [c for c in range(ncols) if c not in pivots]
    basis = []
    for f in free:
        v = [Fraction(0)] * ncols
        v[f] = Fraction(1)
        for r, c in enumerate(pivots):
            v[c] = -rows[r][f]
        basis.append(v)
    return basis


def solve(a, b):
    """One solution of A x = b, or None if inconsistent."""
    if not a:
        return [] if all(x == 0 for x in b) else None
    ncols = len(a[0])
    augmented = [row + [bv] for row, bv in zip(a, b)]
    rows, pivots = rref(augmented)
    if ncols in pivots:
        return None
    x = [Fraction(0)] * ncols
    for r, c in enumerate(pivots):
        x[c] = rows[r][ncols]
    return x


def right_inverse(a):
    """X with A X = I (exists iff A is surjective), or None."""
    m = len(a)
    cols = []
    for j in range(m):
        e = [Fraction(int(i == j)) for i in range(m)]
        x = solve(a, e)
        if x is None:
            return None
        cols.append(x)
    n = len(a[0]) if a else 0
    return [[cols[j][i] for j in range(m)] for i in range(n)]


def left_inverse(a):
    """X with X A = I (exists iff A is injective), or None."""
    at = [list(col) for col in zip(*a)] if a else []
    r = right_inverse(at)
    if r is None:
        return None
    return [list(col) for col in zip(*r)] if r else []


def inverse(a):
    n = len(a)
    if any(len(row) != n for row in a):
        return None
    inv = right_inverse(a)
    if inv is None:
        return None
    return inv


def _poly_det(a):
    n = len(a)
    if n == 0:
        return None
    if n == 1:
        return a[0][0]
    # cofactor expansion along the first column; fine for the small blocks here
    total = None
    for i in range(n):
        entry = a[i][0]
        if entry.is_zero():
            continue
        minor = [row[1:] for r, row in enumerate(a) if r != i]
        sub = _poly_det(minor)
        piece = entry * sub if (-1) ** i == 1 else -(entry * sub)
        total = piece if total is None else total + piece
    if total is None:
        return Poly.zero(a[0][0].nvars)
    return total


def poly_mat_inverse(a):
    """Inverse of a square polynomial matrix with constant nonzero determinant.

    Returns None when the determinant is not a nonzero constant (the matrix is
    then not invertible over the polynomial ring).
    """
    n = len(a)
    if n == 0:
        return []
    det = _poly_det(a)
    if det.is_zero() or not det.is_constant():
        return None
    scale = 1 / det.constant_value()
    adj = []
    for i in range(n):
        row = []
        for j in range(n):
            minor = [
                [a[r][c] for c in range(n) if c != i]
                for r in range(n)
                if r != j
            ]
            cof = _poly_det(minor) if minor else Poly.const(a[0][0].nvars, 1)
            if (-1) ** (i + j) == -1:
                cof = -cof
            row.append(cof.scale(scale))
        adj.append(row)
    return adj
