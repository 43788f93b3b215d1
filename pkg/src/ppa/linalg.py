"""Exact linear algebra helpers.

Two coefficient domains appear in the solver:

  * Q(t), the field of rational functions, for row reduction, ranks,
    nullspaces, and solving the square systems that produce vertices and
    rays of parametric polyhedra;
  * plain Fractions, for fixed-t computations and the exact LP feasibility
    test used by the zonotope membership oracle.

Matrices are lists of lists; nothing here mutates its inputs.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence

from .qpoly import RationalFunction, as_ratfun

RF = RationalFunction
Matrix = list[list[RationalFunction]]


def rf_matrix(rows: Sequence[Sequence]) -> Matrix:
    return [[as_ratfun(x) for x in row] for row in rows]


def mat_mul(a: Matrix, b: Matrix) -> Matrix:
    n, k, m = len(a), len(b), len(b[0]) if b else 0
    out = []
    for i in range(n):
        row = []
        for j in range(m):
            acc = as_ratfun(0)
            for s in range(k):
                acc = acc + a[i][s] * b[s][j]
            row.append(acc)
        out.append(row)
    return out


def row_reduce(rows: Matrix) -> tuple[Matrix, list[int]]:
    """Reduced row echelon form over Q(t); returns (rref, pivot columns)."""
    m = [list(r) for r in rows]
    nrows = len(m)
    ncols = len(m[0]) if m else 0
    pivots: list[int] = []
    r = 0
    for c in range(ncols):
        pivot = next((i for i in range(r, nrows) if not m[i][c].is_zero), None)
        if pivot is None:
            continue
        m[r], m[pivot] = m[pivot], m[r]
        inv = m[r][c]
        m[r] = [x / inv for x in m[r]]
        for i in range(nrows):
            if i != r and not m[i][c].is_zero:
                f = m[i][c]
                m[i] = [a - f * b for a, b in zip(m[i], m[r])]
        pivots.append(c)
        r += 1
        if r == nrows:
            break
    return m, pivots


def rank(rows: Matrix) -> int:
    if not rows:
        return 0
    return len(row_reduce(rows)[1])


def solve_particular(a: Matrix, b: Sequence[RationalFunction]) -> list[RationalFunction] | None:
    """One solution of a x = b over Q(t) with free variables set to 0,
    or None when inconsistent."""
    if not a:
        return []
    aug = [list(row) + [bi] for row, bi in zip(a, b)]
    red, pivots = row_reduce(aug)
    ncols = len(a[0])
    if ncols in pivots:
        return None  # pivot in the augmented column: inconsistent
    x = [as_ratfun(0)] * ncols
    for r, c in enumerate(pivots):
        x[c] = red[r][ncols]
    return x


def nullspace(a: Matrix, ncols: int | None = None) -> list[list[RationalFunction]]:
    """Basis of {x : a x = 0} over Q(t)."""
    if not a:
        n = ncols if ncols is not None else 0
        return [
            [as_ratfun(1 if i == j else 0) for i in range(n)] for j in range(n)
        ]
    red, pivots = row_reduce(a)
    n = len(a[0])
    free = [c for c in range(n) if c not in pivots]
    basis = []
    for fc in free:
        v = [as_ratfun(0)] * n
        v[fc] = as_ratfun(1)
        for r, pc in enumerate(pivots):
            v[pc] = -red[r][fc]
        basis.append(v)
    return basis


def determinant(a: Matrix) -> RationalFunction:
    """Determinant over Q(t) by fraction-free-ish Gaussian elimination."""
    n = len(a)
    if n == 0:
        return as_ratfun(1)
    m = [list(r) for r in a]
    det = as_ratfun(1)
    for c in range(n):
        pivot = next((i for i in range(c, n) if not m[i][c].is_zero), None)
        if pivot is None:
            return as_ratfun(0)
        if pivot != c:
            m[c], m[pivot] = m[pivot], m[c]
            det = -det
        det = det * m[c][c]
        inv = m[c][c]
        for i in range(c + 1, n):
            if not m[i][c].is_zero:
                f = m[i][c] / inv
                m[i] = [x - f * y for x, y in zip(m[i], m[c])]
    return det


# ---------------------------------------------------------------------------
# Fixed-t exact LP feasibility (phase-1 simplex over Fractions)
# ---------------------------------------------------------------------------


def lp_feasible(
    a_eq: Sequence[Sequence[Fraction]],
    b_eq: Sequence[Fraction],
    upper: Sequence[Fraction | None],
) -> bool:
    """Is there x with a_eq x = b_eq, 0 <= x, and x_j <= upper[j] where set?

    Exact rational phase-1 simplex with Bland's rule.  Upper bounds are
    folded in with slack variables, which is plenty for the small systems
    produced by zonotope membership tests.
    """
    rows = [list(map(Fraction, r)) for r in a_eq]
    rhs = [Fraction(x) for x in b_eq]
    nx = len(upper)
    # add slack rows x_j + s_j = u_j
    for j, u in enumerate(upper):
        if u is None:
            continue
        row = [Fraction(0)] * nx
        row[j] = Fraction(1)
        rows.append(row)
        rhs.append(Fraction(u))
    nslack = sum(1 for u in upper if u is not None)
    ncols = nx + nslack
    full = []
    si = 0
    for i, r in enumerate(rows):
        row = list(r) + [Fraction(0)] * nslack
        if i >= len(a_eq):
            row[nx + si] = Fraction(1)
            si += 1
        full.append(row)
    # normalize rhs >= 0
    for i in range(len(full)):
        if rhs[i] < 0:
            full[i] = [-x for x in full[i]]
            rhs[i] = -rhs[i]
    m = len(full)
    # phase-1: add artificial variables, minimize their sum
    ncolsA = ncols + m
    tab = [full[i] + [Fraction(1 if j == i else 0) for j in range(m)] + [rhs[i]] for i in range(m)]
    basis = [ncols + i for i in range(m)]
    # objective row: sum of artificial rows
    obj = [Fraction(0)] * (ncolsA + 1)
    for i in range(m):
        for j in range(ncolsA + 1):
            obj[j] += tab[i][j]

    def pivot(pr: int, pc: int):
        pv = tab[pr][pc]
        tab[pr] = [x / pv for x in tab[pr]]
        for i in range(m):
            if i != pr and tab[i][pc] != 0:
                f = tab[i][pc]
                tab[i] = [x - f * y for x, y in zip(tab[i], tab[pr])]
        f = obj[pc]
        if f != 0:
            for j in range(ncolsA + 1):
                obj[j] -= f * tab[pr][j]
        basis[pr] = pc

    while True:
        pc = next((j for j in range(ncols) if obj[j] > 0), None)
        if pc is None:
            break
        ratios = [
            (tab[i][ncolsA] / tab[i][pc], i)
            for i in range(m)
            if tab[i][pc] > 0
        ]
        if not ratios:
            break  # unbounded in phase 1 cannot happen, but bail safely
        _, pr = min(ratios, key=lambda p: (p[0], basis[p[1]]))
        pivot(pr, pc)
    return obj[ncolsA] == 0


def point_in_hull(
    point: Sequence[Fraction], hull_points: Sequence[Sequence[Fraction]]
) -> bool:
    """Exact test: point in conv(hull_points)."""
    if not hull_points:
        return False
    d = len(point)
    a = [[Fraction(hp[i]) for hp in hull_points] for i in range(d)]
    a.append([Fraction(1)] * len(hull_points))
    b = [Fraction(x) for x in point] + [Fraction(1)]
    return lp_feasible(a, b, [None] * len(hull_points))


# ---------------------------------------------------------------------------
# Integer linear systems at fixed t (for inverting affine stage maps)
# ---------------------------------------------------------------------------


def solve_integer(a: Sequence[Sequence[int]], b: Sequence[int]) -> list[int] | None:
    """One integer solution of a x = b, or None.

    Column-style Hermite reduction over the integers; small systems only.
    """
    m = len(a)
    n = len(a[0]) if a else 0
    mat = [list(map(int, row)) for row in a]
    u = [[1 if i == j else 0 for j in range(n)] for i in range(n)]

    def col_op(j, k, q):
        # col_j -= q * col_k
        for i in range(m):
            mat[i][j] -= q * mat[i][k]
        for i in range(n):
            u[i][j] -= q * u[i][k]

    def col_swap(j, k):
        for i in range(m):
            mat[i][j], mat[i][k] = mat[i][k], mat[i][j]
        for i in range(n):
            u[i][j], u[i][k] = u[i][k], u[i][j]

    pc = 0
    pivot_col_of_row: list[int | None] = [None] * m
    for row in range(m):
        if pc < n:
            while True:
                nz = [j for j in range(pc, n) if mat[row][j] != 0]
                if not nz:
                    break
                jmin = min(nz, key=lambda j: abs(mat[row][j]))
                if jmin != pc:
                    col_swap(pc, jmin)
                done = True
                for j in range(pc + 1, n):
                    if mat[row][j] != 0:
                        q = mat[row][j] // mat[row][pc]
                        col_op(j, pc, q)
                        if mat[row][j] != 0:
                            done = False
                if done:
                    break
            if mat[row][pc] != 0:
                pivot_col_of_row[row] = pc
                pc += 1
    # forward-solve mat y = b (mat is lower staircase)
    y = [0] * n
    for r in range(m):
        acc = b[r] - sum(mat[r][c] * y[c] for c in range(n) if mat[r][c])
        col = pivot_col_of_row[r]
        if col is None:
            if acc != 0:
                return None
            continue
        q, rem = divmod(acc, mat[r][col])
        if rem != 0:
            return None
        y[col] = q
    for r in range(m):
        if sum(mat[r][c] * y[c] for c in range(n)) != b[r]:
            return None
    return [sum(u[i][j] * y[j] for j in range(n)) for i in range(n)]
