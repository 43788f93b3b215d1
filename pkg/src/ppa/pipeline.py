"""Reduction stages that turn a formula into a quantifier-free one whose only
divisibility predicates have constant divisors.

The stages, each either a logical equivalence or an affine change of
variables recorded as an AffineReduction:

  eliminate_divisibility  replace every variable by quotient/remainder pairs
                          modulo the product of the divisor polynomials, and
                          each divisibility atom by a bounded existential
                          equation (an affine reduction).
  split_signs             partition Z^d into orthants and map each piece into
                          N^d by x -> -1 - x on negative coordinates.
  base_t_rewrite          write bounded quantified variables and nonnegative
                          free variables in base t (an affine reduction).
  degree_reduce           split inequalities sum_s f_s t^s <= 0 into finitely
                          many cases (h-1)t < f_0 <= ht, dividing by t, until
                          every quantified variable has a constant coefficient.
  cooper_qe               classical quantifier elimination; introduces
                          constant-divisor predicates D_c only.

Every transformation here is an exact logical equivalence for all t >= 1 on
its piece (equivalence at t = 0 can fail only where digit ranges [0, t-1]
are empty, which the recorded thresholds exclude).
"""

from __future__ import annotations

import itertools
import math
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

# case expansion recurses once per clause of large normal forms
sys.setrecursionlimit(max(sys.getrecursionlimit(), 200_000))

from .formula import (
    And,
    Atom,
    AtomKind,
    BoolConst,
    FALSE,
    Formula,
    Implies,
    LinearTerm,
    Not,
    Or,
    Quant,
    QuantKind,
    TRUE,
    atoms,
    bound_vars,
    conj,
    disj,
    free_var_order,
    free_vars,
    map_formula,
    nnf,
    print_formula,
    simplify,
    substitute,
)
from .qpoly import (
    EQP,
    ONE,
    Polynomial,
    QuasiPolynomial,
    T,
    ZERO,
    as_poly,
)


class PipelineError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Affine reductions
# ---------------------------------------------------------------------------


def eqp_of_poly(p: Polynomial, threshold: int = 0) -> EQP:
    return EQP.make(QuasiPolynomial.of_poly(p), threshold)


@dataclass(frozen=True)
class AffineMap:
    """x_target = matrix . x_source + offset with EQP entries."""

    target_vars: tuple[str, ...]
    source_vars: tuple[str, ...]
    matrix: tuple[tuple[EQP, ...], ...]
    offset: tuple[EQP, ...]

    @staticmethod
    def identity(names: Sequence[str]) -> "AffineMap":
        names = tuple(names)
        one, zero = EQP.constant(1), EQP.constant(0)
        return AffineMap(
            names,
            names,
            tuple(
                tuple(one if i == j else zero for j in range(len(names)))
                for i in range(len(names))
            ),
            tuple(zero for _ in names),
        )

    @staticmethod
    def from_polys(
        target_vars: Sequence[str],
        source_vars: Sequence[str],
        rows: dict[str, dict[str, Polynomial]],
        offsets: dict[str, Polynomial] | None = None,
        threshold: int = 0,
    ) -> "AffineMap":
        offsets = offsets or {}
        matrix = tuple(
            tuple(
                eqp_of_poly(rows.get(tv, {}).get(sv, ZERO), threshold)
                for sv in source_vars
            )
            for tv in target_vars
        )
        off = tuple(
            eqp_of_poly(offsets.get(tv, ZERO), threshold) for tv in target_vars
        )
        return AffineMap(tuple(target_vars), tuple(source_vars), matrix, off)

    def apply_point(self, t: int, point: Sequence[int]) -> tuple[int, ...]:
        out = []
        for row, off in zip(self.matrix, self.offset):
            acc = off.evaluate(t)
            for entry, x in zip(row, point):
                acc += entry.evaluate(t) * x
            if acc.denominator != 1:
                raise ValueError(f"non-integer image coordinate {acc} at t={t}")
            out.append(int(acc))
        return tuple(out)

    def compose(self, inner: "AffineMap") -> "AffineMap":
        """self o inner (apply inner first)."""
        if inner.target_vars != self.source_vars:
            raise ValueError("compose: variable interfaces do not match")
        from .qpoly import eqp_arith

        zero = EQP.constant(0)
        matrix = []
        for i in range(len(self.target_vars)):
            row = []
            for j in range(len(inner.source_vars)):
                acc = zero
                for s in range(len(self.source_vars)):
                    acc = eqp_arith(
                        acc,
                        eqp_arith(self.matrix[i][s], inner.matrix[s][j], "mul"),
                        "add",
                    )
                row.append(acc)
            matrix.append(tuple(row))
        offset = []
        for i in range(len(self.target_vars)):
            acc = self.offset[i]
            for s in range(len(self.source_vars)):
                acc = eqp_arith(
                    acc, eqp_arith(self.matrix[i][s], inner.offset[s], "mul"), "add"
                )
            offset.append(acc)
        return AffineMap(
            self.target_vars, inner.source_vars, tuple(matrix), tuple(offset)
        )


@dataclass(frozen=True)
class AffineReduction:
    """A recorded stage map; restricted to the stage's solution family it is
    a bijection onto the previous family (validated by the oracle, not
    assumed)."""

    map: AffineMap
    stage: str
    invert_point: Callable[[int, tuple[int, ...]], tuple[int, ...] | None] | None = None

    @property
    def source_arity(self) -> int:
        return len(self.map.source_vars)

    @property
    def target_arity(self) -> int:
        return len(self.map.target_vars)

    @staticmethod
    def identity(names: Sequence[str], stage: str) -> "AffineReduction":
        return AffineReduction(
            AffineMap.identity(names), stage, lambda t, p: tuple(p)
        )


@dataclass(frozen=True)
class StageRecord:
    stage: str
    before: Formula
    after: Formula
    reduction: AffineReduction | None


# ---------------------------------------------------------------------------
# Step 2: divisibility elimination
# ---------------------------------------------------------------------------


def _positivity_exceptions(polys: Sequence[Polynomial]) -> tuple[int, list[int]]:
    """Threshold T past which all polys are positive, plus the exceptional
    naturals below T where some poly is <= 0."""
    thr = 0
    for p in polys:
        thr = max(thr, p.eventual_sign_threshold())
    bad = [
        tau
        for tau in range(thr)
        if any(p.evaluate(tau) <= 0 for p in polys)
    ]
    return thr, bad


def _div_arg_bound(term: LinearTerm, g: Polynomial) -> Polynomial:
    """Polynomial h with |term(v)| <= h(t) whenever 0 <= v_i <= g(t): maximize
    over the corners v_i in {0, g} and dominate coefficient-wise."""
    coeffs = [p for _, p in term.coeffs]
    best = ZERO
    for picks in itertools.product((False, True), repeat=len(coeffs)):
        cand = term.const
        for on, c in zip(picks, coeffs):
            if on:
                cand = cand + c * g
        cand = cand.abs_coeffs()
        n = max(best.degree, cand.degree)
        best = Polynomial.make(
            [max(best.coeff(k), cand.coeff(k)) for k in range(n + 1)]
        )
    return best


def eliminate_divisibility(
    phi: Formula,
) -> tuple[Formula, AffineReduction, int, list[int]]:
    """Remove every divisibility atom via the quotient/remainder reduction.

    Returns (phi2, reduction, threshold, exceptional_ts): phi2 has no DIV
    atoms, and for t >= threshold the reduction maps its solution set
    bijectively onto the input's.  The exceptional naturals are the t below
    the threshold where some divisor is nonpositive.
    """
    div_atoms = [a for a in atoms(phi) if a.kind == AtomKind.DIV]
    order = free_var_order(phi)
    if not div_atoms:
        return phi, AffineReduction.identity(order, "divfree"), 0, []
    divisors: list[Polynomial] = []
    for a in div_atoms:
        d = a.divisor
        assert d is not None
        if d.is_zero:
            raise PipelineError(
                "divisibility by the zero polynomial is false everywhere; "
                "remove the atom instead"
            )
        dpos = d if d.eventual_sign() > 0 else -d
        if dpos not in divisors:
            divisors.append(dpos)
    threshold, exceptional = _positivity_exceptions(divisors)
    g = ONE
    for d in divisors:
        g = g * d

    names = sorted(free_vars(phi) | bound_vars(phi))
    taken = set(names)
    quot = {z: f"{z}__q" for z in names}
    rem = {z: f"{z}__r" for z in names}
    assert not (set(quot.values()) | set(rem.values())) & taken

    def repl_term(z: str) -> LinearTerm:
        return LinearTerm.make({quot[z]: g, rem[z]: ONE})

    fresh_y = itertools.count()

    def on_atom(a: Atom) -> Formula:
        if a.kind != AtomKind.DIV:
            out = a
            for z in a.lhs.variables + a.rhs.variables:
                out = Atom(
                    out.kind,
                    out.lhs.substitute(z, repl_term(z)),
                    out.rhs.substitute(z, repl_term(z)),
                    out.divisor,
                )
            return out
        d = a.divisor
        assert d is not None
        dpos = d if d.eventual_sign() > 0 else -d
        s = a.diff()
        s_rem = LinearTerm.make(
            {rem[z]: c for z, c in s.coeffs}, s.const
        )
        h = _div_arg_bound(s_rem, g)
        y = f"__y{next(fresh_y)}"
        eq_pos = Atom.eq(LinearTerm.var(y, dpos), s_rem)
        eq_neg = Atom.eq(LinearTerm.var(y, -dpos), s_rem)
        return Quant(QuantKind.EXISTS, y, h, disj([eq_pos, eq_neg]))

    def walk(f: Formula) -> Formula:
        if isinstance(f, Atom):
            return on_atom(f)
        if isinstance(f, BoolConst):
            return f
        if isinstance(f, Not):
            return Not(walk(f.body))
        if isinstance(f, And):
            return conj([walk(c) for c in f.children])
        if isinstance(f, Or):
            return disj([walk(c) for c in f.children])
        if isinstance(f, Implies):
            return Implies(walk(f.prem), walk(f.conc))
        if isinstance(f, Quant):
            z = f.var
            body = walk(f.body)
            u, v = quot[z], rem[z]
            rng = conj(
                [
                    Atom.le(LinearTerm.of_poly(ZERO), LinearTerm.var(v)),
                    Atom.le(LinearTerm.var(v), LinearTerm.of_poly(g - ONE)),
                ]
            )
            if f.bound is not None:
                within = conj(
                    [
                        Atom.le(LinearTerm.of_poly(ZERO), repl_term(z)),
                        Atom.le(repl_term(z), LinearTerm.of_poly(f.bound)),
                    ]
                )
                if f.kind == QuantKind.EXISTS:
                    inner = conj([rng, within, body])
                else:
                    inner = Implies(conj([rng, within]), body)
                return Quant(
                    f.kind, u, f.bound, Quant(f.kind, v, g - ONE, inner)
                )
            if f.kind == QuantKind.EXISTS:
                inner = conj([rng, body])
            else:
                inner = Implies(rng, body)
            return Quant(f.kind, u, None, Quant(f.kind, v, g - ONE, inner))
        raise TypeError(f"unknown node {f!r}")

    body = walk(phi)
    theta = [
        Atom.le(LinearTerm.of_poly(ZERO), LinearTerm.var(rem[z]))
        for z in order
    ] + [
        Atom.le(LinearTerm.var(rem[z]), LinearTerm.of_poly(g - ONE))
        for z in order
    ]
    phi2 = simplify(conj(theta + [body]))

    source = sorted([quot[z] for z in order] + [rem[z] for z in order])
    amap = AffineMap.from_polys(
        order,
        source,
        {z: {quot[z]: g, rem[z]: ONE} for z in order},
        threshold=threshold,
    )

    def invert(t: int, point: tuple[int, ...]) -> tuple[int, ...] | None:
        gv = g.evaluate(t)
        if gv <= 0:
            return None
        gv = int(gv)
        vals = {}
        for z, x in zip(order, point):
            vals[quot[z]], vals[rem[z]] = divmod(int(x), gv)
        return tuple(vals[s] for s in source)

    red = AffineReduction(amap, "divisibility", invert)
    return phi2, red, threshold, exceptional


# ---------------------------------------------------------------------------
# Step 3a: orthant split
# ---------------------------------------------------------------------------


def split_signs(phi: Formula) -> list[tuple[Formula, AffineReduction]]:
    """Partition into 2^d orthant pieces, each living in N^d.

    Negative coordinates are mapped by x -> -1 - x, so the pieces are
    pairwise disjoint and their images cover Z^d exactly.
    """
    order = free_var_order(phi)
    pieces = []
    for signs in itertools.product((1, -1), repeat=len(order)):
        out = phi
        rows: dict[str, dict[str, Polynomial]] = {}
        offs: dict[str, Polynomial] = {}
        for v, s in zip(order, signs):
            if s == 1:
                rows[v] = {v: ONE}
            else:
                rows[v] = {v: -ONE}
                offs[v] = -ONE
                out = substitute(
                    out, v, LinearTerm.var(v, -ONE).shift(-ONE)
                )
        nonneg = [
            Atom.le(LinearTerm.of_poly(ZERO), LinearTerm.var(v)) for v in order
        ]
        piece = simplify(conj(nonneg + [out]))
        label = "signs:" + "".join("+" if s == 1 else "-" for s in signs)
        amap = AffineMap.from_polys(order, order, rows, offs)
        sign_vec = signs

        def invert(t, point, sv=sign_vec):
            src = []
            for x, s in zip(point, sv):
                y = x if s == 1 else -1 - x
                if y < 0:
                    return None
                src.append(y)
            return tuple(src)

        pieces.append((piece, AffineReduction(amap, label, invert)))
    return pieces


# ---------------------------------------------------------------------------
# Quantifier bound tightening
# ---------------------------------------------------------------------------


def _poly_ceil_div(num: Polynomial, den: Polynomial) -> tuple[Polynomial, int] | None:
    """Small u in Z[t] with den*u >= num eventually (den eventually positive),
    plus the threshold past which num(t) <= den(t)*u(t); None if no low-degree
    bound exists."""
    if den.eventual_sign() <= 0:
        return None
    quo, _ = num.divmod_q(den)
    import math as _m

    u = Polynomial.make([_m.ceil(Fraction(c)) for c in quo.coeffs]) + ONE
    for _ in range(4):
        gap = den * u - num
        if gap.eventual_sign() >= 0:
            return u, max(gap.eventual_sign_threshold(), den.eventual_sign_threshold())
        u = u + ONE
    return None


def tighten_exists_bounds(phi: Formula, start: int = 1) -> tuple[Formula, int]:
    """Shrink polynomially-bounded existentials using bounds implied by their
    bodies (an equality with nonnegative terms often caps a variable far
    below its stated bound).  Returns the rewritten formula plus a threshold
    past which the rewrite is an equivalence; the original bound is kept as
    an explicit atom so no solutions are gained."""
    threshold = [start]

    def var_ranges_from_conj(children, base: dict[str, Range]) -> dict[str, Range]:
        out = dict(base)
        for c in children:
            if isinstance(c, Atom):
                src = _range_source(c)
                if src is not None:
                    v, lo, hi = src
                    out[v] = _merge_range(out.get(v, (None, None)), (lo, hi))
        return out

    def try_tighten(y: str, bound: Polynomial, body: Formula, ranges: dict[str, Range]) -> Polynomial | None:
        # collect every atom in a conjunctive position, descending through
        # nested bounded existentials (their ranges are in force there)
        local = dict(ranges)
        found: list[Atom] = []
        stack = [body]
        while stack:
            f = stack.pop()
            if (
                isinstance(f, Quant)
                and f.kind == QuantKind.EXISTS
                and f.bound is not None
            ):
                local[f.var] = _merge_range(
                    local.get(f.var, (None, None)), (ZERO, f.bound)
                )
                stack.append(f.body)
            elif isinstance(f, And):
                stack.extend(f.children)
            elif isinstance(f, Atom):
                found.append(f)
        local = var_ranges_from_conj(found, local)
        best: Polynomial | None = None
        for c in found:
            if c.kind == AtomKind.DIV:
                continue
            diff = c.diff()
            cy = diff.coeff(y)
            if cy.is_zero:
                continue
            variants = [diff] if c.kind == AtomKind.LE else [diff, -diff]
            for d in variants:
                cy = d.coeff(y)
                if cy.eventual_sign() <= 0:
                    continue
                # d = cy*y + rest <= 0 (or = 0, which implies <=), so
                # cy*y <= -rest; bound -rest from above using known ranges
                num = -d.const
                ok = True
                thr = cy.eventual_sign_threshold()
                for v, cv in d.coeffs:
                    if v == y:
                        continue
                    mcv = -cv
                    lo, hi = local.get(v, (None, None))
                    if mcv.eventual_sign() <= 0:
                        # contribution <= mcv*lo, need lo (nonnegative case: 0)
                        if lo is None:
                            ok = False
                            break
                        num = num + mcv * lo
                        thr = max(thr, mcv.eventual_sign_threshold())
                    else:
                        if hi is None:
                            ok = False
                            break
                        num = num + mcv * hi
                        thr = max(thr, mcv.eventual_sign_threshold())
                if not ok:
                    continue
                res = _poly_ceil_div(num, cy)
                if res is None:
                    continue
                cand, cthr = res
                if best is None or (best - cand).eventual_sign() > 0:
                    best = cand
                    threshold[0] = max(threshold[0], thr, cthr)
        if best is not None and (bound - best).eventual_sign() > 0:
            return best
        return None

    def walk(f: Formula, ranges: dict[str, Range]) -> Formula:
        if isinstance(f, And):
            local = var_ranges_from_conj(f.children, ranges)
            return conj([walk(c, local) for c in f.children])
        if isinstance(f, Or):
            return disj([walk(c, ranges) for c in f.children])
        if isinstance(f, Not):
            return Not(walk(f.body, ranges))
        if isinstance(f, Implies):
            return Implies(walk(f.prem, ranges), walk(f.conc, ranges))
        if isinstance(f, Quant):
            local = dict(ranges)
            if f.bound is not None:
                local[f.var] = (ZERO, f.bound)
            body = walk(f.body, local)
            if f.kind == QuantKind.EXISTS and f.bound is not None:
                tb = try_tighten(f.var, f.bound, body, ranges)
                if tb is not None:
                    keep = Atom.le(
                        LinearTerm.var(f.var), LinearTerm.of_poly(f.bound)
                    )
                    return Quant(f.kind, f.var, tb, conj([keep, body]))
            return Quant(f.kind, f.var, f.bound, body)
        return f

    out = walk(phi, {})
    return out, threshold[0]


# ---------------------------------------------------------------------------
# Step 3b: base-t digit expansion
# ---------------------------------------------------------------------------


def _quant_nodes(phi: Formula) -> list[Quant]:
    out = []

    def walk(f):
        if isinstance(f, Quant):
            out.append(f)
        from .formula import children

        for c in children(f):
            walk(c)

    walk(phi)
    return out


def _digits_needed(bound: Polynomial) -> tuple[int, int]:
    """Minimal k with t^k - 1 >= bound eventually, plus the threshold."""
    k = max(bound.degree, 1)
    while True:
        gap = Polynomial.t(k) - ONE - bound
        if gap.eventual_sign() >= 0:
            return k, gap.eventual_sign_threshold()
        k += 1


def quantified_coeff_degree(phi: Formula) -> int:
    """Max degree of any coefficient of a quantified variable, over all atoms."""
    qvars = bound_vars(phi)
    deg = 0
    for a in atoms(phi):
        for side in (a.lhs, a.rhs):
            for v, p in side.coeffs:
                if v in qvars:
                    deg = max(deg, p.degree)
    return deg


def needs_base_t(phi: Formula) -> bool:
    """True when some quantified variable carries a non-constant coefficient."""
    return quantified_coeff_degree(phi) > 0


def split_equalities(phi: Formula) -> Formula:
    def on_atom(a: Atom) -> Formula:
        if a.kind != AtomKind.EQ:
            return a
        return conj([Atom.le(a.lhs, a.rhs), Atom.le(a.rhs, a.lhs)])

    return map_formula(phi, on_atom)


@dataclass(frozen=True)
class BaseTResult:
    formula: Formula
    reduction: AffineReduction
    levels: int  # M: unbounded part enters at t^M
    threshold: int
    digit_vars: frozenset[str]  # variables constrained to [0, t-1]
    quantified_digits: frozenset[str]


def base_t_rewrite(phi: Formula, min_levels: int | None = None) -> BaseTResult:
    """Digit-expand quantified variables and nonnegative free variables.

    Preconditions: every quantifier is polynomially bounded and every free
    variable is constrained nonnegative (use split_signs first).  min_levels
    forces a digit split even without quantifiers (used by tests to exercise
    the digit bijection in isolation).
    """
    quants = _quant_nodes(phi)
    for q in quants:
        if q.bound is None:
            raise PipelineError(
                f"base-t rewrite needs a polynomial bound on {q.var}"
            )
    threshold = 1  # digit ranges [0, t-1] need t >= 1
    if quants:
        k = 0
        for q in quants:
            kq, thr = _digits_needed(q.bound)
            k = max(k, kq)
            threshold = max(threshold, thr)
        ell = quantified_coeff_degree(phi)
        m_levels = k + ell
    else:
        k, m_levels = 0, 0
    if min_levels is not None:
        m_levels = max(m_levels, min_levels)
    order = free_var_order(phi)
    if m_levels == 0:
        return BaseTResult(
            split_equalities(phi),
            AffineReduction.identity(order, "base-t:identity"),
            0,
            0,
            frozenset(),
            frozenset(),
        )

    digit_bound = T - ONE
    taken = set(order) | {q.var for q in quants}

    def digit_names(base: str, count: int) -> list[str]:
        return [f"{base}__d{j}" for j in range(count)]

    # free variables: x = sum_j t^j x__dj + t^M x__z
    free_digits: dict[str, list[str]] = {}
    zvar: dict[str, str] = {}
    out = phi
    for x in order:
        ds = digit_names(x, m_levels)
        z = f"{x}__z"
        assert not (set(ds) | {z}) & taken
        free_digits[x] = ds
        zvar[x] = z
        repl = LinearTerm.make(
            {d: Polynomial.t(j) for j, d in enumerate(ds)}
            | {z: Polynomial.t(m_levels)}
        )
        out = substitute(out, x, repl)

    # quantified variables: y = sum_j t^j y__dj, retaining the bound atom
    def walk(f: Formula) -> Formula:
        if isinstance(f, Quant):
            body = walk(f.body)
            ds = digit_names(f.var, k)
            total = LinearTerm.make(
                {d: Polynomial.t(j) for j, d in enumerate(ds)}
            )
            body = substitute(body, f.var, total)
            within = Atom.le(total, LinearTerm.of_poly(f.bound))
            if f.kind == QuantKind.EXISTS:
                body = conj([within, body])
            else:
                body = Implies(within, body)
            for d in reversed(ds):
                body = Quant(f.kind, d, digit_bound, body)
            return body
        from .formula import children as _ch

        if isinstance(f, Atom) or isinstance(f, BoolConst):
            return f
        if isinstance(f, Not):
            return Not(walk(f.body))
        if isinstance(f, And):
            return conj([walk(c) for c in f.children])
        if isinstance(f, Or):
            return disj([walk(c) for c in f.children])
        if isinstance(f, Implies):
            return Implies(walk(f.prem), walk(f.conc))
        raise TypeError(f"unknown node {f!r}")

    out = walk(out)
    bounds = []
    for x in order:
        for d in free_digits[x]:
            bounds.append(Atom.le(LinearTerm.of_poly(ZERO), LinearTerm.var(d)))
            bounds.append(Atom.le(LinearTerm.var(d), LinearTerm.of_poly(digit_bound)))
        bounds.append(Atom.le(LinearTerm.of_poly(ZERO), LinearTerm.var(zvar[x])))
    # Equalities are kept intact: the degree reducer splits them with exact
    # f0 = h*t guards, which is far cheaper than reducing two inequalities.
    phi2 = simplify(conj(bounds + [out]))

    source = sorted(
        [d for x in order for d in free_digits[x]] + [zvar[x] for x in order]
    )
    rows = {
        x: {d: Polynomial.t(j) for j, d in enumerate(free_digits[x])}
        | {zvar[x]: Polynomial.t(m_levels)}
        for x in order
    }
    amap = AffineMap.from_polys(order, source, rows, threshold=threshold)

    def invert(t: int, point: tuple[int, ...]) -> tuple[int, ...] | None:
        if t < 1:
            return None
        vals = {}
        for x, val in zip(order, point):
            v = int(val)
            if v < 0:
                return None
            for d in free_digits[x]:
                vals[d] = v % t
                v //= t
            vals[zvar[x]] = v
        return tuple(vals[s] for s in source)

    all_digits = frozenset(
        d for x in order for d in free_digits[x]
    ) | frozenset(
        d for q in quants for d in digit_names(q.var, k)
    )
    qdigits = frozenset(d for q in quants for d in digit_names(q.var, k))
    return BaseTResult(
        phi2,
        AffineReduction(amap, f"base-t:M={m_levels}", invert),
        m_levels,
        threshold,
        all_digits,
        qdigits,
    )


# ---------------------------------------------------------------------------
# Step 3c: degree reduction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LayeredInequality:
    """sum_s layers[s] * t^s <= 0 with t-free layers."""

    layers: tuple[LinearTerm, ...]

    @staticmethod
    def of_term(term: LinearTerm) -> "LayeredInequality":
        deg = max(term.max_coeff_degree(), term.const.degree, 0)
        layers = []
        for s in range(deg + 1):
            layers.append(
                LinearTerm.make(
                    {
                        v: Polynomial.const(p.coeff(s))
                        for v, p in term.coeffs
                        if p.coeff(s) != 0
                    },
                    Polynomial.const(term.const.coeff(s)),
                )
            )
        while len(layers) > 1 and layers[-1].is_constant() and layers[-1].const.is_zero:
            layers.pop()
        return LayeredInequality(tuple(layers))

    def recompose(self) -> LinearTerm:
        acc = LinearTerm.make()
        for s, layer in enumerate(self.layers):
            acc = acc + layer.scale(Polynomial.t(s))
        return acc


_NEG_CACHE: dict[tuple[Polynomial, int], bool] = {}


def _poly_negative_for_all(p: Polynomial, start: int = 1) -> bool:
    """Exact: p(tau) < 0 for every integer tau >= start."""
    key = (p, start)
    hit = _NEG_CACHE.get(key)
    if hit is None:
        hit = p.eventual_sign() < 0 and all(
            p.evaluate(tau) < 0
            for tau in range(start, p.eventual_sign_threshold())
        )
        _NEG_CACHE[key] = hit
    return hit


class DegreeReducer:
    """Case-splitting reducer; memoizes on the recomposed inequality term.

    Cases infeasible at every t >= start are dropped, so the produced
    disjunction is equivalent to the atom for all t >= start (with the digit
    variables in range)."""

    def __init__(
        self,
        quantified: frozenset[str],
        digit_vars: frozenset[str],
        start: int = 1,
    ):
        self.quantified = quantified
        self.digit_vars = digit_vars
        self.start = max(start, 1)
        self.cache: dict[tuple[LinearTerm, bool], Formula] = {}

    def needs_reduction(self, term: LinearTerm) -> bool:
        """Reduce until the atom involves no quantified variable (Type 2) or
        no multiplication by t at all (Type 1: constant coefficients, at most
        a linear-in-t constant term)."""
        if not any(v in self.quantified for v in term.variables):
            return False
        t_free = (
            all(p.degree == 0 for _, p in term.coeffs)
            and term.const.degree <= 1
        )
        return not t_free

    def reduce_term(self, term: LinearTerm, equality: bool = False) -> Formula:
        """Formula equivalent to term <= 0 (or term = 0) for t >= 1 with the
        digit variables in range."""
        key = (term, equality)
        if key in self.cache:
            return self.cache[key]
        result = self._reduce(term, equality)
        self.cache[key] = result
        return result

    def _case_data(self, term: LinearTerm):
        layers = LayeredInequality.of_term(term).layers
        f0 = layers[0]
        bad = [v for v in f0.variables if v not in self.digit_vars]
        if bad:
            raise AssertionError(
                f"degree reduction met unbounded variables {bad} in layer 0"
            )
        coeffs = [int(p.constant_value) for _, p in f0.coeffs]
        c0 = int(f0.const.constant_value)
        sneg = sum(c for c in coeffs if c < 0)
        spos = sum(c for c in coeffs if c > 0)
        big = sum(abs(c) for c in coeffs) + abs(c0) + 1
        lo = Polynomial.make([c0 - sneg, sneg])  # c0 + sneg*(t-1)
        hi = Polynomial.make([c0 - spos, spos])
        return layers, f0, lo, hi, big

    def _reduce(self, term: LinearTerm, equality: bool) -> Formula:
        if not self.needs_reduction(term):
            return (
                Atom.eq(term, LinearTerm.make()) if equality else Atom.le_zero(term)
            )
        layers, f0, lo, hi, big = self._case_data(term)
        rest = list(layers[1:])
        branches = []
        for h in range(-big + 1, big + 1):
            ht = Polynomial.t(1, h)
            hm1t = Polynomial.t(1, h - 1)
            shifted = rest[0].shift(Polynomial.const(h))
            new_term = LayeredInequality(tuple([shifted] + rest[1:])).recompose()
            if equality:
                # t*u + f0 = 0 with t | f0 forces f0 = h*t exactly
                if _poly_negative_for_all(ht - lo, self.start) or _poly_negative_for_all(
                    hi - ht, self.start
                ):
                    continue
                guard = Atom.eq(f0, LinearTerm.of_poly(ht))
                branches.append(
                    conj([guard, self.reduce_term(new_term, True)])
                )
            else:
                # prune cases (h-1)t < f0 <= ht infeasible at every t >= start
                if _poly_negative_for_all(ht - lo, self.start) or _poly_negative_for_all(
                    hi - hm1t - ONE, self.start
                ):
                    continue
                guard_hi = Atom.le_zero(f0 - LinearTerm.of_poly(ht))
                guard_lo = Atom.le_zero(LinearTerm.of_poly(hm1t + ONE) - f0)
                branches.append(
                    conj([guard_lo, guard_hi, self.reduce_term(new_term)])
                )
        return simplify(disj(branches))


def degree_reduce_formula(
    phi: Formula,
    quantified: frozenset[str],
    digit_vars: frozenset[str],
    start: int = 1,
) -> Formula:
    """Apply degree reduction to every inequality atom of phi."""
    red = DegreeReducer(quantified, digit_vars, start)

    def on_atom(a: Atom) -> Formula:
        if a.kind == AtomKind.LE:
            return red.reduce_term(a.diff())
        if a.kind == AtomKind.EQ:
            return red.reduce_term(a.diff(), equality=True)
        return a

    return simplify(map_formula(phi, on_atom))


# ---------------------------------------------------------------------------
# Exact range-based pruning
# ---------------------------------------------------------------------------


_SIGN_CACHE: dict[tuple[Polynomial, int, str], bool] = {}


def _poly_positive_for_all(p: Polynomial, start: int) -> bool:
    key = (p, start, ">")
    hit = _SIGN_CACHE.get(key)
    if hit is None:
        hit = p.eventual_sign() > 0 and all(
            p.evaluate(tau) > 0
            for tau in range(start, p.eventual_sign_threshold())
        )
        _SIGN_CACHE[key] = hit
    return hit


def _poly_nonpositive_for_all(p: Polynomial, start: int) -> bool:
    key = (p, start, "<=")
    hit = _SIGN_CACHE.get(key)
    if hit is None:
        hit = p.eventual_sign() <= 0 and all(
            p.evaluate(tau) <= 0
            for tau in range(start, p.eventual_sign_threshold())
        )
        _SIGN_CACHE[key] = hit
    return hit


Range = tuple[Polynomial | None, Polynomial | None]


_RANGE_SOURCE_CACHE: dict[Atom, tuple | None] = {}


def _range_source(a: Atom) -> tuple[str, Polynomial | None, Polynomial | None] | None:
    """Read a single-variable constant-coefficient LE atom as a bound:
    returns (var, lo, hi) with exactly one of lo/hi set."""
    if a in _RANGE_SOURCE_CACHE:
        return _RANGE_SOURCE_CACHE[a]
    out = _range_source_impl(a)
    _RANGE_SOURCE_CACHE[a] = out
    return out


def _range_source_impl(a: Atom):
    if a.kind == AtomKind.DIV:
        return None
    diff = a.diff()
    if len(diff.coeffs) != 1:
        return None
    v, c = diff.coeffs[0]
    if c.degree != 0:
        return None
    cv = c.constant_value
    if cv.denominator != 1:
        return None
    cv = int(cv)
    bound = diff.const.scale(Fraction(-1, cv))
    if a.kind == AtomKind.EQ:
        return (v, bound, bound)
    if cv > 0:
        return (v, None, bound)  # v <= bound
    return (v, bound, None)  # v >= bound


def _merge_range(old: Range, new: Range) -> Range:
    lo = old[0]
    if new[0] is not None:
        lo = new[0] if lo is None else (
            new[0] if (new[0] - lo).eventual_sign() > 0 else lo
        )
    hi = old[1]
    if new[1] is not None:
        hi = new[1] if hi is None else (
            new[1] if (new[1] - hi).eventual_sign() < 0 else hi
        )
    return (lo, hi)


_ATOM_RANGE_CACHE: dict[tuple, bool | None] = {}


def _atom_vs_ranges(
    a: Atom, ranges: dict[str, Range], start: int
) -> bool | None:
    """Decide an LE/EQ atom against variable ranges, exactly for all
    t >= start on range-satisfying points; None when undecided."""
    if a.kind == AtomKind.DIV:
        return None
    key = (
        a,
        start,
        tuple(ranges.get(v, (None, None)) for v in a.diff().variables),
    )
    if key in _ATOM_RANGE_CACHE:
        return _ATOM_RANGE_CACHE[key]
    out = _atom_vs_ranges_impl(a, ranges, start)
    _ATOM_RANGE_CACHE[key] = out
    return out


def _atom_vs_ranges_impl(
    a: Atom, ranges: dict[str, Range], start: int
) -> bool | None:
    diff = a.diff()
    lo_val = diff.const
    hi_val = diff.const
    for v, c in diff.coeffs:
        if c.degree != 0:
            return None
        cv = c.constant_value
        rng = ranges.get(v, (None, None))
        lo_b, hi_b = rng
        if cv > 0:
            lo_val = None if lo_val is None or lo_b is None else lo_val + lo_b.scale(cv)
            hi_val = None if hi_val is None or hi_b is None else hi_val + hi_b.scale(cv)
        else:
            lo_val = None if lo_val is None or hi_b is None else lo_val + hi_b.scale(cv)
            hi_val = None if hi_val is None or lo_b is None else hi_val + lo_b.scale(cv)
    if a.kind == AtomKind.EQ:
        # the atom value must be exactly 0
        if lo_val is not None and _poly_positive_for_all(lo_val, start):
            return False
        if hi_val is not None and _poly_negative_for_all(hi_val, start):
            return False
        if (
            lo_val is not None
            and hi_val is not None
            and lo_val.is_zero
            and hi_val.is_zero
        ):
            return True
        return None
    if lo_val is not None and _poly_positive_for_all(lo_val, start):
        return False  # the atom value is always > 0: unsatisfiable
    if hi_val is not None and _poly_nonpositive_for_all(hi_val, start):
        return True
    return None


_PRUNE_CACHE: dict[tuple[Formula, int], Formula] = {}


def range_prune(phi: Formula, start: int, inherited: dict[str, Range] | None = None) -> Formula:
    """Simplify using interval reasoning over conjunction-derived variable
    ranges; every decision is exact for all t >= start."""
    cache_key = None
    if not inherited:
        cache_key = (phi, start)
        hit = _PRUNE_CACHE.get(cache_key)
        if hit is not None:
            return hit
    ranges = dict(inherited or {})

    def walk(f: Formula, ranges: dict[str, Range]) -> Formula:
        if isinstance(f, And):
            local = dict(ranges)
            sources = []
            for c in f.children:
                if isinstance(c, Atom):
                    src = _range_source(c)
                    if src is not None:
                        v, lo, hi = src
                        local[v] = _merge_range(local.get(v, (None, None)), (lo, hi))
                        sources.append(c)
            # an empty derived range kills the conjunction
            for v, (lo, hi) in local.items():
                if lo is not None and hi is not None and _poly_positive_for_all(lo - hi, start):
                    return FALSE
            out = []
            for c in f.children:
                if isinstance(c, Atom) and c not in sources:
                    dec = _atom_vs_ranges(c, local, start)
                    if dec is True:
                        continue
                    if dec is False:
                        return FALSE
                    out.append(c)
                elif isinstance(c, Atom):
                    out.append(c)
                else:
                    sub = walk(c, local)
                    if sub == FALSE:
                        return FALSE
                    out.append(sub)
            return conj(out)
        if isinstance(f, Or):
            return disj([walk(c, ranges) for c in f.children])
        if isinstance(f, Quant):
            local = dict(ranges)
            if f.bound is not None:
                local[f.var] = (ZERO, f.bound)
            return Quant(f.kind, f.var, f.bound, walk(f.body, local))
        if isinstance(f, Atom):
            dec = _atom_vs_ranges(f, ranges, start)
            if dec is True:
                return TRUE
            if dec is False:
                return FALSE
            return f
        return f  # Not/Implies/BoolConst: leave alone (callers run nnf first)

    out = simplify(walk(simplify(phi), ranges))
    if cache_key is not None:
        _PRUNE_CACHE[cache_key] = out
    return out


# ---------------------------------------------------------------------------
# Disjunction compaction
# ---------------------------------------------------------------------------


def _canonical_atom(a: Atom) -> Atom:
    """Divide an LE/EQ atom through by the gcd of all its integer contents
    (exact scaling only, no floor tightening)."""
    if a.kind == AtomKind.DIV:
        return a
    diff = a.diff()
    nums = []
    for _, p in diff.coeffs:
        c = p.content()
        if c.denominator != 1:
            return a
        nums.append(c.numerator)
    cc = diff.const.content()
    if cc.denominator != 1:
        return a
    if not cc == 0:
        nums.append(cc.numerator)
    if not nums:
        return a
    g = math.gcd(*nums)
    if g <= 1:
        return a
    scaled = diff.scale(Fraction(1, g))
    if a.kind == AtomKind.LE:
        return Atom.le_zero(scaled)
    return Atom.eq(scaled, LinearTerm.make())


_ATOM_KEY_CACHE: dict[Atom, str] = {}


def _atom_sort_key(a: Atom) -> str:
    k = _ATOM_KEY_CACHE.get(a)
    if k is None:
        k = print_formula(a)
        _ATOM_KEY_CACHE[a] = k
    return k


def _dominance_prune(atoms_list: list[Atom], start: int) -> list[Atom]:
    """Drop LE atoms implied by a tighter one with the same variable part."""
    by_varpart: dict[tuple, list[int]] = {}
    out = list(atoms_list)
    for i, a in enumerate(out):
        if a.kind != AtomKind.LE:
            continue
        d = a.diff()
        by_varpart.setdefault(d.coeffs, []).append(i)
    drop: set[int] = set()
    for idxs in by_varpart.values():
        if len(idxs) < 2:
            continue
        for i in idxs:
            if i in drop:
                continue
            for j in idxs:
                if i == j or j in drop:
                    continue
                ci = out[i].diff().const
                cj = out[j].diff().const
                # atom_i: varpart + ci <= 0; larger constant is tighter
                if _poly_nonpositive_for_all(ci - cj, start):
                    drop.add(i)
                    break
    return [a for i, a in enumerate(out) if i not in drop]


def _subsumption_filter(branch_sets: list[frozenset[Atom]]) -> list[frozenset[Atom]]:
    """Drop branches whose atom set is a superset of another's."""
    index: dict[Atom, int] = {}
    masks = []
    for s in branch_sets:
        m = 0
        for a in s:
            if a not in index:
                index[a] = len(index)
            m |= 1 << index[a]
        masks.append(m)
    order = sorted(range(len(masks)), key=lambda i: bin(masks[i]).count("1"))
    kept: list[int] = []
    keep = [True] * len(masks)
    for i in order:
        mi = masks[i]
        if any(mi & masks[j] == masks[j] for j in kept):
            keep[i] = False
        else:
            kept.append(i)
    return [s for i, s in enumerate(branch_sets) if keep[i]]


def _branch_interval(s: frozenset[Atom], v: str):
    """(key, lo, hi, ok): key is the branch without its unit-coefficient
    single-variable bounds on v, [lo, hi] the interval they describe
    (None = unbounded side); ok is False when the bounds on v are not a
    single clean interval (multiple incomparable bounds, or coefficient
    not +-1), in which case the branch must not be merged on v."""
    lows: list[Polynomial] = []
    highs: list[Polynomial] = []
    rest = []
    ok = True
    for a in s:
        src = _range_source(a)
        if src is not None and src[0] == v:
            d = a.diff()
            cv = d.coeff(v)
            if abs(int(cv.constant_value)) != 1:
                ok = False
                rest.append(a)
                continue
            _, l, h = src
            if l is not None:
                lows.append(l)
            if h is not None:
                highs.append(h)
        else:
            rest.append(a)
    if len(lows) > 1 or len(highs) > 1:
        ok = False
    lo = lows[0] if len(lows) == 1 else None
    hi = highs[0] if len(highs) == 1 else None
    return frozenset(rest), lo, hi, ok


def _merge_intervals(
    branch_sets: list[frozenset[Atom]], start: int
) -> list[frozenset[Atom]]:
    """Union branches that differ only in a contiguous single-variable
    interval; exact for all t >= start."""

    def le_all(a: Polynomial | None, b: Polynomial | None) -> bool:
        # a <= b pointwise for t >= start (None = the appropriate infinity)
        if a is None or b is None:
            return False
        return _poly_nonpositive_for_all(a - b, start)

    sets = list(branch_sets)
    for _ in range(8):
        merged_any = False
        all_vars = sorted({v for s in sets for a in s for v in a.diff().variables})
        for v in all_vars:
            groups: dict[frozenset[Atom], list[tuple]] = {}
            out = []
            for s in sets:
                key, lo, hi, ok = _branch_interval(s, v)
                if ok:
                    groups.setdefault(key, []).append((s, lo, hi))
                else:
                    out.append(s)
            for key, members in groups.items():
                pool = list(members)
                changed = True
                while changed and len(pool) > 1:
                    changed = False
                    for i in range(len(pool)):
                        for j in range(len(pool)):
                            if i == j:
                                continue
                            _, lo1, hi1 = pool[i]
                            _, lo2, hi2 = pool[j]
                            # merge when [lo2, hi2] extends [lo1, hi1]:
                            # lo1 <= lo2 <= hi1 + 1 and hi1 <= hi2
                            start_ok = (lo2 is None and lo1 is None) or (
                                lo1 is None and lo2 is not None and hi1 is not None and le_all(lo2, hi1 + ONE)
                            ) or (
                                lo1 is not None
                                and lo2 is not None
                                and le_all(lo1, lo2)
                                and hi1 is not None
                                and le_all(lo2, hi1 + ONE)
                            )
                            if not start_ok:
                                continue
                            if hi2 is None:
                                new_hi = None
                            elif hi1 is None:
                                continue
                            elif le_all(hi1, hi2):
                                new_hi = hi2
                            else:
                                new_hi = hi1
                            new_lo = lo1
                            pool[i] = (None, new_lo, new_hi)
                            pool.pop(j)
                            changed = True
                            break
                        if changed:
                            break
                for _, lo, hi in pool:
                    extra = []
                    if lo is not None:
                        extra.append(
                            _canonical_atom(
                                Atom.le(LinearTerm.of_poly(lo), LinearTerm.var(v))
                            )
                        )
                    if hi is not None:
                        extra.append(
                            _canonical_atom(
                                Atom.le(LinearTerm.var(v), LinearTerm.of_poly(hi))
                            )
                        )
                    out.append(key | frozenset(extra))
            if len(out) < len(sets):
                merged_any = True
            sets = out
        if not merged_any:
            break
    return sets


def compact_disjunction(phi: Formula, start: int) -> Formula:
    """Canonicalize atoms, prune dominated conjuncts, drop subsumed branches,
    and union branches differing in one contiguous interval.  Exact for all
    t >= start."""
    if not isinstance(phi, Or):
        return phi
    branch_sets: list[frozenset[Atom]] = []
    others: list[Formula] = []
    for c in phi.children:
        items = c.children if isinstance(c, And) else (c,)
        if all(isinstance(x, Atom) for x in items):
            canon = [_canonical_atom(x) for x in items]
            pruned = _dominance_prune(canon, start)
            branch_sets.append(frozenset(pruned))
        else:
            others.append(c)
    branch_sets = _subsumption_filter(branch_sets)
    if len(branch_sets) <= 20000:
        branch_sets = _merge_intervals(branch_sets, start)
        branch_sets = _subsumption_filter(branch_sets)
    branches = [
        conj(sorted(s, key=_atom_sort_key)) for s in branch_sets
    ]
    branches.sort(key=lambda f: tuple(_atom_sort_key(a) for a in atoms(f)))
    return simplify(disj(branches + others))


# ---------------------------------------------------------------------------
# Step 4: Cooper quantifier elimination
# ---------------------------------------------------------------------------


class CooperError(PipelineError):
    pass


@dataclass
class CooperStats:
    eliminations: int = 0
    branches: int = 0


class CooperEliminator:
    def __init__(self, branch_ceiling: int = 2_000_000, start: int = 0):
        # `start`: preserve equivalence for all t >= start (pruning uses it)
        self.cache: dict[tuple[str, Formula], Formula] = {}
        self.push_cache: dict[tuple[str, Formula], Formula] = {}
        self.prune_cache: dict[Formula, Formula] = {}
        self.stats = CooperStats()
        self.branch_ceiling = branch_ceiling
        self.start = start
        # ranges implied by the whole formula's top-level conjuncts; sound to
        # assume inside any subformula of it
        self.ambient: dict[str, Range] = {}

    def prune(self, phi: Formula) -> Formula:
        hit = self.prune_cache.get(phi)
        if hit is None:
            hit = range_prune(phi, self.start, self.ambient)
            self.prune_cache[phi] = hit
        return hit

    # -- helpers

    def _var_coeff(self, a: Atom, y: str) -> int:
        c = a.diff().coeff(y)
        if c.is_zero:
            return 0
        if c.degree > 0:
            raise CooperError(
                f"variable {y} has non-constant coefficient in atom "
                f"{print_formula(a)}; run the base-t rewrite first"
            )
        v = c.constant_value
        if v.denominator != 1:
            raise CooperError(f"non-integer coefficient on {y}")
        return int(v)

    def eliminate_exists(self, y: str, phi: Formula) -> Formula:
        """Quantifier-free equivalent of "exists y in Z. phi" (phi in NNF,
        quantifier-free, constant divisors)."""
        key = (y, phi)
        if key in self.cache:
            return self.cache[key]
        out = self._eliminate(y, phi)
        self.cache[key] = out
        return out

    def _pin_equality(self, y: str, phi: Formula) -> tuple[Formula, Atom | None]:
        """Find a top-level conjunct pinning y: an equality atom, or a
        complementary pair of inequalities (merged into one equality)."""
        conjuncts = list(phi.children) if isinstance(phi, And) else [phi]
        candidates = []
        for c in conjuncts:
            if (
                isinstance(c, Atom)
                and c.kind == AtomKind.EQ
                and not c.diff().coeff(y).is_zero
                and c.diff().coeff(y).degree == 0
            ):
                candidates.append(c)
        if candidates:
            # unit coefficients avoid introducing divisibility predicates
            unit = [
                c
                for c in candidates
                if abs(int(c.diff().coeff(y).constant_value)) == 1
            ]
            return phi, (unit[0] if unit else candidates[0])
        le_terms: dict[LinearTerm, Atom] = {}
        for c in conjuncts:
            if isinstance(c, Atom) and c.kind == AtomKind.LE:
                d = c.diff()
                cy = d.coeff(y)
                if not cy.is_zero and cy.degree == 0:
                    le_terms[d] = c
        for term, a in le_terms.items():
            other = le_terms.get(-term)
            if other is not None:
                eq = Atom.eq(term, LinearTerm.make())
                rest = [
                    c for c in conjuncts if c is not a and c is not other
                ]
                return conj(rest + [eq]), eq
        return phi, None

    def _eliminate(self, y: str, phi: Formula) -> Formula:
        self.stats.eliminations += 1
        phi = self.prune(phi)
        y_atoms = [a for a in set(atoms(phi)) if not a.diff().coeff(y).is_zero]
        if not y_atoms:
            return phi
        cr = self._const_range(y, phi)
        if cr is not None and cr[1] - cr[0] <= 16:
            lo, hi = cr
            return simplify(
                disj(
                    [
                        self.prune(
                            substitute(phi, y, LinearTerm.of_poly(Polynomial.const(v)))
                        )
                        for v in range(lo, hi + 1)
                    ]
                )
            )
        phi, pin = self._pin_equality(y, phi)
        # remaining equalities involving y are split so every atom is LE or DIV
        def split_eq(a: Atom) -> Formula:
            if (
                a.kind == AtomKind.EQ
                and a is not pin
                and not a.diff().coeff(y).is_zero
            ):
                return conj([Atom.le(a.lhs, a.rhs), Atom.le(a.rhs, a.lhs)])
            return a

        phi = map_formula(phi, split_eq)
        y_atoms = [a for a in set(atoms(phi)) if not a.diff().coeff(y).is_zero]
        coeffs = []
        for a in y_atoms:
            if a.kind == AtomKind.DIV:
                assert a.divisor is not None
                if not a.divisor.is_constant:
                    raise CooperError(
                        f"non-constant divisor in {print_formula(a)}"
                    )
            coeffs.append(abs(self._var_coeff(a, y)))
        delta_star = math.lcm(*coeffs)

        # normalize every y-atom so the coefficient of y is +-1 on a scaled
        # variable y' = delta_star * y
        def norm(a: Atom) -> Atom:
            c = self._var_coeff(a, y)
            if c == 0:
                return a
            k = delta_star // abs(c)
            diff = a.diff()
            rest = LinearTerm.make(
                {v: p for v, p in diff.coeffs if v != y}, diff.const
            ).scale(Polynomial.const(k))
            sgn = 1 if c > 0 else -1
            if a.kind == AtomKind.LE:
                return Atom.le_zero(rest + LinearTerm.var(y, sgn))
            if a.kind == AtomKind.EQ:
                return Atom.eq(rest + LinearTerm.var(y, sgn), LinearTerm.make())
            assert a.kind == AtomKind.DIV and a.divisor is not None
            dd = a.divisor.scale(k)
            arg = rest + LinearTerm.var(y, sgn)
            if sgn < 0:
                arg = -arg
                dd = dd
            return Atom.divides(dd, arg)

        phi_n = map_formula(
            phi, lambda a: norm(a) if not a.diff().coeff(y).is_zero else a
        )
        parts = [phi_n]
        if delta_star != 1:
            parts.append(Atom.divides(Polynomial.const(delta_star), LinearTerm.var(y)))
        phi_n = conj(parts)

        if pin is not None:
            # y is pinned by an equality: sgn*y' + k*rest = 0, so substitute
            # y' := -sgn*k*rest; the divisibility conjunct D_{delta*}(y')
            # carries the integrality of y.
            pn = norm(pin)
            d = pn.diff()
            sgn = int(d.coeff(y).constant_value)
            rest = LinearTerm.make(
                {v: p for v, p in d.coeffs if v != y}, d.const
            )
            s = rest.scale(Polynomial.const(-sgn))
            return self.prune(substitute(phi_n, y, s))

        uppers: list[LinearTerm] = []
        lowers: list[LinearTerm] = []
        moduli = [delta_star]
        for a in set(atoms(phi_n)):
            c = a.diff().coeff(y)
            if c.is_zero:
                continue
            cv = int(c.constant_value)
            if a.kind == AtomKind.LE:
                diff = a.diff()
                rest = LinearTerm.make(
                    {v: p for v, p in diff.coeffs if v != y}, diff.const
                )
                if cv == 1:
                    uppers.append(-rest)  # y' <= -rest
                else:
                    lowers.append(rest.shift(-ONE))  # rest - 1 < y'
            else:
                assert a.divisor is not None
                moduli.append(abs(int(a.divisor.constant_value)))
        delta = math.lcm(*moduli)

        def subst_y(f: Formula, term: LinearTerm) -> Formula:
            return substitute(f, y, term)

        def minus_inf(f: Formula) -> Formula:
            def on_atom(a: Atom) -> Formula:
                c = a.diff().coeff(y)
                if c.is_zero:
                    return a
                if a.kind == AtomKind.LE:
                    return TRUE if int(c.constant_value) == 1 else FALSE
                return a

            return map_formula(f, on_atom)

        branch_count = delta * (1 + len(lowers))
        self.stats.branches += branch_count
        if self.stats.branches > self.branch_ceiling:
            raise CooperError(
                f"case explosion: {self.stats.branches} branches exceed the "
                f"ceiling {self.branch_ceiling}"
            )
        out = []
        low_inf = minus_inf(phi_n)
        for j in range(1, delta + 1):
            out.append(
                self.prune(subst_y(low_inf, LinearTerm.of_poly(Polynomial.const(j))))
            )
        for b in lowers:
            for j in range(1, delta + 1):
                out.append(
                    self.prune(subst_y(phi_n, b.shift(Polynomial.const(j))))
                )
        return simplify(disj(out))

    def qe(self, phi: Formula) -> Formula:
        """Eliminate all quantifiers, innermost first."""
        phi = nnf(phi)
        if isinstance(phi, And):
            for c in phi.children:
                if isinstance(c, Atom):
                    src = _range_source(c)
                    if src is not None:
                        v, lo, hi = src
                        self.ambient[v] = _merge_range(
                            self.ambient.get(v, (None, None)), (lo, hi)
                        )
        return self._qe(phi)

    def _qe(self, phi: Formula) -> Formula:
        if isinstance(phi, (Atom, BoolConst)):
            return phi
        if isinstance(phi, And):
            return simplify(conj([self._qe(c) for c in phi.children]))
        if isinstance(phi, Or):
            return simplify(disj([self._qe(c) for c in phi.children]))
        if isinstance(phi, Not):
            # nnf leaves no negations; guard anyway
            return simplify(nnf(Not(self._qe(phi.body))))
        if isinstance(phi, Implies):
            return self._qe(nnf(phi))
        if isinstance(phi, Quant):
            if phi.kind == QuantKind.EXISTS:
                # existentials commute: collect the chain and eliminate in a
                # pin-friendly order (unit-coefficient equalities first)
                chain = []
                node: Formula = phi
                while (
                    isinstance(node, Quant) and node.kind == QuantKind.EXISTS
                ):
                    chain.append(node)
                    node = node.body
                cur = self._qe(node)
                rngs: list[Formula] = []
                for q in chain:
                    rngs.extend(self._rng(q))
                cur = self.prune(conj(rngs + [cur]))
                remaining = [q.var for q in chain]
                while remaining:
                    y = self._pick_var(remaining, cur)
                    remaining.remove(y)
                    cur = compact_disjunction(
                        self.push_exists(y, cur), self.start
                    )
                return cur
            # collect the maximal chain of nested universals so the whole
            # block shares a single negation: forall y1..yk phi is
            # not exists y1..yk not phi
            chain = []
            node: Formula = phi
            while isinstance(node, Quant) and node.kind == QuantKind.FORALL:
                chain.append(node)
                node = node.body
            cur = nnf(Not(self._qe(node)))
            for q in reversed(chain):
                cur = compact_disjunction(
                    self.push_exists(
                        q.var, self.prune(conj(self._rng(q) + [cur]))
                    ),
                    self.start,
                )
            out = simplify(nnf(Not(cur)))
            # the negation of a disjunction of cases is conjunctive; when it
            # is small enough, expand it back into pruned branches so later
            # stages see small disjuncts
            if isinstance(cur, Or) and len(cur.children) <= 3000:
                try:
                    branches = self.dnf_branches(out, work_budget=4_000_000)
                except CooperError:
                    branches = None
                if branches is not None:
                    out = compact_disjunction(
                        simplify(disj([self.prune(b) for b in branches])),
                        self.start,
                    )
            return out
        raise TypeError(f"unknown node {phi!r}")

    @staticmethod
    def _rng(q: Quant) -> list[Formula]:
        if q.bound is None:
            return []
        return [
            Atom.le(LinearTerm.of_poly(ZERO), LinearTerm.var(q.var)),
            Atom.le(LinearTerm.var(q.var), LinearTerm.of_poly(q.bound)),
        ]

    @staticmethod
    def _pick_var(remaining: list[str], phi: Formula) -> str:
        """Prefer variables pinned by a unit-coefficient equality, then by any
        equality, then the one touching the fewest atoms."""
        best = None
        best_key = None
        occurrences = {y: 0 for y in remaining}
        pin_score = {y: 2 for y in remaining}
        for a in set(atoms(phi)):
            d = a.diff()
            for y in remaining:
                c = d.coeff(y)
                if c.is_zero:
                    continue
                occurrences[y] += 1
                if a.kind == AtomKind.EQ and c.degree == 0:
                    if abs(int(c.constant_value)) == 1:
                        pin_score[y] = 0
                    else:
                        pin_score[y] = min(pin_score[y], 1)
        for y in remaining:
            key = (pin_score[y], occurrences[y], y)
            if best_key is None or key < best_key:
                best, best_key = y, key
        assert best is not None
        return best

    def dnf_branches(
        self, phi: Formula, work_budget: int = 300_000
    ) -> list[Formula] | None:
        """Expand a quantifier-free NNF formula into pruned conjunctive
        branches, testing each atom against accumulated ranges as it is
        chosen.  None when phi is not flat or the work budget runs out."""
        out: list[Formula] = []
        budget = [work_budget]

        class _NotFlat(Exception):
            pass

        def rec(pending: list[Formula], acc: list[Formula], ranges: dict[str, Range]):
            budget[0] -= 1
            if budget[0] <= 0:
                raise _NotFlat()
            while pending:
                f = pending.pop()
                if isinstance(f, BoolConst):
                    if not f.value:
                        return
                    continue
                if isinstance(f, And):
                    pending.extend(f.children)
                    continue
                if isinstance(f, Atom):
                    dec = _atom_vs_ranges(f, ranges, self.start)
                    if dec is False:
                        return
                    if dec is True:
                        continue
                    src = _range_source(f)
                    if src is not None:
                        v, lo, hi = src
                        merged = _merge_range(ranges.get(v, (None, None)), (lo, hi))
                        mlo, mhi = merged
                        if (
                            mlo is not None
                            and mhi is not None
                            and _poly_negative_for_all(mhi - mlo, self.start)
                        ):
                            return
                        ranges = {**ranges, v: merged}
                    acc.append(f)
                    continue
                if isinstance(f, Or):
                    for b in f.children:
                        rec(pending + [b], list(acc), dict(ranges))
                    return
                # Not/Implies/Quant: give up on full expansion
                raise _NotFlat()
            out.append(conj(acc))

        try:
            rec([phi], [], dict(self.ambient))
        except _NotFlat:
            return None
        return out

    @staticmethod
    def _or_product(phi: And) -> int:
        prod = 1
        for c in phi.children:
            if isinstance(c, Or):
                prod *= len(c.children)
                if prod > 10**9:
                    break
        return prod

    def _const_range(self, y: str, phi: Formula) -> tuple[int, int] | None:
        """Constant integer range [lo, hi] implied for y by top-level
        conjunct atoms, if both ends are constants."""
        conjuncts = phi.children if isinstance(phi, And) else (phi,)
        lo = hi = None
        for c in conjuncts:
            if isinstance(c, Atom):
                src = _range_source(c)
                if src is not None and src[0] == y:
                    _, l, h = src
                    if l is not None and l.degree <= 0:
                        lv = math.ceil(Fraction(l.constant_value))
                        lo = lv if lo is None else max(lo, lv)
                    if h is not None and h.degree <= 0:
                        hv = math.floor(Fraction(h.constant_value))
                        hi = hv if hi is None else min(hi, hv)
        if lo is None or hi is None:
            return None
        return lo, hi

    def push_exists(self, y: str, phi: Formula) -> Formula:
        """Miniscope the existential through disjunctions and y-free
        conjuncts before running the core elimination."""
        if y not in free_vars(phi):
            return phi
        key = (y, phi)
        if key in self.push_cache:
            return self.push_cache[key]
        out: Formula
        if isinstance(phi, Or):
            out = simplify(disj([self.push_exists(y, c) for c in phi.children]))
        elif isinstance(phi, And):
            dep = [c for c in phi.children if y in free_vars(c)]
            indep = [c for c in phi.children if y not in free_vars(c)]
            if indep:
                out = simplify(
                    conj(indep + [self.push_exists(y, conj(dep))])
                )
            elif any(isinstance(c, Or) for c in phi.children):
                branches = None
                if self._or_product(phi) <= 4096:
                    branches = self.dnf_branches(phi)
                if branches is not None:
                    out = simplify(
                        disj([self.push_exists(y, b) for b in branches])
                    )
                else:
                    # distribute the smallest disjunction lazily
                    ors = [
                        (len(c.children), i)
                        for i, c in enumerate(phi.children)
                        if isinstance(c, Or)
                    ]
                    _, i = min(ors)
                    rest = [c for j, c in enumerate(phi.children) if j != i]
                    out = simplify(
                        disj(
                            [
                                self.push_exists(y, self.prune(conj(rest + [b])))
                                for b in phi.children[i].children
                            ]
                        )
                    )
            else:
                out = self.eliminate_exists(y, phi)
        else:
            out = self.eliminate_exists(y, phi)
        self.push_cache[key] = out
        return out


def cooper_qe(
    phi: Formula, branch_ceiling: int = 2_000_000, start: int = 0
) -> Formula:
    """Quantifier-free equivalent of phi; the only divisibility predicates in
    the result have constant divisors.

    Every quantified variable must carry constant coefficients (after the
    base-t stage this always holds); otherwise CooperError names the atom.
    Equivalence holds for all t >= start (start=0 by default; the pipeline
    driver passes its stage threshold, enabling more pruning).
    """
    elim = CooperEliminator(branch_ceiling, start)
    out = elim.qe(phi)
    assert not any(isinstance(q, Quant) for q in _quant_nodes(out))
    return out
