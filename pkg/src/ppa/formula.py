"""Formulas over integer variables with Z[t]-polynomial coefficients.

Atoms are linear inequalities/equalities a(t).x <= b(t) / a(t).x = b(t) and
divisibility predicates D(f(t); term).  Connectives are !, &&, ||, -> plus
bounded and unbounded quantifiers.  Bounded quantifiers always have the
normal form 0 <= y <= f(t); general ranges [lo, hi] are desugared at parse
time by shifting the variable.

Surface syntax (UTF-8 text), also emitted by the printer:

    formula := implication; implication := disj ("->" implication)?
    disj    := conj ("||" conj)*
    conj    := unary ("&&" unary)*
    unary   := "!" unary | quant | "(" formula ")" | atom
    quant   := ("E"|"A") IDENT ["in" "[" poly "," poly "]"] "." unary
    atom    := lin REL lin | "D(" poly ";" lin ")"
    REL     := "<=" | "<" | "=" | ">=" | ">"

Linear terms are signed sums of products of integer literals, powers of t,
and at most one variable per product.  Strict and reversed relations are
normalized to <= over the integers at parse time (x < y becomes x <= y - 1).

No variable may occur both free and bound; the parser renames quantified
variables apart, so the invariant holds for every AST built here.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterator, Sequence

from .qpoly import ONE, T, ZERO, Polynomial, as_poly, poly_to_text

# ---------------------------------------------------------------------------
# Terms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearTerm:
    """Sum of coeff(var) * var plus a constant, all coefficients in Z[t].

    coeffs is sorted by variable name and stores no zero coefficients, so
    structural equality coincides with term equality.
    """

    coeffs: tuple[tuple[str, Polynomial], ...]
    const: Polynomial

    @staticmethod
    def make(coeffs: dict[str, Polynomial] | None = None, const=ZERO) -> "LinearTerm":
        cs = {}
        for v, p in (coeffs or {}).items():
            p = as_poly(p)
            if not p.is_zero:
                cs[v] = p
        return LinearTerm(tuple(sorted(cs.items())), as_poly(const))

    @staticmethod
    def var(name: str, coeff=ONE) -> "LinearTerm":
        return LinearTerm.make({name: as_poly(coeff)})

    @staticmethod
    def of_poly(p) -> "LinearTerm":
        return LinearTerm.make({}, as_poly(p))

    def coeff(self, v: str) -> Polynomial:
        for name, p in self.coeffs:
            if name == v:
                return p
        return ZERO

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(v for v, _ in self.coeffs)

    def is_constant(self) -> bool:
        return not self.coeffs

    def __add__(self, other: "LinearTerm") -> "LinearTerm":
        cs = dict(self.coeffs)
        for v, p in other.coeffs:
            cs[v] = cs.get(v, ZERO) + p
        return LinearTerm.make(cs, self.const + other.const)

    def __sub__(self, other: "LinearTerm") -> "LinearTerm":
        return self + other.scale(Polynomial.const(-1))

    def __neg__(self) -> "LinearTerm":
        return self.scale(Polynomial.const(-1))

    def scale(self, p) -> "LinearTerm":
        p = as_poly(p)
        return LinearTerm.make(
            {v: c * p for v, c in self.coeffs}, self.const * p
        )

    def shift(self, c) -> "LinearTerm":
        return LinearTerm.make(dict(self.coeffs), self.const + as_poly(c))

    def substitute(self, v: str, replacement: "LinearTerm") -> "LinearTerm":
        c = self.coeff(v)
        if c.is_zero:
            return self
        rest = LinearTerm.make(
            {u: p for u, p in self.coeffs if u != v}, self.const
        )
        return rest + replacement.scale(c)

    def evaluate(self, t: int, env: dict[str, int]) -> Fraction:
        acc = self.const.evaluate(t)
        for v, p in self.coeffs:
            acc += p.evaluate(t) * env[v]
        return acc

    def specialize(self, t: int) -> "LinearTerm":
        return LinearTerm.make(
            {v: Polynomial.const(p.evaluate(t)) for v, p in self.coeffs},
            Polynomial.const(self.const.evaluate(t)),
        )

    def denominator_lcm(self) -> int:
        import math

        d = self.const.denominator_lcm()
        for _, p in self.coeffs:
            d = math.lcm(d, p.denominator_lcm())
        return d

    def max_coeff_degree(self) -> int:
        return max((p.degree for _, p in self.coeffs), default=-1)

    def __str__(self) -> str:
        return term_to_text(self)


# ---------------------------------------------------------------------------
# Formula nodes
# ---------------------------------------------------------------------------


class AtomKind(Enum):
    LE = "<="
    EQ = "="
    DIV = "D"


class Formula:
    """Base class; all nodes are frozen dataclasses and hence hashable."""

    __slots__ = ()


@dataclass(frozen=True)
class Atom(Formula):
    kind: AtomKind
    lhs: LinearTerm
    rhs: LinearTerm
    divisor: Polynomial | None = None

    @staticmethod
    def le(lhs: LinearTerm, rhs: LinearTerm) -> "Atom":
        return Atom(AtomKind.LE, lhs, rhs)

    @staticmethod
    def le_zero(term: LinearTerm) -> "Atom":
        """term <= 0."""
        return Atom(AtomKind.LE, term, LinearTerm.of_poly(ZERO))

    @staticmethod
    def eq(lhs: LinearTerm, rhs: LinearTerm) -> "Atom":
        return Atom(AtomKind.EQ, lhs, rhs)

    @staticmethod
    def divides(divisor: Polynomial, term: LinearTerm) -> "Atom":
        return Atom(AtomKind.DIV, term, LinearTerm.of_poly(ZERO), as_poly(divisor))

    def diff(self) -> LinearTerm:
        """lhs - rhs (cached); for LE the atom means diff <= 0, for EQ
        diff = 0, for DIV divisibility of diff."""
        d = self.__dict__.get("_diff")
        if d is None:
            d = self.lhs - self.rhs
            object.__setattr__(self, "_diff", d)
        return d


@dataclass(frozen=True)
class BoolConst(Formula):
    value: bool


TRUE = BoolConst(True)
FALSE = BoolConst(False)


@dataclass(frozen=True)
class Not(Formula):
    body: Formula


@dataclass(frozen=True)
class And(Formula):
    children: tuple[Formula, ...]


@dataclass(frozen=True)
class Or(Formula):
    children: tuple[Formula, ...]


@dataclass(frozen=True)
class Implies(Formula):
    prem: Formula
    conc: Formula


class QuantKind(Enum):
    EXISTS = "E"
    FORALL = "A"


@dataclass(frozen=True)
class Quant(Formula):
    """Quantifier over var; bound None means unbounded over Z, otherwise the
    range is 0 <= var <= bound (a Z[t] polynomial)."""

    kind: QuantKind
    var: str
    bound: Polynomial | None
    body: Formula


def _install_hash_caching():
    """Deep trees make recomputing dataclass hashes quadratic; cache them on
    first use (nodes are immutable)."""

    def wrap(cls):
        orig = cls.__hash__

        def cached(self, _orig=orig):
            h = self.__dict__.get("_hash")
            if h is None:
                h = _orig(self)
                object.__setattr__(self, "_hash", h)
            return h

        cls.__hash__ = cached

    for cls in (Atom, BoolConst, Not, And, Or, Implies, Quant, LinearTerm):
        wrap(cls)


_install_hash_caching()


def conj(parts: Sequence[Formula]) -> Formula:
    flat: list[Formula] = []
    for p in parts:
        if isinstance(p, BoolConst):
            if not p.value:
                return FALSE
            continue
        if isinstance(p, And):
            flat.extend(p.children)
        else:
            flat.append(p)
    if not flat:
        return TRUE
    if len(flat) == 1:
        return flat[0]
    return And(tuple(flat))


def disj(parts: Sequence[Formula]) -> Formula:
    flat: list[Formula] = []
    for p in parts:
        if isinstance(p, BoolConst):
            if p.value:
                return TRUE
            continue
        if isinstance(p, Or):
            flat.extend(p.children)
        else:
            flat.append(p)
    if not flat:
        return FALSE
    if len(flat) == 1:
        return flat[0]
    return Or(tuple(flat))


# ---------------------------------------------------------------------------
# Traversals
# ---------------------------------------------------------------------------


def children(phi: Formula) -> tuple[Formula, ...]:
    if isinstance(phi, Not):
        return (phi.body,)
    if isinstance(phi, (And, Or)):
        return phi.children
    if isinstance(phi, Implies):
        return (phi.prem, phi.conc)
    if isinstance(phi, Quant):
        return (phi.body,)
    return ()


def atoms(phi: Formula) -> Iterator[Atom]:
    if isinstance(phi, Atom):
        yield phi
    for c in children(phi):
        yield from atoms(c)


def free_vars(phi: Formula) -> frozenset[str]:
    """Free variables, cached on the (immutable) node."""
    cached = phi.__dict__.get("_fv")
    if cached is not None:
        return cached
    if isinstance(phi, Atom):
        out = frozenset(phi.lhs.variables) | frozenset(phi.rhs.variables)
    elif isinstance(phi, Quant):
        out = free_vars(phi.body) - {phi.var}
    else:
        out = frozenset()
        for c in children(phi):
            out |= free_vars(c)
    object.__setattr__(phi, "_fv", out)
    return out


def bound_vars(phi: Formula) -> frozenset[str]:
    out: frozenset[str] = frozenset()
    if isinstance(phi, Quant):
        out |= {phi.var} | bound_vars(phi.body)
        return out
    for c in children(phi):
        out |= bound_vars(c)
    return out


def all_var_names(phi: Formula) -> frozenset[str]:
    return free_vars(phi) | bound_vars(phi)


def free_var_order(phi: Formula) -> tuple[str, ...]:
    """Canonical coordinate order for points: sorted free variable names."""
    return tuple(sorted(free_vars(phi)))


def map_formula(phi: Formula, fn) -> Formula:
    """Rebuild phi with fn applied to every Atom (fn returns a Formula)."""
    if isinstance(phi, Atom):
        return fn(phi)
    if isinstance(phi, BoolConst):
        return phi
    if isinstance(phi, Not):
        return Not(map_formula(phi.body, fn))
    if isinstance(phi, And):
        return conj([map_formula(c, fn) for c in phi.children])
    if isinstance(phi, Or):
        return disj([map_formula(c, fn) for c in phi.children])
    if isinstance(phi, Implies):
        return Implies(map_formula(phi.prem, fn), map_formula(phi.conc, fn))
    if isinstance(phi, Quant):
        return Quant(phi.kind, phi.var, phi.bound, map_formula(phi.body, fn))
    raise TypeError(f"unknown node {phi!r}")


def substitute(phi: Formula, var: str, replacement: LinearTerm) -> Formula:
    """Capture-avoiding substitution of a linear term for a free variable.

    Quantified variables are globally renamed apart by the parser and by the
    pipeline's fresh-name discipline, so capture cannot occur; hitting a
    binder for `var` or a replacement variable is an internal error.
    """
    repl_vars = set(replacement.variables)

    def walk(f: Formula) -> Formula:
        if var not in free_vars(f):
            return f
        if isinstance(f, Atom):
            return Atom(
                f.kind,
                f.lhs.substitute(var, replacement),
                f.rhs.substitute(var, replacement),
                f.divisor,
            )
        if isinstance(f, Quant):
            if f.var == var:
                return f  # var is shadowed below this binder
            if f.var in repl_vars:
                raise AssertionError(
                    f"substitution of {var} captured by binder {f.var}"
                )
            return Quant(f.kind, f.var, f.bound, walk(f.body))
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
        raise TypeError(f"unknown node {f!r}")

    return walk(phi)


def rename_bound(phi: Formula, old: str, new: str) -> Formula:
    """Rename one bound variable (new must be globally fresh)."""

    def walk(f: Formula) -> Formula:
        if isinstance(f, Quant) and f.var == old:
            body = substitute(f.body, old, LinearTerm.var(new))
            return Quant(f.kind, new, f.bound, walk_inner(body))
        return _rebuild(f, walk)

    def walk_inner(f: Formula) -> Formula:
        return _rebuild(f, walk_inner)

    return walk(phi)


def _rebuild(f: Formula, walk) -> Formula:
    if isinstance(f, (Atom, BoolConst)):
        return f
    if isinstance(f, Not):
        return Not(walk(f.body))
    if isinstance(f, And):
        return And(tuple(walk(c) for c in f.children))
    if isinstance(f, Or):
        return Or(tuple(walk(c) for c in f.children))
    if isinstance(f, Implies):
        return Implies(walk(f.prem), walk(f.conc))
    if isinstance(f, Quant):
        return Quant(f.kind, f.var, f.bound, walk(f.body))
    raise TypeError(f"unknown node {f!r}")


_fresh_counter = itertools.count()


def fresh_name(base: str, taken: set[str]) -> str:
    if base not in taken:
        return base
    k = 1
    while f"{base}_{k}" in taken:
        k += 1
    return f"{base}_{k}"


# ---------------------------------------------------------------------------
# Negation normal form
# ---------------------------------------------------------------------------


class NnfError(ValueError):
    pass


def _negate_atom(a: Atom) -> Formula:
    if a.kind == AtomKind.LE:
        # not(lhs <= rhs)  <=>  rhs + 1 <= lhs  <=>  -(lhs-rhs) <= -1
        return Atom.le(a.rhs.shift(ONE), a.lhs)
    if a.kind == AtomKind.EQ:
        return disj(
            [
                Atom.le(a.lhs.shift(ONE), a.rhs),
                Atom.le(a.rhs.shift(ONE), a.lhs),
            ]
        )
    # Divisibility: only constant divisors admit a finite rewrite.
    d = a.divisor
    assert d is not None
    if d.is_zero:
        return TRUE  # D(0; s) is false everywhere
    if not d.is_constant:
        raise NnfError(
            f"cannot negate divisibility by the non-constant {poly_to_text(d)}"
        )
    c = abs(int(d.constant_value))
    if c == 1:
        return FALSE  # everything is divisible by 1
    return disj(
        [
            Atom.divides(d, a.lhs.shift(Polynomial.const(k)))
            for k in range(1, c)
        ]
    )


def nnf(phi: Formula) -> Formula:
    """Negation-free form: implications rewritten, negations pushed to atoms
    and eliminated there.  Requires constant divisors under negations."""

    def pos(f: Formula) -> Formula:
        if isinstance(f, (Atom, BoolConst)):
            return f
        if isinstance(f, Not):
            return neg(f.body)
        if isinstance(f, And):
            return conj([pos(c) for c in f.children])
        if isinstance(f, Or):
            return disj([pos(c) for c in f.children])
        if isinstance(f, Implies):
            return disj([neg(f.prem), pos(f.conc)])
        if isinstance(f, Quant):
            return Quant(f.kind, f.var, f.bound, pos(f.body))
        raise TypeError(f"unknown node {f!r}")

    def neg(f: Formula) -> Formula:
        if isinstance(f, Atom):
            return _negate_atom(f)
        if isinstance(f, BoolConst):
            return BoolConst(not f.value)
        if isinstance(f, Not):
            return pos(f.body)
        if isinstance(f, And):
            return disj([neg(c) for c in f.children])
        if isinstance(f, Or):
            return conj([neg(c) for c in f.children])
        if isinstance(f, Implies):
            return conj([pos(f.prem), neg(f.conc)])
        if isinstance(f, Quant):
            flipped = (
                QuantKind.FORALL if f.kind == QuantKind.EXISTS else QuantKind.EXISTS
            )
            return Quant(flipped, f.var, f.bound, neg(f.body))
        raise TypeError(f"unknown node {f!r}")

    return pos(phi)


# ---------------------------------------------------------------------------
# Simplification
# ---------------------------------------------------------------------------


def _decide_var_free_atom(a: Atom) -> Formula:
    """Replace a variable-free atom by a constant when its truth value is the
    same for every natural t; otherwise keep it (it gates specific t)."""
    p = a.diff().const
    if a.kind == AtomKind.LE:
        if p.nonpositive_for_all_naturals():
            return TRUE
        if p.positive_for_all_naturals():
            return FALSE
        return a
    if a.kind == AtomKind.EQ:
        if p.is_zero:
            return TRUE
        if all(
            p.evaluate(tau) != 0 for tau in range(p.eventual_sign_threshold())
        ):
            return FALSE
        return a
    d = a.divisor
    assert d is not None
    if d.is_zero:
        return FALSE
    if not d.is_constant:
        return a
    c = abs(int(d.constant_value))
    if c == 0:
        return FALSE
    if not p.is_integral():
        return a
    residues = [int(p.evaluate(tau)) % c == 0 for tau in range(c)]
    if all(residues):
        return TRUE
    if not any(residues):
        return FALSE
    return a


def simplify(phi: Formula) -> Formula:
    """Cheap exact simplification: constant propagation, flattening,
    duplicate removal, and variable-free atom decisions valid for all t.

    Results are flagged on the node, so re-simplifying is O(1).
    """
    if phi.__dict__.get("_simplified"):
        return phi
    out = _simplify(phi)
    object.__setattr__(out, "_simplified", True)
    return out


def _simplify(phi: Formula) -> Formula:
    if isinstance(phi, Atom):
        if not phi.lhs.coeffs and not phi.rhs.coeffs:
            return _decide_var_free_atom(phi)
        return phi
    if isinstance(phi, BoolConst):
        return phi
    if isinstance(phi, Not):
        b = simplify(phi.body)
        if isinstance(b, BoolConst):
            return BoolConst(not b.value)
        if isinstance(b, Not):
            return b.body
        return Not(b)
    if isinstance(phi, And):
        parts: list[Formula] = []
        seen = set()
        for c in phi.children:
            c = simplify(c)
            if isinstance(c, BoolConst):
                if not c.value:
                    return FALSE
                continue
            items = c.children if isinstance(c, And) else (c,)
            for it in items:
                if it not in seen:
                    seen.add(it)
                    parts.append(it)
        return conj(parts)
    if isinstance(phi, Or):
        parts = []
        seen = set()
        for c in phi.children:
            c = simplify(c)
            if isinstance(c, BoolConst):
                if c.value:
                    return TRUE
                continue
            items = c.children if isinstance(c, Or) else (c,)
            for it in items:
                if it not in seen:
                    seen.add(it)
                    parts.append(it)
        return disj(parts)
    if isinstance(phi, Implies):
        prem, conc = simplify(phi.prem), simplify(phi.conc)
        if isinstance(prem, BoolConst):
            return conc if prem.value else TRUE
        if isinstance(conc, BoolConst) and conc.value:
            return TRUE
        return Implies(prem, conc)
    if isinstance(phi, Quant):
        b = simplify(phi.body)
        if isinstance(b, BoolConst):
            if phi.bound is None:
                return b
            # the range [0, f(t)] is empty exactly when f(t) < 0
            nonempty = Atom.le(
                LinearTerm.of_poly(ZERO), LinearTerm.of_poly(phi.bound)
            )
            if phi.kind == QuantKind.EXISTS:
                return simplify(nonempty) if b.value else FALSE
            return TRUE if b.value else simplify(Not(nonempty))
        return Quant(phi.kind, phi.var, phi.bound, b)
    raise TypeError(f"unknown node {phi!r}")


# ---------------------------------------------------------------------------
# Fixed-t semantics
# ---------------------------------------------------------------------------


def specialize(phi: Formula, t: int) -> Formula:
    """Evaluate every polynomial at t, yielding a t-free classical formula.

    At t = 0 every t-multiplied term degenerates to 0, and D(f(t); s) with
    f(t) = 0 becomes an atom that evaluates to false everywhere.
    """

    def on_atom(a: Atom) -> Formula:
        div = None
        if a.kind == AtomKind.DIV:
            assert a.divisor is not None
            div = Polynomial.const(a.divisor.evaluate(t))
        return Atom(a.kind, a.lhs.specialize(t), a.rhs.specialize(t), div)

    def walk(f: Formula) -> Formula:
        if isinstance(f, Atom):
            return on_atom(f)
        if isinstance(f, Quant):
            b = None if f.bound is None else Polynomial.const(f.bound.evaluate(t))
            return Quant(f.kind, f.var, b, walk(f.body))
        return _rebuild(f, walk)

    return walk(phi)


class UnboundedQuantifierError(ValueError):
    """Raised when point evaluation meets an unbounded quantifier; run
    quantifier elimination first."""


def eval_atom(a: Atom, t: int, env: dict[str, int]) -> bool:
    d = a.diff().evaluate(t, env)
    if a.kind == AtomKind.LE:
        return d <= 0
    if a.kind == AtomKind.EQ:
        return d == 0
    assert a.divisor is not None
    c = a.divisor.evaluate(t)
    if c == 0:
        return False  # D(0; s) is false for every s
    if c.denominator != 1 or d.denominator != 1:
        raise ValueError("divisibility over non-integers")
    return int(d) % int(c) == 0


def eval_point(
    phi: Formula,
    t: int,
    point: Sequence[int] | dict[str, int],
    order: Sequence[str] | None = None,
) -> bool:
    """Truth of phi at parameter t and the given free-variable assignment.

    point may be a dict or a coordinate tuple following `order` (default:
    sorted free variables).  Bounded quantifiers are enumerated; an unbounded
    quantifier raises UnboundedQuantifierError.
    """
    if isinstance(point, dict):
        env = dict(point)
    else:
        names = tuple(order) if order is not None else free_var_order(phi)
        if len(names) != len(point):
            raise ValueError(
                f"point arity {len(point)} != free variable count {len(names)}"
            )
        env = dict(zip(names, point))

    def walk(f: Formula, env: dict[str, int]) -> bool:
        if isinstance(f, Atom):
            return eval_atom(f, t, env)
        if isinstance(f, BoolConst):
            return f.value
        if isinstance(f, Not):
            return not walk(f.body, env)
        if isinstance(f, And):
            return all(walk(c, env) for c in f.children)
        if isinstance(f, Or):
            return any(walk(c, env) for c in f.children)
        if isinstance(f, Implies):
            return (not walk(f.prem, env)) or walk(f.conc, env)
        if isinstance(f, Quant):
            if f.bound is None:
                raise UnboundedQuantifierError(
                    f"cannot enumerate unbounded quantifier over {f.var}; "
                    "eliminate quantifiers first"
                )
            ub = f.bound.evaluate(t)
            if ub.denominator != 1:
                raise ValueError("non-integer quantifier bound")
            ub = int(ub)
            vals = range(0, ub + 1)
            if f.kind == QuantKind.EXISTS:
                return any(walk(f.body, {**env, f.var: y}) for y in vals)
            return all(walk(f.body, {**env, f.var: y}) for y in vals)
        raise TypeError(f"unknown node {f!r}")

    return walk(phi, env)


# ---------------------------------------------------------------------------
# Printer
# ---------------------------------------------------------------------------


def _coeff_text(p: Polynomial) -> str:
    """Coefficient as a product prefix: '', '-', '3*', 't*', '(t + 1)*', ..."""
    nonzero = [c for c in p.coeffs if c != 0]
    if len(nonzero) != 1:
        return f"({poly_to_text(p)})*"
    k = max(i for i, c in enumerate(p.coeffs) if c != 0)
    c = p.coeff(k)
    prefix = "-" if c < 0 else ""
    mag = abs(c)
    parts = []
    if mag != 1 or k == 0:
        parts.append(str(mag))
    if k >= 1:
        parts.append("t" if k == 1 else f"t^{k}")
    return prefix + "*".join(parts) + "*"


def term_to_text(term: LinearTerm) -> str:
    chunks: list[str] = []
    for v, p in term.coeffs:
        if p == ONE:
            chunks.append(v)
        elif p == Polynomial.const(-1):
            chunks.append(f"-{v}")
        else:
            chunks.append(f"{_coeff_text(p)}{v}")
    if not term.const.is_zero or not chunks:
        chunks.append(poly_to_text(term.const))
    out = chunks[0]
    for c in chunks[1:]:
        if c.startswith("-"):
            out += f" - {c[1:]}"
        else:
            out += f" + {c}"
    return out


def _coeff_needs_empty(p: Polynomial) -> bool:
    return p == ONE


def print_formula(phi: Formula, _prec: int = 0) -> str:
    """Emit the surface grammar; parse(print_formula(ast)) == ast."""
    # precedence: -> : 1, || : 2, && : 3, unary : 4
    if isinstance(phi, Atom):
        if phi.kind == AtomKind.DIV:
            assert phi.divisor is not None
            return f"D({poly_to_text(phi.divisor)}; {term_to_text(phi.lhs)})"
        op = "<=" if phi.kind == AtomKind.LE else "="
        return f"{term_to_text(phi.lhs)} {op} {term_to_text(phi.rhs)}"
    if isinstance(phi, BoolConst):
        return "0 <= 0" if phi.value else "1 <= 0"
    if isinstance(phi, Not):
        return f"!{print_formula(phi.body, 4)}"
    if isinstance(phi, And):
        s = " && ".join(print_formula(c, 4) for c in phi.children)
        return f"({s})" if _prec > 3 else s
    if isinstance(phi, Or):
        s = " || ".join(print_formula(c, 3) for c in phi.children)
        return f"({s})" if _prec > 2 else s
    if isinstance(phi, Implies):
        s = f"{print_formula(phi.prem, 2)} -> {print_formula(phi.conc, 1)}"
        return f"({s})" if _prec > 1 else s
    if isinstance(phi, Quant):
        k = "E" if phi.kind == QuantKind.EXISTS else "A"
        if phi.bound is None:
            s = f"{k} {phi.var}. {print_formula(phi.body, 0)}"
        else:
            s = (
                f"{k} {phi.var} in [0, {poly_to_text(phi.bound)}]. "
                f"{print_formula(phi.body, 0)}"
            )
        return f"({s})" if _prec > 0 else s
    raise TypeError(f"unknown node {phi!r}")


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


class ParseError(ValueError):
    def __init__(self, msg: str, line: int, col: int):
        self.line, self.col = line, col
        super().__init__(f"{msg} (line {line}, column {col})")


_KEYWORDS = {"E", "A", "D", "in", "t"}

_TOKEN_SPEC = [
    ("INT", r"\d+"),
    ("IDENT", r"[A-Za-z_][A-Za-z_0-9]*"),
    ("OP", r"<=|>=|->|\|\||&&|[-+*^()\[\],;.!<>=]"),
    ("WS", r"\s+"),
]

import re as _re

_TOKEN_RE = _re.compile("|".join(f"(?P<{n}>{p})" for n, p in _TOKEN_SPEC))


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        tok = m.group()
        if kind != "WS":
            toks.append(_Tok(kind, tok, line, col))
        nl = tok.count("\n")
        if nl:
            line += nl
            col = len(tok) - tok.rfind("\n")
        else:
            col += len(tok)
        pos = m.end()
    toks.append(_Tok("EOF", "", line, col))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    # -- token helpers

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def next(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text: str) -> _Tok:
        t = self.peek()
        if t.text != text:
            raise ParseError(f"expected {text!r}, found {t.text!r}", t.line, t.col)
        return self.next()

    def err(self, msg: str):
        t = self.peek()
        raise ParseError(msg, t.line, t.col)

    # -- grammar

    def formula(self) -> Formula:
        lhs = self.disjunction()
        if self.peek().text == "->":
            self.next()
            return Implies(lhs, self.formula())
        return lhs

    def disjunction(self) -> Formula:
        parts = [self.conjunction()]
        while self.peek().text == "||":
            self.next()
            parts.append(self.conjunction())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def conjunction(self) -> Formula:
        parts = [self.unary()]
        while self.peek().text == "&&":
            self.next()
            parts.append(self.unary())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def unary(self) -> Formula:
        t = self.peek()
        if t.text == "!":
            self.next()
            return Not(self.unary())
        if t.text in ("E", "A"):
            return self.quantifier()
        if t.text == "(":
            save = self.i
            self.next()
            try:
                inner = self.formula()
                self.expect(")")
                return inner
            except ParseError:
                # could be a parenthesized polynomial factor inside an atom
                self.i = save
                return self.atom()
        return self.atom()

    def quantifier(self) -> Formula:
        kw = self.next()
        kind = QuantKind.EXISTS if kw.text == "E" else QuantKind.FORALL
        name_tok = self.peek()
        if name_tok.kind != "IDENT" or name_tok.text in _KEYWORDS:
            self.err("expected a variable name after quantifier")
        var = self.next().text
        lower = None
        upper = None
        if self.peek().text == "in":
            self.next()
            self.expect("[")
            lower = self.poly()
            self.expect(",")
            upper = self.poly()
            self.expect("]")
        self.expect(".")
        # Quantifier scope extends as far right as possible, so the common
        # "E y in [0, f]. a && b" binds y in both conjuncts.
        body = self.formula()
        if upper is None:
            return Quant(kind, var, None, body)
        # Desugar [lo, hi] to the normal form [0, hi - lo] by shifting var.
        assert lower is not None
        if not lower.is_zero:
            body = substitute(body, var, LinearTerm.var(var).shift(lower))
        return Quant(kind, var, upper - lower, body)

    def atom(self) -> Formula:
        t = self.peek()
        if t.text == "D":
            self.next()
            self.expect("(")
            d = self.poly()
            self.expect(";")
            term = self.linear()
            self.expect(")")
            return Atom.divides(d, term)
        lhs = self.linear()
        rel = self.peek()
        if rel.text not in ("<=", "<", "=", ">=", ">"):
            self.err(f"expected a relation, found {rel.text!r}")
        self.next()
        rhs = self.linear()
        if rel.text == "<=":
            return Atom.le(lhs, rhs)
        if rel.text == "<":
            return Atom.le(lhs.shift(ONE), rhs)
        if rel.text == ">=":
            return Atom.le(rhs, lhs)
        if rel.text == ">":
            return Atom.le(rhs.shift(ONE), lhs)
        return Atom.eq(lhs, rhs)

    def linear(self) -> LinearTerm:
        acc = LinearTerm.make()
        sign = 1
        first = True
        while True:
            t = self.peek()
            if first and t.text in ("+", "-"):
                sign = -1 if t.text == "-" else 1
                self.next()
            acc = acc + self.product().scale(Polynomial.const(sign))
            first = False
            t = self.peek()
            if t.text in ("+", "-"):
                sign = -1 if t.text == "-" else 1
                self.next()
                continue
            return acc

    def product(self) -> LinearTerm:
        """Product of factors; at most one factor may contain variables."""
        coeff = ONE
        sub: LinearTerm | None = None
        while True:
            f = self.factor()
            if isinstance(f, LinearTerm):
                if sub is not None:
                    self.err("product of two variable terms is not linear")
                sub = f
            else:
                coeff = coeff * f
            if self.peek().text == "*":
                self.next()
                continue
            break
        if sub is None:
            return LinearTerm.of_poly(coeff)
        return sub.scale(coeff)

    def factor(self) -> Polynomial | LinearTerm:
        t = self.peek()
        if t.text == "(":
            self.next()
            term = self.linear()
            self.expect(")")
            if term.is_constant():
                return self._maybe_power(term.const)
            if self.peek().text == "^":
                self.err("cannot raise a variable term to a power")
            return term
        if t.kind == "INT":
            self.next()
            return self._maybe_power(Polynomial.const(int(t.text)))
        if t.text == "t":
            self.next()
            return self._maybe_power(T)
        if t.kind == "IDENT" and t.text not in _KEYWORDS:
            self.next()
            return LinearTerm.var(t.text)
        self.err(f"expected a factor, found {t.text!r}")
        raise AssertionError

    def _maybe_power(self, p: Polynomial) -> Polynomial:
        if self.peek().text == "^":
            self.next()
            e = self.peek()
            if e.kind != "INT":
                self.err("expected an integer exponent")
            self.next()
            return p ** int(e.text)
        return p

    def poly(self) -> Polynomial:
        """A variable-free linear(), i.e. an integer polynomial in t."""
        save = self.peek()
        term = self.linear()
        if term.coeffs:
            raise ParseError(
                "expected a polynomial in t only", save.line, save.col
            )
        return term.const


def _rename_apart(phi: Formula) -> Formula:
    """Enforce the convention that no name is both free and bound and no two
    binders share a name, by renaming quantified variables."""
    taken = set(all_var_names(phi))
    free = set(free_vars(phi))
    used_binders: set[str] = set()

    def walk(f: Formula) -> Formula:
        nonlocal taken
        if isinstance(f, Quant):
            name = f.var
            if name in free or name in used_binders:
                new = fresh_name(name, taken)
                taken.add(new)
                body = substitute(f.body, name, LinearTerm.var(new))
                f = Quant(f.kind, new, f.bound, body)
            used_binders.add(f.var)
            return Quant(f.kind, f.var, f.bound, walk(f.body))
        return _rebuild(f, walk)

    return walk(phi)


def parse(text: str) -> Formula:
    """Parse a formula; quantified variables are renamed apart and integer
    coefficients are checked."""
    p = _Parser(text)
    phi = p.formula()
    tok = p.peek()
    if tok.kind != "EOF":
        raise ParseError(f"trailing input {tok.text!r}", tok.line, tok.col)
    phi = _rename_apart(phi)
    for a in atoms(phi):
        for term in (a.lhs, a.rhs):
            if not term.const.is_integral() or any(
                not c.is_integral() for _, c in term.coeffs
            ):
                raise ParseError("non-integer coefficient", 1, 1)
    return phi
