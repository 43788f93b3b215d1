"""Brute-force ground truth at fixed t.

Enumerates boxes of integer points against the recursive formula semantics,
counts solutions, and compares two formulas over a (t, box) window.  Every
symbolic stage of the solver is validated against this module, so it stays
deliberately simple: compiled closures over integer environments, plus a
numpy grid path for large boxes.

The candidate-point ceiling guards against accidental blow-ups; override it
with the PPA_ENUM_CEILING environment variable or per call.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .formula import (
    And,
    Atom,
    AtomKind,
    BoolConst,
    Formula,
    Implies,
    Not,
    Or,
    Quant,
    QuantKind,
    free_var_order,
)

DEFAULT_CEILING = 10_000_000


def enum_ceiling() -> int:
    return int(os.environ.get("PPA_ENUM_CEILING", DEFAULT_CEILING))


class EnumerationLimit(RuntimeError):
    pass


@dataclass(frozen=True)
class Box:
    """Closed integer intervals per variable, in a fixed variable order."""

    names: tuple[str, ...]
    bounds: tuple[tuple[int, int], ...]

    def __post_init__(self):
        for lo, hi in self.bounds:
            if lo > hi:
                raise ValueError(f"empty interval [{lo}, {hi}]")

    @staticmethod
    def cube(names: Sequence[str], lo: int, hi: int) -> "Box":
        names = tuple(names)
        return Box(names, tuple((lo, hi) for _ in names))

    @staticmethod
    def of(spec: dict[str, tuple[int, int]]) -> "Box":
        names = tuple(sorted(spec))
        return Box(names, tuple(spec[n] for n in names))

    @property
    def volume(self) -> int:
        v = 1
        for lo, hi in self.bounds:
            v *= hi - lo + 1
        return v

    def doubled(self) -> "Box":
        return Box(
            self.names, tuple((2 * lo - 1, 2 * hi + 1) for lo, hi in self.bounds)
        )


@dataclass(frozen=True)
class Discrepancy:
    t: int
    point: tuple[int, ...]
    lhs_truth: bool
    rhs_truth: bool

    def __str__(self) -> str:
        return (
            f"at t={self.t}, point={self.point}: "
            f"lhs={self.lhs_truth}, rhs={self.rhs_truth}"
        )


# ---------------------------------------------------------------------------
# Compiled evaluation
# ---------------------------------------------------------------------------


def compile_formula(phi: Formula, t: int, names: Sequence[str]):
    """Compile phi at fixed t into a closure over an integer environment list.

    Bound variables get slots past the free ones; bounded quantifiers loop.
    """
    slots = {n: i for i, n in enumerate(names)}
    nslots = [len(names)]

    def comp(f: Formula):
        if isinstance(f, Atom):
            terms = []
            diff = f.diff()
            const = diff.const.evaluate(t)
            if const.denominator != 1:
                raise ValueError("non-integer constant in atom")
            const = int(const)
            for v, p in diff.coeffs:
                c = p.evaluate(t)
                if c.denominator != 1:
                    raise ValueError("non-integer coefficient in atom")
                if int(c) != 0:
                    terms.append((slots[v], int(c)))
            if f.kind == AtomKind.LE:
                return lambda env: (
                    sum(c * env[i] for i, c in terms) + const <= 0
                )
            if f.kind == AtomKind.EQ:
                return lambda env: (
                    sum(c * env[i] for i, c in terms) + const == 0
                )
            dv = f.divisor.evaluate(t)
            if dv == 0:
                return lambda env: False
            d = abs(int(dv))
            return lambda env: (
                (sum(c * env[i] for i, c in terms) + const) % d == 0
            )
        if isinstance(f, BoolConst):
            v = f.value
            return lambda env: v
        if isinstance(f, Not):
            body = comp(f.body)
            return lambda env: not body(env)
        if isinstance(f, And):
            parts = [comp(c) for c in f.children]
            return lambda env: all(p(env) for p in parts)
        if isinstance(f, Or):
            parts = [comp(c) for c in f.children]
            return lambda env: any(p(env) for p in parts)
        if isinstance(f, Implies):
            prem, conc = comp(f.prem), comp(f.conc)
            return lambda env: (not prem(env)) or conc(env)
        if isinstance(f, Quant):
            if f.bound is None:
                from .formula import UnboundedQuantifierError

                raise UnboundedQuantifierError(
                    f"cannot enumerate unbounded quantifier over {f.var}"
                )
            ubf = f.bound.evaluate(t)
            ub = int(ubf)
            slot = nslots[0]
            slots[f.var] = slot
            nslots[0] += 1
            body = comp(f.body)
            del slots[f.var]
            if f.kind == QuantKind.EXISTS:
                def ex(env):
                    for y in range(0, ub + 1):
                        env[slot] = y
                        if body(env):
                            return True
                    return False

                return ex

            def fa(env):
                for y in range(0, ub + 1):
                    env[slot] = y
                    if not body(env):
                        return False
                return True

            return fa
        raise TypeError(f"unknown node {f!r}")

    fn = comp(phi)
    width = nslots[0]

    def run(point: Sequence[int]) -> bool:
        env = list(point) + [0] * (width - len(point))
        return fn(env)

    return run


_GRID_SAFE = 2**62


def _grid_bound(phi: Formula, t: int, box: Box) -> int:
    """Crude magnitude bound for atom values on the box (overflow guard)."""
    big = max((max(abs(lo), abs(hi)) for lo, hi in box.bounds), default=0)
    worst = 0
    for_atoms = []

    def walk(f):
        if isinstance(f, Atom):
            for_atoms.append(f)
        if isinstance(f, Quant):
            nonlocal big
            big = max(big, abs(int(f.bound.evaluate(t))) if f.bound else 0)
        for c in _sub(f):
            walk(c)

    def _sub(f):
        from .formula import children

        return children(f)

    walk(phi)
    for a in for_atoms:
        diff = a.diff()
        s = abs(diff.const.evaluate(t))
        for _, p in diff.coeffs:
            s += abs(p.evaluate(t)) * big
        worst = max(worst, int(s))
    return worst


def truth_grid(phi: Formula, t: int, box: Box) -> np.ndarray:
    """Boolean array over the box grid (index order = box.names order)."""
    shape = tuple(hi - lo + 1 for lo, hi in box.bounds)
    axes = {}
    for i, (n, (lo, hi)) in enumerate(zip(box.names, box.bounds)):
        idx = [1] * len(shape)
        idx[i] = shape[i]
        axes[n] = np.arange(lo, hi + 1, dtype=np.int64).reshape(idx)

    def walk(f: Formula, env: dict[str, np.ndarray]):
        if isinstance(f, Atom):
            diff = f.diff()
            acc = np.full(shape, int(diff.const.evaluate(t)), dtype=np.int64)
            for v, p in diff.coeffs:
                acc = acc + int(p.evaluate(t)) * env[v]
            if f.kind == AtomKind.LE:
                return acc <= 0
            if f.kind == AtomKind.EQ:
                return acc == 0
            dv = f.divisor.evaluate(t)
            if dv == 0:
                return np.zeros(shape, dtype=bool)
            return acc % abs(int(dv)) == 0
        if isinstance(f, BoolConst):
            return np.full(shape, f.value, dtype=bool)
        if isinstance(f, Not):
            return ~walk(f.body, env)
        if isinstance(f, And):
            acc = np.ones(shape, dtype=bool)
            for c in f.children:
                acc &= walk(c, env)
            return acc
        if isinstance(f, Or):
            acc = np.zeros(shape, dtype=bool)
            for c in f.children:
                acc |= walk(c, env)
            return acc
        if isinstance(f, Implies):
            return ~walk(f.prem, env) | walk(f.conc, env)
        if isinstance(f, Quant):
            if f.bound is None:
                from .formula import UnboundedQuantifierError

                raise UnboundedQuantifierError(
                    f"cannot enumerate unbounded quantifier over {f.var}"
                )
            ub = int(f.bound.evaluate(t))
            if f.kind == QuantKind.EXISTS:
                acc = np.zeros(shape, dtype=bool)
                for y in range(0, ub + 1):
                    acc |= walk(f.body, {**env, f.var: np.int64(y)})
                return acc
            acc = np.ones(shape, dtype=bool)
            for y in range(0, ub + 1):
                acc &= walk(f.body, {**env, f.var: np.int64(y)})
            return acc
        raise TypeError(f"unknown node {f!r}")

    return walk(phi, axes)


# ---------------------------------------------------------------------------
# Enumeration, counting, comparison
# ---------------------------------------------------------------------------


def _check_ceiling(box: Box, ceiling: int | None):
    cap = ceiling if ceiling is not None else enum_ceiling()
    if box.volume > cap:
        raise EnumerationLimit(
            f"box volume {box.volume} exceeds the ceiling {cap}"
        )


def _box_points(box: Box):
    import itertools

    ranges = [range(lo, hi + 1) for lo, hi in box.bounds]
    return itertools.product(*ranges)


def enumerate_solutions(
    phi: Formula,
    t: int,
    box: Box,
    ceiling: int | None = None,
) -> list[tuple[int, ...]]:
    """All box points satisfying phi at t, in lexicographic order.

    Coordinates follow box.names; box.names must cover the free variables.
    """
    _check_ceiling(box, ceiling)
    missing = set(free_var_order(phi)) - set(box.names)
    if missing:
        raise ValueError(f"box lacks variables {sorted(missing)}")
    use_grid = box.volume >= 4096 and len(box.names) >= 1
    if use_grid and _grid_bound(phi, t, box) < _GRID_SAFE:
        g = truth_grid(phi, t, box)
        out = []
        los = [lo for lo, _ in box.bounds]
        for idx in np.argwhere(g):
            out.append(tuple(int(i) + lo for i, lo in zip(idx, los)))
        out.sort()
        return out
    fn = compile_formula(phi, t, box.names)
    return [tuple(p) for p in _box_points(box) if fn(p)]


def count_in_box(
    phi: Formula, t: int, box: Box, ceiling: int | None = None
) -> int:
    _check_ceiling(box, ceiling)
    missing = set(free_var_order(phi)) - set(box.names)
    if missing:
        raise ValueError(f"box lacks variables {sorted(missing)}")
    if box.volume >= 4096 and _grid_bound(phi, t, box) < _GRID_SAFE:
        return int(truth_grid(phi, t, box).sum())
    fn = compile_formula(phi, t, box.names)
    return sum(1 for p in _box_points(box) if fn(p))


def equiv_check(
    phi: Formula,
    psi: Formula,
    t_range: Iterable[int],
    box: Box,
    ceiling: int | None = None,
) -> Discrepancy | None:
    """First (t, point) where phi and psi disagree, scanning lexicographically;
    None when they agree on the whole window."""
    fv_phi, fv_psi = free_var_order(phi), free_var_order(psi)
    if set(fv_phi) - set(box.names) or set(fv_psi) - set(box.names):
        raise ValueError(
            f"free-variable mismatch: {fv_phi} vs {fv_psi} vs box {box.names}"
        )
    _check_ceiling(box, ceiling)
    for t in t_range:
        if box.volume >= 4096 and max(
            _grid_bound(phi, t, box), _grid_bound(psi, t, box)
        ) < _GRID_SAFE:
            ga, gb = truth_grid(phi, t, box), truth_grid(psi, t, box)
            neq = ga != gb
            if neq.any():
                idx = tuple(int(i) for i in np.argwhere(neq)[0])
                point = tuple(
                    lo + i for i, (lo, _) in zip(idx, box.bounds)
                )
                return Discrepancy(t, point, bool(ga[idx]), bool(gb[idx]))
            continue
        fa = compile_formula(phi, t, box.names)
        fb = compile_formula(psi, t, box.names)
        for p in _box_points(box):
            va, vb = fa(p), fb(p)
            if va != vb:
                return Discrepancy(t, tuple(p), va, vb)
    return None
