"""Exact univariate arithmetic in the parameter t.

Everything downstream (formulas, lattice reductions, counting) is built on
four value types defined here:

  Polynomial       dense coefficients over Q, lowest degree first; the zero
                   polynomial is the empty tuple.
  RationalFunction reduced quotient of two polynomials, denominator leading
                   coefficient positive (hence eventually positive).
  QuasiPolynomial  a period m and m constituent polynomials; the value at t
                   is constituents[t mod m](t).
  EQP              a quasi-polynomial valid for all t >= threshold, plus an
                   explicit finite table of exceptional values below it.

All arithmetic is exact (fractions.Fraction).  "Eventual" statements (signs,
comparisons) come with constructive thresholds derived from the Cauchy root
bound, so every "for sufficiently large t" claim is testable.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

Rat = Fraction

# Coefficients are stored as plain ints wherever exact (they interoperate
# with Fraction and share numerator/denominator duck typing); Fractions
# appear only when a value is genuinely non-integral.


def _rat(x):
    if isinstance(x, int):
        return x
    if isinstance(x, Fraction):
        return int(x) if x.denominator == 1 else x
    return Fraction(x)


# ---------------------------------------------------------------------------
# Polynomials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Polynomial:
    """Polynomial in t with rational coefficients, lowest degree first.

    Invariant: the last stored coefficient is nonzero (zero polynomial = ()).
    """

    coeffs: tuple[Fraction | int, ...]

    # -- construction -------------------------------------------------------

    @staticmethod
    def make(cs: Iterable) -> "Polynomial":
        out = [_rat(c) for c in cs]
        while out and out[-1] == 0:
            out.pop()
        return Polynomial(tuple(out))

    @staticmethod
    def const(c) -> "Polynomial":
        return Polynomial.make([c])

    @staticmethod
    def t(power: int = 1, coeff=1) -> "Polynomial":
        return Polynomial.make([0] * power + [coeff])

    # -- basic queries -------------------------------------------------------

    @property
    def is_zero(self) -> bool:
        return not self.coeffs

    @property
    def degree(self) -> int:
        """Degree; the zero polynomial has degree -1."""
        return len(self.coeffs) - 1

    @property
    def leading(self):
        return self.coeffs[-1] if self.coeffs else 0

    @property
    def is_constant(self) -> bool:
        return len(self.coeffs) <= 1

    @property
    def constant_value(self):
        return self.coeffs[0] if self.coeffs else 0

    def is_integral(self) -> bool:
        """True when all coefficients are integers (membership in Z[t])."""
        return all(c.denominator == 1 for c in self.coeffs)

    def coeff(self, k: int):
        return self.coeffs[k] if 0 <= k < len(self.coeffs) else 0

    # -- arithmetic -----------------------------------------------------------

    def __add__(self, other) -> "Polynomial":
        other = as_poly(other)
        n = max(len(self.coeffs), len(other.coeffs))
        return Polynomial.make(
            [self.coeff(k) + other.coeff(k) for k in range(n)]
        )

    def __radd__(self, other) -> "Polynomial":
        return self.__add__(other)

    def __sub__(self, other) -> "Polynomial":
        return self.__add__(as_poly(other).__neg__())

    def __rsub__(self, other) -> "Polynomial":
        return as_poly(other).__sub__(self)

    def __neg__(self) -> "Polynomial":
        return Polynomial(tuple(-c for c in self.coeffs))

    def __mul__(self, other) -> "Polynomial":
        other = as_poly(other)
        if self.is_zero or other.is_zero:
            return ZERO
        out = [0] * (len(self.coeffs) + len(other.coeffs) - 1)
        for i, a in enumerate(self.coeffs):
            if a == 0:
                continue
            for j, b in enumerate(other.coeffs):
                out[i + j] += a * b
        return Polynomial.make(out)

    def __rmul__(self, other) -> "Polynomial":
        return self.__mul__(other)

    def __pow__(self, n: int) -> "Polynomial":
        acc = ONE
        for _ in range(n):
            acc = acc * self
        return acc

    def scale(self, c) -> "Polynomial":
        c = _rat(c)
        return Polynomial.make([c * a for a in self.coeffs])

    def evaluate(self, t):
        acc = 0
        for c in reversed(self.coeffs):
            acc = acc * t + c
        return acc

    def compose(self, inner: "Polynomial") -> "Polynomial":
        """self(inner(t))."""
        acc = ZERO
        for c in reversed(self.coeffs):
            acc = acc * inner + Polynomial.const(c)
        return acc

    def divmod_q(self, other: "Polynomial") -> tuple["Polynomial", "Polynomial"]:
        """Quotient and remainder over Q[t]; deg(remainder) < deg(other)."""
        if other.is_zero:
            raise ZeroDivisionError("polynomial division by zero")
        q = []
        rem = list(self.coeffs)
        d = other.degree
        lead = Fraction(other.leading)
        for k in range(len(rem) - 1 - d, -1, -1):
            c = rem[k + d] / lead
            q.append(c)
            if c != 0:
                for j, b in enumerate(other.coeffs):
                    rem[k + j] -= c * b
        q.reverse()
        return Polynomial.make(q), Polynomial.make(rem[:d] if d > 0 else [])

    def gcd_q(self, other: "Polynomial") -> "Polynomial":
        """Monic gcd over Q[t] (the zero polynomial if both are zero)."""
        a, b = self, other
        while not b.is_zero:
            a, b = b, a.divmod_q(b)[1]
        if a.is_zero:
            return ZERO
        return a.scale(Fraction(1) / a.leading)

    def content(self) -> Fraction:
        """Positive rational c with self = c * primitive integer polynomial."""
        if self.is_zero:
            return Fraction(0)
        num = math.gcd(*[c.numerator for c in self.coeffs])
        den = math.lcm(*[c.denominator for c in self.coeffs])
        return Fraction(num, den)

    def primitive(self) -> "Polynomial":
        """self divided by its content; integer coefficients, gcd 1."""
        if self.is_zero:
            return ZERO
        return self.scale(1 / self.content())

    def abs_coeffs(self) -> "Polynomial":
        """Coefficient-wise absolute value; dominates |self(t)| for t >= 0."""
        return Polynomial.make([abs(c) for c in self.coeffs])

    def denominator_lcm(self) -> int:
        if self.is_zero:
            return 1
        return math.lcm(*[c.denominator for c in self.coeffs])

    # -- eventual behavior ----------------------------------------------------

    def eventual_sign(self) -> int:
        """Sign of self(t) for all sufficiently large t: -1, 0, or +1."""
        if self.is_zero:
            return 0
        return 1 if self.leading > 0 else -1

    def eventual_sign_threshold(self) -> int:
        """Integer T such that sign(self(t)) == eventual_sign() for all t >= T.

        T = 1 + max(1, Cauchy root bound); every real root is below that.
        """
        cached = self.__dict__.get("_est")
        if cached is not None:
            return cached
        if self.degree <= 0:
            out = 0
        else:
            lead = Fraction(self.leading)
            bound = max(abs(Fraction(c) / lead) for c in self.coeffs[:-1])
            cauchy = 1 + max(Fraction(1), bound)
            out = math.floor(cauchy) + 1
        object.__setattr__(self, "_est", out)
        return out

    def sign_for_all_naturals(self) -> int | None:
        """Return s in {-1, 0, +1} if sign(self(t)) == s for every t in N,
        with 0 meaning identically zero; None if the sign varies."""
        if self.is_zero:
            return 0
        ev = self.eventual_sign()
        for t in range(self.eventual_sign_threshold()):
            v = self.evaluate(t)
            if (v > 0) - (v < 0) != ev:
                return None
        return ev

    def nonpositive_for_all_naturals(self) -> bool:
        """Exact decision of self(t) <= 0 for every t in N."""
        if self.eventual_sign() > 0:
            return False
        return all(
            self.evaluate(t) <= 0 for t in range(self.eventual_sign_threshold())
        )

    def positive_for_all_naturals(self) -> bool:
        if self.eventual_sign() <= 0:
            return False
        return all(
            self.evaluate(t) > 0 for t in range(self.eventual_sign_threshold())
        )

    # -- text -----------------------------------------------------------------

    def __str__(self) -> str:
        return poly_to_text(self)

    def __repr__(self) -> str:
        return f"Polynomial({poly_to_text(self)!r})"


ZERO = Polynomial(())
ONE = Polynomial((1,))
T = Polynomial((0, 1))


def as_poly(x) -> Polynomial:
    if isinstance(x, Polynomial):
        return x
    if isinstance(x, (int, Fraction)):
        return Polynomial.const(x)
    raise TypeError(f"cannot coerce {x!r} to Polynomial")


def poly_eval(p: Polynomial, t) -> Fraction:
    return p.evaluate(t)


def poly_eventual_sign(p: Polynomial) -> int:
    return p.eventual_sign()


def poly_lcm_q(a: Polynomial, b: Polynomial) -> Polynomial:
    if a.is_zero or b.is_zero:
        return ZERO
    g = a.gcd_q(b)
    return a.divmod_q(g)[0] * b


# -- polynomial text form -----------------------------------------------------

_TERM_RE = re.compile(
    r"\s*([+-])?\s*(?:(\d+(?:/\d+)?)\s*\*?\s*)?(t(?:\^(\d+))?)?\s*"
)


def poly_to_text(p: Polynomial) -> str:
    """Canonical text form, e.g. "t^2 - 2*t + 2"; rationals as "1/2*t"."""
    if p.is_zero:
        return "0"
    parts: list[str] = []
    for k in range(p.degree, -1, -1):
        c = p.coeff(k)
        if c == 0:
            continue
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        if k == 0:
            body = str(mag)
        else:
            tpart = "t" if k == 1 else f"t^{k}"
            body = tpart if mag == 1 else f"{mag}*{tpart}"
        if not parts:
            parts.append(body if sign == "+" else f"-{body}")
        else:
            parts.append(f" {sign} {body}")
    return "".join(parts)


class PolyParseError(ValueError):
    pass


def poly_from_text(text: str) -> Polynomial:
    """Parse the canonical polynomial text form (inverse of poly_to_text)."""
    s = text.strip()
    if not s:
        raise PolyParseError("empty polynomial text")
    if s == "0":
        return ZERO
    acc = ZERO
    pos = 0
    first = True
    while pos < len(s):
        m = _TERM_RE.match(s, pos)
        if not m or m.end() == pos:
            raise PolyParseError(f"bad polynomial syntax at {s[pos:]!r}")
        sign, coeff, tpart, power = m.groups()
        if sign is None and not first:
            raise PolyParseError(f"missing sign near {s[pos:]!r}")
        if coeff is None and tpart is None:
            raise PolyParseError(f"empty term near {s[pos:]!r}")
        c = Fraction(coeff) if coeff else Fraction(1)
        if sign == "-":
            c = -c
        k = 0
        if tpart:
            k = int(power) if power else 1
        acc = acc + Polynomial.t(k, c)
        pos = m.end()
        first = False
    return acc


# ---------------------------------------------------------------------------
# Rational functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RationalFunction:
    """Reduced quotient num/den; den is a nonzero primitive-pair normalized
    polynomial with positive leading coefficient, so den(t) > 0 eventually."""

    num: Polynomial
    den: Polynomial

    @staticmethod
    def make(num, den=ONE) -> "RationalFunction":
        num, den = as_poly(num), as_poly(den)
        if den.is_zero:
            raise ZeroDivisionError("rational function with zero denominator")
        if num.is_zero:
            return RationalFunction(ZERO, ONE)
        g = num.gcd_q(den)
        if g.degree > 0:
            num = num.divmod_q(g)[0]
            den = den.divmod_q(g)[0]
        # Scale the pair so both are integral with coprime joint content and
        # the denominator leads positive.
        scale = Fraction(math.lcm(num.denominator_lcm(), den.denominator_lcm()))
        num, den = num.scale(scale), den.scale(scale)
        joint = math.gcd(
            math.gcd(*[c.numerator for c in num.coeffs]),
            math.gcd(*[c.numerator for c in den.coeffs]),
        )
        if joint > 1:
            num, den = num.scale(Fraction(1, joint)), den.scale(Fraction(1, joint))
        if den.leading < 0:
            num, den = -num, -den
        return RationalFunction(num, den)

    @property
    def is_zero(self) -> bool:
        return self.num.is_zero

    def is_polynomial(self) -> bool:
        return self.den.degree == 0

    def as_polynomial(self) -> Polynomial:
        if not self.is_polynomial():
            raise ValueError(f"{self} is not a polynomial")
        return self.num.scale(1 / self.den.constant_value)

    def evaluate(self, t) -> Fraction:
        d = self.den.evaluate(t)
        if d == 0:
            raise ZeroDivisionError(f"denominator vanishes at t={t}")
        return Fraction(self.num.evaluate(t)) / d

    def __add__(self, other) -> "RationalFunction":
        other = as_ratfun(other)
        return RationalFunction.make(
            self.num * other.den + other.num * self.den, self.den * other.den
        )

    def __sub__(self, other) -> "RationalFunction":
        return self + (-as_ratfun(other))

    def __rsub__(self, other) -> "RationalFunction":
        return as_ratfun(other) - self

    def __neg__(self) -> "RationalFunction":
        return RationalFunction(-self.num, self.den)

    def __mul__(self, other) -> "RationalFunction":
        other = as_ratfun(other)
        return RationalFunction.make(self.num * other.num, self.den * other.den)

    def __rmul__(self, other) -> "RationalFunction":
        return self.__mul__(other)

    def __truediv__(self, other) -> "RationalFunction":
        other = as_ratfun(other)
        if other.is_zero:
            raise ZeroDivisionError("division by zero rational function")
        return RationalFunction.make(self.num * other.den, self.den * other.num)

    def eventual_sign(self) -> int:
        return self.num.eventual_sign()

    def eventual_sign_threshold(self) -> int:
        return max(
            self.num.eventual_sign_threshold(),
            self.den.eventual_sign_threshold(),
        )

    def __str__(self) -> str:
        if self.is_polynomial():
            return poly_to_text(self.as_polynomial())
        return f"({poly_to_text(self.num)}) / ({poly_to_text(self.den)})"

    def __repr__(self) -> str:
        return f"RationalFunction({self.__str__()!r})"


def as_ratfun(x) -> RationalFunction:
    if isinstance(x, RationalFunction):
        return x
    return RationalFunction.make(as_poly(x))


def ratfun_eventual_compare(f: RationalFunction, g: RationalFunction) -> int:
    """Ordering of f(t) vs g(t) for all large t: -1 (lt), 0 (eq), +1 (gt)."""
    return (f - g).eventual_sign()


def ratfun_compare_threshold(f: RationalFunction, g: RationalFunction) -> int:
    """T such that sign(f(t) - g(t)) is the eventual one for all t >= T
    (and no denominator vanishes there)."""
    d = f - g
    return max(
        d.eventual_sign_threshold(),
        f.den.eventual_sign_threshold(),
        g.den.eventual_sign_threshold(),
    )


def ratfun_small_threshold(r: RationalFunction, eps: Fraction) -> int:
    """T with |r(t)| < eps for all t >= T; requires deg num < deg den."""
    if r.is_zero:
        return 0
    if r.num.degree >= r.den.degree:
        raise ValueError("ratfun_small_threshold needs a proper fraction")
    lo = (r.den.scale(eps) - r.num).eventual_sign_threshold()
    hi = (r.den.scale(eps) + r.num).eventual_sign_threshold()
    return max(lo, hi, r.den.eventual_sign_threshold())


# ---------------------------------------------------------------------------
# Quasi-polynomials and EQPs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuasiPolynomial:
    """Period m and m constituents; value at t is constituents[t mod m](t).

    Construction canonicalizes to the minimal period m' | m whose folding
    leaves the constituents unchanged, so equal functions compare equal.
    """

    period: int
    constituents: tuple[Polynomial, ...]

    @staticmethod
    def make(constituents: Sequence[Polynomial], period: int | None = None) -> "QuasiPolynomial":
        cs = tuple(constituents)
        m = period if period is not None else len(cs)
        if m < 1 or len(cs) != m:
            raise ValueError("period must be >= 1 and match constituent count")
        for mp in range(1, m + 1):
            if m % mp:
                continue
            if all(cs[i] == cs[i % mp] for i in range(m)):
                return QuasiPolynomial(mp, cs[:mp])
        raise AssertionError("unreachable")

    @staticmethod
    def of_poly(p: Polynomial) -> "QuasiPolynomial":
        return QuasiPolynomial(1, (p,))

    @staticmethod
    def constant(c) -> "QuasiPolynomial":
        return QuasiPolynomial.of_poly(Polynomial.const(c))

    def constituent_for(self, t: int) -> Polynomial:
        return self.constituents[t % self.period]

    def evaluate(self, t: int) -> Fraction:
        return self.constituent_for(t).evaluate(t)

    def with_period(self, m: int) -> tuple[Polynomial, ...]:
        """Constituents unfolded to a multiple m of the period."""
        if m % self.period:
            raise ValueError(f"{m} is not a multiple of period {self.period}")
        return tuple(self.constituents[i % self.period] for i in range(m))

    def is_zero(self) -> bool:
        return all(c.is_zero for c in self.constituents)

    def __str__(self) -> str:
        body = "; ".join(poly_to_text(c) for c in self.constituents)
        return f"period {self.period}: [{body}]"


def qp_eval(q: QuasiPolynomial, t: int) -> Fraction:
    return q.evaluate(t)


@dataclass(frozen=True)
class EQP:
    """Quasi-polynomial behavior for t >= threshold, with explicit exceptional
    values recorded for (some) t below the threshold.

    evaluate(t) uses the exception table first and falls back to the
    quasi-polynomial; below the threshold the fallback is only a guess unless
    an exception was recorded.
    """

    threshold: int
    qp: QuasiPolynomial
    exceptions: tuple[tuple[int, Fraction], ...] = ()

    @staticmethod
    def make(qp: QuasiPolynomial, threshold: int = 0, exceptions=()) -> "EQP":
        table = tuple(sorted((int(t), _rat(v)) for t, v in dict(exceptions).items()))
        for t, _ in table:
            if t >= threshold:
                raise ValueError("exceptions must lie below the threshold")
        return EQP(threshold, qp, table)

    @staticmethod
    def of_poly(p: Polynomial) -> "EQP":
        return EQP.make(QuasiPolynomial.of_poly(p))

    @staticmethod
    def constant(c) -> "EQP":
        return EQP.make(QuasiPolynomial.constant(c))

    def evaluate(self, t: int) -> Fraction:
        for te, v in self.exceptions:
            if te == t:
                return v
        return self.qp.evaluate(t)

    def __str__(self) -> str:
        s = f"for t >= {self.threshold}: {self.qp}"
        if self.exceptions:
            tail = ", ".join(f"t={t} -> {v}" for t, v in self.exceptions)
            s += f" (except {tail})"
        return s


def eqp_arith(a: EQP, b: EQP, op: str) -> EQP:
    """Pointwise add/sub/mul; threshold = max, period = lcm, exceptions merged
    wherever either operand recorded one below the new threshold."""
    ops = {
        "add": lambda x, y: x + y,
        "sub": lambda x, y: x - y,
        "mul": lambda x, y: x * y,
    }
    if op not in ops:
        raise ValueError(f"unknown op {op!r}")
    f = ops[op]
    m = math.lcm(a.qp.period, b.qp.period)
    ca = a.qp.with_period(m)
    cb = b.qp.with_period(m)
    qp = QuasiPolynomial.make([f(x, y) for x, y in zip(ca, cb)])
    threshold = max(a.threshold, b.threshold)
    exc = {}
    for t, _ in a.exceptions + b.exceptions:
        if t < threshold:
            exc[t] = f(a.evaluate(t), b.evaluate(t))
    return EQP.make(qp, threshold, exc)


def eqp_scale(a: EQP, c) -> EQP:
    return eqp_arith(a, EQP.constant(c), "mul")


def eqp_add(a: EQP, b: EQP) -> EQP:
    return eqp_arith(a, b, "add")


# ---------------------------------------------------------------------------
# Interpolation
# ---------------------------------------------------------------------------


class InterpolationError(ValueError):
    pass


class UnderdeterminedClass(InterpolationError):
    def __init__(self, residue: int, have: int, need: int):
        self.residue = residue
        super().__init__(
            f"residue class {residue}: {have} samples, need {need}"
        )


class InconsistentSamples(InterpolationError):
    def __init__(self, t: int, expected: Fraction, fitted: Fraction):
        self.t, self.expected, self.fitted = t, expected, fitted
        super().__init__(
            f"sample at t={t} is {expected} but the fit gives {fitted}"
        )


def _lagrange(points: Sequence[tuple[int, Fraction]]) -> Polynomial:
    acc = ZERO
    for i, (ti, vi) in enumerate(points):
        if vi == 0:
            continue
        term = Polynomial.const(vi)
        for j, (tj, _) in enumerate(points):
            if i == j:
                continue
            term = term * Polynomial.make([-tj, 1]).scale(Fraction(1, ti - tj))
        acc = acc + term
    return acc


def qp_interpolate(
    samples: Iterable[tuple[int, Fraction]],
    period: int,
    degree: int,
    threshold: int = 0,
) -> QuasiPolynomial:
    """Fit one degree-<=degree polynomial per residue class mod period.

    Each class needs at least degree+1 samples with t >= threshold; any extra
    samples are checked against the fit and a mismatch raises
    InconsistentSamples with the witnessing triple.
    """
    classes: dict[int, list[tuple[int, Fraction]]] = {r: [] for r in range(period)}
    for t, v in samples:
        if t >= threshold:
            classes[t % period].append((int(t), _rat(v)))
    constituents = []
    for r in range(period):
        pts = sorted(set(classes[r]))
        if len(pts) < degree + 1:
            raise UnderdeterminedClass(r, len(pts), degree + 1)
        fit = _lagrange(pts[: degree + 1])
        for t, v in pts:
            got = fit.evaluate(t)
            if got != v:
                raise InconsistentSamples(t, v, got)
        constituents.append(fit)
    return QuasiPolynomial.make(constituents)


# ---------------------------------------------------------------------------
# Residue-class contexts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CaseSplit:
    """A residue-class context: the values {t >= threshold, t = residue mod period}."""

    threshold: int
    period: int
    residue: int

    def __post_init__(self):
        if not (0 <= self.residue < self.period):
            raise ValueError("residue out of range")

    @staticmethod
    def top() -> "CaseSplit":
        return CaseSplit(0, 1, 0)

    def contains(self, t: int) -> bool:
        return t >= self.threshold and t % self.period == self.residue

    def bump(self, threshold: int) -> "CaseSplit":
        return CaseSplit(max(self.threshold, threshold), self.period, self.residue)

    def refine(self, new_period: int) -> list["CaseSplit"]:
        """Split into the subclasses modulo lcm(period, new_period)."""
        m = math.lcm(self.period, new_period)
        return [
            CaseSplit(self.threshold, m, r)
            for r in range(m)
            if r % self.period == self.residue
        ]

    def sample_ts(self, count: int, start: int | None = None) -> list[int]:
        """The first `count` members of the class at or beyond `start`."""
        t0 = max(self.threshold, start if start is not None else self.threshold)
        r = t0 % self.period
        first = t0 + (self.residue - r) % self.period
        return [first + k * self.period for k in range(count)]

    def __str__(self) -> str:
        if self.period == 1:
            return f"t >= {self.threshold}"
        return f"t >= {self.threshold}, t = {self.residue} mod {self.period}"
