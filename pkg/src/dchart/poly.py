"""Sparse multivariate polynomials with exact rational coefficients.

Every coefficient that enters the library is a ``fractions.Fraction``; there
is no floating point anywhere. A polynomial is a map from exponent tuples to
nonzero coefficients, tagged with the number of variables of its ring so that
cross-ring mistakes fail loudly instead of silently broadcasting.
"""

from __future__ import annotations

import re
from fractions import Fraction

__all__ = [
    "Poly",
    "parse_fraction",
    "format_fraction",
    "parse_poly",
]


def parse_fraction(text):
    """Parse ``"p/q"`` or ``"p"`` into a Fraction (always reduced, q > 0)."""
    return Fraction(text.strip())


def format_fraction(q):
    q = Fraction(q)
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def _grlex_key(expts):
    # graded-lex: total degree first, then the exponent tuple itself
    return (sum(expts), expts)


class Poly:
    """A sparse polynomial in ``nvars`` variables over the rationals.

    Immutable by convention: all operations return new instances. Terms with
    zero coefficient are never stored.
    """

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars, terms=None):
        self.nvars = nvars
        clean = {}
        if terms:
            for expts, coeff in terms.items():
                coeff = Fraction(coeff)
                if coeff == 0:
                    continue
                if len(expts) != nvars:
                    raise ValueError(f"exponent tuple {expts} does not have {nvars} entries")
                clean[tuple(expts)] = clean.get(tuple(expts), Fraction(0)) + coeff
                if clean[tuple(expts)] == 0:
                    del clean[tuple(expts)]
        self.terms = clean

    @classmethod
    def zero(cls, nvars):
        return cls(nvars)

    @classmethod
    def const(cls, nvars, value):
        return cls(nvars, {(0,) * nvars: Fraction(value)})

    @classmethod
    def variable(cls, nvars, index):
        if not 0 <= index < nvars:
            raise ValueError(f"variable index {index} out of range for {nvars} variables")
        expts = [0] * nvars
        expts[index] = 1
        return cls(nvars, {tuple(expts): Fraction(1)})

    def is_zero(self):
        return not self.terms

    def is_constant(self):
        return all(sum(e) == 0 for e in self.terms)

    def constant_value(self):
        """The value of a constant polynomial, as a Fraction."""
        if not self.is_constant():
            raise ValueError(f"polynomial {self} is not constant")
        return self.terms.get((0,) * self.nvars, Fraction(0))

    def total_degree(self):
        return max((sum(e) for e in self.terms), default=0)

    def degree_in(self, index):
        return max((e[index] for e in self.terms), default=0)

    def _check_ring(self, other):
        if self.nvars != other.nvars:
            raise ValueError(f"ring mismatch: {self.nvars} vs {other.nvars} variables")

    def __eq__(self, other):
        if not isinstance(other, Poly):
            return NotImplemented
        return self.nvars == other.nvars and self.terms == other.terms

    def __hash__(self):
        return hash((self.nvars, frozenset(self.terms.items())))

    def __add__(self, other):
        self._check_ring(other)
        terms = dict(self.terms)
        for expts, coeff in other.terms.items():
            new = terms.get(expts, Fraction(0)) + coeff
            if new == 0:
                terms.pop(expts, None)
            else:
                terms[expts] = new
        out = Poly.__new__(Poly)
        out.nvars = self.nvars
        out.terms = terms
        return out

    def __neg__(self):
        out = Poly.__new__(Poly)
        out.nvars = self.nvars
        out.terms = {e: -c for e, c in self.terms.items()}
        return out

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.scale(other)
        self._check_ring(other)
        terms = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                expts = tuple(a + b for a, b in zip(e1, e2))
                new = terms.get(expts, Fraction(0)) + c1 * c2
                if new == 0:
                    terms.pop(expts, None)
                else:
                    terms[expts] = new
        out = Poly.__new__(Poly)
        out.nvars = self.nvars
        out.terms = terms
        return out

    __rmul__ = __mul__

    def scale(self, factor):
        factor = Fraction(factor)
        if factor == 0:
            return Poly.zero(self.nvars)
        out = Poly.__new__(Poly)
        out.nvars = self.nvars
        out.terms = {e: c * factor for e, c in self.terms.items()}
        return out

    def __pow__(self, k):
        if k < 0:
            raise ValueError("negative powers are not polynomials")
        result = Poly.const(self.nvars, 1)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def derivative(self, index):
        terms = {}
        for expts, coeff in self.terms.items():
            k = expts[index]
            if k == 0:
                continue
            new = list(expts)
            new[index] = k - 1
            terms[tuple(new)] = coeff * k
        return Poly(self.nvars, terms)

    def antiderivative(self, index):
        """Antiderivative in one variable with zero constant term."""
        terms = {}
        for expts, coeff in self.terms.items():
            new = list(expts)
            new[index] = expts[index] + 1
            terms[tuple(new)] = coeff / (expts[index] + 1)
        return Poly(self.nvars, terms)

    def substitute(self, images):
        """Substitute ``images[i]`` (all in one common ring) for variable i."""
        if len(images) != self.nvars:
            raise ValueError(f"need {self.nvars} images, got {len(images)}")
        if not images:
            # constants move to the 0-variable ring
            return Poly(0, {(): self.terms.get((), Fraction(0))}) if self.terms else Poly(0)
        nvars = images[0].nvars
        result = Poly.zero(nvars)
        for expts, coeff in self.terms.items():
            term = Poly.const(nvars, coeff)
            for i, k in enumerate(expts):
                if k:
                    term = term * images[i] ** k
            result = result + term
        return result

    def extend(self, nvars, offset=0):
        """View this polynomial in a larger ring, shifting variables by offset."""
        if offset + self.nvars > nvars:
            raise ValueError("extended ring too small")
        terms = {}
        for expts, coeff in self.terms.items():
            new = [0] * nvars
            for i, k in enumerate(expts):
                new[offset + i] = k
            terms[tuple(new)] = coeff
        return Poly(nvars, terms)

    def eval(self, point):
        """Evaluate at a point given as a sequence of Fractions."""
        if len(point) != self.nvars:
            raise ValueError(f"need {self.nvars} coordinates, got {len(point)}")
        total = Fraction(0)
        for expts, coeff in self.terms.items():
            value = coeff
            for i, k in enumerate(expts):
                if k:
                    value *= Fraction(point[i]) ** k
            total += value
        return total

    def format(self, names):
        """Render with the given variable names, graded-lex descending."""
        if len(names) != self.nvars:
            raise ValueError("wrong number of variable names")
        if not self.terms:
            return "0"
        pieces = []
        for expts in sorted(self.terms, key=_grlex_key, reverse=True):
            coeff = self.terms[expts]
            factors = []
            for name, k in zip(names, expts):
                if k == 1:
                    factors.append(name)
                elif k > 1:
                    factors.append(f"{name}^{k}")
            if not factors:
                body = format_fraction(abs(coeff))
            elif abs(coeff) == 1:
                body = "*".join(factors)
            else:
                body = format_fraction(abs(coeff)) + "*" + "*".join(factors)
            sign = "-" if coeff < 0 else "+"
            pieces.append((sign, body))
        first_sign, first_body = pieces[0]
        text = ("-" if first_sign == "-" else "") + first_body
        for sign, body in pieces[1:]:
            text += f" {sign} {body}"
        return text

    def __repr__(self):
        names = [f"x{i}" for i in range(self.nvars)]
        return f"Poly({self.format(names)})"


_TOKEN = re.compile(r"\s*(?:(?P<num>\d+(?:/\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9@.']*)|(?P<op>\^|\*\*|[*+()-]))")


def parse_poly(text, names):
    """Parse a polynomial expression over the given variable names.

    Grammar: sums/differences of terms, terms are ``*``-separated powers of
    variables and rational constants, exponents via ``^`` (or ``**``), and
    parenthesized subexpressions. Examples: ``"x0^2 - 3/2*x1"``, ``"-(x+1)*y"``.
    """
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            if text[pos:].strip():
                raise ValueError(f"cannot tokenize polynomial at: {text[pos:]!r}")
            break
        pos = m.end()
        if m.group("num"):
            tokens.append(("num", m.group("num")))
        elif m.group("name"):
            tokens.append(("name", m.group("name")))
        else:
            op = m.group("op")
            tokens.append(("op", "^" if op == "**" else op))
    tokens.append(("end", ""))

    nvars = len(names)
    index = {name: i for i, name in enumerate(names)}
    state = {"i": 0}

    def peek():
        return tokens[state["i"]]

    def advance():
        token = tokens[state["i"]]
        state["i"] += 1
        return token

    def parse_sum():
        kind, value = peek()
        negate = False
        if (kind, value) == ("op", "-"):
            advance()
            negate = True
        elif (kind, value) == ("op", "+"):
            advance()
        result = parse_product()
        if negate:
            result = -result
        while peek()[0] == "op" and peek()[1] in "+-":
            op = advance()[1]
            rhs = parse_product()
            result = result + rhs if op == "+" else result - rhs
        return result

    def parse_product():
        result = parse_power()
        while peek() == ("op", "*"):
            advance()
            result = result * parse_power()
        return result

    def parse_power():
        base = parse_atom()
        if peek() == ("op", "^"):
            advance()
            kind, value = advance()
            if kind != "num" or "/" in value:
                raise ValueError("exponent must be a nonnegative integer")
            return base ** int(value)
        return base

    def parse_atom():
        kind, value = advance()
        if kind == "num":
            return Poly.const(nvars, Fraction(value))
        if kind == "name":
            if value not in index:
                raise ValueError(f"unknown variable {value!r} (have {list(names)})")
            return Poly.variable(nvars, index[value])
        if (kind, value) == ("op", "("):
            inner = parse_sum()
            if advance() != ("op", ")"):
                raise ValueError("unbalanced parentheses")
            return inner
        if (kind, value) == ("op", "-"):
            return -parse_atom()
        raise ValueError(f"unexpected token {value!r} in polynomial {text!r}")

    result = parse_sum()
    if peek()[0] != "end":
        raise ValueError(f"trailing input in polynomial {text!r}")
    return result
