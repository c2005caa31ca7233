"""Graded symmetric multilinear operations on bundles.

An operation of arity k and degree r sends k inputs from a source bundle to
the target bundle, shifting total degree by r. Operations are stored as
tables over sorted multiset keys of basis names; evaluating on basis elements
in any other order picks up the sign of the stable sort that restores the
canonical order (a transposition of two odd elements contributes -1, every
other transposition +1). Keys with repeated entries are allowed regardless of
parity; symmetry of the table is the definition, not a constraint checked
against permutation signs.

Coefficients live in the polynomial ring of a chart and are treated as
degree-0 scalars throughout.
"""

from __future__ import annotations

from fractions import Fraction
from itertools import combinations_with_replacement, product

from .poly import Poly

__all__ = [
    "koszul_sign",
    "sort_with_sign",
    "vec_add",
    "vec_sub",
    "vec_scale",
    "vec_neg",
    "vec_is_zero",
    "vec_equal",
    "MultiOp",
    "OpFamily",
    "tabulate",
    "identity_op",
    "compose_linear",
    "neumann_inverse",
]


def koszul_sign(perm, degs):
    """Sign of rearranging graded symbols s_0..s_{n-1} into s_perm[0]..s_perm[n-1].

    Counted by bubble-sorting perm back to the identity; each swap of two
    symbols of odd degree flips the sign.
    """
    perm = list(perm)
    n = len(perm)
    if sorted(perm) != list(range(n)):
        raise ValueError(f"not a permutation of 0..{n - 1}: {perm}")
    sign = 1
    for i in range(n):
        for j in range(n - 1 - i):
            if perm[j] > perm[j + 1]:
                if degs[perm[j]] % 2 and degs[perm[j + 1]] % 2:
                    sign = -sign
                perm[j], perm[j + 1] = perm[j + 1], perm[j]
    return sign


def sort_with_sign(names, bundle):
    """Stable-sort basis names into canonical order, tracking the Koszul sign."""
    elems = list(names)
    sign = 1
    for i in range(1, len(elems)):
        j = i
        while j > 0 and bundle.order_key(elems[j]) < bundle.order_key(elems[j - 1]):
            if bundle.degree_of(elems[j]) % 2 and bundle.degree_of(elems[j - 1]) % 2:
                sign = -sign
            elems[j - 1], elems[j] = elems[j], elems[j - 1]
            j -= 1
    return tuple(elems), sign


def _as_poly(value, chart):
    """Coerce a coefficient (Poly, string, int or Fraction) into the chart's ring."""
    return chart.poly(value)


def vec_add(a, b):
    out = dict(a)
    for name, coeff in b.items():
        cur = out.get(name)
        total = coeff if cur is None else cur + coeff
        if total.is_zero():
            out.pop(name, None)
        else:
            out[name] = total
    return out


def vec_sub(a, b):
    return vec_add(a, vec_neg(b))


def vec_neg(a):
    return {name: -coeff for name, coeff in a.items()}


def vec_scale(a, factor):
    out = {}
    for name, coeff in a.items():
        scaled = coeff * factor
        if not scaled.is_zero():
            out[name] = scaled
    return out


def vec_is_zero(a):
    return all(coeff.is_zero() for coeff in a.values())


def vec_equal(a, b):
    return vec_is_zero(vec_sub(a, b))


class MultiOp:
    """One graded symmetric multilinear operation of fixed arity and degree."""

    __slots__ = ("source", "target", "chart", "arity", "degree", "entries")

    def __init__(self, source, target, chart, arity, degree, entries=None):
        if arity < 0:
            raise ValueError("arity must be >= 0")
        self.source = source
        self.target = target
        self.chart = chart
        self.arity = arity
        self.degree = degree
        self.entries = {}
        if entries:
            for key, value in entries.items():
                self._accumulate(key, value)
        self._validate()

    def _accumulate(self, key, value, sign=1):
        key = tuple(key)
        if len(key) != self.arity:
            raise ValueError(f"key {key} has arity {len(key)}, expected {self.arity}")
        skey, ssign = sort_with_sign(key, self.source)
        bucket = self.entries.setdefault(skey, {})
        for name, coeff in value.items():
            coeff = _as_poly(coeff, self.chart)
            if ssign * sign < 0:
                coeff = -coeff
            cur = bucket.get(name)
            total = coeff if cur is None else cur + coeff
            if total.is_zero():
                bucket.pop(name, None)
            else:
                bucket[name] = total
        if not bucket:
            self.entries.pop(skey, None)

    def _validate(self):
        for key, bucket in self.entries.items():
            in_deg = sum(self.source.degree_of(n) for n in key)
            for name in bucket:
                if self.target.degree_of(name) != in_deg + self.degree:
                    raise ValueError(
                        f"entry {key} -> {name} breaks degree bookkeeping: "
                        f"{in_deg} + {self.degree} != {self.target.degree_of(name)}"
                    )

    @classmethod
    def zero(cls, source, target, chart, arity, degree):
        return cls(source, target, chart, arity, degree)

    @classmethod
    def from_table(cls, source, target, chart, arity, degree, table):
        """Build from a table keyed by basis-name tuples in any order.

        Values are mappings target-name -> coefficient (Poly, int or Fraction).
        A key given out of canonical order is absorbed with its sorting sign.
        """
        op = cls(source, target, chart, arity, degree)
        for key, value in table.items():
            if isinstance(key, str):
                key = (key,)
            op._accumulate(key, {n: _as_poly(c, chart) for n, c in value.items()})
        op._validate()
        return op

    def value(self, key):
        """Table entry for a key (any order); returns a fresh output vector."""
        skey, sign = sort_with_sign(tuple(key), self.source)
        bucket = self.entries.get(skey)
        if not bucket:
            return {}
        if sign == 1:
            return dict(bucket)
        return {name: -coeff for name, coeff in bucket.items()}

    def evaluate(self, args):
        """Apply to a list of vectors (dict basis-name -> Poly coefficient)."""
        if len(args) != self.arity:
            raise ValueError(f"expected {self.arity} arguments, got {len(args)}")
        out = {}
        if not self.entries:
            return out
        items = [list(v.items()) for v in args]
        for combo in product(*items) if items else [()]:
            names = tuple(c[0] for c in combo)
            skey, sign = sort_with_sign(names, self.source)
            bucket = self.entries.get(skey)
            if not bucket:
                continue
            coeff = Poly.const(self.chart.nvars, sign)
            for _, c in combo:
                coeff = coeff * _as_poly(c, self.chart)
            if coeff.is_zero():
                continue
            for name, val in bucket.items():
                term = coeff * val
                cur = out.get(name)
                total = term if cur is None else cur + term
                if total.is_zero():
                    out.pop(name, None)
                else:
                    out[name] = total
        return out

    def is_zero(self):
        return not self.entries

    def _compatible(self, other):
        if (
            self.source != other.source
            or self.target != other.target
            or self.chart != other.chart
            or self.arity != other.arity
            or self.degree != other.degree
        ):
            raise ValueError("operations live on different signatures")

    def __add__(self, other):
        self._compatible(other)
        out = MultiOp(self.source, self.target, self.chart, self.arity, self.degree, self.entries)
        for key, bucket in other.entries.items():
            out._accumulate(key, bucket)
        return out

    def __sub__(self, other):
        return self + other.scale(-1)

    def scale(self, factor):
        out = MultiOp.zero(self.source, self.target, self.chart, self.arity, self.degree)
        for key, bucket in self.entries.items():
            scaled = {}
            for name, coeff in bucket.items():
                val = coeff * factor
                if not val.is_zero():
                    scaled[name] = val
            if scaled:
                out.entries[key] = scaled
        return out

    def __eq__(self, other):
        if not isinstance(other, MultiOp):
            return NotImplemented
        try:
            self._compatible(other)
        except ValueError:
            return False
        return (self - other).is_zero()

    def __hash__(self):
        raise TypeError("MultiOp is mutable in construction; not hashable")

    def map_coefficients(self, fn, chart=None):
        """Apply fn to every coefficient (for substitution or ring changes)."""
        chart = chart or self.chart
        out = MultiOp.zero(self.source, self.target, chart, self.arity, self.degree)
        for key, bucket in self.entries.items():
            mapped = {}
            for name, coeff in bucket.items():
                val = fn(coeff)
                if not val.is_zero():
                    mapped[name] = val
            if mapped:
                out.entries[key] = mapped
        out._validate()
        return out

    def __repr__(self):
        return (
            f"MultiOp(arity={self.arity}, degree={self.degree}, "
            f"entries={len(self.entries)})"
        )


class OpFamily:
    """A family of operations of common degree, one per arity."""

    __slots__ = ("source", "target", "chart", "degree", "ops")

    def __init__(self, source, target, chart, degree, ops=None):
        self.source = source
        self.target = target
        self.chart = chart
        self.degree = degree
        self.ops = {}
        for arity, op in (ops or {}).items():
            self.set(arity, op)

    def set(self, arity, op):
        if op.arity != arity or op.degree != self.degree:
            raise ValueError("operation signature does not match the family")
        if op.source != self.source or op.target != self.target or op.chart != self.chart:
            raise ValueError("operation bundles do not match the family")
        if op.is_zero():
            self.ops.pop(arity, None)
        else:
            self.ops[arity] = op

    def get(self, arity):
        op = self.ops.get(arity)
        if op is None:
            return MultiOp.zero(self.source, self.target, self.chart, arity, self.degree)
        return op

    def arities(self):
        return sorted(self.ops)

    def max_arity(self):
        return max(self.ops, default=-1)

    def is_zero(self):
        return not self.ops

    def __add__(self, other):
        out = OpFamily(self.source, self.target, self.chart, self.degree)
        for arity in set(self.ops) | set(other.ops):
            out.set(arity, self.get(arity) + other.get(arity))
        return out

    def __sub__(self, other):
        return self + other.scale(-1)

    def scale(self, factor):
        out = OpFamily(self.source, self.target, self.chart, self.degree)
        for arity, op in self.ops.items():
            out.set(arity, op.scale(factor))
        return out

    def __eq__(self, other):
        if not isinstance(other, OpFamily):
            return NotImplemented
        if (
            self.source != other.source
            or self.target != other.target
            or self.chart != other.chart
            or self.degree != other.degree
        ):
            return False
        return (self - other).is_zero()

    def __hash__(self):
        raise TypeError("OpFamily is not hashable")

    def copy(self):
        return OpFamily(self.source, self.target, self.chart, self.degree, dict(self.ops))

    def __repr__(self):
        return f"OpFamily(degree={self.degree}, arities={self.arities()})"


def tabulate(source, target, chart, arity, degree, fn):
    """Build an operation by evaluating fn on every sorted multiset key.

    fn receives the key tuple and returns a mapping target-name -> coefficient
    (possibly empty).
    """
    op = MultiOp.zero(source, target, chart, arity, degree)
    for key in combinations_with_replacement(source.names, arity):
        value = fn(key)
        if value:
            op._accumulate(key, {n: _as_poly(c, chart) for n, c in value.items()})
    op._validate()
    return op


def identity_op(bundle, chart):
    op = MultiOp.zero(bundle, bundle, chart, 1, 0)
    one = Poly.const(chart.nvars, 1)
    for name in bundle.names:
        op.entries[(name,)] = {name: one}
    return op


def compose_linear(outer, inner):
    """Composition outer(inner(x)) of two arity-1 operations."""
    if inner.target != outer.source or inner.chart != outer.chart:
        raise ValueError("linear operations do not compose")
    return tabulate(
        inner.source,
        outer.target,
        inner.chart,
        1,
        inner.degree + outer.degree,
        lambda key: outer.evaluate([inner.value(key)]),
    )


def neumann_inverse(nil_op, guard=None):
    """Inverse of (identity + N) for a nilpotent arity-1 degree-0 operation N.

    Computed as the alternating geometric series, which terminates because N
    is nilpotent; raises if it has not terminated after the guard bound.
    """
    if nil_op.arity != 1 or nil_op.degree != 0 or nil_op.source != nil_op.target:
        raise ValueError("expected an arity-1 degree-0 endomorphism")
    bundle, chart = nil_op.source, nil_op.chart
    total = identity_op(bundle, chart)
    power = nil_op.scale(-1)
    steps = 0
    limit = bundle.total_rank() + 2 if guard is None else guard
    while not power.is_zero():
        steps += 1
        if steps > limit:
            raise ValueError("operation is not nilpotent within the guard bound")
        total = total + power
        power = compose_linear(power, nil_op.scale(-1))
    return total
