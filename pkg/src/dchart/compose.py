"""The two composition products on families of graded operations.

``compose_circ`` inserts one family into a single slot of another, summing
over which input positions feed the inner operation; ``compose_bullet`` sums
over set partitions of the input positions, feeding each block through the
plugged family before the outer operation. Both run fraction-free on sorted
multiset keys: the only signs are crossings of odd inputs during unshuffles.

``circ_on_tuple`` and ``bullet_on_tuple`` evaluate the same products through
the literal fractional permutation sums (weights 1/(k!(n-k)!), respectively
1/(k!*n_1!*...*n_k!), over all input permutations). On tuples without a
repeated odd entry they agree with the fraction-free tables exactly. On a
tuple with a repeated odd entry the permutation sums cancel to zero, while
the tables keep divided-power entries; rank-one odd summands with nonzero
quadratic operations need the latter, so the tables are the product of
record and the permutation sums serve as independent cross-checks.
"""

from __future__ import annotations

from fractions import Fraction
from itertools import combinations, combinations_with_replacement, permutations
from math import factorial

from .ops import MultiOp, OpFamily, koszul_sign, vec_add, vec_scale

__all__ = [
    "compose_circ",
    "compose_bullet",
    "symmetrize",
    "set_partitions",
    "circ_on_tuple",
    "bullet_on_tuple",
]


def _unshuffle_sign(degs, picked):
    """Sign of moving the picked positions to the front, relative order kept."""
    sign = 1
    chosen = set(picked)
    for j in picked:
        if degs[j] % 2 == 0:
            continue
        for i in range(j):
            if i not in chosen and degs[i] % 2:
                sign = -sign
    return sign


def _arity_cap(source, target, degree):
    """Largest arity that can carry a nonzero entry, by degree bookkeeping."""
    top = max(target.degrees, default=0)
    if top < degree or top == 0:
        return -1
    low = min(source.degrees, default=None)
    if low is None:
        return 0
    return (top - degree) // low


def set_partitions(n):
    """Yield set partitions of range(n), blocks ascending, ordered by minimum."""
    blocks = []

    def rec(i):
        if i == n:
            yield [tuple(b) for b in blocks]
            return
        for b in blocks:
            b.append(i)
            yield from rec(i + 1)
            b.pop()
        blocks.append([i])
        yield from rec(i + 1)
        blocks.pop()

    return rec(0)


def compose_circ(outer, inner):
    """Insertion product: sum over the input positions fed to ``inner``.

    ``inner`` must be an endomorphism family of its source bundle; the result
    maps that bundle to ``outer``'s target with the degrees added.
    """
    if inner.source != inner.target:
        raise ValueError("inner family must map a bundle to itself")
    if outer.source != inner.source or outer.chart != inner.chart:
        raise ValueError("families do not compose: bundle or chart mismatch")
    source, target, chart = inner.source, outer.target, outer.chart
    degree = outer.degree + inner.degree
    result = OpFamily(source, target, chart, degree)
    if outer.is_zero() or inner.is_zero():
        return result
    n_top = min(
        outer.max_arity() + inner.max_arity() - 1,
        _arity_cap(source, target, degree),
    )
    inner_arities = inner.arities()
    for n in range(n_top + 1):
        op = MultiOp.zero(source, target, chart, n, degree)
        for key in combinations_with_replacement(source.names, n):
            degs = [source.degree_of(x) for x in key]
            total = {}
            for k in inner_arities:
                arity_out = n - k + 1
                if arity_out < 0:
                    continue
                inner_op = inner.get(k)
                outer_op = outer.get(arity_out)
                if outer_op.is_zero():
                    continue
                for picked in combinations(range(n), k):
                    block = inner_op.value(tuple(key[i] for i in picked))
                    if not block:
                        continue
                    sign = _unshuffle_sign(degs, picked)
                    chosen = set(picked)
                    rest = tuple(key[i] for i in range(n) if i not in chosen)
                    for name, coeff in block.items():
                        out = outer_op.value((name,) + rest)
                        if out:
                            total = vec_add(total, vec_scale(out, coeff * sign))
            if total:
                op._accumulate(key, total)
        result.set(n, op)
    return result


def compose_bullet(outer, plugged):
    """Partition product: feed each block of the inputs through ``plugged``.

    ``plugged`` must be a degree-0 family without an arity-0 part; the arity-0
    component of the result is ``outer``'s own arity-0 entry.
    """
    if plugged.degree != 0:
        raise ValueError("plugged family must have degree 0")
    if not plugged.get(0).is_zero():
        raise ValueError("plugged family must not have an arity-0 part")
    if outer.source != plugged.target or outer.chart != plugged.chart:
        raise ValueError("families do not compose: bundle or chart mismatch")
    source, target, chart = plugged.source, outer.target, outer.chart
    degree = outer.degree
    result = OpFamily(source, target, chart, degree)
    if outer.is_zero():
        return result
    block_top = max(plugged.max_arity(), 0)
    n_top = min(outer.max_arity() * block_top, _arity_cap(source, target, degree))
    for n in range(n_top + 1):
        op = MultiOp.zero(source, target, chart, n, degree)
        for key in combinations_with_replacement(source.names, n):
            degs = [source.degree_of(x) for x in key]
            total = {}
            for partition in set_partitions(n):
                outer_op = outer.get(len(partition))
                if outer_op.is_zero():
                    continue
                vectors = []
                for block in partition:
                    value = plugged.get(len(block)).value(tuple(key[i] for i in block))
                    if not value:
                        vectors = None
                        break
                    vectors.append(value)
                if vectors is None:
                    continue
                sign = koszul_sign([i for block in partition for i in block], degs)
                out = outer_op.evaluate(vectors)
                if out:
                    total = vec_add(total, vec_scale(out, sign))
            if total:
                op._accumulate(key, total)
        result.set(n, op)
    return result


def symmetrize(source, target, chart, arity, degree, table):
    """Canonical graded-symmetric operation from a table keyed in any order.

    Entries on unsorted keys are absorbed with their sorting signs; feeding a
    canonical table back through gives the same operation (idempotence).
    """
    return MultiOp.from_table(source, target, chart, arity, degree, table)


def _scaled_into(total, vector, factor):
    if factor == 0:
        return total
    return vec_add(total, vec_scale(vector, factor))


def circ_on_tuple(outer, inner, names):
    """Insertion product on one input tuple via the permutation-sum formula.

    Agrees with ``compose_circ`` whenever ``names`` has no repeated odd entry
    (and cancels to zero when it does). Exponential in the tuple length;
    intended for cross-checking on small instances.
    """
    source = inner.source
    names = tuple(names)
    degs = [source.degree_of(x) for x in names]
    n = len(names)
    total = {}
    for k in inner.arities():
        if k > n:
            continue
        inner_op = inner.get(k)
        outer_op = outer.get(n - k + 1)
        if outer_op.is_zero():
            continue
        weight = Fraction(1, factorial(k) * factorial(n - k))
        for perm in permutations(range(n)):
            block = inner_op.value(tuple(names[i] for i in perm[:k]))
            if not block:
                continue
            sign = koszul_sign(list(perm), degs)
            rest = tuple(names[i] for i in perm[k:])
            for name, coeff in block.items():
                out = outer_op.value((name,) + rest)
                if out:
                    total = _scaled_into(total, out, coeff * (weight * sign))
    return total


def _compositions(n, k):
    """Ordered tuples of k positive integers summing to n."""
    if k == 0:
        if n == 0:
            yield ()
        return
    for first in range(1, n - k + 2):
        for rest in _compositions(n - first, k - 1):
            yield (first,) + rest


def bullet_on_tuple(outer, plugged, names):
    """Partition product on one input tuple via the permutation-sum formula.

    Same agreement caveats as ``circ_on_tuple``; for the empty tuple it
    returns ``outer``'s arity-0 entry.
    """
    source = plugged.source
    names = tuple(names)
    degs = [source.degree_of(x) for x in names]
    n = len(names)
    if n == 0:
        return outer.get(0).value(())
    total = {}
    for k in range(1, n + 1):
        outer_op = outer.get(k)
        if outer_op.is_zero():
            continue
        for shape in _compositions(n, k):
            weight = Fraction(1, factorial(k))
            for size in shape:
                weight /= factorial(size)
            for perm in permutations(range(n)):
                sign = koszul_sign(list(perm), degs)
                vectors = []
                start = 0
                for size in shape:
                    chunk = tuple(names[perm[i]] for i in range(start, start + size))
                    start += size
                    value = plugged.get(size).value(chunk)
                    if not value:
                        vectors = None
                        break
                    vectors.append(value)
                if vectors is None:
                    continue
                out = outer_op.evaluate(vectors)
                if out:
                    total = _scaled_into(total, out, weight * sign)
    return total
