"""Curved structures on graded bundles, their morphisms, and axiom checks.

A structure is a degree-1 operation family squaring to zero under the
insertion product; the arity-0 entry is its curvature. A morphism pairs a
polynomial map of charts with a degree-0 family from the source bundle to the
target bundle, all coefficients over the source chart (pullback of the target
bundle is realized by substituting the base map into target coefficients).
"""

from __future__ import annotations

from fractions import Fraction

from .compose import compose_bullet, compose_circ
from .linalg import inverse, poly_mat_inverse, rank, right_inverse
from .ops import MultiOp, OpFamily, identity_op, tabulate
from .poly import Poly

__all__ = [
    "CurvedStructure",
    "LooMorphism",
    "AxiomReport",
    "check_structure",
    "check_morphism",
    "invert_morphism",
    "strictify_fibration",
    "transport_structure",
    "is_fibration_at",
    "is_fibration",
    "identity_family",
    "identity_morphism",
    "compose_morphisms",
    "operations_from_tables",
    "linear_block",
    "as_constant",
    "base_jacobian",
]


class CurvedStructure:
    """A degree-1 operation family on a graded bundle over a chart.

    The arity-1 slot may keep a distinguished differential separate from the
    rest (transfer wants that split); ``total`` merges the two. The defining
    equation, verified by ``check_structure``, is that the total family
    squares to zero under the insertion product.
    """

    __slots__ = ("bundle", "chart", "operations", "differential")

    def __init__(self, bundle, operations, differential=None):
        if operations.degree != 1:
            raise ValueError("structure operations must have degree 1")
        if operations.source != bundle or operations.target != bundle:
            raise ValueError("operations do not live on the given bundle")
        if differential is not None:
            if (differential.arity, differential.degree) != (1, 1):
                raise ValueError("split differential must have arity 1 and degree 1")
            if differential.source != bundle or differential.target != bundle:
                raise ValueError("split differential does not live on the given bundle")
            if differential.chart != operations.chart:
                raise ValueError("split differential lives over a different chart")
        self.bundle = bundle
        self.chart = operations.chart
        self.operations = operations
        self.differential = differential

    def total(self):
        """All operations as one family, differential merged into arity 1."""
        fam = self.operations.copy()
        if self.differential is not None:
            fam.set(1, fam.get(1) + self.differential)
        return fam

    def curvature(self):
        """The arity-0 entry as an output vector."""
        return self.operations.get(0).value(())

    def __repr__(self):
        return f"CurvedStructure(amplitude={self.bundle.amplitude}, arities={self.total().arities()})"


class LooMorphism:
    """A polynomial chart map with a degree-0 family over the source chart.

    ``base_map`` lists the target coordinates as polynomials in the source
    coordinates; ``phi`` maps the source bundle to the target bundle starting
    at arity 1.
    """

    __slots__ = ("source_chart", "target_chart", "base_map", "phi")

    def __init__(self, source_chart, target_chart, base_map, phi):
        base_map = tuple(source_chart.poly(c) for c in base_map)
        if len(base_map) != target_chart.nvars:
            raise ValueError("base map component count does not match the target chart")
        if phi.degree != 0:
            raise ValueError("morphism operations must have degree 0")
        if phi.chart != source_chart:
            raise ValueError("morphism coefficients must live over the source chart")
        if not phi.get(0).is_zero():
            raise ValueError("morphism operations start at arity 1")
        self.source_chart = source_chart
        self.target_chart = target_chart
        self.base_map = base_map
        self.phi = phi

    @property
    def source_bundle(self):
        return self.phi.source

    @property
    def target_bundle(self):
        return self.phi.target

    def pull_scalar(self, poly):
        """Pull a target-chart polynomial back along the base map."""
        poly = self.target_chart.poly(poly)
        if self.target_chart.nvars == 0:
            return self.source_chart.const(poly.constant_value())
        return poly.substitute(list(self.base_map))

    def pull_family(self, family):
        """Pull a family's coefficients back along the base map."""
        out = OpFamily(family.source, family.target, self.source_chart, family.degree)
        for arity in family.arities():
            out.set(
                arity,
                family.get(arity).map_coefficients(self.pull_scalar, self.source_chart),
            )
        return out

    def __repr__(self):
        return (
            f"LooMorphism({self.source_chart!r} -> {self.target_chart!r}, "
            f"arities={self.phi.arities()})"
        )


class AxiomReport:
    """Outcome of an exact check: a pass flag plus the surviving residuals.

    Each failure is a triple (arity, input key, residual output vector).
    """

    __slots__ = ("passed", "failures")

    def __init__(self, failures):
        self.failures = tuple(failures)
        self.passed = not self.failures

    def __bool__(self):
        return self.passed

    def __repr__(self):
        if self.passed:
            return "AxiomReport(passed)"
        return f"AxiomReport(failures={len(self.failures)})"


def _family_failures(family):
    failures = []
    for arity in family.arities():
        op = family.get(arity)
        for key in sorted(op.entries):
            failures.append((arity, key, dict(op.entries[key])))
    return failures


def check_structure(structure):
    """Exact residuals of the squared total family, keyed by input tuple."""
    structure = getattr(structure, "structure", structure)
    total = structure.total()
    return AxiomReport(_family_failures(compose_circ(total, total)))


def check_morphism(morphism, source, target):
    """Exact residuals of the defining equation of a morphism.

    Compares the insertion of the source structure into the morphism against
    the pulled-back target structure applied through the morphism, arity by
    arity; the arity-0 slot compares the images of the two curvatures.
    Accepts bare structures or any holder exposing a ``structure`` field.
    """
    source = getattr(source, "structure", source)
    target = getattr(target, "structure", target)
    if morphism.phi.source != source.bundle or morphism.phi.target != target.bundle:
        raise ValueError("morphism endpoints do not match the given structures")
    if morphism.source_chart != source.chart or morphism.target_chart != target.chart:
        raise ValueError("morphism charts do not match the given structures")
    lhs = compose_circ(morphism.phi, source.total())
    rhs = compose_bullet(morphism.pull_family(target.total()), morphism.phi)
    return AxiomReport(_family_failures(lhs - rhs))


def identity_family(bundle, chart):
    """The identity as a degree-0 family (arity 1 only)."""
    fam = OpFamily(bundle, bundle, chart, 0)
    fam.set(1, identity_op(bundle, chart))
    return fam


def identity_morphism(structure):
    """The identity morphism of a structure's underlying chart and bundle."""
    chart = structure.chart
    base = [chart.var(name) for name in chart.coords]
    return LooMorphism(chart, chart, base, identity_family(structure.bundle, chart))


def compose_morphisms(outer, inner):
    """The composite morphism (outer after inner)."""
    if outer.source_chart != inner.target_chart:
        raise ValueError("morphisms do not compose: chart mismatch")
    if outer.source_bundle != inner.target_bundle:
        raise ValueError("morphisms do not compose: bundle mismatch")
    base = [inner.pull_scalar(component) for component in outer.base_map]
    phi = compose_bullet(inner.pull_family(outer.phi), inner.phi)
    return LooMorphism(inner.source_chart, outer.target_chart, base, phi)


def operations_from_tables(source, target, chart, degree, tables):
    """Family from a mapping arity -> table (key tuple -> output mapping)."""
    fam = OpFamily(source, target, chart, degree)
    for arity, table in tables.items():
        fam.set(arity, MultiOp.from_table(source, target, chart, arity, degree, table))
    return fam


def linear_block(op, degree_in):
    """Matrix of an arity-1 operation on one degree: rows target, cols source."""
    rows = op.target.basis(degree_in + op.degree)
    cols = op.source.basis(degree_in)
    zero = op.chart.zero()
    return [[op.value((c,)).get(r, zero) for c in cols] for r in rows]


def as_constant(matrix):
    """Fraction matrix if every polynomial entry is constant, else None."""
    out = []
    for row in matrix:
        new = []
        for entry in row:
            if not entry.is_constant():
                return None
            new.append(entry.constant_value())
        out.append(new)
    return out


def base_jacobian(morphism):
    """Jacobian of the base map: rows target coordinates, cols source ones."""
    n = morphism.source_chart.nvars
    return [[comp.derivative(j) for j in range(n)] for comp in morphism.base_map]


def _linear_inverse_op(op):
    """Inverse of an arity-1 degree-0 operation with square invertible blocks."""
    source, target, chart = op.source, op.target, op.chart
    table = {}
    for d in sorted(set(source.degrees) | set(target.degrees)):
        cols = source.basis(d)
        rows = target.basis(d)
        if len(cols) != len(rows):
            raise ValueError(f"linear part is not square in degree {d}")
        if not cols:
            continue
        block = linear_block(op, d)
        constant = as_constant(block)
        if constant is not None:
            inv = [[chart.const(x) for x in row] for row in inverse(constant)]
        else:
            inv = poly_mat_inverse(block)
        for j, row_name in enumerate(rows):
            image = {cols[i]: inv[i][j] for i in range(len(cols)) if not inv[i][j].is_zero()}
            table[(row_name,)] = image
    return MultiOp.from_table(target, source, chart, 1, 0, table)


def _affine_inverse(morphism):
    """Inverse images of the coordinates for an affine invertible base map."""
    src, tgt = morphism.source_chart, morphism.target_chart
    if src.nvars != tgt.nvars:
        raise ValueError("base map cannot be inverted: chart dimensions differ")
    n = src.nvars
    linear = [[Fraction(0)] * n for _ in range(n)]
    shift = [Fraction(0)] * n
    for i, comp in enumerate(morphism.base_map):
        if comp.total_degree() > 1:
            raise ValueError("base map inversion supports affine maps only")
        for expts, coeff in comp.terms.items():
            if sum(expts) == 0:
                shift[i] = coeff
            else:
                linear[i][expts.index(1)] = coeff
    back = inverse(linear)
    images = []
    for j in range(n):
        poly = tgt.zero()
        for k in range(n):
            if back[j][k]:
                term = tgt.var(tgt.coords[k]) - tgt.const(shift[k])
                poly = poly + term * back[j][k]
        images.append(poly)
    return images


def invert_morphism(morphism):
    """Inverse of a morphism with affine invertible base and invertible linear part.

    Solves the arity recursion for the left inverse, then verifies that both
    composites equal the identity exactly.
    """
    phi = morphism.phi
    source, target = phi.source, phi.target
    chart = morphism.source_chart
    inv_base = _affine_inverse(morphism)
    back = _linear_inverse_op(phi.get(1))
    psi = OpFamily(target, source, chart, 0)
    psi.set(1, back)
    for n in range(2, source.amplitude + 1):
        defect = compose_bullet(psi, phi).get(n)
        if defect.is_zero():
            continue
        entry = tabulate(
            target,
            source,
            chart,
            n,
            0,
            lambda key: defect.evaluate([back.value((c,)) for c in key]),
        )
        psi.set(n, entry.scale(-1))
    if compose_bullet(psi, phi) != identity_family(source, chart):
        raise ValueError("inversion failed: left composite is not the identity")
    pushed = OpFamily(target, source, morphism.target_chart, 0)
    for arity in psi.arities():
        pushed.set(
            arity,
            psi.get(arity).map_coefficients(
                lambda p: p.substitute(list(inv_base)), morphism.target_chart
            ),
        )
    back_morphism = LooMorphism(morphism.target_chart, morphism.source_chart, inv_base, pushed)
    right = compose_bullet(back_morphism.pull_family(phi), pushed)
    if right != identity_family(target, morphism.target_chart):
        raise ValueError("inversion failed: right composite is not the identity")
    return back_morphism


def _constant_section(op):
    """Right inverse of a degreewise-surjective constant-coefficient linear part."""
    source, target, chart = op.source, op.target, op.chart
    table = {}
    for d in sorted(target.degrees):
        rows = target.basis(d)
        cols = source.basis(d)
        block = as_constant(linear_block(op, d))
        if block is None:
            raise ValueError("splitting requires constant coefficients; supply one explicitly")
        section = right_inverse(block)
        for j, row_name in enumerate(rows):
            image = {cols[i]: section[i][j] for i in range(len(cols)) if section[i][j]}
            table[(row_name,)] = image
    return MultiOp.from_table(target, source, chart, 1, 0, table)


def strictify_fibration(morphism, source, target, splitting=None):
    """Split a fibration into an isomorphism followed by a linear morphism.

    Returns ``(iso, linear_fib, new_src)``: the isomorphism has identity
    linear part onto the rebuilt source structure, the linear morphism keeps
    only the original linear part, and their composite equals the original
    morphism. All three equalities are verified exactly.
    """
    phi = morphism.phi
    phi1 = phi.get(1)
    chart = morphism.source_chart
    bundle = phi.source
    section = splitting if splitting is not None else _constant_section(phi1)
    prime = identity_family(bundle, chart)
    for arity in phi.arities():
        if arity == 1:
            continue
        op = phi.get(arity)
        prime.set(
            arity,
            tabulate(
                bundle,
                bundle,
                chart,
                arity,
                0,
                lambda key, op=op: section.evaluate([op.value(key)]),
            ),
        )
    lam = source.total()
    lhs = compose_circ(prime, lam)
    new_ops = OpFamily(bundle, bundle, chart, 1)
    for n in range(max(bundle.amplitude, 1)):
        correction = compose_bullet(new_ops, prime).get(n)
        new_ops.set(n, lhs.get(n) - correction)
    new_src = CurvedStructure(bundle, new_ops)
    identity_base = [chart.var(name) for name in chart.coords]
    iso = LooMorphism(chart, chart, identity_base, prime)
    lin = OpFamily(bundle, phi.target, chart, 0)
    lin.set(1, phi1)
    linear_fib = LooMorphism(chart, morphism.target_chart, morphism.base_map, lin)
    if not check_morphism(iso, source, new_src).passed:
        raise ValueError("strictification failed: isomorphism leg does not check")
    if not check_morphism(linear_fib, new_src, target).passed:
        raise ValueError("strictification failed: linear leg does not check")
    if compose_bullet(lin, prime) != phi:
        raise ValueError("strictification failed: composite differs from the input")
    return iso, linear_fib, new_src


def transport_structure(morphism, target_structure):
    """The unique source structure making the morphism structure-preserving.

    Needs an invertible linear part; the base map may be any polynomial map.
    The result is verified through the morphism check before returning.
    """
    phi = morphism.phi
    bundle = phi.source
    chart = morphism.source_chart
    back = _linear_inverse_op(phi.get(1))
    rhs = compose_bullet(morphism.pull_family(target_structure.total()), phi)
    ops = OpFamily(bundle, bundle, chart, 1)
    for n in range(max(bundle.amplitude, 1)):
        defect = rhs.get(n) - compose_circ(phi, ops).get(n)
        if defect.is_zero():
            continue
        entry = tabulate(
            bundle,
            bundle,
            chart,
            n,
            1,
            lambda key: back.evaluate([defect.value(key)]),
        )
        ops.set(n, entry)
    result = CurvedStructure(bundle, ops)
    report = check_morphism(morphism, result, target_structure)
    if not report.passed:
        raise ValueError("transport failed: the recursion did not close")
    return result


def is_fibration_at(morphism, point):
    """Base submersion plus degreewise-surjective linear part at one point."""
    point = morphism.source_chart.point(point)
    jac = [[entry.eval(point) for entry in row] for row in base_jacobian(morphism)]
    if rank(jac) < morphism.target_chart.nvars:
        return False
    phi1 = morphism.phi.get(1)
    for d in morphism.target_bundle.degrees:
        block = [[entry.eval(point) for entry in row] for row in linear_block(phi1, d)]
        if rank(block) < morphism.target_bundle.rank(d):
            return False
    return True


def is_fibration(morphism):
    """Global surjectivity check over constant-coefficient data.

    Raises when the Jacobian or the linear part has non-constant entries; use
    ``is_fibration_at`` for pointwise checks in that case.
    """
    jac = as_constant(base_jacobian(morphism))
    if jac is None:
        raise ValueError("global check needs an affine base map; use is_fibration_at")
    if rank(jac) < morphism.target_chart.nvars:
        return False
    phi1 = morphism.phi.get(1)
    for d in morphism.target_bundle.degrees:
        block = as_constant(linear_block(phi1, d))
        if block is None:
            raise ValueError("global check needs constant coefficients; use is_fibration_at")
        if rank(block) < morphism.target_bundle.rank(d):
            return False
    return True
