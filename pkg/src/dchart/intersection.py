"""Derived intersections of submanifolds and homotopy fibered products.

Two submanifolds of an affine chart may meet badly: tangentially, in excess
dimension, or in a single fat point. The derived intersection keeps the
honest set of intersection points as its classical locus and records the
failure of transversality in its tangent complexes. The model: a point of
the intersection is a pair of points, one on each submanifold, joined by a
path in the ambient chart. Concretely, the endpoint fibration of the
ambient path space is pulled back along the product of the two
parametrizations. The result lives on the product of the parameter charts,
carries one degree-1 generator per ambient coordinate, and its curvature is
the coordinate gap between the two embeddings, so it vanishes exactly where
the images agree.

Submanifolds are stored parametrically. Three presentations construct one:
an affine map with injective linear part, the solution set of affine
equations with surjective linear part (solved exactly into a
parametrization), and the graph of a polynomial map over a leading block of
ambient coordinates. Graphs keep every base change polynomial; implicitly
defined curved loci are out of scope.

The homotopy fibered product generalizes from inclusions to arbitrary
morphisms into a common derived chart: the endpoint fibration of the
target's path space is base-changed twice, first moving the left endpoint
through the left morphism, then the right endpoint through the right one.
Virtual dimensions add up (left plus right minus target); every call
re-checks that arithmetic.
"""

from __future__ import annotations

from fractions import Fraction

from .bundles import Chart, GradedBundle
from .geometry import (
    DerivedChart,
    product_chart,
    product_morphism,
    pullback_fibration,
    virtual_dimension,
)
from .linalg import nullspace, rank, solve
from .ops import OpFamily
from .pathspace import derived_path_space
from .structures import CurvedStructure, LooMorphism, identity_morphism

__all__ = [
    "AffineSubmanifold",
    "DerivedIntersection",
    "derived_intersection",
    "homotopy_fibered_product",
    "plain_chart",
]


def plain_chart(chart):
    """The derived chart with an empty bundle over a plain affine chart."""
    bundle = GradedBundle({})
    return DerivedChart(CurvedStructure(bundle, OpFamily(bundle, bundle, chart, 1)))


def _linear_matrix(params, components):
    """Coefficient matrix of the linear part, rows per component."""
    matrix = []
    for component in components:
        row = []
        for j in range(params.nvars):
            expts = [0] * params.nvars
            expts[j] = 1
            row.append(component.terms.get(tuple(expts), Fraction(0)))
        matrix.append(row)
    return matrix


def _constant_part(params, component):
    return component.terms.get((0,) * params.nvars, Fraction(0))


class AffineSubmanifold:
    """A parametrized submanifold of an affine chart.

    ``params`` is the parameter chart and ``components`` holds one polynomial
    per ambient coordinate, expressing the embedding. ``kind`` records the
    presentation: ``"affine"`` when the components are affine with injective
    linear part (membership is an exact linear solve) and ``"graph"`` when
    the parameters are the leading ambient coordinates and the remaining
    components are polynomial in them (membership is substitution).
    """

    __slots__ = ("ambient", "params", "components", "kind")

    def __init__(self, ambient, params, components, kind):
        components = tuple(params.poly(c) for c in components)
        if len(components) != ambient.nvars:
            raise ValueError(
                f"need {ambient.nvars} components for {ambient!r}, got {len(components)}"
            )
        if kind not in ("affine", "graph"):
            raise ValueError(f"unknown presentation kind {kind!r}")
        self.ambient = ambient
        self.params = params
        self.components = components
        self.kind = kind

    @classmethod
    def from_affine_map(cls, ambient, params, components):
        """Submanifold swept out by an affine map from a parameter chart.

        Every component must be affine in the parameters and the linear part
        must have full column rank, so the map is an embedding.
        """
        components = tuple(params.poly(c) for c in components)
        for component in components:
            if component.total_degree() > 1:
                raise ValueError(
                    f"component {params.format(component)!r} is not affine"
                )
        matrix = _linear_matrix(params, components)
        found = rank(matrix)
        if found != params.nvars:
            raise ValueError(
                f"parametrization is degenerate: linear part has rank {found}, "
                f"expected {params.nvars}"
            )
        return cls(ambient, params, components, "affine")

    @classmethod
    def from_zero_locus(cls, ambient, equations, param_names=None):
        """Submanifold cut out by affine equations with independent gradients.

        The system is solved exactly: one particular solution plus the kernel
        of the linear part, giving an affine parametrization. Parameter names
        default to s0, s1, and so on.
        """
        equations = tuple(ambient.poly(e) for e in equations)
        if not equations:
            raise ValueError("zero locus needs at least one equation")
        for equation in equations:
            if equation.total_degree() > 1:
                raise ValueError(
                    f"equation {ambient.format(equation)!r} is not affine"
                )
        matrix = _linear_matrix(ambient, equations)
        found = rank(matrix)
        if found != len(equations):
            raise ValueError(
                f"equations are dependent: linear part has rank {found}, "
                f"expected {len(equations)}"
            )
        rhs = [-_constant_part(ambient, equation) for equation in equations]
        origin = solve(matrix, rhs)
        basis = nullspace(matrix)
        if param_names is None:
            param_names = tuple(f"s{i}" for i in range(len(basis)))
        params = Chart(param_names)
        if params.nvars != len(basis):
            raise ValueError(
                f"need {len(basis)} parameter names, got {params.nvars}"
            )
        components = []
        for i in range(ambient.nvars):
            component = params.const(origin[i])
            for j, vector in enumerate(basis):
                component = component + params.var(param_names[j]).scale(vector[i])
            components.append(component)
        return cls(ambient, params, components, "affine")

    @classmethod
    def graph(cls, ambient, values):
        """Graph of a polynomial map over the leading ambient coordinates.

        ``values`` gives the trailing coordinates as polynomials in the
        leading ones; the parameter chart reuses the leading names.
        """
        split = ambient.nvars - len(values)
        if split < 0:
            raise ValueError(
                f"{len(values)} graph values exceed {ambient.nvars} coordinates"
            )
        params = Chart(ambient.coords[:split])
        components = [params.var(name) for name in params.coords]
        components += [params.poly(value) for value in values]
        return cls(ambient, params, components, "graph")

    @property
    def dim(self):
        return self.params.nvars

    def embed(self, point):
        """Image of a rational parameter point in the ambient chart."""
        point = self.params.point(point)
        return tuple(component.eval(point) for component in self.components)

    def contains(self, point):
        """Exact membership test for a rational point of the ambient chart."""
        point = self.ambient.point(point)
        if self.kind == "graph":
            split = self.params.nvars
            head = point[:split]
            return all(
                component.eval(head) == value
                for component, value in zip(self.components[split:], point[split:])
            )
        matrix = _linear_matrix(self.params, self.components)
        rhs = [
            value - _constant_part(self.params, component)
            for component, value in zip(self.components, point)
        ]
        return solve(matrix, rhs) is not None

    def __repr__(self):
        images = ", ".join(self.params.format(c) for c in self.components)
        return f"AffineSubmanifold(dim={self.dim}, image=({images}))"


class DerivedIntersection:
    """A derived chart presenting the intersection of two submanifolds.

    ``chart`` lives on the product of the two parameter charts; ``left`` and
    ``right`` are the intersected submanifolds and ``ambient`` their common
    chart. The classical locus consists of the parameter pairs whose images
    in the ambient chart coincide.
    """

    __slots__ = ("chart", "left", "right", "ambient")

    def __init__(self, chart, left, right, ambient):
        self.chart = chart
        self.left = left
        self.right = right
        self.ambient = ambient

    def __repr__(self):
        return (
            f"DerivedIntersection(vdim={virtual_dimension(self.chart)}, "
            f"ambient={self.ambient!r})"
        )


def _parametrization_morphism(sub, ambient_dc):
    source = plain_chart(sub.params)
    phi = OpFamily(source.bundle, ambient_dc.bundle, sub.params, 0)
    morphism = LooMorphism(sub.params, ambient_dc.chart, tuple(sub.components), phi)
    return morphism, source


def derived_intersection(ambient, left, right):
    """Derived intersection of two submanifolds of a plain affine chart.

    Pulls the endpoint fibration of the ambient path space back along the
    product of the two parametrizations. The resulting chart lives on the
    product of the parameter charts, carries one degree-1 generator per
    ambient coordinate, and its curvature is the gap between the right and
    the left embedding, so its classical locus is the exact intersection.
    The virtual dimension equals dim left + dim right - dim ambient.
    """
    for side, sub in (("left", left), ("right", right)):
        if sub.ambient != ambient:
            raise ValueError(
                f"{side} submanifold lives in {sub.ambient!r}, not {ambient!r}"
            )
    path = derived_path_space(plain_chart(ambient))
    left_map, left_dc = _parametrization_morphism(left, path.source)
    right_map, right_dc = _parametrization_morphism(right, path.source)
    pair = product_chart(left_dc, right_dc)
    into_product = product_morphism(left_map, right_map, pair, path.product)
    result = pullback_fibration(path.projection, path.derived, into_product, pair)
    chart = result.chart
    if chart.bundle.rank(1) != ambient.nvars or chart.amplitude != 1:
        raise ValueError(
            f"intersection bundle has ranks {chart.bundle.degrees!r}, expected "
            f"rank {ambient.nvars} in degree 1 only"
        )
    expected = left.dim + right.dim - ambient.nvars
    found = virtual_dimension(chart)
    if found != expected:
        raise ValueError(
            f"virtual dimension {found} breaks additivity (expected {expected})"
        )
    return DerivedIntersection(chart, left, right, ambient)


def _morphism_fits(label, morphism, source, target):
    if morphism.source_chart != source.chart or morphism.phi.source != source.bundle:
        raise ValueError(f"{label} morphism does not start on its source chart")
    if morphism.target_chart != target.chart or morphism.phi.target != target.bundle:
        raise ValueError(f"{label} morphism does not land in the target chart")


def homotopy_fibered_product(left, left_source, right, right_source, target):
    """Homotopy fibered product of two morphisms into a common derived chart.

    The morphisms alone do not carry the structures they relate, so the
    three derived charts are explicit arguments. The product is realized by
    base-changing the endpoint fibration of the target's path space twice:
    first the left endpoint moves through the left morphism, then the right
    endpoint through the right one. The result lives on the product of the
    two source charts; its classical locus is the set of source pairs whose
    images agree, and its virtual dimension is vdim left + vdim right -
    vdim target, re-checked on every call.
    """
    _morphism_fits("left", left, left_source, target)
    _morphism_fits("right", right, right_source, target)
    path = derived_path_space(target)
    half_pair = product_chart(left_source, target)
    move_left = product_morphism(
        left, identity_morphism(target.structure), half_pair, path.product
    )
    half = pullback_fibration(path.projection, path.derived, move_left, half_pair)
    full_pair = product_chart(left_source, right_source)
    move_right = product_morphism(
        identity_morphism(left_source.structure), right, full_pair, half_pair
    )
    full = pullback_fibration(half.projection, half.chart, move_right, full_pair)
    expected = (
        virtual_dimension(left_source)
        + virtual_dimension(right_source)
        - virtual_dimension(target)
    )
    found = virtual_dimension(full.chart)
    if found != expected:
        raise ValueError(
            f"virtual dimension {found} breaks additivity (expected {expected})"
        )
    return full.chart
