"""Derived charts as geometric objects.

A derived chart couples an affine chart with a curved structure on a graded
bundle. This module provides the pointwise geometry: the classical locus
(zeros of the curvature), tangent complexes at classical points with their
cohomology, etale and weak-equivalence tests via mapping cones, virtual
dimension, products, and pullbacks along linear fibrations.

Virtual dimension follows the Euler-characteristic convention: the chart
dimension minus the alternating sum of bundle ranks. Pullbacks are realized
concretely when the fibration's base map is a coordinate projection (the
identity included); the pulled-back chart lives on the base coordinates of
the map being pulled back, extended by the fibration's extra fiber
coordinates, and its bundle is the original bundle extended by the kernel of
the fibration's linear part. The structure on the pullback is assembled on
the function-algebra side: the kernel generators keep their differential
from the fibration's source, rewritten through the gluing relation that
splits a pulled-back generator into a base part and a kernel part.
"""

from __future__ import annotations

from fractions import Fraction

from .bundles import Chart, GradedBundle
from .cdga import (
    CdgaDerivation,
    element_product,
    from_derivation,
    morphism_dual,
    morphism_from_dual,
    to_derivation,
)
from .linalg import nullspace, rank, rref, right_inverse, inverse
from .ops import MultiOp, OpFamily
from .structures import (
    CurvedStructure,
    LooMorphism,
    as_constant,
    check_morphism,
    check_structure,
    linear_block,
)

__all__ = [
    "DerivedChart",
    "ClassicalPoint",
    "TangentComplex",
    "PullbackResult",
    "is_classical_point",
    "tangent_complex",
    "complex_cohomology",
    "is_etale_at",
    "is_weak_equivalence",
    "virtual_dimension",
    "product_chart",
    "product_morphism",
    "diagonal_morphism",
    "pullback_fibration",
]


class DerivedChart:
    """An affine chart carrying a verified curved structure."""

    __slots__ = ("structure", "chart", "bundle")

    def __init__(self, structure):
        report = check_structure(structure)
        if not report.passed:
            raise ValueError(f"structure fails its axiom check: {report.failures[0]}")
        self.structure = structure
        self.chart = structure.chart
        self.bundle = structure.bundle

    @property
    def amplitude(self):
        return self.bundle.amplitude

    def curvature_vector(self):
        return self.structure.total().get(0).value(())

    def __repr__(self):
        return (
            f"DerivedChart(dim={self.chart.nvars}, amplitude={self.amplitude}, "
            f"vdim={virtual_dimension(self)})"
        )


class ClassicalPoint:
    """A rational chart point where the curvature vanishes exactly."""

    __slots__ = ("coords",)

    def __init__(self, dc, coords):
        point = dc.chart.point(coords)
        bad = _curvature_values(dc, point)
        if bad:
            name, value = bad[0]
            raise ValueError(
                f"point is not classical: curvature component {name!r} evaluates to {value}"
            )
        self.coords = point

    def __repr__(self):
        return f"ClassicalPoint({[str(c) for c in self.coords]})"


def _curvature_values(dc, point):
    """Nonzero curvature components at a point, as (name, value) pairs."""
    out = []
    for name, coeff in dc.curvature_vector().items():
        value = coeff.eval(point)
        if value != 0:
            out.append((name, value))
    return out


def is_classical_point(dc, coords):
    """Whether the curvature vanishes exactly at the given rational point."""
    point = dc.chart.point(coords)
    return not _curvature_values(dc, point)


def _coerce_point(dc, point):
    if isinstance(point, ClassicalPoint):
        return point.coords
    return ClassicalPoint(dc, point).coords


def _matrix_at(op, degree_in, point):
    """A linear operation's block out of one degree, evaluated at a point."""
    block = linear_block(op, degree_in)
    return [[entry.eval(point) for entry in row] for row in block]


def _jacobian_at(dc, point):
    """Jacobian of the curvature components at a point (rows: degree-1 basis)."""
    curvature = dc.curvature_vector()
    rows = []
    for name in dc.bundle.basis(1):
        coeff = curvature.get(name, dc.chart.zero())
        rows.append([coeff.derivative(j).eval(point) for j in range(dc.chart.nvars)])
    return rows


class TangentComplex:
    """The linearization of a derived chart at a classical point.

    ``terms`` lists dimensions in degrees 0..n: the chart dimension first,
    then the bundle ranks. ``differentials[i]`` maps term i to term i+1: the
    curvature Jacobian first, then the linear operation's blocks, all
    evaluated at the point. Consecutive differentials compose to zero.
    """

    __slots__ = ("point", "terms", "differentials")

    def __init__(self, point, terms, differentials):
        self.point = tuple(point)
        self.terms = tuple(terms)
        self.differentials = tuple(tuple(tuple(row) for row in d) for d in differentials)
        if len(self.differentials) != max(len(self.terms) - 1, 0):
            raise ValueError("need one differential per adjacent pair of terms")
        for i, mat in enumerate(self.differentials):
            if len(mat) != self.terms[i + 1] or any(len(row) != self.terms[i] for row in mat):
                raise ValueError(f"differential {i} has the wrong shape")
        for i in range(len(self.differentials) - 1):
            if not _product_is_zero(self.differentials[i + 1], self.differentials[i]):
                raise ValueError(f"differentials {i} and {i + 1} do not compose to zero")

    def __repr__(self):
        return f"TangentComplex(terms={list(self.terms)})"


def _product_is_zero(a, b):
    if not a or not b:
        return True
    cols = len(b[0]) if b else 0
    for row in a:
        for j in range(cols):
            if sum(row[k] * b[k][j] for k in range(len(b))) != 0:
                return False
    return True


def tangent_complex(dc, point):
    """Tangent complex at a classical point: chart directions, then the bundle."""
    coords = _coerce_point(dc, point)
    n = dc.bundle.amplitude
    terms = [dc.chart.nvars] + [dc.bundle.rank(i) for i in range(1, n + 1)]
    lam1 = dc.structure.total().get(1)
    differentials = []
    if n >= 1:
        differentials.append(_jacobian_at(dc, coords))
        for i in range(1, n):
            differentials.append(_matrix_at(lam1, i, coords))
    return TangentComplex(coords, terms, differentials)


def complex_cohomology(tc):
    """Cohomology dimensions of a tangent complex, by exact rank-nullity."""
    dims = []
    ranks = [rank([list(row) for row in d]) for d in tc.differentials]
    for i, term in enumerate(tc.terms):
        out_rank = ranks[i] if i < len(ranks) else 0
        in_rank = ranks[i - 1] if i >= 1 else 0
        dims.append(term - out_rank - in_rank)
    return dims


def _tangent_map_blocks(morphism, source, target, coords, image):
    """Blocks of the induced map of tangent complexes at a classical point."""
    blocks = [
        [
            [component.derivative(j).eval(coords) for j in range(morphism.source_chart.nvars)]
            for component in morphism.base_map
        ]
    ]
    phi1 = morphism.phi.get(1)
    top = max(source.amplitude, target.amplitude)
    for i in range(1, top + 1):
        block = linear_block(phi1, i)
        blocks.append([[entry.eval(coords) for entry in row] for row in block])
    return blocks


def _cone_is_exact(src_terms, src_diff, tgt_terms, tgt_diff, f_blocks):
    """Exactness of the mapping cone of a degreewise map of complexes."""
    top = max(len(src_terms), len(tgt_terms))

    def dim_a(i):
        return src_terms[i] if 0 <= i < len(src_terms) else 0

    def dim_b(i):
        return tgt_terms[i] if 0 <= i < len(tgt_terms) else 0

    def d_a(i):
        if 0 <= i < len(src_diff):
            return src_diff[i]
        return [[Fraction(0)] * dim_a(i) for _ in range(dim_a(i + 1))]

    def d_b(i):
        if 0 <= i < len(tgt_diff):
            return tgt_diff[i]
        return [[Fraction(0)] * dim_b(i) for _ in range(dim_b(i + 1))]

    def f_block(i):
        if 0 <= i < len(f_blocks):
            return f_blocks[i]
        return [[Fraction(0)] * dim_a(i) for _ in range(dim_b(i))]

    # cone degree i holds target degree i and source degree i+1
    def cone_dim(i):
        return dim_b(i) + dim_a(i + 1)

    def cone_diff(i):
        rows = []
        for r in range(dim_b(i + 1)):
            db = d_b(i)
            fb = f_block(i + 1)
            left = db[r] if db else []
            right = fb[r] if fb else []
            rows.append(list(left) + list(right))
        for r in range(dim_a(i + 2)):
            da = d_a(i + 1)
            rows.append([Fraction(0)] * dim_b(i) + [-c for c in da[r]])
        return rows

    ranks = {}
    for i in range(-1, top + 1):
        ranks[i] = rank(cone_diff(i))
    for i in range(-1, top + 1):
        nullity = cone_dim(i) - ranks[i]
        boundary = ranks[i - 1] if i - 1 in ranks else 0
        if nullity != boundary:
            return False
    return True


def is_etale_at(morphism, source, target, point):
    """Whether the tangent map at a classical source point is an equivalence.

    The point's image under the base map must be classical in the target;
    the test is exactness of the mapping cone of the tangent-complex map.
    """
    coords = _coerce_point(source, point)
    image = tuple(component.eval(coords) for component in morphism.base_map)
    image = _coerce_point(target, image)
    src = tangent_complex(source, coords)
    tgt = tangent_complex(target, image)
    blocks = _tangent_map_blocks(morphism, source, target, coords, image)
    return _cone_is_exact(src.terms, src.differentials, tgt.terms, tgt.differentials, blocks)


def is_weak_equivalence(morphism, source, target, source_points, target_points):
    """Bijection of the supplied classical loci plus etale at every source point."""
    src_pts = [_coerce_point(source, p) for p in source_points]
    tgt_pts = [_coerce_point(target, p) for p in target_points]
    images = [tuple(c.eval(p) for c in morphism.base_map) for p in src_pts]
    if len(src_pts) != len(tgt_pts):
        return False
    if sorted(images) != sorted(tgt_pts):
        return False
    if len(set(images)) != len(images):
        return False
    return all(is_etale_at(morphism, source, target, p) for p in src_pts)


def virtual_dimension(dc):
    """Chart dimension plus the alternating sum of bundle ranks."""
    total = dc.chart.nvars
    for i in range(1, dc.bundle.amplitude + 1):
        total += dc.bundle.rank(i) if i % 2 == 0 else -dc.bundle.rank(i)
    return total


# --- products ---------------------------------------------------------------


def _suffix_chart(a, b, suffixes):
    left, right = suffixes
    coords = tuple(f"{c}{left}" for c in a.coords) + tuple(f"{c}{right}" for c in b.coords)
    if len(set(coords)) != len(coords):
        raise ValueError("product coordinates collide; pick other suffixes")
    return Chart(coords)


def _suffix_bundle(a, b, suffixes):
    left, right = suffixes
    degrees = {}
    for deg in range(1, max(a.amplitude, b.amplitude) + 1):
        names = tuple(f"{n}{left}" for n in a.basis(deg)) + tuple(
            f"{n}{right}" for n in b.basis(deg)
        )
        if names:
            degrees[deg] = names
    bundle = GradedBundle(degrees)
    if bundle.total_rank() != a.total_rank() + b.total_rank():
        raise ValueError("product bundle names collide; pick other suffixes")
    return bundle


def _rename_family(family, bundle, chart, suffix, offset):
    """Re-express an operation family on suffixed names over a larger chart."""
    out = OpFamily(bundle, bundle, chart, family.degree)
    for arity in family.arities():
        op = family.get(arity)
        table = {}
        for key, bucket in op.entries.items():
            new_key = tuple(f"{n}{suffix}" for n in key)
            table[new_key] = {
                f"{n}{suffix}": coeff.extend(chart.nvars, offset)
                for n, coeff in bucket.items()
            }
        out.set(arity, MultiOp.from_table(bundle, bundle, chart, arity, family.degree, table))
    return out


def product_chart(a, b, suffixes=(".0", ".1")):
    """Product of two derived charts, factor names tagged by the suffixes.

    Coordinates and basis names of the left factor get the first suffix,
    those of the right factor the second. Operations act factorwise; mixed
    keys vanish, and the curvatures add.
    """
    chart = _suffix_chart(a.chart, b.chart, suffixes)
    bundle = _suffix_bundle(a.bundle, b.bundle, suffixes)
    left = _rename_family(a.structure.total(), bundle, chart, suffixes[0], 0)
    right = _rename_family(b.structure.total(), bundle, chart, suffixes[1], a.chart.nvars)
    ops = OpFamily(bundle, bundle, chart, 1)
    for arity in sorted(set(left.arities()) | set(right.arities())):
        term = None
        if arity in left.arities():
            term = left.get(arity)
        if arity in right.arities():
            term = right.get(arity) if term is None else term + right.get(arity)
        ops.set(arity, term)
    return DerivedChart(CurvedStructure(bundle, ops))


def product_morphism(f, g, source_product, target_product, suffixes=(".0", ".1")):
    """The factorwise morphism between product charts."""
    left, right = suffixes
    nf = f.source_chart.nvars
    base = [component.extend(source_product.chart.nvars, 0) for component in f.base_map]
    base += [component.extend(source_product.chart.nvars, nf) for component in g.base_map]
    phi = OpFamily(source_product.bundle, target_product.bundle, source_product.chart, 0)
    pieces = [(f, left, 0), (g, right, nf)]
    arities = sorted({a for m, _, _ in pieces for a in m.phi.arities()})
    for arity in arities:
        table = {}
        for m, suffix, offset in pieces:
            if arity not in m.phi.arities():
                continue
            for key, bucket in m.phi.get(arity).entries.items():
                new_key = tuple(f"{n}{suffix}" for n in key)
                table[new_key] = {
                    f"{n}{suffix}": coeff.extend(source_product.chart.nvars, offset)
                    for n, coeff in bucket.items()
                }
        phi.set(
            arity,
            MultiOp.from_table(
                source_product.bundle,
                target_product.bundle,
                source_product.chart,
                arity,
                0,
                table,
            ),
        )
    return LooMorphism(source_product.chart, target_product.chart, tuple(base), phi)


def diagonal_morphism(dc, product, suffixes=(".0", ".1")):
    """The diagonal into a self-product: both copies of each coordinate and name."""
    left, right = suffixes
    base = []
    for name in product.chart.coords:
        if name.endswith(left):
            base.append(dc.chart.var(name[: -len(left)]))
        elif name.endswith(right):
            base.append(dc.chart.var(name[: -len(right)]))
        else:
            raise ValueError(f"coordinate {name!r} carries neither product suffix")
    table = {
        (name,): {f"{name}{left}": 1, f"{name}{right}": 1} for name in dc.bundle.names
    }
    phi = OpFamily(dc.bundle, product.bundle, dc.chart, 0)
    if table:
        phi.set(1, MultiOp.from_table(dc.bundle, product.bundle, dc.chart, 1, 0, table))
    return LooMorphism(dc.chart, product.chart, tuple(base), phi)


# --- pullbacks along linear fibrations --------------------------------------


class PullbackResult:
    """A pullback chart with its two projections.

    ``projection`` is the pulled-back fibration onto the source of the map
    being pulled back along; ``comparison`` covers the fibration's source.
    """

    __slots__ = ("chart", "projection", "comparison")

    def __init__(self, chart, projection, comparison):
        self.chart = chart
        self.projection = projection
        self.comparison = comparison

    def __repr__(self):
        return f"PullbackResult(chart={self.chart!r})"


def _projection_indices(fib):
    """Indices of the fibration's base coordinates inside its source chart.

    The base map must pick distinct plain coordinates, one per target
    coordinate; everything else counts as a fiber coordinate.
    """
    chart = fib.source_chart
    indices = []
    for component in fib.base_map:
        index = None
        for j in range(chart.nvars):
            if component == chart.var(chart.coords[j]):
                index = j
                break
        if index is None:
            raise ValueError(
                "fibration base map must be a coordinate projection; component "
                f"{chart.format(component)!r} is not a plain coordinate"
            )
        indices.append(index)
    if len(set(indices)) != len(indices):
        raise ValueError("fibration base map repeats a coordinate")
    return indices


def pullback_fibration(fib, fib_source, g, g_source):
    """Pull a linear fibration back along an arbitrary morphism.

    ``fib`` maps the total chart onto the common target; its base map must
    be a coordinate projection and its linear part constant. ``g`` maps the
    new base chart into the same target. The result lives on the base chart
    of ``g`` extended by the fibration's fiber coordinates; its bundle is
    the bundle of ``g``'s source extended by the kernel of the fibration's
    linear part. Kernel generators keep their structure from the total
    space, rewritten through the splitting of the linear part.
    """
    if fib.target_chart != g.target_chart:
        raise ValueError("fibration and base-change map must share their target chart")
    for arity in fib.phi.arities():
        if arity != 1:
            raise ValueError("fibration must be linear (single-argument component only)")
    total_bundle = fib.source_bundle
    target_bundle = fib.target_bundle
    base_indices = _projection_indices(fib)
    fiber_indices = [j for j in range(fib.source_chart.nvars) if j not in base_indices]
    fiber_coords = [fib.source_chart.coords[j] for j in fiber_indices]

    n_chart = g.source_chart
    clash = [c for c in fiber_coords if c in n_chart.coords]
    if clash:
        raise ValueError(f"fiber coordinates {clash!r} collide with base-change coordinates")
    out_chart = Chart(tuple(n_chart.coords) + tuple(fiber_coords))
    n_vars = n_chart.nvars

    # splitting of the linear part, degree by degree
    phi1 = fib.phi.get(1)
    sections = {}
    kernel_cols = {}
    theta_rows = {}
    kernel_names = []
    kernel_degrees = {}
    e_names = set(g_source.bundle.names)
    for deg in range(1, total_bundle.amplitude + 1):
        src_names = total_bundle.basis(deg)
        if not src_names:
            continue
        block = as_constant(linear_block(phi1, deg))
        if block is None:
            raise ValueError(f"fibration linear part is not constant in degree {deg}")
        tgt_rank = target_bundle.rank(deg)
        if tgt_rank:
            section = right_inverse([list(row) for row in block])
            if section is None:
                raise ValueError(f"fibration linear part is not surjective in degree {deg}")
            kernel = nullspace([list(row) for row in block])
        else:
            section = [[] for _ in src_names]
            kernel = [
                [Fraction(1 if i == j else 0) for j in range(len(src_names))]
                for i in range(len(src_names))
            ]
        echelon, _ = rref(kernel) if kernel else ([], [])
        cols = [list(row) for row in echelon]
        sections[deg] = section
        kernel_cols[deg] = cols
        local = []
        for row in cols:
            ones = [j for j, c in enumerate(row) if c != 0]
            if len(ones) == 1 and row[ones[0]] == 1:
                name = src_names[ones[0]]
            else:
                name = f"k{deg}.{len(local)}"
            while name in e_names or name in kernel_degrees:
                name = f"k{name}"
            local.append(name)
            kernel_degrees[name] = deg
        kernel_names.append((deg, tuple(local)))
        if cols:
            combined = [
                [section[i][j] for j in range(tgt_rank)] + [cols[r][i] for r in range(len(cols))]
                for i in range(len(src_names))
            ]
            inv = inverse(combined)
            if inv is None:
                raise ValueError(f"fibration splitting is degenerate in degree {deg}")
            theta_rows[deg] = inv[tgt_rank:]
        else:
            theta_rows[deg] = []

    degrees = {}
    for deg in range(1, max(g_source.bundle.amplitude, total_bundle.amplitude) + 1):
        names = tuple(g_source.bundle.basis(deg))
        for d, local in kernel_names:
            if d == deg:
                names += local
        if names:
            degrees[deg] = names
    out_bundle = GradedBundle(degrees)

    def into_out(poly):
        return poly.extend(out_chart.nvars, 0)

    def fiber_var(position):
        return out_chart.var(fiber_coords[position])

    # base-side substitution for the total chart's coordinates
    total_images = [None] * fib.source_chart.nvars
    for t_index, s_index in enumerate(base_indices):
        total_images[s_index] = into_out(g.base_map[t_index])
    for position, s_index in enumerate(fiber_indices):
        total_images[s_index] = fiber_var(position)

    def pull_total(poly):
        if fib.source_chart.nvars == 0:
            return out_chart.const(poly.constant_value())
        return poly.substitute(total_images)

    # gluing relation: a total-space generator splits into a base part,
    # pushed through the dual of g, and a kernel part
    g_dual = morphism_dual(g)
    rewrite = {}
    for deg in range(1, total_bundle.amplitude + 1):
        src_names = total_bundle.basis(deg)
        if not src_names:
            continue
        section = sections[deg]
        cols = kernel_cols[deg]
        local = ()
        for d, names in kernel_names:
            if d == deg:
                local = names
        tgt_names = target_bundle.basis(deg)
        for i, name in enumerate(src_names):
            element = {}
            for j, tname in enumerate(tgt_names):
                weight = section[i][j]
                if weight == 0:
                    continue
                for key, coeff in g_dual.get(tname, {}).items():
                    cur = element.get(key)
                    add = into_out(coeff) * Fraction(weight)
                    total_val = add if cur is None else cur + add
                    if total_val.is_zero():
                        element.pop(key, None)
                    else:
                        element[key] = total_val
            for r, kname in enumerate(local):
                weight = cols[r][i]
                if weight == 0:
                    continue
                key = (kname,)
                cur = element.get(key)
                add = out_chart.const(weight)
                total_val = add if cur is None else cur + add
                if total_val.is_zero():
                    element.pop(key, None)
                else:
                    element[key] = total_val
            rewrite[name] = element

    def rewrite_element(element):
        out = {}
        for key, coeff in element.items():
            term = {(): pull_total(coeff)}
            for name in key:
                factor = rewrite.get(name, {})
                term = element_product(out_bundle, term, factor)
                if not term:
                    break
            for tkey, tcoeff in term.items():
                cur = out.get(tkey)
                total_val = tcoeff if cur is None else cur + tcoeff
                if total_val.is_zero():
                    out.pop(tkey, None)
                else:
                    out[tkey] = total_val
        return out

    q_base = to_derivation(g_source.structure)
    q_total = to_derivation(fib_source.structure)
    images = {}
    for name in g_source.bundle.names:
        element = q_base.image(name)
        images[name] = {key: into_out(coeff) for key, coeff in element.items()}
    for deg, local in kernel_names:
        theta = theta_rows[deg]
        src_names = total_bundle.basis(deg)
        for r, kname in enumerate(local):
            lifted = {}
            for i, sname in enumerate(src_names):
                weight = theta[r][i]
                if weight == 0:
                    continue
                for key, coeff in q_total.image(sname).items():
                    cur = lifted.get(key)
                    add = coeff * Fraction(weight)
                    total_val = add if cur is None else cur + add
                    if total_val.is_zero():
                        lifted.pop(key, None)
                    else:
                        lifted[key] = total_val
            images[kname] = rewrite_element(lifted)

    derivation = CdgaDerivation(out_bundle, out_chart, images)
    pulled = DerivedChart(from_derivation(derivation))

    # projection onto the base-change source: drop fiber coordinates and kernel names
    proj_base = tuple(out_chart.var(c) for c in n_chart.coords)
    proj_table = {(name,): {name: 1} for name in g_source.bundle.names}
    proj_phi = OpFamily(out_bundle, g_source.bundle, out_chart, 0)
    if proj_table:
        proj_phi.set(
            1, MultiOp.from_table(out_bundle, g_source.bundle, out_chart, 1, 0, proj_table)
        )
    projection = LooMorphism(out_chart, n_chart, proj_base, proj_phi)

    # comparison onto the fibration's source: base embedding plus the rewrite
    comp_base = tuple(total_images)
    comparison = morphism_from_dual(
        out_bundle, total_bundle, out_chart, fib.source_chart, comp_base, rewrite
    )

    for name, morphism, target in (
        ("projection", projection, g_source),
        ("comparison", comparison, fib_source),
    ):
        report = check_morphism(morphism, pulled, target)
        if not report.passed:
            raise ValueError(f"pullback {name} fails the morphism axiom: {report.failures[0]}")

    expected = (
        virtual_dimension(g_source)
        + virtual_dimension(fib_source)
        - (fib.target_chart.nvars + _alternating_rank(target_bundle))
    )
    if virtual_dimension(pulled) != expected:
        raise ValueError(
            f"virtual dimension {virtual_dimension(pulled)} breaks additivity "
            f"(expected {expected})"
        )
    return PullbackResult(pulled, projection, comparison)


def _alternating_rank(bundle):
    total = 0
    for i in range(1, bundle.amplitude + 1):
        total += bundle.rank(i) if i % 2 == 0 else -bundle.rank(i)
    return total
