"""Shifted tangent charts and finite models of polynomial path spaces.

The shifted tangent of a derived chart doubles the bundle with a dt-tagged
copy shifted up by one and adds one degree-1 generator per chart coordinate
(a tangent direction times dt). Its operations are the original ones, their
dt-shuffled copies, and covariant derivatives of the original coefficients.

Along a straight path between two chart points the pulled-back sections are
polynomials in the path parameter t. The space kept in play is: constant
tangent-direction sections times dt, arbitrary t-polynomial bundle sections
times dt, and arbitrary t-polynomial bundle sections. Elements are maps
from shifted-bundle names to polynomials in the endpoint coordinates and t;
the tangent-direction components must be constant in t.

A contraction on this space integrates dt-sections (vanishing at both ends)
and projects onto constant dt-sections plus linear interpolations. Feeding
it through the homotopy-transfer recursion, run symbolically over the
doubled chart, produces a finite-rank derived chart over the endpoint pairs:
the derived path space. Its degree-d generators are one dt-tagged copy of
each degree-(d-1) name, plus start- and end-copies of each degree-d name,
plus (in degree 1) one dt-tagged tangent direction per coordinate.
"""

from __future__ import annotations

from fractions import Fraction
from itertools import combinations, combinations_with_replacement

from .bundles import Chart, GradedBundle
from .compose import set_partitions
from .geometry import DerivedChart, diagonal_morphism, is_etale_at, product_chart
from .ops import MultiOp, OpFamily, koszul_sign, vec_add, vec_scale
from .structures import (
    AxiomReport,
    CurvedStructure,
    LooMorphism,
    check_morphism,
    compose_morphisms,
    is_fibration,
)

__all__ = [
    "ConnectionData",
    "PolyPath",
    "PathContraction",
    "PathChart",
    "shifted_tangent",
    "connection_change_iso",
    "path_structure",
    "section_square_failures",
    "fm_contraction",
    "derived_path_space",
    "factorization_check",
]


class ConnectionData:
    """Connection coefficients on a trivialized graded bundle.

    ``matrices`` maps each chart coordinate to the action of the covariant
    derivative's correction term on basis elements: basis name to output
    vector (name to Poly). Blocks must preserve degree. The flat flag marks
    the standard flat connection, whose matrices are all zero.
    """

    __slots__ = ("bundle", "chart", "matrices", "flat_flag")

    def __init__(self, bundle, chart, matrices, flat_flag=False):
        self.bundle = bundle
        self.chart = chart
        self.flat_flag = flat_flag
        clean = {}
        for coord in chart.coords:
            given = matrices.get(coord, {})
            table = {}
            for src, vector in given.items():
                if not bundle.has(src):
                    raise ValueError(f"connection matrix row for unknown name {src!r}")
                out = {}
                for tgt, coeff in vector.items():
                    if bundle.degree_of(tgt) != bundle.degree_of(src):
                        raise ValueError(
                            f"connection block {src!r} -> {tgt!r} does not preserve degree"
                        )
                    coeff = chart.poly(coeff)
                    if not coeff.is_zero():
                        out[tgt] = coeff
                if out:
                    table[src] = out
            if table:
                clean[coord] = table
        if flat_flag and clean:
            raise ValueError("flat connection must have zero matrices")
        self.matrices = clean
        unknown = [c for c in matrices if c not in chart.coords]
        if unknown:
            raise ValueError(f"connection matrices for unknown coordinates {unknown!r}")

    @classmethod
    def flat(cls, bundle, chart):
        return cls(bundle, chart, {}, flat_flag=True)

    def gamma(self, coord, name):
        """The correction term applied to a basis element, as a vector."""
        return dict(self.matrices.get(coord, {}).get(name, {}))

    def __repr__(self):
        kind = "flat" if self.flat_flag else "general"
        return f"ConnectionData({kind}, coords={len(self.matrices)})"


def _shifted_names(dc):
    """Bundle of the shifted tangent: tangent-dt, bundle-dt, and plain names."""
    bundle, chart = dc.bundle, dc.chart
    degrees = {}
    top = bundle.amplitude + 1 if bundle.total_rank() else 1
    for deg in range(1, top + 1):
        names = []
        if deg == 1:
            names.extend(f"{c}.vdt" for c in chart.coords)
        names.extend(f"{b}.ydt" for b in bundle.basis(deg - 1))
        names.extend(bundle.basis(deg))
        if names:
            degrees[deg] = tuple(names)
    shifted = GradedBundle(degrees)
    expected = bundle.total_rank() * 2 + chart.nvars
    if shifted.total_rank() != expected:
        raise ValueError("shifted-tangent names collide with existing basis names")
    return shifted


def _covariant_value(dc, conn, coord_index, key):
    """Covariant derivative of an operation's value in one coordinate direction.

    Differentiates the coefficients of the value on the key, adds the
    connection acting on the output, and subtracts the operation applied to
    each input with the connection acting on that slot.
    """
    coord = dc.chart.coords[coord_index]
    lam = dc.structure.total()
    op = lam.get(len(key))
    base = op.value(key)
    out = {name: coeff.derivative(coord_index) for name, coeff in base.items()}
    out = {name: coeff for name, coeff in out.items() if not coeff.is_zero()}
    for name, coeff in base.items():
        for tgt, gamma in conn.gamma(coord, name).items():
            out = vec_add(out, {tgt: gamma * coeff})
    for slot, name in enumerate(key):
        gamma_vec = conn.gamma(coord, name)
        if not gamma_vec:
            continue
        args = [
            {other: dc.chart.const(1)} if i != slot else gamma_vec
            for i, other in enumerate(key)
        ]
        correction = op.evaluate(args)
        if correction:
            out = vec_add(out, vec_scale(correction, -1))
    return out


def shifted_tangent(dc, conn):
    """The shifted tangent chart of a derived chart with a chosen connection.

    Operations: the original ones on plain names; on keys with one dt-tagged
    bundle name, the original operation applied through the tag with the
    sign of the plain degrees after it; on keys with one tangent direction,
    the covariant derivative of the one-lower operation, with the sign of
    all plain degrees. Keys with two or more dt-tagged entries vanish.
    """
    if conn.bundle != dc.bundle or conn.chart != dc.chart:
        raise ValueError("connection does not live on the chart's bundle")
    shifted = _shifted_names(dc)
    chart = dc.chart
    lam = dc.structure.total()
    tables = {}

    def put(arity, key, vector, sign=1):
        if not vector:
            return
        table = tables.setdefault(arity, {})
        bucket = table.setdefault(tuple(key), {})
        for name, coeff in vector.items():
            coeff = chart.poly(coeff)
            if sign < 0:
                coeff = -coeff
            cur = bucket.get(name)
            total = coeff if cur is None else cur + coeff
            if total.is_zero():
                bucket.pop(name, None)
            else:
                bucket[name] = total

    def dt_tag(vector):
        return {f"{name}.ydt": coeff for name, coeff in vector.items()}

    for arity in lam.arities():
        op = lam.get(arity)
        for key, bucket in op.entries.items():
            # plain copy
            put(arity, key, dict(bucket))
            # dt-shuffled copies: one slot carries the dt tag; the sign is the
            # parity of the plain degrees after the tag in the sorted key
            seen = set()
            for slot in range(arity):
                tagged = key[:slot] + (f"{key[slot]}.ydt",) + key[slot + 1 :]
                skey = tuple(sorted(tagged, key=shifted.order_key))
                if skey in seen:
                    continue
                seen.add(skey)
                position = skey.index(f"{key[slot]}.ydt")
                sign = 1
                for n in skey[position + 1 :]:
                    if not n.endswith(".ydt") and dc.bundle.degree_of(n) % 2:
                        sign = -sign
                underlying = tuple(
                    n[: -len(".ydt")] if i == position else n for i, n in enumerate(skey)
                )
                put(arity, skey, dt_tag(op.value(underlying)), sign)

    # covariant-derivative copies: one tangent direction plus plain inputs
    for arity in sorted(set(lam.arities())):
        op = lam.get(arity)
        for key in op.entries:
            for ci, coord in enumerate(chart.coords):
                vector = _covariant_value(dc, conn, ci, key)
                if not vector:
                    continue
                sign = 1
                for n in key:
                    if dc.bundle.degree_of(n) % 2:
                        sign = -sign
                put(arity + 1, (f"{coord}.vdt",) + key, dt_tag(vector), sign)

    ops = OpFamily(shifted, shifted, chart, 1)
    for arity, table in tables.items():
        ops.set(arity, MultiOp.from_table(shifted, shifted, chart, arity, 1, table))
    return DerivedChart(CurvedStructure(shifted, ops))


def connection_change_iso(dc, conn_from, conn_to):
    """The strict isomorphism between shifted tangents for two connections.

    Identity in one argument; in two arguments, the difference of the
    connections fed with the tangent direction and the plain input, tagged
    with dt and signed by the plain input's degree. Higher components vanish.
    """
    shifted = _shifted_names(dc)
    chart = dc.chart
    phi = OpFamily(shifted, shifted, chart, 0)
    ident = {}
    for name in shifted.names:
        ident[(name,)] = {name: 1}
    phi.set(1, MultiOp.from_table(shifted, shifted, chart, 1, 0, ident))
    table = {}
    for ci, coord in enumerate(chart.coords):
        for name in dc.bundle.names:
            alpha = vec_add(
                conn_to.gamma(coord, name), vec_scale(conn_from.gamma(coord, name), -1)
            )
            alpha = {k: v for k, v in alpha.items() if not chart.poly(v).is_zero()}
            if not alpha:
                continue
            sign = -1 if dc.bundle.degree_of(name) % 2 else 1
            bucket = {f"{tgt}.ydt": chart.poly(c).scale(sign) for tgt, c in alpha.items()}
            table[(f"{coord}.vdt", name)] = bucket
    if table:
        phi.set(2, MultiOp.from_table(shifted, shifted, chart, 2, 0, table))
    base = tuple(chart.var(c) for c in chart.coords)
    return LooMorphism(chart, chart, base, phi)


class PolyPath:
    """Polynomial sections of the shifted tangent along a straight path.

    Elements are maps from shifted-bundle names to polynomials in the base
    coordinates and the path parameter (the last ring variable); components
    on tangent-direction names must be constant in the parameter. For a
    concrete path the base chart is empty and the endpoints are stored;
    the symbolic variant doubles the source coordinates instead.
    """

    __slots__ = (
        "source",
        "tangent",
        "base",
        "ring",
        "path",
        "operations",
        "start",
        "end",
        "degree_cap",
    )

    def __init__(self, dc, start, end, degree_cap=None):
        base = Chart(())
        start = dc.chart.point(start)
        end = dc.chart.point(end)
        ring = Chart(("t",))
        t = ring.var("t")
        path = tuple(
            ring.const(p0) + t.scale(p1 - p0) for p0, p1 in zip(start, end)
        )
        self._setup(dc, base, ring, path, degree_cap)
        self.start = start
        self.end = end

    @classmethod
    def symbolic(cls, dc, suffixes=(".0", ".1")):
        """Fibers over pairs of endpoints, with the endpoints as coordinates."""
        self = cls.__new__(cls)
        left, right = suffixes
        coords = tuple(f"{c}{left}" for c in dc.chart.coords) + tuple(
            f"{c}{right}" for c in dc.chart.coords
        )
        base = Chart(coords)
        ring = Chart(coords + ("t",))
        t = ring.var("t")
        path = []
        for c in dc.chart.coords:
            p0 = ring.var(f"{c}{left}")
            p1 = ring.var(f"{c}{right}")
            path.append(p0 + t * (p1 - p0))
        self._setup(dc, base, ring, tuple(path), None)
        self.start = None
        self.end = None
        return self

    def _setup(self, dc, base, ring, path, degree_cap):
        self.source = dc
        self.base = base
        self.ring = ring
        self.path = path
        conn = ConnectionData.flat(dc.bundle, dc.chart)
        self.tangent = shifted_tangent(dc, conn)
        images = list(path)

        def pull(poly):
            if dc.chart.nvars == 0:
                return ring.const(poly.constant_value())
            return poly.substitute(images)

        total = self.tangent.structure.total()
        ops = OpFamily(total.source, total.target, ring, 1)
        for arity in total.arities():
            ops.set(arity, total.get(arity).map_coefficients(pull, ring))
        self.operations = ops
        max_t = 1
        for arity in ops.arities():
            op = ops.get(arity)
            for bucket in op.entries.values():
                for coeff in bucket.values():
                    max_t = max(max_t, coeff.degree_in(self.t_index))
        cap = degree_cap if degree_cap is not None else (dc.bundle.amplitude + 2) * max_t + 2
        self.degree_cap = cap

    @property
    def t_index(self):
        return self.ring.nvars - 1

    def names(self):
        return self.tangent.bundle.names

    def degree_of(self, name):
        return self.tangent.bundle.degree_of(name)

    def check_element(self, element):
        for name, coeff in element.items():
            if not self.tangent.bundle.has(name):
                raise ValueError(f"component on unknown name {name!r}")
            if name.endswith(".vdt") and self.ring.poly(coeff).degree_in(self.t_index) > 0:
                raise ValueError(
                    f"tangent-direction component {name!r} must be constant in the parameter"
                )

    def guard(self, element):
        for coeff in element.values():
            if coeff.degree_in(self.t_index) > self.degree_cap:
                raise ValueError(
                    f"parameter degree exceeds the cap {self.degree_cap}; "
                    "raise degree_cap to continue"
                )
        return element

    def monomials(self, cap=None):
        """Basis monomial sections up to a parameter-degree cap."""
        cap = self.degree_cap if cap is None else cap
        t = self.ring.var("t")
        out = []
        for name in self.names():
            top = 0 if name.endswith(".vdt") else cap
            for j in range(top + 1):
                out.append((name, j, {name: t**j}))
        return out

    def curvature(self):
        """The arity-0 section: the path velocity times dt plus the curvature."""
        element = {}
        for i, c in enumerate(self.source.chart.coords):
            vel = self.path[i].derivative(self.t_index)
            if not vel.is_zero():
                element[f"{c}.vdt"] = vel
        for name, coeff in self.operations.get(0).value(()).items():
            element = vec_add(element, {name: coeff})
        return self.guard(element)

    def apply(self, arity, args):
        """The pulled-back shifted operations on a list of elements."""
        return self.guard(self.operations.get(arity).evaluate(list(args)))

    def delta(self, element):
        """Parameter derivative into the dt-tagged copy, signed by degree."""
        out = {}
        for name, coeff in element.items():
            if name.endswith(".vdt") or name.endswith(".ydt"):
                continue
            deriv = coeff.derivative(self.t_index)
            if deriv.is_zero():
                continue
            sign = -1 if self.degree_of(name) % 2 else 1
            out = vec_add(out, {f"{name}.ydt": deriv.scale(sign)})
        return out

    def eta(self, element):
        """Integral operator: kills plain and tangent components, integrates
        dt-tagged bundle components to a section vanishing at both ends."""
        out = {}
        t = self.ring.var("t")
        for name, coeff in element.items():
            if not name.endswith(".ydt"):
                continue
            plain = name[: -len(".ydt")]
            anti = coeff.antiderivative(self.t_index)
            value = anti - t * self.lift(self.eval_at_one(anti))
            sign = -1 if self.degree_of(plain) % 2 else 1
            if not value.is_zero():
                out = vec_add(out, {plain: value.scale(sign)})
        return out

    def eval_at_zero(self, poly):
        images = [self.base.var(c) for c in self.base.coords] + [self.base.const(0)]
        return poly.substitute(images)

    def eval_at_one(self, poly):
        images = [self.base.var(c) for c in self.base.coords] + [self.base.const(1)]
        return poly.substitute(images)

    def lift(self, poly):
        """Re-embed a base-ring polynomial into the parameter ring."""
        return poly.extend(self.ring.nvars, 0)

    def integral(self, poly):
        """Integral of a parameter polynomial over the unit interval."""
        return self.eval_at_one(poly.antiderivative(self.t_index))

    def project(self, element):
        """Projection onto constant dt-sections and linear interpolations."""
        out = {}
        t = self.ring.var("t")
        one = self.ring.const(1)
        for name, coeff in element.items():
            if name.endswith(".vdt") or name.endswith(".ydt"):
                value = self.lift(self.integral(coeff))
            else:
                value = (one - t) * self.lift(self.eval_at_zero(coeff)) + t * self.lift(
                    self.eval_at_one(coeff)
                )
            if not value.is_zero():
                out = vec_add(out, {name: value})
        return out

    def __repr__(self):
        kind = "symbolic" if self.start is None else "concrete"
        return f"PolyPath({kind}, cap={self.degree_cap})"


class PathContraction:
    """The integral contraction on polynomial path sections."""

    __slots__ = ("space", "eta_fm", "pi_lin", "pi_con")

    def __init__(self, space):
        self.space = space
        self.eta_fm = space.eta

        def pi_lin(element):
            out = {}
            for name, coeff in element.items():
                if name.endswith(".vdt") or name.endswith(".ydt"):
                    continue
                out = vec_add(out, {name: coeff})
            return space.project(out)

        def pi_con(element):
            out = {}
            for name, coeff in element.items():
                if name.endswith(".vdt") or name.endswith(".ydt"):
                    out = vec_add(out, {name: coeff})
            return space.project(out)

        self.pi_lin = pi_lin
        self.pi_con = pi_con

    def verify(self, cap=None):
        """Exact identities on every basis monomial section up to the cap."""
        space = self.space
        failures = []
        for name, j, section in space.monomials(cap):
            eta_once = self.eta_fm(section)
            if self.eta_fm(eta_once):
                failures.append(("eta squared", name, j))
            lhs = self.eta_fm(space.delta(eta_once))
            if not _vec_equal(lhs, eta_once):
                failures.append(("eta delta eta", name, j))
            commutator = vec_add(
                self.eta_fm(space.delta(section)), space.delta(self.eta_fm(section))
            )
            reduced = vec_add(section, vec_scale(commutator, -1))
            projected = vec_add(self.pi_lin(section), self.pi_con(section))
            if not _vec_equal(reduced, projected):
                failures.append(("projection identity", name, j))
        return AxiomReport(failures)


def _vec_equal(a, b):
    return vec_add(a, vec_scale(b, -1)) == {}


def fm_contraction(space):
    """The contraction with verified identities on the given path space."""
    contraction = PathContraction(space)
    report = contraction.verify()
    if not report.passed:
        raise ValueError(f"contraction identities fail: {report.failures[0]}")
    return contraction


def _unshuffle_sign(degs, picked):
    sign = 1
    chosen = set(picked)
    for j in picked:
        if degs[j] % 2 == 0:
            continue
        for i in range(j):
            if i not in chosen and degs[i] % 2:
                sign = -sign
    return sign


def path_structure(dc, start, end, cap=None):
    """The curved structure on polynomial sections along a concrete path.

    Returns the path space after verifying the square-zero identity of the
    split derivative plus the pulled-back operations on basis monomial
    sections (parameter degree capped for tractability).
    """
    space = PolyPath(dc, start, end, degree_cap=cap)
    failures = section_square_failures(space)
    if failures:
        raise ValueError(f"path structure fails square-zero: {failures[0]}")
    return space


def section_square_failures(space, cap=None):
    """Residuals of the squared total structure on monomial sections.

    Uses raw evaluation without the parameter-degree guard: the identity is
    exact, so intermediate degrees may exceed the user-facing cap. Tuples in
    which an odd name appears in two or more sections are skipped: on those
    the multilinear expansion of a table with divided entries does not
    represent the symmetrized value (same caveat as the verbatim evaluators
    in the composition module). Tuples whose combined degree leaves no room
    for a target name are identically zero and skipped as well.
    """
    arities = set(space.operations.arities()) | {1}
    max_arity = max(arities)
    top = max(2 * max_arity - 1, 1)
    cap = min(space.degree_cap, 3) if cap is None else cap
    monomials = space.monomials(cap)
    amplitude = space.tangent.bundle.amplitude

    def total(arity, args):
        value = {}
        if arity in space.operations.arities():
            value = space.operations.get(arity).evaluate(list(args))
        if arity == 1:
            value = vec_add(value, space.delta(args[0]))
        return value

    failures = []
    curvature = space.curvature()
    # arity 0: the total operator applied to the curvature must vanish
    residual = total(1, [curvature])
    if residual:
        failures.append((0, (), residual))
    for n in range(1, top + 1):
        for picked in combinations_with_replacement(range(len(monomials)), n):
            names = [monomials[i][0] for i in picked]
            degs = [space.degree_of(name) for name in names]
            if sum(degs) + 2 > amplitude:
                continue
            odd = [name for name, deg in zip(names, degs) if deg % 2]
            if len(odd) != len(set(odd)):
                continue
            sections = [monomials[i][2] for i in picked]
            residual = {}
            for k in range(n + 1):
                for subset in combinations(range(n), k):
                    if k == 0:
                        inner = curvature
                    else:
                        inner = total(k, [sections[i] for i in subset])
                    if not inner:
                        continue
                    sign = _unshuffle_sign(degs, subset)
                    chosen = set(subset)
                    rest = [sections[i] for i in range(n) if i not in chosen]
                    outer = total(n - k + 1, [inner] + rest)
                    if outer:
                        residual = vec_add(residual, vec_scale(outer, sign))
            if residual:
                failures.append((n, tuple(monomials[i][:2] for i in picked), residual))
    return failures


class PathChart:
    """The finite-rank derived path space over doubled coordinates.

    Fields: ``base`` (the doubled chart), ``bundle``, ``structure`` (the
    split differential plus the transferred operations), ``derived`` (the
    verified chart), ``source``, ``product`` (the plain self-product),
    ``inclusion`` (constant paths), and ``projection`` (both endpoints).
    """

    __slots__ = (
        "base",
        "bundle",
        "structure",
        "derived",
        "source",
        "product",
        "inclusion",
        "projection",
        "space",
    )

    def __init__(self, derived, source, product, inclusion, projection, space):
        self.derived = derived
        self.base = derived.chart
        self.bundle = derived.bundle
        self.structure = derived.structure
        self.source = source
        self.product = product
        self.inclusion = inclusion
        self.projection = projection
        self.space = space

    def __repr__(self):
        return f"PathChart(base={self.base!r}, amplitude={self.bundle.amplitude})"


def _path_bundle(dc, chart):
    """Constant dt-sections and endpoint copies, as a graded bundle."""
    bundle = dc.bundle
    degrees = {}
    top = bundle.amplitude + 1 if bundle.total_rank() else 1
    for deg in range(1, top + 1):
        names = []
        if deg == 1:
            names.extend(f"{c}.vdt" for c in dc.chart.coords)
        names.extend(f"{b}.ydt" for b in bundle.basis(deg - 1))
        names.extend(f"{b}.0" for b in bundle.basis(deg))
        names.extend(f"{b}.1" for b in bundle.basis(deg))
        if names:
            degrees[deg] = tuple(names)
    return GradedBundle(degrees)


def _divided_keys(structure):
    """Keys with a repeated odd name carrying a nonzero entry."""
    found = []
    total = structure.total()
    for arity in total.arities():
        for key in total.get(arity).entries:
            odd = [n for n in key if structure.bundle.degree_of(n) % 2]
            if len(odd) != len(set(odd)):
                found.append(key)
    return found


def derived_path_space(dc):
    """The derived path space of a chart, over pairs of its points.

    Transfers the path-space structure onto constant dt-sections plus
    endpoint interpolations, running the recursion symbolically over the
    doubled chart. The resulting operations have polynomial coefficients in
    both endpoints; the split differential maps an endpoint pair to the
    signed difference on the dt-tagged copy.

    Requires every operation entry to sit on a key without repeated odd
    names: entries on repeated-odd keys (divided entries) have no faithful
    extension to polynomial sections, so the ambient structure this
    construction transfers from would not square to zero.
    """
    divided = _divided_keys(dc.structure)
    if divided:
        raise ValueError(
            f"operations carry divided entries on {divided[:3]!r}; "
            "path spaces need operations without repeated odd names in keys"
        )
    space = PolyPath.symbolic(dc)
    chart = space.base
    h_bundle = _path_bundle(dc, chart)
    t = space.ring.var("t")
    one = space.ring.const(1)

    def iota(name):
        if name.endswith(".vdt") or name.endswith(".ydt"):
            return {name: one}
        if name.endswith(".0"):
            return {name[:-2]: one - t}
        return {name[:-2]: t}

    def h_coordinates(element):
        out = {}
        for name, coeff in element.items():
            if name.endswith(".vdt") or name.endswith(".ydt"):
                value = space.integral(coeff)
                if not value.is_zero():
                    out[name] = value
            else:
                at0 = space.eval_at_zero(coeff)
                at1 = space.eval_at_one(coeff)
                if not at0.is_zero():
                    out[f"{name}.0"] = at0
                if not at1.is_zero():
                    out[f"{name}.1"] = at1
        return out

    amplitude = h_bundle.amplitude
    top = dc.bundle.amplitude + 1
    h_names = h_bundle.names
    phi = {1: {(name,): iota(name) for name in h_names}}
    for n in range(2, top + 1):
        phi[n] = {key: {} for key in combinations_with_replacement(h_names, n)}

    def bullet(n, key):
        """Perturbation composed with the recursion morphism, on one key."""
        degs = [h_bundle.degree_of(x) for x in key]
        total = {}
        for partition in set_partitions(n):
            blocks = len(partition)
            if blocks not in space.operations.arities():
                continue
            vectors = []
            for block in partition:
                value = phi[len(block)].get(tuple(key[i] for i in block))
                if not value:
                    vectors = None
                    break
                vectors.append(value)
            if vectors is None:
                continue
            sign = koszul_sign([i for block in partition for i in block], degs)
            out = space.apply(blocks, vectors)
            if out:
                total = vec_add(total, vec_scale(out, sign))
        return total

    passes = 0
    while True:
        passes += 1
        if passes > amplitude + 4:
            raise ValueError("path-space recursion failed to stabilize")
        fresh = {}
        changed = False
        for n in range(1, top + 1):
            fresh[n] = {}
            for key in phi[n]:
                correction = space.eta(bullet(n, key))
                value = vec_scale(correction, -1)
                if n == 1:
                    value = vec_add(iota(key[0]), value)
                fresh[n][key] = value
                if not _vec_equal(value, phi[n][key]):
                    changed = True
        phi = fresh
        if not changed:
            break

    # transferred operations: project the perturbation through the recursion
    tables = {0: {(): h_coordinates(space.project(space.curvature()))}}
    for n in range(1, top + 1):
        table = {}
        for key in phi[n]:
            value = h_coordinates(space.project(bullet(n, key)))
            if value:
                table[key] = value
        tables[n] = table
    if tables.get(top):
        raise ValueError(
            f"operations of arity {top} should vanish one above the amplitude"
        )

    nu = OpFamily(h_bundle, h_bundle, chart, 1)
    for n, table in tables.items():
        if n == top and not table:
            continue
        nu.set(n, MultiOp.from_table(h_bundle, h_bundle, chart, n, 1, table))
    delta_table = {}
    for b in dc.bundle.names:
        deg = dc.bundle.degree_of(b)
        sign_zero = 1 if (deg + 1) % 2 == 0 else -1
        delta_table[(f"{b}.0",)] = {f"{b}.ydt": sign_zero}
        delta_table[(f"{b}.1",)] = {f"{b}.ydt": -sign_zero}
    differential = (
        MultiOp.from_table(h_bundle, h_bundle, chart, 1, 1, delta_table)
        if delta_table
        else None
    )
    derived = DerivedChart(CurvedStructure(h_bundle, nu, differential=differential))

    product = product_chart(dc, dc)
    base = [dc.chart.var(name[:-2]) for name in chart.coords]
    inc_table = {(b,): {f"{b}.0": 1, f"{b}.1": 1} for b in dc.bundle.names}
    inc_phi = OpFamily(dc.bundle, h_bundle, dc.chart, 0)
    if inc_table:
        inc_phi.set(1, MultiOp.from_table(dc.bundle, h_bundle, dc.chart, 1, 0, inc_table))
    inclusion = LooMorphism(dc.chart, chart, tuple(base), inc_phi)

    proj_base = tuple(chart.var(c) for c in product.chart.coords)
    proj_table = {}
    for b in dc.bundle.names:
        proj_table[(f"{b}.0",)] = {f"{b}.0": 1}
        proj_table[(f"{b}.1",)] = {f"{b}.1": 1}
    proj_phi = OpFamily(h_bundle, product.bundle, chart, 0)
    if proj_table:
        proj_phi.set(1, MultiOp.from_table(h_bundle, product.bundle, chart, 1, 0, proj_table))
    projection = LooMorphism(chart, product.chart, proj_base, proj_phi)

    return PathChart(derived, dc, product, inclusion, projection, space)


def _same_morphism(a, b):
    failures = []
    for i, (lhs, rhs) in enumerate(zip(a.base_map, b.base_map)):
        if not (lhs - rhs).is_zero():
            failures.append(("base component differs", i))
    diff = a.phi - b.phi
    for arity in diff.arities():
        for key, bucket in diff.get(arity).entries.items():
            failures.append(("bundle map differs", arity, key, dict(bucket)))
    return failures


def factorization_check(dc, points=(), path=None):
    """The factorization of the diagonal through the path space, verified.

    Returns a report per aspect: the inclusion of constant paths is a
    morphism, the endpoint projection is a linear morphism and a fibration,
    their composite is the diagonal into the self-product, and the inclusion
    is etale at each supplied classical point.
    """
    if path is None:
        path = derived_path_space(dc)
    reports = {}

    failures = []
    if set(path.inclusion.phi.arities()) - {1}:
        failures.append(("inclusion not linear", tuple(path.inclusion.phi.arities())))
    failures.extend(check_morphism(path.inclusion, dc, path.derived).failures)
    reports["inclusion"] = AxiomReport(failures)

    failures = []
    if set(path.projection.phi.arities()) - {1}:
        failures.append(("projection not linear", tuple(path.projection.phi.arities())))
    failures.extend(check_morphism(path.projection, path.derived, path.product).failures)
    reports["projection_linear"] = AxiomReport(failures)

    failures = []
    if not is_fibration(path.projection):
        failures.append(("projection not a fibration",))
    reports["projection_fibration"] = AxiomReport(failures)

    composite = compose_morphisms(path.projection, path.inclusion)
    diagonal = diagonal_morphism(dc, path.product)
    reports["diagonal"] = AxiomReport(_same_morphism(composite, diagonal))

    failures = []
    for point in points:
        if not is_etale_at(path.inclusion, dc, path.derived, point):
            failures.append(("inclusion not etale", tuple(point)))
    reports["etale"] = AxiomReport(failures)
    return reports
