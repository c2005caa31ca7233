"""Homotopy transfer of curved structures along a filtered contraction.

A contraction pairs the split differential ``delta`` with a degree -1
operator ``eta`` satisfying ``eta eta = 0`` and ``eta delta eta = eta``,
together with a descending filtration recorded as one level per basis
element, preserved by both operators. The commutator ``delta eta + eta
delta`` is then idempotent; its kernel H (the harmonic part) carries a
transferred structure. The inclusion-with-corrections ``phi`` is the unique
degree-0 family solving

    phi = iota - eta (operations bullet phi)

and the transferred operations are ``pi (operations bullet phi)`` plus the
projected differential. Termination comes from the filtration: every
operation of positive arity raises the total level, so corrections die out
once they pass the highest level in use.

Two independent evaluators are provided and must agree exactly on every
instance. ``transfer_structure`` solves the fixed-point equation arity by
arity; ``transfer_tree_oracle`` sums over decorated rooted trees (leaves
carry the inclusion, each node one operation, non-root node outputs pass
through ``eta``, the root through ``eta`` for ``phi`` and through the
projection for the transferred operations). ``transfer_closed_forms`` gives
the arity-0 and arity-1 components as finite geometric series.

``reduce_fibration_step`` uses the transfer to cancel, one level at a time,
the kernel of a linear fibration between structures over a common chart.
"""

from __future__ import annotations

from itertools import product

from .bundles import GradedBundle
from .compose import compose_bullet, set_partitions
from .linalg import (
    left_inverse,
    nullspace,
    rank,
    right_inverse,
    rref,
    solve,
)
from .ops import (
    MultiOp,
    OpFamily,
    compose_linear,
    identity_op,
    koszul_sign,
    neumann_inverse,
    tabulate,
    vec_add,
    vec_scale,
)
from .structures import (
    CurvedStructure,
    LooMorphism,
    as_constant,
    compose_morphisms,
    linear_block,
)

__all__ = [
    "FiltrationSpec",
    "ContractionData",
    "TransferResult",
    "nilpotency_failures",
    "validate_contraction",
    "transfer_structure",
    "transfer_tree_oracle",
    "transfer_closed_forms",
    "reduce_fibration_step",
]


class FiltrationSpec:
    """A recipe assigning a filtration level to every basis element.

    ``natural`` sets the level equal to the degree. ``variation(n)`` does the
    same except in degree n - 1, which is lifted to level n; this is the one
    adjustment that lets a contraction acting between degrees n - 1 and n
    preserve the levels. ``custom`` takes an explicit map.
    """

    __slots__ = ("kind", "level", "levels")

    def __init__(self, kind, level=None, levels=None):
        if kind not in ("natural", "variation", "custom"):
            raise ValueError(f"unknown filtration kind {kind!r}")
        if kind == "variation":
            if not isinstance(level, int) or level < 1:
                raise ValueError("variation level must be an integer >= 1")
        elif level is not None:
            raise ValueError("only the variation kind takes a level")
        if kind == "custom":
            if levels is None:
                raise ValueError("custom filtration needs an explicit level map")
            levels = dict(levels)
        elif levels is not None:
            raise ValueError("only the custom kind takes a level map")
        self.kind = kind
        self.level = level
        self.levels = levels

    @classmethod
    def natural(cls):
        return cls("natural")

    @classmethod
    def variation(cls, level):
        return cls("variation", level=level)

    @classmethod
    def custom(cls, levels):
        return cls("custom", levels=levels)

    def levels_for(self, bundle):
        """Resolve to a concrete level map on the bundle's basis."""
        if self.kind == "custom":
            out = {}
            for name in bundle.names:
                if name not in self.levels:
                    raise ValueError(f"custom filtration misses basis element {name!r}")
                lvl = self.levels[name]
                if not isinstance(lvl, int) or lvl < 0:
                    raise ValueError(f"filtration level of {name!r} must be an integer >= 0")
                out[name] = lvl
            return out
        out = {}
        for name in bundle.names:
            deg = bundle.degree_of(name)
            if self.kind == "variation" and deg == self.level - 1:
                out[name] = self.level
            else:
                out[name] = deg
        return out

    def __repr__(self):
        if self.kind == "variation":
            return f"FiltrationSpec(variation at {self.level})"
        return f"FiltrationSpec({self.kind})"


def nilpotency_failures(operations, levels):
    """Entries of positive arity that fail to raise the total level by 1.

    Returns a list of (arity, key, target name) triples; empty means the
    family is nilpotent for the given levels.
    """
    bad = []
    for arity in operations.arities():
        if arity == 0:
            continue
        op = operations.get(arity)
        for key, bucket in sorted(op.entries.items()):
            need = sum(levels[x] for x in key) + 1
            for name in sorted(bucket):
                if levels[name] < need:
                    bad.append((arity, key, name))
    return bad


class ContractionData:
    """A filtered contraction of the split differential on a bundle.

    ``delta`` is the arity-1 degree +1 differential, ``eta`` the degree -1
    contracting operator, and ``filtration`` maps every basis name to its
    level (a FiltrationSpec is resolved on the spot). The defining identities
    are checked by ``validate_contraction``.
    """

    __slots__ = ("bundle", "chart", "delta", "eta", "filtration")

    def __init__(self, bundle, delta, eta, filtration):
        for op, deg, label in ((delta, 1, "delta"), (eta, -1, "eta")):
            if op.arity != 1 or op.degree != deg:
                raise ValueError(f"{label} must have arity 1 and degree {deg}")
            if op.source != bundle or op.target != bundle:
                raise ValueError(f"{label} does not act on the given bundle")
        if delta.chart != eta.chart:
            raise ValueError("delta and eta live over different charts")
        if isinstance(filtration, FiltrationSpec):
            filtration = filtration.levels_for(bundle)
        else:
            filtration = dict(filtration)
        for name in bundle.names:
            if name not in filtration:
                raise ValueError(f"filtration misses basis element {name!r}")
            lvl = filtration[name]
            if not isinstance(lvl, int) or lvl < 0:
                raise ValueError(f"filtration level of {name!r} must be an integer >= 0")
        self.bundle = bundle
        self.chart = delta.chart
        self.delta = delta
        self.eta = eta
        self.filtration = filtration

    def max_level(self):
        return max(self.filtration.values(), default=0)

    def projector(self):
        """The idempotent id - delta eta - eta delta onto the harmonic part."""
        ident = identity_op(self.bundle, self.chart)
        de = compose_linear(self.delta, self.eta)
        ed = compose_linear(self.eta, self.delta)
        return ident - de - ed

    def __repr__(self):
        return f"ContractionData(rank={self.bundle.total_rank()}, max_level={self.max_level()})"


class TransferResult:
    """Output of a transfer run.

    ``h_structure`` is the curved structure induced on the harmonic part,
    ``phi`` the inclusion-with-corrections morphism into the big bundle,
    ``pi1_tilde`` the linear part of the projection going the other way, and
    ``diagnostics`` a small report (tree count where applicable, the highest
    arity produced, and the number of passes used).
    """

    __slots__ = ("h_structure", "phi", "pi1_tilde", "diagnostics")

    def __init__(self, h_structure, phi, pi1_tilde, diagnostics):
        self.h_structure = h_structure
        self.phi = phi
        self.pi1_tilde = pi1_tilde
        self.diagnostics = dict(diagnostics)

    def __repr__(self):
        return f"TransferResult(diagnostics={self.diagnostics})"


def _expect_zero_linear(op, label, chart):
    """Raise with a witness basis element unless an arity-1 operation is 0."""
    for name in op.source.names:
        residual = op.value((name,))
        if residual:
            shown = ", ".join(f"{t}: {chart.format(c)}" for t, c in sorted(residual.items()))
            raise ValueError(f"{label} fails on basis element {name!r}: {shown}")


def _check_level_preserving(op, levels, label):
    for name in op.source.names:
        for target in op.value((name,)):
            if levels[target] < levels[name]:
                raise ValueError(
                    f"{label} drops the filtration level on {name!r} -> {target!r} "
                    f"({levels[name]} -> {levels[target]})"
                )


def validate_contraction(contraction):
    """Check the contraction identities and split off the harmonic part.

    Verifies, with a witness basis element on failure: delta squared and eta
    squared vanish, eta delta eta equals eta, both operators preserve the
    filtration levels, and the harmonic projector is idempotent. Returns
    ``(h_bundle, iota, pi)`` where iota and pi are the arity-1 inclusion and
    projection satisfying pi iota = id and iota pi = projector. Extraction of
    the harmonic basis requires the projector to have constant coefficients;
    echelon rows that are unit vectors keep their original basis names.
    """
    c = contraction
    chart = c.chart
    _expect_zero_linear(compose_linear(c.delta, c.delta), "delta squared", chart)
    _expect_zero_linear(compose_linear(c.eta, c.eta), "eta squared", chart)
    ede = compose_linear(c.eta, compose_linear(c.delta, c.eta))
    _expect_zero_linear(ede - c.eta, "eta delta eta - eta", chart)
    _check_level_preserving(c.delta, c.filtration, "delta")
    _check_level_preserving(c.eta, c.filtration, "eta")
    projector = c.projector()
    _expect_zero_linear(
        compose_linear(projector, projector) - projector,
        "harmonic projector idempotency",
        chart,
    )

    h_degrees = {}
    h_rows = {}
    for deg in sorted(c.bundle.degrees):
        basis = c.bundle.basis(deg)
        matrix = []
        for name in basis:
            image = projector.value((name,))
            row = [image.get(col, chart.zero()) for col in basis]
            matrix.append(row)
        constant = as_constant(matrix)
        if constant is None:
            raise ValueError(
                f"harmonic projector has non-constant coefficients in degree {deg}; "
                "basis extraction needs a constant contraction"
            )
        rows, pivots = rref(constant)
        echelon = rows[: len(pivots)]
        names = []
        for i, row in enumerate(echelon):
            support = [j for j, x in enumerate(row) if x != 0]
            if len(support) == 1 and row[support[0]] == 1:
                candidate = basis[support[0]]
            else:
                candidate = f"h{deg}.{i}"
                while c.bundle.has(candidate) or candidate in names:
                    candidate = "h" + candidate
            names.append(candidate)
        if names:
            h_degrees[deg] = names
            h_rows[deg] = (basis, constant, echelon)

    h_bundle = GradedBundle(h_degrees)
    iota = MultiOp.zero(h_bundle, c.bundle, chart, 1, 0)
    pi = MultiOp.zero(c.bundle, h_bundle, chart, 1, 0)
    for deg, names in h_degrees.items():
        basis, constant, echelon = h_rows[deg]
        for h_name, row in zip(names, echelon):
            vector = {basis[j]: x for j, x in enumerate(row) if x != 0}
            iota._accumulate((h_name,), vector)
        transposed = [[echelon[r][j] for r in range(len(echelon))] for j in range(len(basis))]
        for i, name in enumerate(basis):
            coords = solve(transposed, constant[i])
            if coords is None:
                raise ValueError(
                    f"harmonic projector image of {name!r} leaves the extracted basis"
                )
            vector = {names[j]: x for j, x in enumerate(coords) if x != 0}
            if vector:
                pi._accumulate((name,), vector)
    iota._validate()
    pi._validate()
    assert compose_linear(pi, iota) == identity_op(h_bundle, chart)
    assert compose_linear(iota, pi) == projector
    return h_bundle, iota, pi


def _post_op(linear, op):
    """Feed every output of an operation through an arity-1 operation."""
    return tabulate(
        op.source,
        linear.target,
        op.chart,
        op.arity,
        op.degree + linear.degree,
        lambda key: linear.evaluate([op.value(key)]),
    )


def _projected_curvature(pi, curvature, h_bundle):
    """The curvature pushed through the projection, as an operation on H."""
    return tabulate(
        h_bundle,
        h_bundle,
        pi.chart,
        0,
        1,
        lambda key: pi.evaluate([curvature.value(())]),
    )


def _prepare(structure, contraction, filtration):
    """Shared preamble of the transfer evaluators."""
    if structure.bundle != contraction.bundle or structure.chart != contraction.chart:
        raise ValueError("structure and contraction live on different bundles")
    split = structure.differential
    if split is None:
        split = MultiOp.zero(structure.bundle, structure.bundle, structure.chart, 1, 1)
    if split != contraction.delta:
        raise ValueError("the structure's split differential must equal the contraction's delta")
    if filtration is not None:
        if isinstance(filtration, FiltrationSpec):
            levels = filtration.levels_for(structure.bundle)
        else:
            levels = dict(filtration)
        if levels != contraction.filtration:
            raise ValueError("filtration spec disagrees with the contraction's levels")
    h_bundle, iota, pi = validate_contraction(contraction)
    return h_bundle, iota, pi


def _identity_base(chart):
    return list(chart.coords)


def _transferred_differential(contraction, iota, pi):
    return compose_linear(pi, compose_linear(contraction.delta, iota))


def transfer_structure(structure, contraction, filtration=None):
    """Transfer a structure to the harmonic part of a contraction.

    The structure's operations are the perturbation: its split differential
    must equal the contraction's delta and is handled separately. The
    inclusion-with-corrections is found as the fixed point of

        phi = iota - eta (operations bullet phi)

    iterated arity by arity; the transferred operations are the projection of
    ``operations bullet phi``, the transferred differential is pi delta iota,
    and the linear projection ``pi1_tilde`` solves its own fixed-point
    equation pi1_tilde = pi - pi1_tilde (operations_1) eta. A pass bound of
    the highest filtration level plus three guards against non-nilpotent
    input. Returns a TransferResult.
    """
    h_bundle, iota, pi = _prepare(structure, contraction, filtration)
    bundle, chart = structure.bundle, structure.chart
    lam = structure.operations
    eta = contraction.eta
    guard = contraction.max_level() + 3
    top = bundle.amplitude + 1
    if lam.max_arity() > top:
        raise ValueError(f"operations exceed the arity bound {top}")

    phi = OpFamily(h_bundle, bundle, chart, 0)
    phi.set(1, iota)
    passes = 0
    while True:
        passes += 1
        if passes > guard:
            raise ValueError(
                f"nilpotency violation: the transfer recursion did not stabilize in {guard} passes"
            )
        mixed = compose_bullet(lam, phi)
        fresh = OpFamily(h_bundle, bundle, chart, 0)
        for n in range(1, top + 1):
            term = _post_op(eta, mixed.get(n)).scale(-1)
            if n == 1:
                term = iota + term
            fresh.set(n, term)
        if fresh == phi:
            break
        phi = fresh
    if phi.max_arity() > top:
        raise ValueError(f"transferred corrections exceed the arity bound {top}")

    mixed = compose_bullet(lam, phi)
    mu = OpFamily(h_bundle, h_bundle, chart, 1)
    for n in range(top + 1):
        mu.set(n, _post_op(pi, mixed.get(n)))
    h_structure = CurvedStructure(
        h_bundle, mu, differential=_transferred_differential(contraction, iota, pi)
    )

    lam1 = lam.get(1)
    pi1_tilde = pi
    passes_linear = 0
    while True:
        passes_linear += 1
        if passes_linear > guard:
            raise ValueError(
                f"nilpotency violation: the projection recursion did not stabilize in {guard} passes"
            )
        fresh = pi - compose_linear(compose_linear(pi1_tilde, lam1), eta)
        if fresh == pi1_tilde:
            break
        pi1_tilde = fresh

    morphism = LooMorphism(chart, chart, _identity_base(chart), phi)
    diagnostics = {
        "method": "fixed-point",
        "passes": passes,
        "tree_count": None,
        "max_arity": max(phi.max_arity(), mu.max_arity(), 0),
    }
    return TransferResult(h_structure, morphism, pi1_tilde, diagnostics)


def transfer_tree_oracle(structure, contraction, filtration=None):
    """Transfer by direct summation over decorated rooted trees.

    Every tree has leaves decorated with the inclusion, nodes with one
    operation of arity equal to the number of children, non-root node outputs
    wrapped in ``eta``, and a sign of -1 per ``eta``. Trees for the
    transferred operations carry the projection at the root instead; the
    curvature contributes the single node-only tree. Trees group the inputs
    by unordered set partitions with blocks ordered by their minimum, so each
    decorated shape is counted exactly once, and the node count is capped by
    the highest filtration level. The result must match transfer_structure
    exactly; the diagnostics report the number of trees with a nonzero value.
    """
    h_bundle, iota, pi = _prepare(structure, contraction, filtration)
    bundle, chart = structure.bundle, structure.chart
    lam = structure.operations
    eta = contraction.eta
    budget = contraction.max_level()
    top = bundle.amplitude + 1
    counter = {"trees": 0}

    def grown_trees(args, allowance):
        """All node-rooted subtree values on the given arguments.

        Each argument is a (degree, leaf vector) pair in fixed position
        order; yields (nodes used, unwrapped value at the root node).
        """
        n = len(args)
        degs = [a[0] for a in args]
        for partition in set_partitions(n):
            arity = len(partition)
            if arity == 0 or lam.get(arity).is_zero():
                continue
            sign = koszul_sign([i for block in partition for i in block], degs)
            pools = [
                subtree_values([args[i] for i in block], allowance - 1)
                for block in partition
            ]
            for combo in product(*pools):
                used = 1 + sum(item[0] for item in combo)
                if used > allowance:
                    continue
                value = lam.get(arity).evaluate([item[1] for item in combo])
                if value:
                    yield used, vec_scale(value, sign)

    def subtree_values(args, allowance):
        """Inclusion-with-corrections subtrees: bare leaf or eta-wrapped node."""
        out = []
        if len(args) == 1:
            out.append((0, args[0][1]))
        if allowance < 1:
            return out
        for used, value in grown_trees(args, allowance):
            wrapped = eta.evaluate([value])
            if wrapped:
                out.append((used, vec_scale(wrapped, -1)))
        return out

    def leaf_args(key):
        return [(h_bundle.degree_of(x), iota.value((x,))) for x in key]

    phi = OpFamily(h_bundle, bundle, chart, 0)
    for n in range(1, top + 1):
        def phi_entry(key):
            total = {}
            for _, value in subtree_values(leaf_args(key), budget):
                counter["trees"] += 1
                total = vec_add(total, value)
            return total

        phi.set(n, tabulate(h_bundle, bundle, chart, n, 0, phi_entry))

    mu = OpFamily(h_bundle, h_bundle, chart, 1)
    curvature_root = _projected_curvature(pi, lam.get(0), h_bundle)
    if not curvature_root.is_zero():
        counter["trees"] += 1
        mu.set(0, curvature_root)
    for n in range(1, top + 1):
        def mu_entry(key):
            total = {}
            for _, value in grown_trees(leaf_args(key), budget):
                rooted = pi.evaluate([value])
                if rooted:
                    counter["trees"] += 1
                    total = vec_add(total, rooted)
            return total

        mu.set(n, tabulate(h_bundle, h_bundle, chart, n, 1, mu_entry))
    h_structure = CurvedStructure(
        h_bundle, mu, differential=_transferred_differential(contraction, iota, pi)
    )

    lam1eta = compose_linear(lam.get(1), eta)
    series = identity_op(bundle, chart)
    power = lam1eta.scale(-1)
    steps = 0
    while not power.is_zero():
        steps += 1
        if steps > contraction.max_level() + 3:
            raise ValueError("nilpotency violation: the projection series does not terminate")
        series = series + power
        power = compose_linear(power, lam1eta.scale(-1))
    pi1_tilde = compose_linear(pi, series)

    morphism = LooMorphism(chart, chart, _identity_base(chart), phi)
    diagnostics = {
        "method": "tree-sum",
        "tree_count": counter["trees"],
        "max_arity": max(phi.max_arity(), mu.max_arity(), 0),
    }
    return TransferResult(h_structure, morphism, pi1_tilde, diagnostics)


def transfer_closed_forms(structure, contraction):
    """Arity-0 and arity-1 parts of the transfer as finite geometric series.

    Returns ``(phi1, mu0, mu1, pi1_tilde)`` with phi1 the linear part of the
    inclusion-with-corrections, mu0 the transferred curvature, mu1 the linear
    part of the transferred perturbation, and pi1_tilde the linear projection:

        phi1 = (1 + eta lam1)^(-1) iota          mu0 = pi lam0
        mu1  = pi (1 + lam1 eta)^(-1) lam1 iota  pi1_tilde = pi (1 + lam1 eta)^(-1)

    where lam is the structure's perturbation. Raises when the relevant
    composite is not nilpotent.
    """
    h_bundle, iota, pi = _prepare(structure, contraction, None)
    lam = structure.operations
    eta = contraction.eta
    lam1 = lam.get(1)
    inv_in = neumann_inverse(compose_linear(eta, lam1))
    phi1 = compose_linear(inv_in, iota)
    mu0 = _projected_curvature(pi, lam.get(0), h_bundle)
    inv_out = neumann_inverse(compose_linear(lam1, eta))
    mu1 = compose_linear(pi, compose_linear(inv_out, compose_linear(lam1, iota)))
    pi1_tilde = compose_linear(pi, inv_out)
    return phi1, mu0, mu1, pi1_tilde


def _constant_blocks(op, label, degrees):
    blocks = {}
    for deg in degrees:
        block = as_constant(linear_block(op, deg))
        if block is None:
            raise ValueError(
                f"{label} has non-constant coefficients in degree {deg}; "
                "supply chi and theta explicitly"
            )
        blocks[deg] = block
    return blocks


def _check_shape(phi1, source, target, iso_from, label):
    """Require iso blocks from one degree up and surjective blocks below."""
    for deg in range(1, max(source.amplitude, target.amplitude) + 1):
        block = as_constant(linear_block(phi1, deg))
        if block is None:
            raise ValueError(f"{label} must have constant coefficients in degree {deg}")
        n_source = source.rank(deg)
        n_target = target.rank(deg)
        r = rank(block)
        if deg >= iso_from:
            if n_source != n_target or r != n_target:
                raise ValueError(
                    f"{label} is not an isomorphism in degree {deg} "
                    f"(ranks {n_source} -> {n_target}, block rank {r})"
                )
        elif r != n_target:
            raise ValueError(
                f"{label} is not surjective in degree {deg} "
                f"(block rank {r} of {n_target})"
            )


def reduce_fibration_step(morphism, source, target, k, chi=None, theta=None):
    """Cancel the degree k-1 and k kernel of a linear fibration, one step.

    The morphism must be linear over a single chart (identity base map), an
    isomorphism in degrees strictly above k and surjective in degrees up to
    k. Writing K for its kernel, the arity-1 block from degree k-1 to k is
    split off as the inner differential; the contracting operator is built
    from a section ``chi`` of that block restricted to K (which must be
    surjective there) and a projection ``theta`` onto the degree-k kernel.
    Both are computed by exact elimination when the relevant blocks are
    constant, or can be supplied as arity-1 operations on the big bundle
    (chi of degree -1 mapping the degree-k kernel into the degree k-1 kernel,
    theta of degree 0 projecting onto the degree-k kernel).

    Runs the transfer over the level-k variation filtration and returns
    ``(h_structure, inclusion, composite)`` where the composite morphism onto
    the original target is again linear, now an isomorphism in degrees >= k
    and surjective below.
    """
    bundle = source.bundle
    chart = source.chart
    if morphism.source_chart != morphism.target_chart:
        raise ValueError("the fibration must live over a single chart")
    identity_base = tuple(chart.poly(c) for c in chart.coords)
    if morphism.base_map != identity_base:
        raise ValueError("the fibration must have the identity base map")
    if morphism.source_bundle != bundle or morphism.target_bundle != target.bundle:
        raise ValueError("morphism bundles do not match the given structures")
    if any(a != 1 for a in morphism.phi.arities()):
        raise ValueError("the fibration must be linear")
    if k < 2 or k > bundle.amplitude:
        raise ValueError(f"reduction level must lie in 2..{bundle.amplitude}")

    phi1 = morphism.phi.get(1)
    _check_shape(phi1, bundle, target.bundle, k + 1, "the fibration")

    total = source.total()
    lam1 = total.get(1)
    kernel_bases = {}
    for deg in (k - 1, k):
        block = as_constant(linear_block(phi1, deg))
        vectors = nullspace(block) if block and block[0] else (
            [[1 if i == j else 0 for i in range(bundle.rank(deg))] for j in range(bundle.rank(deg))]
            if target.bundle.rank(deg) == 0
            else []
        )
        kernel_bases[deg] = vectors

    basis_low = bundle.basis(k - 1)
    basis_high = bundle.basis(k)

    def delta_entry(key):
        name = key[0]
        if bundle.degree_of(name) != k - 1:
            return {}
        return lam1.value(key)

    delta = tabulate(bundle, bundle, chart, 1, 1, delta_entry)

    if chi is not None or theta is not None:
        if chi is None or theta is None:
            raise ValueError("chi and theta must be supplied together")
        eta = compose_linear(chi, theta)
    else:
        j_low = [[v[i] for v in kernel_bases[k - 1]] for i in range(len(basis_low))]
        j_high = [[v[i] for v in kernel_bases[k]] for i in range(len(basis_high))]
        dim_low = len(kernel_bases[k - 1])
        dim_high = len(kernel_bases[k])
        block = _constant_blocks(lam1, "the differential block", [k - 1])[k - 1]
        restricted = []
        for v in kernel_bases[k - 1]:
            image = [sum(block[r][c] * v[c] for c in range(len(v))) for r in range(len(basis_high))]
            coords = solve(j_high, image) if j_high and dim_high else ([] if all(x == 0 for x in image) else None)
            if coords is None:
                raise ValueError(
                    "the differential does not preserve the kernel; "
                    "the input is not a fibration onto the target"
                )
            restricted.append(coords)
        matrix = [[restricted[c][r] for c in range(dim_low)] for r in range(dim_high)]
        if dim_high and rank(matrix) != dim_high:
            raise ValueError(
                f"the differential is not surjective on the kernel from degree {k - 1} to {k}"
            )
        eta = MultiOp.zero(bundle, bundle, chart, 1, -1)
        if dim_high:
            section = right_inverse(matrix)
            projection = left_inverse(j_high)
            carrier = [
                [
                    sum(
                        j_low[i][a] * section[a][b] * projection[b][j]
                        for a in range(dim_low)
                        for b in range(dim_high)
                    )
                    for j in range(len(basis_high))
                ]
                for i in range(len(basis_low))
            ]
            for j, name in enumerate(basis_high):
                vector = {
                    basis_low[i]: carrier[i][j]
                    for i in range(len(basis_low))
                    if carrier[i][j] != 0
                }
                if vector:
                    eta._accumulate((name,), vector)
            eta._validate()

    perturbation = total.copy()
    perturbation.set(1, total.get(1) - delta)
    perturbed = CurvedStructure(bundle, perturbation, differential=delta)
    spec = FiltrationSpec.variation(k)
    contraction = ContractionData(bundle, delta, eta, spec)
    result = transfer_structure(perturbed, contraction, spec)

    composite = compose_morphisms(morphism, result.phi)
    if composite.phi.max_arity() > 1:
        raise ValueError("reduction failed: the composite onto the target is not linear")
    _check_shape(
        composite.phi.get(1),
        result.h_structure.bundle,
        target.bundle,
        k,
        "the reduced fibration",
    )
    return result.h_structure, result.phi, composite
