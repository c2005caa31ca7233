"""Shared fixtures: small hand-checked structures and a random-instance factory."""

import random
from fractions import Fraction

import pytest

from dchart import (
    Chart,
    ContractionData,
    CurvedStructure,
    DerivedChart,
    FiltrationSpec,
    GradedBundle,
    LooMorphism,
    MultiOp,
    OpFamily,
    identity_op,
    nilpotency_failures,
    transport_structure,
)


def ops_from(bundle, chart, degree, tables):
    fam = OpFamily(bundle, bundle, chart, degree)
    for arity, table in tables.items():
        fam.set(arity, MultiOp.from_table(bundle, bundle, chart, arity, degree, table))
    return fam


@pytest.fixture
def point_chart():
    return Chart(())


def make_toy(split=True):
    """Rank (1, 2, 1) structure over a point with a quadratic operation.

    Arity 1 sends e to g + h, g to w, h to -w; arity 2 sends (e, e) to w.
    With ``split=True`` the g -> w piece is kept as a separate differential.
    """
    chart = Chart(())
    bundle = GradedBundle({1: ("e",), 2: ("g", "h"), 3: ("w",)})
    delta = MultiOp.from_table(bundle, bundle, chart, 1, 1, {("g",): {"w": 1}})
    if split:
        ops = ops_from(
            bundle,
            chart,
            1,
            {1: {("e",): {"g": 1, "h": 1}, ("h",): {"w": -1}}, 2: {("e", "e"): {"w": 1}}},
        )
        return CurvedStructure(bundle, ops, differential=delta)
    ops = ops_from(
        bundle,
        chart,
        1,
        {
            1: {("e",): {"g": 1, "h": 1}, ("g",): {"w": 1}, ("h",): {"w": -1}},
            2: {("e", "e"): {"w": 1}},
        },
    )
    return CurvedStructure(bundle, ops)


def make_toy_contraction(structure):
    eta = MultiOp.from_table(
        structure.bundle, structure.bundle, structure.chart, 1, -1, {("w",): {"g": 1}}
    )
    delta = MultiOp.from_table(
        structure.bundle, structure.bundle, structure.chart, 1, 1, {("g",): {"w": 1}}
    )
    levels = {"e": 0, "h": 1, "g": 2, "w": 2}
    return ContractionData(structure.bundle, delta, eta, levels)


def make_broken_toy():
    """The toy with the h -> -w entry dropped; the square picks up a residual."""
    chart = Chart(())
    bundle = GradedBundle({1: ("e",), 2: ("g", "h"), 3: ("w",)})
    ops = ops_from(
        bundle,
        chart,
        1,
        {1: {("e",): {"g": 1, "h": 1}, ("g",): {"w": 1}}, 2: {("e", "e"): {"w": 1}}},
    )
    return CurvedStructure(bundle, ops)


def make_quasi_smooth():
    """One curvature component x^2 on a rank-1 bundle over the line."""
    chart = Chart(("x",))
    bundle = GradedBundle({1: ("e",)})
    x = chart.var("x")
    return DerivedChart(CurvedStructure(bundle, ops_from(bundle, chart, 1, {0: {(): {"e": x * x}}})))


def make_plain_line():
    chart = Chart(("x",))
    bundle = GradedBundle({})
    return DerivedChart(CurvedStructure(bundle, OpFamily(bundle, bundle, chart, 1)))


def make_plain(coords):
    chart = Chart(coords)
    bundle = GradedBundle({})
    return DerivedChart(CurvedStructure(bundle, OpFamily(bundle, bundle, chart, 1)))


def make_amplitude_two():
    """Curvature x^2 on e1 plus an x-dependent differential e2 -> f."""
    chart = Chart(("x",))
    bundle = GradedBundle({1: ("e1", "e2"), 2: ("f",)})
    x = chart.var("x")
    ops = ops_from(bundle, chart, 1, {0: {(): {"e1": x * x}}, 1: {("e2",): {"f": x}}})
    return DerivedChart(CurvedStructure(bundle, ops))


@pytest.fixture
def toy():
    return make_toy()


@pytest.fixture
def toy_contraction(toy):
    return make_toy_contraction(toy)


@pytest.fixture
def broken_toy():
    return make_broken_toy()


@pytest.fixture
def quasi_smooth():
    return make_quasi_smooth()


@pytest.fixture
def plain_line():
    return make_plain_line()


@pytest.fixture
def amplitude_two():
    return make_amplitude_two()


def random_instance(seed):
    """A random nilpotent structure with a compatible contraction, over a point.

    Construction: the differential pairs off random basis elements between
    adjacent degrees with rational coefficients (each name in at most one
    pair, so it squares to zero) and eta reverses the pairing. On the
    unpaired names a sink structure is laid down: its inputs come from a
    feeder pool and its outputs land in a disjoint sink pool, so every
    composite vanishes and the defining equation holds outright; optionally
    a constant curvature term on a degree-1 sink. That structure is then
    transported along a random isomorphism (unipotent linear mixing plus
    higher corrections keyed on unpaired names), which preserves the
    defining equation. The filtration puts unpaired names at twice their
    degree and lets each pair share the level in between, which makes the
    transported perturbation level-raising. Amplitude is at most 4, ranks
    at most 3, all coefficients rational.
    """
    for attempt in range(32):
        built = _try_instance(random.Random((seed, attempt)))
        if built is not None:
            return built
    raise RuntimeError(f"could not build a nilpotent instance for seed {seed}")


def _nonzero(rng, bound=3):
    return Fraction(rng.choice([n for n in range(-bound, bound + 1) if n]), rng.randint(1, 2))


def _try_instance(rng):
    chart = Chart(())
    amplitude = rng.choice((2, 3, 3, 4, 4))
    degrees = {
        d: tuple(f"b{d}_{i}" for i in range(rng.randint(1, 3)))
        for d in range(1, amplitude + 1)
    }
    bundle = GradedBundle(degrees)

    delta_table, eta_table = {}, {}
    levels = {name: 2 * bundle.degree_of(name) for name in bundle.names}
    paired = set()
    for d in range(1, amplitude):
        lower = [n for n in degrees[d] if n not in paired]
        upper = [n for n in degrees[d + 1] if n not in paired]
        rng.shuffle(lower)
        rng.shuffle(upper)
        for low, high in list(zip(lower, upper))[: rng.randint(0, 2)]:
            coeff = _nonzero(rng, 2)
            delta_table[(low,)] = {high: coeff}
            eta_table[(high,)] = {low: 1 / coeff}
            levels[low] = levels[high] = 2 * d + 1
            paired.add(low)
            paired.add(high)
    if not delta_table:
        low, high = degrees[1][0], degrees[2][0]
        delta_table[(low,)] = {high: 1}
        eta_table[(high,)] = {low: 1}
        levels[low] = levels[high] = 3
        paired.update((low, high))
    delta = MultiOp.from_table(bundle, bundle, chart, 1, 1, delta_table)
    eta = MultiOp.from_table(bundle, bundle, chart, 1, -1, eta_table)
    contraction = ContractionData(bundle, delta, eta, FiltrationSpec.custom(levels))

    harmonic = [n for n in bundle.names if n not in paired]
    by_degree = {}
    for name in harmonic:
        by_degree.setdefault(bundle.degree_of(name), []).append(name)

    def sample_key(arity, total_degree, excluded):
        parts = []
        remaining = total_degree
        for slot in range(arity):
            slots_left = arity - slot - 1
            feasible = [
                d
                for d in range(1, remaining - slots_left + 1)
                if any(n not in excluded for n in by_degree.get(d, ()))
            ]
            if not feasible:
                return None
            part = rng.choice(feasible)
            parts.append(part)
            remaining -= part
        if remaining != 0:
            return None
        return tuple(
            rng.choice([n for n in by_degree[d] if n not in excluded]) for d in parts
        )

    used_as_key, used_as_out = set(), set()
    sink_tables = {}
    degree_ones = by_degree.get(1, [])
    if degree_ones and rng.random() < 0.4:
        name = rng.choice(degree_ones)
        sink_tables[0] = {(): {name: _nonzero(rng, 2)}}
        used_as_out.add(name)
    for _ in range(rng.randint(2, 5)):
        arity = rng.randint(1, 3)
        if arity + 1 > amplitude:
            arity = 1
        out_degree = rng.randint(arity + 1, amplitude)
        key = sample_key(arity, out_degree - 1, used_as_out)
        if key is None:
            continue
        outs = [
            n
            for n in by_degree.get(out_degree, ())
            if n not in used_as_key and n not in key
        ]
        if not outs:
            continue
        out = rng.choice(outs)
        sink_tables.setdefault(arity, {}).setdefault(key, {})[out] = _nonzero(rng)
        used_as_key.update(key)
        used_as_out.add(out)
    base = CurvedStructure(bundle, ops_from(bundle, chart, 1, sink_tables), differential=delta)

    phi = OpFamily(bundle, bundle, chart, 0)
    phi_one = identity_op(bundle, chart)
    mix_table = {}
    for d in range(2, amplitude + 1):
        names_d = by_degree.get(d, [])
        for i, earlier in enumerate(names_d):
            for later in names_d[i + 1 :]:
                if rng.random() < 0.4:
                    mix_table.setdefault((earlier,), {})[later] = _nonzero(rng, 2)
    if mix_table:
        phi_one = phi_one + MultiOp.from_table(bundle, bundle, chart, 1, 0, mix_table)
    phi.set(1, phi_one)
    curvature_names = set(sink_tables.get(0, {}).get((), {}))
    pair_lows = {}
    for (low,) in delta_table:
        pair_lows.setdefault(bundle.degree_of(low), []).append(low)
    for arity in range(2, amplitude + 1):
        table = {}
        for _ in range(rng.randint(0, 3)):
            out_degree = rng.randint(arity, amplitude)
            key = sample_key(arity, out_degree, curvature_names)
            if key is None:
                continue
            targets = pair_lows.get(out_degree) if rng.random() < 0.6 else None
            targets = targets or bundle.basis(out_degree)
            if not targets:
                continue
            table.setdefault(key, {})[rng.choice(targets)] = _nonzero(rng)
        if table:
            phi.set(arity, MultiOp.from_table(bundle, bundle, chart, arity, 0, table))
    iso = LooMorphism(chart, chart, (), phi)
    transported = transport_structure(iso, base)

    total = transported.total()
    operations = total.copy()
    operations.set(1, total.get(1) - delta)
    structure = CurvedStructure(bundle, operations, differential=delta)
    if nilpotency_failures(structure.operations, levels):
        return None
    return structure, contraction


@pytest.fixture
def random_instances():
    return [random_instance(seed) for seed in range(12)]
