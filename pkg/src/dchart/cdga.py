"""The function-algebra model of a curved structure.

Fiberwise polynomial functions on a graded bundle form the symmetric algebra
on the dual basis. An element is stored as a map from a sorted multiset of
basis names (a monomial in the dual generators, one generator per basis
element) to a polynomial coefficient over the chart. Multiplication merges
keys with the stable-sort sign; a generator inherits the parity of its basis
element. Repeated odd names are kept, mirroring the multiset convention of
the operation tables.

A structure corresponds to a degree +1 derivation determined by its values
on generators: the generator dual to a basis element collects one monomial
per operation entry hitting that element, scaled by the reciprocal of the
factorials of the key's repetition counts. With this normalization the
derivation squares to zero on generators exactly when the structure passes
its axiom check, and the correspondence is bijective.

Morphisms dualize to algebra maps the same way; the chain-map property of
the dual on generators is equivalent to the morphism axiom.
"""

from __future__ import annotations

from fractions import Fraction
from math import factorial

from .ops import MultiOp, OpFamily, sort_with_sign
from .structures import AxiomReport, CurvedStructure, LooMorphism

__all__ = [
    "CdgaDerivation",
    "to_derivation",
    "from_derivation",
    "derivation_square_failures",
    "element_product",
    "element_add",
    "element_scale",
    "apply_derivation",
    "morphism_dual",
    "apply_algebra_map",
    "morphism_from_dual",
    "morphism_duality_failures",
]


def _repetition_factor(key):
    """Product of factorials of the multiplicities in a sorted key."""
    factor = 1
    run = 1
    for i in range(1, len(key)):
        run = run + 1 if key[i] == key[i - 1] else 1
        factor *= run if run > 1 else 1
    # the loop multiplies 2, 3, ... as a run extends, building each factorial
    return factor


def element_add(a, b):
    """Sum of two stored elements."""
    out = {key: coeff for key, coeff in a.items()}
    for key, coeff in b.items():
        cur = out.get(key)
        total = coeff if cur is None else cur + coeff
        if total.is_zero():
            out.pop(key, None)
        else:
            out[key] = total
    return out


def element_scale(a, factor):
    out = {}
    for key, coeff in a.items():
        val = coeff * factor
        if not val.is_zero():
            out[key] = val
    return out


def _accumulate_monomial(out, key, coeff, bundle):
    skey, sign = sort_with_sign(key, bundle)
    if sign < 0:
        coeff = -coeff
    cur = out.get(skey)
    total = coeff if cur is None else cur + coeff
    if total.is_zero():
        out.pop(skey, None)
    else:
        out[skey] = total


def element_product(bundle, a, b):
    """Product of two stored elements (keys merge with the sorting sign)."""
    out = {}
    for key_a, coeff_a in a.items():
        for key_b, coeff_b in b.items():
            coeff = coeff_a * coeff_b
            if coeff.is_zero():
                continue
            _accumulate_monomial(out, key_a + key_b, coeff, bundle)
    return out


class CdgaDerivation:
    """A degree +1 derivation of the function algebra, given on generators.

    ``images`` maps each basis name to the stored element its dual generator
    is sent to. The derivation vanishes on chart functions and extends by
    the graded Leibniz rule. Degree bookkeeping: a monomial in the image of
    the generator dual to a basis element of degree d has key degrees
    summing to d - 1.
    """

    __slots__ = ("bundle", "chart", "images")

    def __init__(self, bundle, chart, images):
        self.bundle = bundle
        self.chart = chart
        unknown = [name for name in images if not bundle.has(name)]
        if unknown:
            raise ValueError(f"images given for unknown generators {unknown!r}")
        clean = {}
        for name in bundle.names:
            element = {}
            for key, coeff in images.get(name, {}).items():
                key = (key,) if isinstance(key, str) else tuple(key)
                coeff = chart.poly(coeff)
                if coeff.is_zero():
                    continue
                for member in key:
                    if not bundle.has(member):
                        raise ValueError(f"monomial factor {member!r} is not a basis name")
                total = sum(bundle.degree_of(member) for member in key)
                if total != bundle.degree_of(name) - 1:
                    raise ValueError(
                        f"degree bookkeeping violation: generator {name!r} of degree "
                        f"{bundle.degree_of(name)} cannot map to a monomial of degree {total} + 1"
                    )
                _accumulate_monomial(element, key, coeff, bundle)
            if element:
                clean[name] = element
        self.images = clean

    def image(self, name):
        return dict(self.images.get(name, {}))

    def is_zero(self):
        return not self.images

    def __eq__(self, other):
        if not isinstance(other, CdgaDerivation):
            return NotImplemented
        return (
            self.bundle == other.bundle
            and self.chart == other.chart
            and self.images == other.images
        )

    def __repr__(self):
        return f"CdgaDerivation(generators={len(self.images)})"


def apply_derivation(q, element):
    """Extend the derivation to an element by the graded Leibniz rule."""
    bundle = q.bundle
    out = {}
    for key, coeff in element.items():
        passed = 0
        for i, name in enumerate(key):
            image = q.images.get(name)
            if image:
                sign = -1 if passed % 2 else 1
                for ikey, icoeff in image.items():
                    val = coeff * icoeff
                    if sign < 0:
                        val = -val
                    if not val.is_zero():
                        _accumulate_monomial(out, key[:i] + ikey + key[i + 1 :], val, bundle)
            passed += bundle.degree_of(name)
    return out


def to_derivation(structure):
    """The derivation dual to a structure's total operation family."""
    total = structure.total()
    images = {}
    for arity in total.arities():
        op = total.get(arity)
        for key, bucket in op.entries.items():
            scale = Fraction(1, _repetition_factor(key))
            for name, coeff in bucket.items():
                element = images.setdefault(name, {})
                cur = element.get(key)
                val = coeff * scale
                total_val = val if cur is None else cur + val
                if total_val.is_zero():
                    element.pop(key, None)
                else:
                    element[key] = total_val
    return CdgaDerivation(structure.bundle, structure.chart, images)


def from_derivation(q):
    """The structure whose dual derivation is the given one (exact inverse)."""
    bundle, chart = q.bundle, q.chart
    tables = {}
    for name, element in q.images.items():
        for key, coeff in element.items():
            arity = len(key)
            table = tables.setdefault(arity, {})
            bucket = table.setdefault(key, {})
            bucket[name] = coeff * _repetition_factor(key)
    family = OpFamily(bundle, bundle, chart, 1)
    for arity, table in tables.items():
        family.set(arity, MultiOp.from_table(bundle, bundle, chart, arity, 1, table))
    return CurvedStructure(bundle, family)


def derivation_square_failures(q):
    """Generators on which the derivation fails to square to zero."""
    failures = []
    for name in q.bundle.names:
        residual = apply_derivation(q, q.image(name))
        if residual:
            failures.append((name, residual))
    return AxiomReport(failures)


def morphism_dual(morphism):
    """Generator images of the algebra map dual to a morphism.

    Each target basis name maps to a stored element over the source bundle,
    with the same reciprocal-repetition-factorial normalization as
    ``to_derivation``; coefficients already live over the source chart.
    """
    images = {}
    for arity in morphism.phi.arities():
        op = morphism.phi.get(arity)
        for key, bucket in op.entries.items():
            scale = Fraction(1, _repetition_factor(key))
            for name, coeff in bucket.items():
                element = images.setdefault(name, {})
                cur = element.get(key)
                val = coeff * scale
                total_val = val if cur is None else cur + val
                if total_val.is_zero():
                    element.pop(key, None)
                else:
                    element[key] = total_val
    return images


def apply_algebra_map(morphism, images, element):
    """Push a target element through the dual algebra map.

    ``images`` are generator images as from ``morphism_dual``; the element's
    coefficients are pulled back along the base map, and every monomial is
    replaced by the product of its factors' images.
    """
    source_bundle = morphism.source_bundle
    one = morphism.source_chart.const(1)
    out = {}
    for key, coeff in element.items():
        pulled = morphism.pull_scalar(coeff)
        if pulled.is_zero():
            continue
        term = {(): pulled}
        for name in key:
            factor = images.get(name)
            if not factor:
                term = {}
                break
            term = element_product(source_bundle, term, factor)
        if not term:
            continue
        for tkey, tcoeff in term.items():
            cur = out.get(tkey)
            total = tcoeff if cur is None else cur + tcoeff
            if total.is_zero():
                out.pop(tkey, None)
            else:
                out[tkey] = total
    return out


def morphism_from_dual(source_bundle, target_bundle, source_chart, target_chart, base_map, images):
    """The morphism whose dual algebra map has the given generator images."""
    tables = {}
    for name, element in images.items():
        if not target_bundle.has(name):
            raise ValueError(f"image given for unknown generator {name!r}")
        for key, coeff in element.items():
            arity = len(key)
            if arity == 0:
                raise ValueError(f"generator {name!r} image has a constant term")
            table = tables.setdefault(arity, {})
            bucket = table.setdefault(key, {})
            bucket[name] = source_chart.poly(coeff) * _repetition_factor(key)
    family = OpFamily(source_bundle, target_bundle, source_chart, 0)
    for arity, table in tables.items():
        family.set(
            arity,
            MultiOp.from_table(source_bundle, target_bundle, source_chart, arity, 0, table),
        )
    return LooMorphism(source_chart, target_chart, base_map, family)


def morphism_duality_failures(morphism, source_structure, target_structure):
    """Chain-map defect of the dual algebra map on every target generator.

    Compares the source derivation applied to a generator's image with the
    image of the target derivation's value on that generator.
    """
    q_source = to_derivation(source_structure)
    q_target = to_derivation(target_structure)
    images = morphism_dual(morphism)
    failures = []
    for name in target_structure.bundle.names:
        lhs = apply_derivation(q_source, images.get(name, {}))
        rhs = apply_algebra_map(morphism, images, q_target.image(name))
        residual = element_add(lhs, element_scale(rhs, -1))
        if residual:
            failures.append((name, residual))
    return AxiomReport(failures)
