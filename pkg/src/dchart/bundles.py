"""Coordinate charts and graded bundles with named bases.

A chart is an ordered list of coordinate names; polynomials over the chart use
those names. A graded bundle assigns an ordered basis to each degree >= 1.
Basis names are globally distinct within a bundle, and the canonical order of
basis elements (degree first, then declaration order) is what every sorted
multiset key in the library refers to.
"""

from __future__ import annotations

from fractions import Fraction

from .poly import Poly, parse_poly

__all__ = ["Chart", "GradedBundle"]


class Chart:
    __slots__ = ("coords",)

    def __init__(self, coords):
        coords = tuple(coords)
        if len(set(coords)) != len(coords):
            raise ValueError(f"duplicate coordinate names in {coords}")
        self.coords = coords

    @property
    def nvars(self):
        return len(self.coords)

    def poly(self, text):
        """Parse a polynomial string over this chart."""
        if isinstance(text, Poly):
            if text.nvars != self.nvars:
                raise ValueError("polynomial from a different ring")
            return text
        if isinstance(text, (int, Fraction)):
            return Poly.const(self.nvars, text)
        return parse_poly(text, self.coords)

    def const(self, value):
        return Poly.const(self.nvars, value)

    def zero(self):
        return Poly.zero(self.nvars)

    def var(self, name):
        return Poly.variable(self.nvars, self.coords.index(name))

    def format(self, poly):
        return poly.format(self.coords)

    def point(self, values):
        vals = tuple(Fraction(v) for v in values)
        if len(vals) != self.nvars:
            raise ValueError(f"point needs {self.nvars} coordinates, got {len(vals)}")
        return vals

    def __eq__(self, other):
        return isinstance(other, Chart) and self.coords == other.coords

    def __hash__(self):
        return hash(self.coords)

    def __repr__(self):
        return f"Chart({list(self.coords)})"


class GradedBundle:
    """Strictly positively graded free module with named basis elements."""

    __slots__ = ("degrees", "_info")

    def __init__(self, degrees):
        clean = {}
        for deg in sorted(degrees):
            names = tuple(degrees[deg])
            if deg < 1:
                raise ValueError(f"bundle degrees must be >= 1, got {deg}")
            if names:
                clean[deg] = names
        self.degrees = clean
        info = {}
        order = 0
        for deg, names in clean.items():
            for pos, name in enumerate(names):
                if name in info:
                    raise ValueError(f"duplicate basis name {name!r}")
                info[name] = (deg, order)
                order += 1
        self._info = info

    @property
    def amplitude(self):
        return max(self.degrees, default=0)

    @property
    def names(self):
        return tuple(self._info)

    def rank(self, degree):
        return len(self.degrees.get(degree, ()))

    def total_rank(self):
        return len(self._info)

    def basis(self, degree):
        return self.degrees.get(degree, ())

    def degree_of(self, name):
        return self._info[name][0]

    def order_key(self, name):
        return self._info[name][1]

    def has(self, name):
        return name in self._info

    def select(self, keep):
        """Sub-bundle spanned by the given basis names (canonical order kept)."""
        keep = set(keep)
        unknown = keep - set(self._info)
        if unknown:
            raise ValueError(f"unknown basis names {sorted(unknown)}")
        return GradedBundle(
            {deg: [n for n in names if n in keep] for deg, names in self.degrees.items()}
        )

    def __eq__(self, other):
        return isinstance(other, GradedBundle) and self.degrees == other.degrees

    def __hash__(self):
        return hash(tuple(self.degrees.items()))

    def __repr__(self):
        return f"GradedBundle({{ {', '.join(f'{d}: {list(n)}' for d, n in self.degrees.items())} }})"
