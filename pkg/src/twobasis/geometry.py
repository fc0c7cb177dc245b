"""Exact axis-parallel rectangle geometry on the unit square.

Conventions
-----------
The first coordinate (x) is the vertical one (height) and the second (y) is
the horizontal one (width); a `Rect` is the product [x0, x1] x [y0, y1].
Rectangles are stored by endpoints but treated as half-open: zero-area
intersections are empty, and a point belongs to the cell with
x0 <= x < x1 and y0 <= y < y1.  Measure-zero boundaries never matter for any
of the verified bounds.

Everything here is exact rational arithmetic.  Union areas are computed by a
vertical slab sweep after rescaling all coordinates to integers over a common
denominator, which keeps the inner loop on machine-fast int comparisons while
giving exactly the same result as a pure Fraction sweep.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import gcd
from typing import Iterable, Optional, Sequence

from .scalars import ONE, ZERO, Scalar, format_scalar, scalar


@dataclass(frozen=True)
class Rect:
    x0: Fraction
    x1: Fraction
    y0: Fraction
    y1: Fraction

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError(f"degenerate rectangle {self}")

    @staticmethod
    def make(x0, x1, y0, y1) -> "Rect":
        return Rect(scalar(x0), scalar(x1), scalar(y0), scalar(y1))

    @property
    def height(self) -> Fraction:
        return self.x1 - self.x0

    @property
    def width(self) -> Fraction:
        return self.y1 - self.y0

    @property
    def area(self) -> Fraction:
        return self.height * self.width

    def diam_sq(self) -> Fraction:
        return self.height ** 2 + self.width ** 2

    def contains_point(self, x: Fraction, y: Fraction) -> bool:
        return self.x0 <= x < self.x1 and self.y0 <= y < self.y1

    def contains_rect(self, other: "Rect") -> bool:
        return (self.x0 <= other.x0 and other.x1 <= self.x1
                and self.y0 <= other.y0 and other.y1 <= self.y1)

    def translated(self, dx: Fraction, dy: Fraction) -> "Rect":
        return Rect(self.x0 + dx, self.x1 + dx, self.y0 + dy, self.y1 + dy)

    def to_json(self) -> list:
        return [format_scalar(v) for v in (self.x0, self.x1, self.y0, self.y1)]

    @staticmethod
    def from_json(data: Sequence[str]) -> "Rect":
        return Rect.make(*data)


@dataclass(frozen=True)
class PointZ:
    x: Fraction
    y: Fraction

    def __post_init__(self):
        if not (ZERO <= self.x <= ONE and ZERO <= self.y <= ONE):
            raise ValueError("point outside the unit square")

    def to_json(self) -> list:
        return [format_scalar(self.x), format_scalar(self.y)]


def intersect(a: Rect, b: Rect) -> Optional[Rect]:
    """Intersection rectangle, or None when the overlap has zero area."""
    x0 = max(a.x0, b.x0)
    x1 = min(a.x1, b.x1)
    y0 = max(a.y0, b.y0)
    y1 = min(a.y1, b.y1)
    if x0 < x1 and y0 < y1:
        return Rect(x0, x1, y0, y1)
    return None


def _integerize(rects: Sequence[Rect]):
    """Rescale all coordinates to integers over a common denominator.

    Returns (scaled quadruples, denominator).  Exact: every coordinate p/q is
    mapped to p * (L // q) with L the lcm of all denominators.
    """
    L = 1
    for r in rects:
        for v in (r.x0, r.x1, r.y0, r.y1):
            d = v.denominator
            L = L // gcd(L, d) * d
    out = []
    for r in rects:
        out.append((r.x0.numerator * (L // r.x0.denominator),
                    r.x1.numerator * (L // r.x1.denominator),
                    r.y0.numerator * (L // r.y0.denominator),
                    r.y1.numerator * (L // r.y1.denominator)))
    return out, L


def _union_area_int(quads) -> int:
    """Union area of integer rectangles by vertical slab sweep."""
    xs = sorted({q[0] for q in quads} | {q[1] for q in quads})
    if len(xs) < 2:
        return 0
    # Bucket rectangles into the slabs they span.
    import bisect
    slabs = [[] for _ in range(len(xs) - 1)]
    for (x0, x1, y0, y1) in quads:
        i = bisect.bisect_left(xs, x0)
        j = bisect.bisect_left(xs, x1)
        for s in range(i, j):
            slabs[s].append((y0, y1))
    total = 0
    for s, ivals in enumerate(slabs):
        if not ivals:
            continue
        h = xs[s + 1] - xs[s]
        ivals.sort()
        covered = 0
        cur0, cur1 = ivals[0]
        for (a, b) in ivals[1:]:
            if a > cur1:
                covered += cur1 - cur0
                cur0, cur1 = a, b
            elif b > cur1:
                cur1 = b
        covered += cur1 - cur0
        total += h * covered
    return total


class RectUnion:
    """A finite union of rectangles with exact Lebesgue measure.

    The stored cells may overlap; `area` and the set operations are
    decomposition-invariant.  `canonical()` returns the vertical slab
    decomposition sorted lexicographically, a deterministic normal form:
    two unions with equal point sets canonicalize identically.
    """

    __slots__ = ("cells",)

    def __init__(self, cells: Iterable[Rect] = ()):  # raw cells, any overlap
        self.cells = tuple(cells)

    def __iter__(self):
        return iter(self.cells)

    def __len__(self):
        return len(self.cells)

    def __bool__(self):
        return bool(self.cells)

    @property
    def area(self) -> Fraction:
        return area_union(self)

    def contains_point(self, x: Fraction, y: Fraction) -> bool:
        return any(c.contains_point(x, y) for c in self.cells)

    def translated(self, dx: Fraction, dy: Fraction) -> "RectUnion":
        return RectUnion(c.translated(dx, dy) for c in self.cells)

    def canonical(self) -> "RectUnion":
        if not self.cells:
            return RectUnion()
        xs = sorted({c.x0 for c in self.cells} | {c.x1 for c in self.cells})
        out = []
        for i in range(len(xs) - 1):
            lo, hi = xs[i], xs[i + 1]
            ivals = sorted((c.y0, c.y1) for c in self.cells
                           if c.x0 <= lo and hi <= c.x1)
            merged = []
            for (a, b) in ivals:
                if merged and a <= merged[-1][1]:
                    if b > merged[-1][1]:
                        merged[-1][1] = b
                else:
                    merged.append([a, b])
            for a, b in merged:
                out.append(Rect(lo, hi, a, b))
        # Merge x-adjacent slabs that carry identical y-intervals.
        out = _merge_slabs(out)
        out.sort(key=lambda r: (r.x0, r.x1, r.y0, r.y1))
        return RectUnion(out)

    def union(self, other: "RectUnion") -> "RectUnion":
        return RectUnion(self.cells + other.cells)

    def intersection(self, other: "RectUnion") -> "RectUnion":
        out = []
        for a in self.cells:
            for b in other.cells:
                r = intersect(a, b)
                if r is not None:
                    out.append(r)
        return RectUnion(out)

    def difference(self, other: "RectUnion") -> "RectUnion":
        """Exact set difference, returned as disjoint cells."""
        if not other.cells:
            return self.canonical()
        base = self.canonical()
        out = []
        for cell in base.cells:
            pieces = [cell]
            for cut in other.cells:
                nxt = []
                for p in pieces:
                    nxt.extend(_rect_minus(p, cut))
                pieces = nxt
                if not pieces:
                    break
            out.extend(pieces)
        return RectUnion(out)

    def to_json(self) -> list:
        return [c.to_json() for c in self.cells]

    @staticmethod
    def from_json(data) -> "RectUnion":
        return RectUnion(Rect.from_json(item) for item in data)


def _merge_slabs(cells):
    """Fuse x-adjacent slabs carrying identical y-interval sets."""
    by_slab = {}
    for c in cells:
        by_slab.setdefault((c.x0, c.x1), []).append((c.y0, c.y1))
    slabs = sorted((x0, x1, tuple(sorted(ys))) for (x0, x1), ys in by_slab.items())
    out = []
    i = 0
    while i < len(slabs):
        x0, x1, ys = slabs[i]
        j = i + 1
        while j < len(slabs) and slabs[j][0] == x1 and slabs[j][2] == ys:
            x1 = slabs[j][1]
            j += 1
        for (a, b) in ys:
            out.append(Rect(x0, x1, a, b))
        i = j
    return out


def _rect_minus(a: Rect, b: Rect):
    """a \\ b as up to four disjoint rectangles."""
    r = intersect(a, b)
    if r is None:
        return [a]
    out = []
    if a.x0 < r.x0:
        out.append(Rect(a.x0, r.x0, a.y0, a.y1))
    if r.x1 < a.x1:
        out.append(Rect(r.x1, a.x1, a.y0, a.y1))
    if a.y0 < r.y0:
        out.append(Rect(r.x0, r.x1, a.y0, r.y0))
    if r.y1 < a.y1:
        out.append(Rect(r.x0, r.x1, r.y1, a.y1))
    return out


def area_union(u: RectUnion) -> Fraction:
    """Exact measure of the union, independent of the cell decomposition."""
    if not u.cells:
        return ZERO
    quads, L = _integerize(u.cells)
    return Fraction(_union_area_int(quads), L * L)


class StepFunction2D:
    """Finitely many disjoint weighted rectangles.

    The value at a point is the weight of the unique containing cell, else 0.
    The terms must have pairwise disjoint interiors; `combine` resolves
    overlapping sums into disjoint cells by coordinate compression.
    """

    __slots__ = ("terms",)

    def __init__(self, terms: Iterable[tuple] = ()):  # (Rect, weight)
        self.terms = tuple((r, scalar(w)) for (r, w) in terms)

    def __len__(self):
        return len(self.terms)

    @property
    def support(self) -> RectUnion:
        return RectUnion(r for (r, w) in self.terms if w != 0)

    def value_at(self, x: Fraction, y: Fraction) -> Fraction:
        for r, w in self.terms:
            if r.contains_point(x, y):
                return w
        return ZERO

    def l1_norm(self) -> Fraction:
        return sum((abs(w) * r.area for r, w in self.terms), ZERO)

    def sup_norm(self) -> Fraction:
        return max((abs(w) for _, w in self.terms), default=ZERO)

    def total_integral(self) -> Fraction:
        return sum((w * r.area for r, w in self.terms), ZERO)

    def scaled(self, factor: Fraction) -> "StepFunction2D":
        factor = scalar(factor)
        return StepFunction2D((r, w * factor) for r, w in self.terms)

    def abs(self) -> "StepFunction2D":
        return StepFunction2D((r, abs(w)) for r, w in self.terms)

    def translated(self, dx: Fraction, dy: Fraction) -> "StepFunction2D":
        return StepFunction2D((r.translated(dx, dy), w) for r, w in self.terms)

    @staticmethod
    def combine(parts: Sequence["StepFunction2D"]) -> "StepFunction2D":
        """Pointwise sum, re-expressed over disjoint cells.

        Overlapping cells are split on the compressed coordinate grid of the
        overlapping terms only, so stacking translates with rare collisions
        stays near-linear.
        """
        terms = [t for p in parts for t in p.terms]
        if not terms:
            return StepFunction2D()
        # Group terms into overlap clusters; disjoint clusters pass through.
        n = len(terms)
        parent = list(range(n))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for i in range(n):
            for j in range(i + 1, n):
                if intersect(terms[i][0], terms[j][0]) is not None:
                    ri, rj = find(i), find(j)
                    if ri != rj:
                        parent[ri] = rj
        clusters = {}
        for i in range(n):
            clusters.setdefault(find(i), []).append(terms[i])
        out = []
        for group in clusters.values():
            if len(group) == 1:
                out.append(group[0])
                continue
            xs = sorted({v for r, _ in group for v in (r.x0, r.x1)})
            ys = sorted({v for r, _ in group for v in (r.y0, r.y1)})
            for i in range(len(xs) - 1):
                for j in range(len(ys) - 1):
                    cx = Rect(xs[i], xs[i + 1], ys[j], ys[j + 1])
                    w = ZERO
                    hit = False
                    for r, wt in group:
                        if (r.x0 <= cx.x0 and cx.x1 <= r.x1
                                and r.y0 <= cx.y0 and cx.y1 <= r.y1):
                            w += wt
                            hit = True
                    if hit and w != 0:
                        out.append((cx, w))
        return StepFunction2D(out)

    def to_json(self) -> list:
        return [{"rect": r.to_json(), "weight": format_scalar(w)}
                for r, w in self.terms]


def integral(f: StepFunction2D, r: Rect) -> Fraction:
    """Exact integral of f over r."""
    total = ZERO
    rx0, rx1, ry0, ry1 = r.x0, r.x1, r.y0, r.y1
    for cell, w in f.terms:
        x0 = cell.x0 if cell.x0 > rx0 else rx0
        x1 = cell.x1 if cell.x1 < rx1 else rx1
        if x0 >= x1:
            continue
        y0 = cell.y0 if cell.y0 > ry0 else ry0
        y1 = cell.y1 if cell.y1 < ry1 else ry1
        if y0 >= y1:
            continue
        total += w * (x1 - x0) * (y1 - y0)
    return total


def average(f: StepFunction2D, r: Rect) -> Fraction:
    """Integral average of f over r; r must have positive area."""
    a = r.area
    if a <= 0:
        raise ValueError("zero-area rectangle")
    return integral(f, r) / a


class NoAdmissibleRectangle(ValueError):
    pass


def maximal_average(f: StepFunction2D, z: PointZ, sides: Sequence[Fraction],
                    diam_cap: Fraction, area_floor: Fraction):
    """Exact supremum of |average(f, A)| over positioned rectangles.

    A ranges over [u, u+x] x [v, v+y] inside the unit square with side
    lengths x, y drawn from `sides`, containing z, with diameter at most
    diam_cap and area at least area_floor.  For fixed sides the integral is
    piecewise bilinear in the position (u, v), with breakpoints exactly where
    a rectangle edge meets a support-cell edge, so the supremum is attained
    on the candidate grid {cell edges, cell edges - side, z, z - side}
    intersected with the feasible position box; those candidates are
    evaluated exhaustively.

    Returns (value, witness Rect).
    """
    sides = sorted(set(scalar(s) for s in sides), reverse=True)
    if not sides:
        raise NoAdmissibleRectangle("no admissible rectangle")
    cap_sq = scalar(diam_cap) ** 2
    floor_ = scalar(area_floor)
    xedges = sorted({v for r, _ in f.terms for v in (r.x0, r.x1)})
    yedges = sorted({v for r, _ in f.terms for v in (r.y0, r.y1)})
    best = None
    witness = None
    for x in sides:
        if x > ONE:
            continue
        for y in sides:
            if y > ONE or x * x + y * y > cap_sq or x * y < floor_:
                continue
            ulo, uhi = max(ZERO, z.x - x), min(z.x, ONE - x)
            vlo, vhi = max(ZERO, z.y - y), min(z.y, ONE - y)
            if ulo > uhi or vlo > vhi:
                continue
            ucands = {ulo, uhi}
            for e in xedges:
                for cand in (e, e - x):
                    if ulo <= cand <= uhi:
                        ucands.add(cand)
            vcands = {vlo, vhi}
            for e in yedges:
                for cand in (e, e - y):
                    if vlo <= cand <= vhi:
                        vcands.add(cand)
            area = x * y
            for u in ucands:
                for v in vcands:
                    rect = Rect(u, u + x, v, v + y)
                    val = abs(integral(f, rect)) / area
                    if best is None or val > best:
                        best = val
                        witness = rect
    if best is None:
        raise NoAdmissibleRectangle("no admissible rectangle")
    return best, witness
