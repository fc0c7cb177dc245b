"""Side-length sets and admissible pair generation.

Two decreasing sets of admissible side lengths drive everything: averages are
kept bounded along rectangles whose sides come from the convergence set
(called `conv` below), and are forced large along rectangles with sides in
the divergence set (`div`).  A `SideSet` materializes finitely many elements
and carries a deterministic extension rule producing ever smaller ones, so
both sets reach down to zero without storing infinitely many numbers.

`generate_pair` builds, deterministically from (n, eps, delta, lam), a
divergence ladder b_1 > ... > b_{2n} together with a convergence set whose
flanking elements satisfy, with at least 2x margin, every inequality that the
construction consumes:

  1. the nested-area chain  b_1 b_2n <= b_2 b_2n-1 <= ... <= b_n b_n+1,
  2. the above-flank chain  b_n/lo_n < ... < b_1/lo_1 < 1/(3n 2^(n-1)),
  3. the two cross-scale distortion families (with top convention 1),
  4. delta > 4n b_n b_n+1,
  5. b_n+2 < b_n+1^2 / (4n),

plus the ratio hypothesis b_k+1/b_k < lam and an exceptional-cover budget
that keeps the deep convergence flank small enough for the cover built later
to be below eps times the spike-region area.

All placements are powers of two, so every floor and every ratio below is
exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Tuple

from .reports import Report
from .scalars import ONE, ZERO, Scalar, ceil_log2_inverse, format_scalar, scalar


# ---------------------------------------------------------------------------
# side sets


@dataclass
class SideSet:
    """Strictly decreasing side lengths in (0, 1] with an extension rule.

    rule "square": next = last^2 * rho (rho <= 1/(8 n^2)); the default,
    with double-exponential decay.  rule "ladder": the dyadic sequence
    1/2, 3/8, 1/4, 3/16, 1/8, ... alternating 2^-k and 3*2^-(k+2), which
    contains a divergence tuple at every dyadic scale.  rule None: a plain
    finite set; gap queries below its bottom use the 0 convention.
    """

    materialized: List[Fraction]
    rule: Optional[str] = "square"
    rho: Fraction = Fraction(1, 32)

    def __post_init__(self):
        vals = [scalar(v) for v in self.materialized]
        if any(not (ZERO < v <= ONE) for v in vals):
            raise ValueError("side lengths must lie in (0, 1]")
        if any(vals[i] <= vals[i + 1] for i in range(len(vals) - 1)):
            raise ValueError("side lengths must be strictly decreasing")
        self.materialized = vals
        self.rho = scalar(self.rho)

    def _next_below(self, last: Fraction) -> Fraction:
        if self.rule == "square":
            nxt = last * last * self.rho
        elif self.rule == "ladder":
            # alternate 2^-k -> 3*2^-(k+2) -> 2^-(k+1) -> ...
            if last.numerator == 3:
                nxt = Fraction(4, 3) * last / 2
            else:
                nxt = Fraction(3, 4) * last / 2
        else:
            raise ValueError("side set has no extension rule")
        if not nxt < last:
            raise AssertionError("extension rule failed to decrease")
        return nxt

    def materialize_below(self, threshold: Fraction) -> None:
        """Extend until some element lies strictly below the threshold."""
        if threshold <= 0:
            raise ValueError("threshold must be positive")
        if self.rule is None:
            return
        while self.materialized[-1] >= threshold:
            self.materialized.append(self._next_below(self.materialized[-1]))

    def elements(self) -> Tuple[Fraction, ...]:
        return tuple(self.materialized)

    def prefix(self, count: int) -> Tuple[Fraction, ...]:
        while len(self.materialized) < count:
            self.materialized.append(self._next_below(self.materialized[-1]))
        return tuple(self.materialized[:count])

    def to_json(self) -> dict:
        out = {"materialized": [format_scalar(v) for v in self.materialized]}
        if self.rule == "square":
            out["extension"] = {"rho": format_scalar(self.rho)}
        elif self.rule == "ladder":
            out["extension"] = {"kind": "ladder"}
        else:
            out["extension"] = None
        return out

    @staticmethod
    def from_json(data: dict) -> "SideSet":
        ext = data.get("extension")
        if ext is None:
            return SideSet(data["materialized"], rule=None)
        if "rho" in ext:
            return SideSet(data["materialized"], rule="square", rho=ext["rho"])
        return SideSet(data["materialized"], rule=ext["kind"])


@dataclass(frozen=True)
class GapProfile:
    """Nearest neighbors of x in a side set, and the two gap ratios."""

    x: Fraction
    below: Fraction        # sup of elements strictly below x (0 if none found)
    above: Fraction        # inf of elements strictly above x (1 by convention)
    ratio_below: Fraction  # below / x
    ratio_above: Fraction  # x / above

    @property
    def worst(self) -> Fraction:
        return max(self.ratio_below, self.ratio_above)


def gap(sides: SideSet, x: Fraction) -> GapProfile:
    """Nearest elements of the set strictly below and above x.

    Strict inequalities on both sides: if x itself is an element, its strict
    neighbors are returned.  When the set has an extension rule, elements are
    materialized until one lies below x; a rule-free set that bottoms out
    above x reports below = 0 with ratio 0.  When no element lies above x the
    convention above = 1 applies.
    """
    x = scalar(x)
    if not ZERO < x <= ONE:
        raise ValueError("gap query outside (0, 1]")
    if sides.rule is not None:
        sides.materialize_below(x)
    below = ZERO
    above = None
    for v in sides.materialized:
        if v < x:
            below = v
            break
    for v in reversed(sides.materialized):
        if v > x:
            above = v
            break
    if above is None:
        above = ONE
    ratio_below = below / x if below > 0 else ZERO
    ratio_above = x / above
    return GapProfile(x, below, above, ratio_below, ratio_above)


# ---------------------------------------------------------------------------
# divergence ladders


@dataclass
class SideSequence:
    """The 2n decreasing divergence side lengths used by one construction."""

    n: int
    values: List[Fraction]
    lam: Fraction

    def __post_init__(self):
        self.values = [scalar(v) for v in self.values]
        self.lam = scalar(self.lam)
        if self.n < 2:
            raise ValueError("need n >= 2; n = 1 degenerates")
        if len(self.values) != 2 * self.n:
            raise ValueError("expected 2n side lengths")
        if any(self.values[i] <= self.values[i + 1]
               for i in range(2 * self.n - 1)):
            raise ValueError("side lengths must be strictly decreasing")
        if not ZERO < self.lam < ONE:
            raise ValueError("ratio cap must lie in (0, 1)")

    def b(self, k: int) -> Fraction:
        """1-based access b_1 > ... > b_2n."""
        return self.values[k - 1]

    def pair_area(self, j: int) -> Fraction:
        """Area b_j * b_(2n+1-j) of the j-th nested rectangle, j = 1..n."""
        return self.b(j) * self.b(2 * self.n + 1 - j)

    def to_json(self) -> dict:
        return {"n": self.n,
                "lambda": format_scalar(self.lam),
                "b": [format_scalar(v) for v in self.values]}


# ---------------------------------------------------------------------------
# validation


def validate_pair(conv: SideSet, seq: SideSequence, eps, delta) -> Report:
    """Exact per-condition report for a (convergence set, ladder) pair.

    Failures are report entries, never exceptions.  Flanks are taken from
    `gap` on the convergence set; the top convention sets the flank below
    the (absent) 0-th element to 1.
    """
    eps, delta = scalar(eps), scalar(delta)
    n, lam = seq.n, seq.lam
    rep = Report("pair-conditions")
    # condition 1: nested areas do not decrease
    for j in range(1, n):
        rep.check(f"area_chain_{j}", seq.pair_area(j), "<=", seq.pair_area(j + 1))
    # ratio hypothesis for the area sandwich
    for k in range(1, 2 * n):
        rep.check(f"ratio_cap_{k}", seq.b(k + 1) / seq.b(k), "<", lam)
    # condition 2: above-flank chain
    bound = Fraction(1, 3 * n * 2 ** (n - 1))
    profiles = [gap(conv, seq.b(k)) for k in range(1, 2 * n + 1)]
    prev = bound
    for r in range(1, n + 1):
        ratio = profiles[r - 1].ratio_above
        rep.check(f"above_flank_{r}", ratio, "<", prev)
        prev = ratio
    # condition 3: the two distortion families, k = 1..n, top flank = 1
    for k in range(1, n + 1):
        below_nk = ONE if k == n else profiles[n - k - 1].below
        lhs1 = profiles[n + k - 1].ratio_below
        if below_nk > 0:
            rep.check(f"distortion_below_{k}", lhs1,
                      "<=", lam * seq.b(n - k + 1) / below_nk)
        else:
            rep.check(f"distortion_below_{k}", lhs1, "<=", ONE,
                      note="vacuous: no flank below the early element")
        lhs2 = profiles[n + k - 1].ratio_above
        rhs2 = lam * profiles[n - k].below / seq.b(n - k + 1)
        rep.check(f"distortion_above_{k}", lhs2, "<=", rhs2)
    # condition 4
    rep.check("delta_floor", delta, ">", 4 * n * seq.b(n) * seq.b(n + 1))
    # condition 5
    rep.check("deep_drop", seq.b(n + 2), "<", seq.b(n + 1) ** 2 / (4 * n))
    rep.record("n", n)
    rep.record("lambda", format_scalar(lam))
    return rep


# ---------------------------------------------------------------------------
# generation


def _exp2(e: int) -> Fraction:
    return Fraction(1, 1 << e) if e >= 0 else Fraction(1 << (-e))


def generate_pair(n: int, eps, delta, lam) -> Tuple[SideSet, SideSequence]:
    """Deterministic admissible pair with every condition at >= 2x margin.

    All elements are powers of two placed by exponent bookkeeping:

      above-flanks  c_0 = 1 and c_r just below b_r (r = 1..n), so the
      convergence set is dense where the above-flank chain needs it and has
      one deep element below the whole ladder where the exceptional-cover
      budget needs tiny flanks-from-below.

    The returned pair always satisfies `validate_pair` with all PASS; the
    construction built on it keeps its exceptional cover below eps times the
    spike-region area.
    """
    eps, delta, lam = scalar(eps), scalar(delta), scalar(lam)
    if n < 2:
        raise ValueError("need n >= 2")
    if not (ZERO < eps < ONE and ZERO < delta < ONE and ZERO < lam < ONE):
        raise ValueError("eps, delta, lam must lie in (0, 1)")
    Llam = ceil_log2_inverse(lam)          # 2^-Llam <= lam
    L4n = (4 * n - 1).bit_length()         # 2^L4n >= 4n
    Ldelta = ceil_log2_inverse(delta)
    # condition 2 base: 2^-u1 <= bound/2
    bound2 = Fraction(1, 3 * n * 2 ** (n - 1))
    u = [0] * (2 * n + 1)                  # u[r] = E(b_r) - E(c_(r-1))
    s = [0] * (n + 1)                      # s[r] = E(c_r) - E(b_r)
    u1 = max(ceil_log2_inverse(bound2 / 2), Llam + 1)
    for r in range(1, n + 1):
        u[r] = u1 + (r - 1)
        s[r] = r
    Eb = [0] * (2 * n + 1)                 # exponents of b_1..b_2n
    Ec = [0] * (n + 1)                     # exponents of c_0..c_n
    Ec[0] = 0                              # c_0 = 1
    for r in range(1, n + 1):
        Eb[r] = Ec[r - 1] + u[r]
        Ec[r] = Eb[r] + s[r]
    # b_(n+1): cross-scale family (k = 1), delta floor, ratio cap
    e = max(Ec[n] + s[n] + Llam + 1,
            Ldelta + L4n + 1 - Eb[n],
            Eb[n] + Llam + 1)
    Eb[n + 1] = e
    # b_(n+k), k = 2..n
    for k in range(2, n + 1):
        cands = [Ec[n] + s[n - k + 1] + Llam + 1,          # distortion above
                 Eb[n + k - 1] + (Eb[n - k + 2] - Eb[n - k + 1]),  # areas
                 Eb[n + k - 1] + Llam + 1]                  # ratio cap
        if k == 2:
            cands.append(2 * Eb[n + 1] + L4n + 1)           # deep drop
        Eb[n + k] = max(cands)
    values = [_exp2(Eb[r]) for r in range(1, 2 * n + 1)]
    seq = SideSequence(n, values, lam)
    # deep convergence flank below the whole ladder
    q = []
    for j in range(1, n):
        ratio = seq.pair_area(j + 1) / seq.pair_area(j)
        q.append(ratio.numerator // ratio.denominator)
    qprod = 1
    for v in q:
        qprod *= v
    spike_area = _spike_area(seq, q)
    deep_cands = [2 * Eb[2 * n] - Ec[n] + 1]               # flank-ratio descent
    for k in range(1, n):
        deep_cands.append(Eb[n + k] + u[n - k + 1] + Llam + 1)
    deep_cands.append(Eb[2 * n] + Eb[1] + Llam + 1)        # k = n, top flank 1
    budget = eps * spike_area / (8 * (n + 2) * qprod)      # cover budget
    deep_cands.append(ceil_log2_inverse(min(budget, ONE)))
    Estar = max(deep_cands)
    cstar = _exp2(Estar)
    conv_vals = [ONE] + [_exp2(Ec[r]) for r in range(1, n + 1)] + [cstar]
    rho_cap = Fraction(1, 8 * n * n)
    rho = _exp2(ceil_log2_inverse(rho_cap))
    conv = SideSet(conv_vals, rule="square", rho=rho)
    return conv, seq


def _spike_area(seq: SideSequence, q: List[int]) -> Fraction:
    """Exact area of the spike region (union of all levels below the top).

    Levels j = 1..n-1 contribute their fringe above the next level's height,
    and level n-1 contributes its full tiles:
      area = q_(n-1) |B_(n-1)| + sum_(j=1..n-2) q_(n-1)...q_j
             * b_(2n+1-j) (b_j - b_(j+1)).
    """
    n = seq.n
    total = q[n - 2] * seq.pair_area(n - 1)
    prod = q[n - 2]
    for j in range(n - 2, 0, -1):
        prod *= q[j - 1]
        total += prod * seq.b(2 * n + 1 - j) * (seq.b(j) - seq.b(j + 1))
    return total


def staircase_area(seq: SideSequence, q: List[int]) -> Fraction:
    """Exact area of the full staircase (all levels including the top):
    |B_n| + sum_(j=1..n-1) q_(n-1)...q_j * b_(2n+1-j)(b_j - b_(j+1))."""
    n = seq.n
    total = seq.pair_area(n)
    prod = 1
    for j in range(n - 1, 0, -1):
        prod *= q[j - 1]
        total += prod * seq.b(2 * n + 1 - j) * (seq.b(j) - seq.b(j + 1))
    return total
