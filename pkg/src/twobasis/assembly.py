"""Recursive exhaustion of the unit square and the divergence series.

One translated construction certifies a good set of measure above the
coverage threshold chi; the residual region is tiled into squares, each of
which receives a fresh, smaller construction (drawn from the same side-set
schemas, never rescaled), and the good sets accumulate.  The active area
shrinks by the factor (1 - chi) per stage, so finitely many stages leave
less than any prescribed epsilon uncovered.

The series front end stacks such stage functions with weights 1/k^2 and
demonstrates, at sampled points of the intersection of the good sets, the
divergence bound along divergence-sided witnesses next to boundedness of
the convergence-sided maximal averages.

Stage-0 shifts snap to a prime grid (with microscopic jitter for the
vertical-gap property), which aligns the translated cell boundaries with
the later tiling cuts and keeps the tiling waste within its budget.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import ceil
from typing import Dict, List, Optional, Sequence, Set, Tuple

from .construction import (Construction, StairIndex, translation_construction,
                           translation_pair)
from .geometry import (Rect, RectUnion, StepFunction2D, area_union, integral,
                       maximal_average)
from .reports import Report
from .rng import derive_rng, dyadic
from .scalars import ONE, ZERO, ceil_log2_inverse, format_scalar, scalar
from .sidesets import SideSequence, SideSet
from .translation import (NoShiftFamilyFound, ShiftFamily, TranslatedAssembly,
                          assemble_translates, chi_threshold,
                          default_shift_count, find_shifts,
                          support_edge_levels, translate_step,
                          verify_random_translation, witness_for_point)

STAGE_GRID = 43     # prime shift grid; никогда not a divisor pattern of the sides


# ---------------------------------------------------------------------------
# greedy square tiling


def _squarify(rect: Rect, cap: Fraction, floor: Fraction,
              out: List[Rect]) -> Fraction:
    """Greedy decomposition of a rectangle into squares.

    Repeatedly slices off the largest stack of side = min(height, width,
    cap) squares; pieces below the floor are abandoned and their area
    returned as waste.  Terminates because each step strictly shrinks the
    short side or consumes the rectangle.
    """
    waste = ZERO
    stack = [rect]
    while stack:
        r = stack.pop()
        h, w = r.height, r.width
        side = min(h, w)
        if side < floor:
            waste += r.area
            continue
        side = min(side, cap)
        if h >= w:
            count = int(h / side)
            for i in range(count):
                out.append(Rect(r.x0 + i * side, r.x0 + (i + 1) * side,
                                r.y0, r.y0 + side))
            if w > side:
                stack.append(Rect(r.x0, r.x0 + count * side,
                                  r.y0 + side, r.y1))
            if r.x0 + count * side < r.x1:
                stack.append(Rect(r.x0 + count * side, r.x1, r.y0, r.y1))
        else:
            count = int(w / side)
            for j in range(count):
                out.append(Rect(r.x0, r.x0 + side,
                                r.y0 + j * side, r.y0 + (j + 1) * side))
            if h > side:
                stack.append(Rect(r.x0 + side, r.x1,
                                  r.y0, r.y0 + count * side))
            if r.y0 + count * side < r.y1:
                stack.append(Rect(r.x0, r.x1, r.y0 + count * side, r.y1))
    return waste


def tile_residual(region: RectUnion, eps_k: Fraction,
                  side_cap: Fraction = ONE,
                  floor_limit: Fraction = Fraction(1, 1 << 10)
                  ) -> Tuple[List[Rect], Fraction]:
    """Disjoint squares inside the region leaving waste below eps_k.

    The region is brought to canonical slab form (disjoint cells) and each
    cell is squarified greedily with sides at most side_cap; the abandoned
    area floor is halved until the waste budget is met.  Returns (squares,
    exact waste area).
    """
    eps_k = scalar(eps_k)
    cells = region.canonical().cells
    floor = side_cap
    while True:
        squares: List[Rect] = []
        waste = ZERO
        for cell in cells:
            waste += _squarify(cell, side_cap, floor, squares)
        if waste < eps_k:
            return squares, waste
        if floor < floor_limit:
            # честный partial result: caller sees the oversized waste
            return squares, waste
        floor /= 2


def complement_cells(cells: Sequence[Rect], box: Rect) -> RectUnion:
    """box minus the union of cells, as disjoint slab cells."""
    return RectUnion([box]).difference(RectUnion(cells))


# ---------------------------------------------------------------------------
# sub-constructions at dyadic scales


def scaled_construction(scale_exp: int, tau: Optional[Fraction] = None) -> Construction:
    """Fresh construction whose ladder tuple sits near the scale 2^-k.

    The side-set schemas contain a divergence tuple at every dyadic scale
    and the convergence flanks sit far below all of them, so sub-squares of
    any size receive genuine (never rescaled) side lengths.
    """
    if tau is None:
        tau = Fraction(1, 1 << max(21, scale_exp + 18))
    return translation_construction(scale_exp, tau)


def scale_for_side(side: Fraction) -> int:
    """Largest ladder scale 2^-k at most side/2 (so one copy fits)."""
    return ceil_log2_inverse(side / 2)


# ---------------------------------------------------------------------------
# exhaustion


@dataclass
class StageSquare:
    box: Rect
    scale_exp: int
    shifts: ShiftFamily
    good_area: Fraction
    excluded_area: Fraction
    scaled_step: StepFunction2D   # |good| * stacked, in global coordinates


@dataclass
class Stage:
    index: int
    squares: List[StageSquare]
    active_area: Fraction      # |X_k|
    good_area: Fraction        # |Q_k*|
    excluded_area: Fraction    # |D_k*|
    waste: Fraction
    residual_cells: RectUnion  # Y_(k+1) material for the next stage


@dataclass
class ExhaustionResult:
    stages: List[Stage]
    chi: Fraction
    stop_stage: int
    total_good: Fraction
    series_term: StepFunction2D
    report: Report

    def good_total(self) -> Fraction:
        return self.total_good


def _offset_step(step: StepFunction2D, dx: Fraction, dy: Fraction) -> StepFunction2D:
    return StepFunction2D(((Rect(c.x0 + dx, c.x1 + dx, c.y0 + dy, c.y1 + dy), w)
                           for c, w in step.terms))


def _stage_zero(eps_cfg, delta, seed: int, scale_exp: int,
                occupied: Set[Fraction], chi: Fraction, budget: int,
                grid: Optional[int] = STAGE_GRID) -> Tuple[Construction, ShiftFamily, TranslatedAssembly]:
    cfg = scaled_construction(scale_exp)
    fam, _ = find_shifts(cfg, chi, budget, seed, occupied_edges=occupied,
                         grid=grid)
    asm = assemble_translates(cfg, fam)
    return cfg, fam, asm


def exhaust(eps, delta, n: int, max_stages: int, seed: int,
            scale_exp: int = 2, shift_budget: int = 10000) -> ExhaustionResult:
    """Stage recursion: translate, certify, tile the residue, recurse.

    Stops at the least k with (1 - chi)^k < eps/2 (or at max_stages with a
    partial report).  Exact per-stage inequalities:
      |X_(k+1)| <= |Y_(k+1)| = |X_k| - |Q_k*| - |D_k*| < (1 - chi) |X_k|,
    and on the stop stage, total good area > 1 - eps.
    """
    eps, delta = scalar(eps), scalar(delta)
    if n != 2:
        raise ValueError("desk-scale exhaustion runs the depth-2 family")
    chi = chi_threshold(Fraction(1, 20))
    rep = Report("exhaustion")
    rep.check("chi_positive", chi, ">", ZERO)
    # stop rule
    stop = 0
    power = ONE
    while not power < eps / 2:
        power *= (1 - chi)
        stop += 1
        if stop > 64:
            raise AssertionError("stop rule did not terminate")
    rep.record("stop_stage", stop)
    rep.record("chi", format_scalar(chi))
    stages: List[Stage] = []
    occupied: Set[Fraction] = set()
    total_good = ZERO
    parts: List[StepFunction2D] = []
    eps_sum = ZERO
    x_area = ONE
    residual = None
    for k in range(min(stop, max_stages)):
        eps_k = eps / (1 << (k + 3))
        if k == 0:
            cfg0, fam0, asm0 = _stage_zero(Fraction(1, 20), delta, seed,
                                           scale_exp, occupied, chi,
                                           shift_budget)
            for s in fam0.shifts:
                occupied |= support_edge_levels(cfg0, s, fam0.box)
            good = asm0.good_area
            excl = area_union(asm0.excluded)
            sq = StageSquare(Rect(ZERO, ONE, ZERO, ONE), scale_exp, fam0,
                             good, excl, asm0.stacked.scaled(good))
            obstacles = list(asm0.covered.cells) + list(asm0.excluded.cells)
            residual = complement_cells(obstacles, Rect(ZERO, ONE, ZERO, ONE))
            stage = Stage(0, [sq], ONE, good, excl, ZERO, residual)
            rep.check("stage0_good_vs_chi", good, ">=", chi)
        else:
            prev_min = min((s.box.height for s in stages[-1].squares), default=ONE)
            squares, waste = tile_residual(stages[-1].residual_cells, eps_k,
                                           side_cap=prev_min)
            rep.check(f"stage{k}_waste", waste, "<", eps_k)
            items: List[StageSquare] = []
            good = ZERO
            excl = ZERO
            next_cells: List[Rect] = []
            for i, box in enumerate(squares):
                item = _stage_square(box, chi, seed, k, i, occupied,
                                     shift_budget)
                if item is None:
                    waste += box.area
                    continue
                items.append(item)
                good += item.good_area
                excl += item.excluded_area
                for s in item.shifts.shifts:
                    occupied |= {box.y0 + e for e in
                                 support_edge_levels(
                                     scaled_construction(item.scale_exp),
                                     s, item.shifts.box)}
                next_cells.extend(_square_residual(item, box))
            x_area_k = sum((it.box.area for it in items), ZERO)
            stage = Stage(k, items, x_area_k, good, excl, waste,
                          RectUnion(next_cells))
            rep.check(f"stage{k}_good_vs_chi", good, ">", chi * x_area_k)
        stages.append(stage)
        total_good += stage.good_area
        parts.extend(sq.scaled_step for sq in stage.squares)
        eps_sum += eps_k
        # contraction: |X_(k+1)| <= |Y_(k+1)| < (1 - chi) |X_k|
        y_next = stage.active_area - stage.good_area - stage.excluded_area
        rep.check(f"stage{k}_contraction", y_next, "<",
                  (1 - chi) * stage.active_area)
        x_area = y_next
    rep.check("final_coverage", total_good, ">", 1 - eps,
              note=f"{len(stages)} stages built, stop rule at {stop}")
    series_term = StepFunction2D([t for p in parts for t in p.terms])
    rep.record("total_good", format_scalar(total_good))
    rep.record("stages_built", len(stages))
    return ExhaustionResult(stages, chi, stop, total_good, series_term, rep)


def _stage_square(box: Rect, chi: Fraction, seed: int, stage: int, index: int,
                  occupied: Set[Fraction], budget: int) -> Optional[StageSquare]:
    """Fresh construction and shift family inside one tiling square."""
    side = box.height
    k = scale_for_side(side)
    if k > 14:
        return None      # below the supported schema window
    cfg = scaled_construction(k)
    local_occ = {e - box.y0 for e in occupied
                 if box.y0 <= e <= box.y0 + side}
    try:
        fam, _ = find_shifts(cfg, chi, budget, derive_seed(seed, stage, index),
                             box=side, occupied_edges=local_occ)
    except NoShiftFamilyFound:
        return None
    asm = assemble_translates(cfg, fam)
    scaled = _offset_step(asm.stacked.scaled(asm.good_area), box.x0, box.y0)
    return StageSquare(box, k, fam, asm.good_area,
                       area_union(asm.excluded), scaled)


def derive_seed(seed: int, *labels) -> int:
    return derive_rng(seed, *labels).getrandbits(63)


def _square_residual(item: StageSquare, box: Rect) -> List[Rect]:
    cfg = scaled_construction(item.scale_exp)
    asm = assemble_translates(cfg, item.shifts)
    obstacles = [c.translated(box.x0, box.y0)
                 for c in list(asm.covered.cells) + list(asm.excluded.cells)]
    return list(complement_cells(obstacles, box).cells)


# ---------------------------------------------------------------------------
# series schedule


@dataclass
class SeriesTerm:
    index: int
    eps: Fraction
    delta: Fraction
    target: Fraction       # the divergence level the term must certify
    eta: Optional[Fraction] = None
    sup_norm: Optional[Fraction] = None

    def to_json(self) -> dict:
        out = {"index": self.index,
               "eps": format_scalar(self.eps),
               "delta": format_scalar(self.delta),
               "target": format_scalar(self.target)}
        if self.eta is not None:
            out["eta"] = format_scalar(self.eta)
        if self.sup_norm is not None:
            out["sup_norm"] = format_scalar(self.sup_norm)
        return out


def series_schedule(terms: int, sup_norms: Sequence[Fraction],
                    etas: Sequence[Fraction]) -> List[SeriesTerm]:
    """The exact term schedule: eps_1 = delta_1 = 1/2 and target 1, then
    eps_m = 1/(m+1)^2, delta_m = previous term's area floor, and target
    (2 sup of earlier sup-norms + m) m^2; the floors must decrease."""
    if terms < 1:
        raise ValueError("need at least one term")
    out = [SeriesTerm(1, Fraction(1, 2), Fraction(1, 2), ONE)]
    for m in range(2, terms + 1):
        eps_m = Fraction(1, (m + 1) ** 2)
        delta_m = etas[m - 2]
        sup = max(sup_norms[:m - 1])
        target = (2 * sup + m) * m * m
        out.append(SeriesTerm(m, eps_m, delta_m, target))
    return out


# ---------------------------------------------------------------------------
# divergence demonstration


def ladder_construction(n: int, tau: Optional[Fraction] = None) -> Construction:
    """Depth-n construction from consecutive ladder elements at the top.

    Consecutive windows of the dyadic ladder have equal nested areas, so
    every fanout is 1 and the whole tree is a single chain of tiles; this
    keeps high divergence targets materializable (one support square).
    """
    ladder = SideSet([Fraction(1, 2)], rule="ladder")
    values = list(ladder.prefix(2 * n))
    seq = SideSequence(n, values, Fraction(7, 8))
    conv = SideSet(["1", "7/16", "5/16", Fraction(1, 1 << 20),
                    Fraction(1, 1 << 45)], rule="square", rho=Fraction(1, 32))
    if tau is None:
        tau = Fraction(1, 1 << 24)
    return Construction(conv, seq, tau, "1/20", "1/2", "relaxed-demo")


@dataclass
class TermBuild:
    cfg: Construction
    fam: ShiftFamily
    asm: TranslatedAssembly
    scaled: StepFunction2D      # |good| * stacked


def build_series_term(n_level: int, seed: int, occupied: Set[Fraction],
                      chi: Fraction, budget: int = 2000) -> TermBuild:
    if n_level == 2:
        cfg = translation_construction(2)
    else:
        cfg = ladder_construction(n_level)
    fam, _ = find_shifts(cfg, chi, budget, seed, occupied_edges=occupied)
    asm = assemble_translates(cfg, fam)
    return TermBuild(cfg, fam, asm, asm.stacked.scaled(asm.good_area))


def demo_divergence(partial_terms: int, z_samples: int, seed: int,
                    second_level: int = 12,
                    max_avg_budget: int = 6) -> Tuple[Report, List[dict]]:
    """Two-term divergence demonstration at sampled points.

    Builds f = f_1 + f_2/4 with the first term at depth 2 and the second at
    `second_level`; at sampled z in both good sets (away from the support
    of the first term), the stored divergence witness of the second term
    gives |average of f| above N - 1/N = 3/2, while the maximal convergence
    -sided average at z stays within the per-term ledger plus tail
    allowance.  Returns the report and per-z rows for the curves file.
    """
    if partial_terms != 2:
        raise ValueError("the desk-scale demonstration uses two terms")
    rep = Report("series-divergence")
    chi = chi_threshold(Fraction(1, 20))
    occupied: Set[Fraction] = set()
    term1 = build_series_term(2, derive_seed(seed, "term", 1), occupied, chi)
    for s in term1.fam.shifts:
        occupied |= support_edge_levels(term1.cfg, s, term1.fam.box)
    term2 = build_series_term(second_level, derive_seed(seed, "term", 2),
                              occupied, chi)
    f_total = StepFunction2D(list(term1.scaled.terms)
                             + list(term2.scaled.scaled(Fraction(1, 4)).terms))
    n2 = second_level
    bound = Fraction(2) - Fraction(1, 2)      # N - 1/N at N = 2
    rep.check("term2_good_vs_chi", term2.asm.good_area, ">=", chi)
    # guaranteed witness level: |good_2| * n2 / 4 must clear the bound
    rep.check("witness_level_guarantee", term2.asm.good_area * n2 / 4,
              ">", bound)
    # per-term finite ledger for the convergence side: 2/1 + 2/4 plus tail
    ledger = Fraction(2) + Fraction(2, 4) + Fraction(4, 1)
    sides = [v for v in term1.cfg.conv.elements() if Fraction(1, 64) <= v <= ONE]
    rng = derive_rng(seed, "divergence-z")
    rows: List[dict] = []
    found = 0
    attempts = 0
    while found < z_samples and attempts < 60 * z_samples:
        attempts += 1
        try:
            zx, zy = term2.asm.sample_good(rng)
        except RuntimeError:
            break
        if not term1.asm.good_contains(zx, zy):
            continue
        if term1.scaled.value_at(zx, zy) != 0:
            continue
        w = witness_for_point(term2.cfg, term2.fam, term2.asm.stacked, zx, zy)
        if w is None or w[1] < n2:
            continue
        rect = w[0]
        # the witness must sit inside the first term's zero set
        if integral(term1.scaled.abs(), rect) != 0:
            continue
        avg_total = abs(integral(f_total, rect)) / rect.area
        ok = rep.check(f"divergence_witness_{found}", avg_total, ">", bound,
                       note=f"witness {rect.to_json()}")
        mx, mrect = maximal_average(f_total, _pt(zx, zy), sides,
                                    diam_cap=Fraction(2), area_floor=ZERO)
        rep.check(f"max_avg_ledger_{found}", mx, "<=", ledger)
        rows.append({
            "z": [format_scalar(zx), format_scalar(zy)],
            "witness_rect": rect.to_json(),
            "witness_avg": format_scalar(avg_total),
            "bound": format_scalar(bound),
            "max_avg_conv": format_scalar(mx),
            "ledger": format_scalar(ledger),
            "pass": ok,
        })
        found += 1
    rep.check("z_sample_count", Fraction(found), ">=", Fraction(z_samples),
              note=f"{attempts} draws")
    rep.record("term1_good", format_scalar(term1.asm.good_area))
    rep.record("term2_good", format_scalar(term2.asm.good_area))
    rep.record("term1_sup", format_scalar(term1.scaled.sup_norm()))
    rep.record("term2_sup", format_scalar(term2.scaled.sup_norm()))
    sched = series_schedule(2, [term1.scaled.sup_norm()], [term1.cfg.eta])
    rep.record("schedule", [t.to_json() for t in sched])
    rep.record("l1_total", format_scalar(f_total.l1_norm()))
    return rep, rows


def _pt(x: Fraction, y: Fraction):
    from .geometry import PointZ
    return PointZ(x, y)
