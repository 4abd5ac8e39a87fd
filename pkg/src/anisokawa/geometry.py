"""Droplet geometry: clusters, circumscribed rectangles, bars, slidings and
the membership predicates for the critical sets.

Conventions: sites are (x, y); side names n/s/e/w point to max-y/min-y/max-x/
min-x. Clusters are connected components of the union of closed unit squares,
so diagonal contact joins a component (8-connectivity); free-particle
detection uses the plain 4-neighbourhood rule. Lattice distance is l1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

from .model import Configuration, in_box, in_interior, energy_int
from .params import ModelParams, REGIME_STRONG


class GeometryError(ValueError):
    pass


_NN = ((1, 0), (-1, 0), (0, 1), (0, -1))
_NN8 = ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1))

SIDES = ("n", "s", "w", "e")
ANGLES = ("nw", "ne", "sw", "se")


def split_free_clusterized(cfg: Configuration) -> tuple[frozenset, frozenset]:
    """(free sites, clusterized sites): boundary-ring particles are free;
    interior particles are free iff no occupied interior neighbour."""
    L = cfg.L
    occ = set(cfg.sites())
    free = set()
    for (x, y) in occ:
        if not in_interior(L, x, y):
            free.add((x, y))
            continue
        if not any((x + dx, y + dy) in occ and in_interior(L, x + dx, y + dy)
                   for dx, dy in _NN):
            free.add((x, y))
    return frozenset(free), frozenset(occ - free)


def _components8(cells: frozenset) -> tuple[frozenset, ...]:
    remaining = set(cells)
    comps = []
    while remaining:
        seed = remaining.pop()
        comp = {seed}
        stack = [seed]
        while stack:
            cx, cy = stack.pop()
            for dx, dy in _NN8:
                nb = (cx + dx, cy + dy)
                if nb in remaining:
                    remaining.remove(nb)
                    comp.add(nb)
                    stack.append(nb)
        comps.append(frozenset(comp))
    return tuple(comps)


def _boundary_halves(cells: frozenset) -> tuple[int, int]:
    """(g1, g2): half horizontal / vertical Euclidean boundary length."""
    h_edges = 0
    v_edges = 0
    for (x, y) in cells:
        if (x, y + 1) not in cells:
            h_edges += 1
        if (x, y - 1) not in cells:
            h_edges += 1
        if (x + 1, y) not in cells:
            v_edges += 1
        if (x - 1, y) not in cells:
            v_edges += 1
    return h_edges // 2, v_edges // 2


@dataclass(frozen=True)
class DropletAnatomy:
    free_sites: frozenset
    cluster_sites: frozenset
    clusters: tuple[frozenset, ...]
    cluster_boxes: tuple[tuple[int, int, int, int], ...]
    g1: int
    g2: int
    p1: int
    p2: int
    s: int
    v: int
    n_free: int
    monotone: bool

    @property
    def g1_excess(self) -> int:
        return self.g1 - self.p1

    @property
    def g2_excess(self) -> int:
        return self.g2 - self.p2

    def as_record(self) -> dict:
        return {
            "n_free": self.n_free,
            "n_clusterized": len(self.cluster_sites),
            "clusters": [sorted(c) for c in self.clusters],
            "g1": self.g1, "g2": self.g2,
            "p1": self.p1, "p2": self.p2,
            "semi_perimeter": self.s, "vacancies": self.v,
            "monotone": self.monotone,
        }


def decompose(cfg: Configuration) -> DropletAnatomy:
    free, cl = split_free_clusterized(cfg)
    comps = _components8(cl)
    boxes = tuple(bounding_box(c) for c in comps)
    g1, g2 = _boundary_halves(cl)
    cols = {x for x, _ in cl}
    rows = {y for _, y in cl}
    p1, p2 = len(cols), len(rows)
    return DropletAnatomy(
        free_sites=free, cluster_sites=cl, clusters=comps, cluster_boxes=boxes,
        g1=g1, g2=g2, p1=p1, p2=p2, s=p1 + p2, v=p1 * p2 - len(cl),
        n_free=len(free), monotone=(g1 == p1 and g2 == p2),
    )


def energy_geometric(cfg: Configuration, params: ModelParams) -> float:
    """H from cluster area, half-boundary lengths and free-particle count."""
    a = decompose(cfg)
    e = (-params.eps_i * len(a.cluster_sites)
         + params.u1_i * a.g2 + params.u2_i * a.g1
         + params.delta_i * a.n_free)
    return e * 1e-4


def bounding_box(cells: frozenset) -> tuple[int, int, int, int]:
    xs = [x for x, _ in cells]
    ys = [y for _, y in cells]
    return min(xs), min(ys), max(xs), max(ys)


# ---------------------------------------------------------------------------
# circumscribed rectangle, frames and bars
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FrameDecomposition:
    box: tuple[int, int, int, int]          # CR bounds (x0, y0, x1, y1)
    cluster: frozenset
    angle_cells: dict                        # 'nw' -> (x, y)
    angle_occupied: dict                     # 'nw' -> 0/1
    row_cells: dict                          # 'n' -> tuple of cells (no angles)
    row_occupied: dict                       # 'n' -> occupied count
    bars: dict                               # 'n' -> tuple of bar cells (maybe empty)

    @property
    def width(self) -> int:
        x0, _, x1, _ = self.box
        return x1 - x0 + 1

    @property
    def height(self) -> int:
        _, y0, _, y1 = self.box
        return y1 - y0 + 1

    def bar_length(self, side: str) -> int:
        return len(self.bars[side])

    def outer_frame(self) -> frozenset:
        """External frame of CR: cells outside CR at Chebyshev distance 1."""
        x0, y0, x1, y1 = self.box
        out = set()
        for x in range(x0 - 1, x1 + 2):
            out.add((x, y0 - 1))
            out.add((x, y1 + 1))
        for y in range(y0, y1 + 1):
            out.add((x0 - 1, y))
            out.add((x1 + 1, y))
        return frozenset(out)

    def inner_ring(self) -> frozenset:
        x0, y0, x1, y1 = self.box
        ring = set()
        for x in range(x0, x1 + 1):
            ring.add((x, y0))
            ring.add((x, y1))
        for y in range(y0, y1 + 1):
            ring.add((x0, y))
            ring.add((x1, y))
        return frozenset(ring)

    def core(self) -> frozenset:
        x0, y0, x1, y1 = self.box
        return frozenset((x, y) for x in range(x0 + 1, x1)
                         for y in range(y0 + 1, y1))


def _side_line(box, side):
    x0, y0, x1, y1 = box
    if side == "n":
        return tuple((x, y1) for x in range(x0, x1 + 1))
    if side == "s":
        return tuple((x, y0) for x in range(x0, x1 + 1))
    if side == "w":
        return tuple((x0, y) for y in range(y0, y1 + 1))
    if side == "e":
        return tuple((x1, y) for y in range(y0, y1 + 1))
    raise GeometryError(f"unknown side {side}")


def _occupied_runs(line, cluster):
    runs = []
    current = []
    for cell in line:
        if cell in cluster:
            current.append(cell)
        elif current:
            runs.append(tuple(current))
            current = []
    if current:
        runs.append(tuple(current))
    return runs


def _valid_bar(run, cluster) -> bool:
    """Every square of the run is attached to exactly one square outside it."""
    run_set = set(run)
    for (x, y) in run:
        n_attach = sum(1 for dx, dy in _NN
                       if (x + dx, y + dy) in cluster and (x + dx, y + dy) not in run_set)
        if n_attach != 1:
            return False
    return True


def frame(cfg: Configuration) -> FrameDecomposition:
    """Frame decomposition of a single-cluster, free-particle-less view.

    Rejects multi-cluster and empty input (free particles are allowed and
    ignored; the frame describes the unique cluster).
    """
    a = decompose(cfg)
    if len(a.clusters) != 1:
        raise GeometryError(f"frame() needs exactly one cluster, got {len(a.clusters)}")
    cluster = a.clusters[0]
    box = bounding_box(cluster)
    x0, y0, x1, y1 = box
    angle_cells = {"nw": (x0, y1), "ne": (x1, y1), "sw": (x0, y0), "se": (x1, y0)}
    angle_occ = {k: int(c in cluster) for k, c in angle_cells.items()}
    rows = {}
    row_occ = {}
    bars = {}
    corner_set = set(angle_cells.values())
    for side in SIDES:
        line = _side_line(box, side)
        rows[side] = tuple(c for c in line if c not in corner_set)
        row_occ[side] = sum(1 for c in rows[side] if c in cluster)
        runs = [r for r in _occupied_runs(line, cluster) if _valid_bar(r, cluster)]
        bars[side] = runs[0] if len(runs) == 1 else tuple()
    return FrameDecomposition(
        box=box, cluster=cluster, angle_cells=angle_cells, angle_occupied=angle_occ,
        row_cells=rows, row_occupied=row_occ, bars=bars,
    )


# ---------------------------------------------------------------------------
# motions along the border
# ---------------------------------------------------------------------------

def _bar_axis(cells):
    xs = {x for x, _ in cells}
    ys = {y for _, y in cells}
    if len(ys) == 1:
        return "h"
    if len(xs) == 1:
        return "v"
    raise GeometryError("bar cells are not a 1 x k strip")


def _outer_frame_of(cells):
    out = set()
    cs = set(cells)
    for (x, y) in cells:
        for dx, dy in _NN8:
            nb = (x + dx, y + dy)
            if nb not in cs:
                out.add(nb)
    return out


def can_translate_bar(cfg: Configuration, side: str) -> bool:
    """Condition |B| < |outer frame of B intersect cluster|."""
    fr = frame(cfg)
    bar = fr.bars[side]
    if not bar:
        return False
    support = _outer_frame_of(bar) & fr.cluster
    return len(bar) < len(support)


def _shift(cell, step):
    return (cell[0] + step[0], cell[1] + step[1])


def translate_bar_step(cfg: Configuration, side: str, direction: str) -> list[Configuration]:
    """The 1-translation of bar B^side as a unit-exchange sequence.

    direction: 'e'/'w' for horizontal bars, 'n'/'s' for vertical ones.
    Returns the configuration path (input first); peak cost is U1 for
    horizontal bars and U2 for vertical ones, net cost 0.
    """
    fr = frame(cfg)
    bar = fr.bars[side]
    if not bar:
        raise GeometryError(f"no bar on side {side}")
    if not can_translate_bar(cfg, side):
        raise GeometryError(f"bar on side {side} cannot be translated")
    axis = _bar_axis(bar)
    steps = {"e": (1, 0), "w": (-1, 0), "n": (0, 1), "s": (0, -1)}
    if direction not in steps:
        raise GeometryError(f"bad direction {direction}")
    step = steps[direction]
    if (axis == "h") != (step[1] == 0):
        raise GeometryError("direction must run along the bar axis")
    order = sorted(bar, key=lambda c: (c[0] * step[0] + c[1] * step[1]), reverse=True)
    path = [cfg]
    cur = cfg
    for cell in order:
        target = _shift(cell, step)
        if not in_box(cfg.L, *target):
            raise GeometryError("translation leaves the box")
        if cur.occupied(*target):
            raise GeometryError("translation target occupied")
        cur = cur.with_site(*cell, 0).with_site(*target, 1)
        path.append(cur)
        cell = target
    return path


_ANGLE_OF = {("n", "w"): "nw", ("n", "e"): "ne", ("s", "w"): "sw", ("s", "e"): "se",
             ("w", "n"): "nw", ("e", "n"): "ne", ("w", "s"): "sw", ("e", "s"): "se"}


def can_slide_unit_square(cfg: Configuration, side: str, to_side: str) -> bool:
    """Slide a unit square from row r^side to r^to_side via the shared angle:
    |c| = 0, |r^side| >= 1, 1 <= |r^to_side| < ||r^to_side|| + 1."""
    fr = frame(cfg)
    key = _ANGLE_OF.get((side, to_side))
    if key is None:
        raise GeometryError(f"sides {side},{to_side} are not adjacent")
    if fr.angle_occupied[key]:
        return False
    if fr.row_occupied[side] < 1:
        return False
    r_to = fr.row_occupied[to_side]
    return 1 <= r_to < len(fr.row_cells[to_side]) + 1


def can_slide_bar(cfg: Configuration, side: str, to_side: str) -> bool:
    """Bar sliding condition |B^side| + |r^to_side| <= ||r^to_side|| + 1
    (evaluated after the bars are brought flush to the shared angle, which
    does not change any of the counts)."""
    fr = frame(cfg)
    key = _ANGLE_OF.get((side, to_side))
    if key is None:
        raise GeometryError(f"sides {side},{to_side} are not adjacent")
    if fr.angle_occupied[key]:
        return False
    bar = fr.bars[side]
    if not bar or fr.row_occupied[to_side] < 1:
        return False
    return len(bar) + fr.row_occupied[to_side] <= len(fr.row_cells[to_side]) + 1


def _toward_angle_dir(side: str, to_side: str) -> str:
    # translation direction of the bar on `side` so its lead cell enters the angle
    return to_side


def _away_from_angle_dir(side: str, to_side: str) -> str:
    opposite = {"n": "s", "s": "n", "w": "e", "e": "w"}
    return opposite[side]


def _translate_cells(cfg: Configuration, cells, direction: str) -> list[Configuration]:
    """1-translation of an explicit 1 x k strip (lead cell first)."""
    steps = {"e": (1, 0), "w": (-1, 0), "n": (0, 1), "s": (0, -1)}
    step = steps[direction]
    order = sorted(cells, key=lambda c: (c[0] * step[0] + c[1] * step[1]), reverse=True)
    path = []
    cur = cfg
    for cell in order:
        target = _shift(cell, step)
        if not in_box(cfg.L, *target):
            raise GeometryError("translation leaves the box")
        if cur.occupied(*target):
            raise GeometryError("translation target occupied")
        cur = cur.with_site(*cell, 0).with_site(*target, 1)
        path.append(cur)
    return path


def slide_bar(cfg: Configuration, side: str, to_side: str) -> list[Configuration]:
    """Slide bar B^side around the frame-angle shared with to_side.

    Emits the full Kawasaki path (input configuration first): |B^side|
    unit-square slidings, each a 1-translation of the remaining side-bar into
    the angle followed by a 1-translation of the receiving bar away from it.
    Pre-translations bringing both bars flush to the angle are emitted first
    when needed.
    """
    if not can_slide_bar(cfg, side, to_side):
        raise GeometryError(f"sliding {side}->{to_side} not allowed")
    key = _ANGLE_OF[(side, to_side)]
    toward = _toward_angle_dir(side, to_side)
    away = _away_from_angle_dir(side, to_side)
    path = [cfg]
    cur = cfg

    def flush_moves(which, direction):
        nonlocal cur
        while True:
            fr = frame(cur)
            angle = fr.angle_cells[key]
            bar = fr.bars[which]
            if not bar:
                raise GeometryError("bar vanished during pre-translation")
            steps = {"e": (1, 0), "w": (-1, 0), "n": (0, 1), "s": (0, -1)}[direction]
            lead = max(bar, key=lambda c: c[0] * steps[0] + c[1] * steps[1])
            if _shift(lead, steps) == angle or lead == angle:
                return
            for nxt in _translate_cells(cur, bar, direction):
                cur = nxt
                path.append(cur)

    flush_moves(side, toward)
    flush_moves(to_side, side)  # receiving bar is brought flush to the angle too

    k = len(frame(cur).bars[side])
    for _ in range(k):
        fr = frame(cur)
        bar = fr.bars[side]
        if not bar:
            break
        for nxt in _translate_cells(cur, bar, toward):
            cur = nxt
            path.append(cur)
        fr = frame(cur)
        angle = fr.angle_cells[key]
        line = fr.row_cells[to_side] + (angle,)
        receiving = [c for c in line if cur.occupied(*c)]
        for nxt in _translate_cells(cur, receiving, away):
            cur = nxt
            path.append(cur)
    return path


# ---------------------------------------------------------------------------
# critical-set membership
# ---------------------------------------------------------------------------

def _require_strong(params: ModelParams, min_l2: int = 3):
    if params.regime != REGIME_STRONG:
        raise GeometryError("predicate defined for strongly anisotropic parameters")
    if params.l2star < min_l2:
        raise GeometryError(f"predicate needs l2* >= {min_l2}, got {params.l2star}")


def critical_volume(l2: int) -> int:
    return l2 * (2 * l2 - 3) + 1


def _single_cluster_frame(cfg: Configuration, params: ModelParams, n_free: int):
    """Anatomy gate shared by the predicates: returns (anatomy, frame) when the
    configuration has the requested free-particle count and one cluster."""
    a = decompose(cfg)
    if a.n_free != n_free or len(a.clusters) != 1:
        return None
    fr = frame(Configuration.from_sites(cfg.L, a.clusters[0]))
    return a, fr


def is_Qbar(cfg: Configuration, params: ModelParams) -> bool:
    """(2l2*-3) x l2* rectangle plus one protuberance on a shortest (vertical)
    side, i.e. attached by a horizontal bond."""
    _require_strong(params)
    l2 = params.l2star
    got = _single_cluster_frame(cfg, params, 0)
    if got is None:
        return False
    _, fr = got
    if len(fr.cluster) != critical_volume(l2):
        return False
    if (fr.width, fr.height) != (2 * l2 - 2, l2):
        return False
    x0, y0, x1, y1 = fr.box
    for col, rest in (((x0,), range(x0 + 1, x1 + 1)), ((x1,), range(x0, x1))):
        protub = [(x, y) for (x, y) in fr.cluster if x == col[0]]
        if len(protub) != 1:
            continue
        rect = {(x, y) for x in rest for y in range(y0, y1 + 1)}
        if fr.cluster - {protub[0]} == rect:
            return True
    return False


def is_Qtilde(cfg: Configuration, params: ModelParams) -> bool:
    """(2l2*-3) x l2* rectangle plus one protuberance attached by a vertical
    bond (on a longest side)."""
    _require_strong(params)
    l2 = params.l2star
    got = _single_cluster_frame(cfg, params, 0)
    if got is None:
        return False
    _, fr = got
    if len(fr.cluster) != critical_volume(l2):
        return False
    if (fr.width, fr.height) != (2 * l2 - 3, l2 + 1):
        return False
    x0, y0, x1, y1 = fr.box
    for row, rest in (((y0,), range(y0 + 1, y1 + 1)), ((y1,), range(y0, y1))):
        protub = [(x, y) for (x, y) in fr.cluster if y == row[0]]
        if len(protub) != 1:
            continue
        rect = {(x, y) for y in rest for x in range(x0, x1 + 1)}
        if fr.cluster - {protub[0]} == rect:
            return True
    return False


def is_Dbar(cfg: Configuration, params: ModelParams) -> bool:
    """Geometric description of the protocritical set: (2l2*-4) x (l2*-2) core
    with four bars whose lengths satisfy the displayed bounds and whose total
    ring occupancy is 5l2*-7."""
    _require_strong(params)
    l2 = params.l2star
    got = _single_cluster_frame(cfg, params, 0)
    if got is None:
        return False
    _, fr = got
    if len(fr.cluster) != critical_volume(l2):
        return False
    if (fr.width, fr.height) != (2 * l2 - 2, l2):
        return False
    if not fr.core() <= fr.cluster:
        return False
    ring_occ = len(fr.cluster & fr.inner_ring())
    if ring_occ != 5 * l2 - 7:
        return False
    lengths = {}
    for side in SIDES:
        line = _side_line(fr.box, side)
        runs = _occupied_runs(line, fr.cluster)
        if len(runs) != 1:
            return False
        lengths[side] = len(runs[0])
    if not (1 <= lengths["w"] <= l2 and 1 <= lengths["e"] <= l2):
        return False
    if not (l2 - 1 <= lengths["n"] <= 2 * l2 - 2 and l2 - 1 <= lengths["s"] <= 2 * l2 - 2):
        return False
    return True


def is_Dtilde(cfg: Configuration, params: ModelParams) -> bool:
    """Geometric description of the companion set: monotone single cluster,
    2l2*-4 vacancies, CR (2l2*-3) x (l2*+1), all vacancies on one long side
    whose leftover occupancy is concentrated near at most one row cell."""
    _require_strong(params)
    l2 = params.l2star
    got = _single_cluster_frame(cfg, params, 0)
    if got is None:
        return False
    a, fr = got
    if len(fr.cluster) != critical_volume(l2):
        return False
    if (fr.width, fr.height) != (2 * l2 - 3, l2 + 1):
        return False
    if a.v != 2 * l2 - 4 or not a.monotone:
        return False
    for alpha in ("n", "s"):
        if fr.row_occupied[alpha] > 1:
            continue
        ok = False
        for alpha2 in ("w", "e"):
            key = _ANGLE_OF[(alpha, alpha2)]
            count = fr.row_occupied[alpha] + fr.angle_occupied[key]
            if 1 <= count <= 2:
                ok = True
        if ok:
            # every vacancy must sit on this long side
            x0, y0, x1, y1 = fr.box
            yy = y1 if alpha == "n" else y0
            side_cells = {(x, yy) for x in range(x0, x1 + 1)}
            missing = side_cells - fr.cluster
            if len(missing) == 2 * l2 - 4 and fr.cluster | side_cells == \
                    {(x, y) for x in range(x0, x1 + 1) for y in range(y0, y1 + 1)}:
                return True
    return False


def is_Cstar(cfg: Configuration, params: ModelParams) -> bool:
    """Protocritical droplet plus exactly one free particle."""
    _require_strong(params)
    a = decompose(cfg)
    if a.n_free != 1 or len(a.clusters) != 1:
        return False
    cluster_cfg = Configuration.from_sites(cfg.L, a.cluster_sites)
    return is_Dbar(cluster_cfg, params)


def _p_state(cfg: Configuration, params: ModelParams, i: int):
    l2 = params.l2star
    got = _single_cluster_frame(cfg, params, 0)
    if got is None:
        return None
    a, fr = got
    if a.v != 2 * l2 + i * l2 - i * (i + 1) - 2:
        return None
    if a.g1_excess != i or a.g2_excess != 1 - i:
        return None
    if (fr.width, fr.height) != (2 * l2 - 1 - i, l2 + i):
        return None
    return a, fr


def is_P0(cfg: Configuration, params: ModelParams) -> bool:
    _require_strong(params)
    return _p_state(cfg, params, 0) is not None


def is_P1(cfg: Configuration, params: ModelParams) -> bool:
    _require_strong(params)
    return _p_state(cfg, params, 1) is not None


def is_A0(cfg: Configuration, params: ModelParams) -> bool:
    """P0 state whose full vertical side (row plus both frame-angles) holds
    exactly one particle."""
    _require_strong(params)
    got = _p_state(cfg, params, 0)
    if got is None:
        return False
    _, fr = got
    for alpha2 in ("w", "e"):
        line = _side_line(fr.box, alpha2)
        if sum(1 for c in line if c in fr.cluster) == 1:
            return True
    return False


def is_A1(cfg: Configuration, params: ModelParams) -> bool:
    """P1 state whose full horizontal side holds exactly one particle."""
    _require_strong(params)
    got = _p_state(cfg, params, 1)
    if got is None:
        return False
    _, fr = got
    for alpha in ("n", "s"):
        line = _side_line(fr.box, alpha)
        if sum(1 for c in line if c in fr.cluster) == 1:
            return True
    return False


def is_Ak(cfg: Configuration, params: ModelParams):
    """Sliding saddles: P0 states seen while a horizontal bar rounds a
    frame-angle. Returns (alpha, alpha', k) or None."""
    _require_strong(params)
    got = _p_state(cfg, params, 0)
    if got is None:
        return None
    _, fr = got
    l2 = params.l2star
    for alpha in ("n", "s"):
        for alpha2 in ("w", "e"):
            key = _ANGLE_OF[(alpha, alpha2)]
            if not fr.angle_occupied[key]:
                continue
            k = fr.row_occupied[alpha] + 1
            if not (2 <= k <= l2):
                continue
            if fr.row_occupied[alpha2] != l2 - k:
                continue
            angle = fr.angle_cells[key]
            window = fr.row_cells[alpha] + (angle,)
            window = sorted(window)
            occ_flags = [c in fr.cluster for c in window]
            runs = []
            cur = []
            for cell, occ in zip(window, occ_flags):
                if occ:
                    cur.append(cell)
                elif cur:
                    runs.append(cur)
                    cur = []
            if cur:
                runs.append(cur)
            if len(runs) != 2:
                continue
            d = min(abs(c1[0] - c2[0]) + abs(c1[1] - c2[1])
                    for c1 in runs[0] for c2 in runs[1])
            if d == 2:
                return (alpha, alpha2, k)
    return None


# ---------------------------------------------------------------------------
# protocritical enumeration
# ---------------------------------------------------------------------------

def _compositions(total: int, parts: int):
    if parts == 0:
        if total == 0:
            yield ()
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def dbar_shapes(l2: int) -> list[frozenset]:
    """All protocritical cluster shapes anchored at (0, 0), via the
    corner-removal construction: remove l2*-1 particles from the corners of a
    (2l2*-2) x l2* rectangle and contiguously along their sides."""
    if l2 < 3:
        raise GeometryError("protocritical geometry needs l2* >= 3")
    w, h = 2 * l2 - 2, l2
    full = {(x, y) for x in range(w) for y in range(h)}
    corners = {"sw": (0, 0), "se": (w - 1, 0), "nw": (0, h - 1), "ne": (w - 1, h - 1)}
    # directions along the two sides meeting at each corner
    dirs = {"sw": ((1, 0), (0, 1)), "se": ((-1, 0), (0, 1)),
            "nw": ((1, 0), (0, -1)), "ne": ((-1, 0), (0, -1))}
    remove_budget = l2 - 1
    shapes = set()
    names = list(corners)
    for mask in range(1, 16):
        chosen = [names[i] for i in range(4) if mask >> i & 1]
        k = len(chosen)
        extra = remove_budget - k
        if extra < 0:
            continue
        for comp in _compositions(extra, 2 * k):
            removed = set()
            ok = True
            for ci, cname in enumerate(chosen):
                cx, cy = corners[cname]
                removed.add((cx, cy))
                for di in range(2):
                    m = comp[2 * ci + di]
                    dx, dy = dirs[cname][di]
                    for step in range(1, m + 1):
                        cell = (cx + dx * step, cy + dy * step)
                        if cell not in full or cell in removed:
                            ok = False
                            break
                        removed.add(cell)
                    if not ok:
                        break
                if not ok:
                    break
            if not ok or len(removed) != remove_budget:
                continue
            shapes.add(frozenset(full - removed))
    return sorted(shapes, key=lambda s: sorted(s))


def enumerate_Dbar(params: ModelParams, modulo_shifts: bool = False) -> list[Configuration]:
    """All protocritical configurations in the box (or one canonical anchor
    per shape). Box must host the droplet: L >= 2*l2* + 2."""
    _require_strong(params)
    l2 = params.l2star
    L = params.L
    if L < 2 * l2 + 2:
        raise GeometryError(f"box too small to host the droplet (need L >= {2 * l2 + 2})")
    shapes = dbar_shapes(l2)
    w, h = 2 * l2 - 2, l2
    out = []
    if modulo_shifts:
        anchor = (1, 1)
        for shape in shapes:
            out.append(Configuration.from_sites(
                L, [(x + anchor[0], y + anchor[1]) for x, y in shape]))
        return out
    for shape in shapes:
        for ax in range(1, L - w + 1):
            for ay in range(1, L - h + 1):
                out.append(Configuration.from_sites(
                    L, [(x + ax, y + ay) for x, y in shape]))
    return out


# ---------------------------------------------------------------------------
# good/bad attachment sites and rings
# ---------------------------------------------------------------------------

def good_bad_sites(protocritical: Configuration) -> tuple[frozenset, frozenset]:
    """Attachment sites for the free particle: good ones inside the internal
    frame of CR, bad ones on the external frame (interior sites only; a
    particle parked in the boundary ring binds nothing)."""
    fr = frame(protocritical)
    L = protocritical.L
    cluster = fr.cluster
    good = set()
    for cell in fr.inner_ring():
        if cell in cluster or not in_interior(L, *cell):
            continue
        if any((cell[0] + dx, cell[1] + dy) in cluster for dx, dy in _NN):
            good.add(cell)
    bad = set()
    for cell in fr.outer_frame():
        if not in_interior(L, *cell):
            continue
        if any((cell[0] + dx, cell[1] + dy) in cluster for dx, dy in _NN):
            bad.add(cell)
    return frozenset(good), frozenset(bad)


def _lambda4(L: int) -> frozenset:
    corners = {(0, 0), (L, 0), (0, L), (L, L)}
    return frozenset((x, y) for x in range(L + 1) for y in range(L + 1)
                     if (x, y) not in corners)


def _inner_boundary_lambda4(L: int) -> frozenset:
    corners = {(0, 0), (L, 0), (0, L), (L, L)}
    return frozenset((x, y) for x in range(L + 1) for y in range(L + 1)
                     if (x == 0 or y == 0 or x == L or y == L) and (x, y) not in corners)


def rings(protocritical: Configuration, i: int) -> frozenset:
    """B-bar ring i around the droplet: sites of Lambda_4 at lattice distance
    i, plus the boundary accumulation term of the recursion."""
    L = protocritical.L
    l4 = _lambda4(L)
    bd4 = _inner_boundary_lambda4(L)
    occupied = frozenset(protocritical.sites())
    if i < 1:
        raise GeometryError("ring index starts at 1")

    def set_dist_1(cell, cells):
        # lattice set-distance exactly 1: not a member, but adjacent
        if cell in cells:
            return False
        x, y = cell
        return any((x + dx, y + dy) in cells for dx, dy in _NN)

    b1 = frozenset(c for c in l4
                   if c not in occupied and set_dist_1(c, occupied))
    if i == 1:
        return b1
    b2 = frozenset(c for c in l4
                   if c not in occupied and c not in b1 and set_dist_1(c, b1))
    bbar = b2
    if i == 2:
        return bbar
    b_prev2, b_prev = b1, b2
    for j in range(3, i + 1):
        bj = frozenset(c for c in l4
                       if c not in occupied and c not in b_prev2
                       and set_dist_1(c, b_prev))
        bbar = bj | (bbar & bd4)
        b_prev2, b_prev = b_prev, bj
    return bbar


def is_Cstar_i(cfg: Configuration, params: ModelParams, i: int) -> bool:
    """Critical configuration whose free particle sits on ring i."""
    _require_strong(params)
    lstar = params.L - params.l2star
    if not (2 <= i <= lstar):
        raise GeometryError(f"ring index must be within 2..{lstar}")
    a = decompose(cfg)
    if a.n_free != 1 or len(a.clusters) != 1:
        return False
    cluster_cfg = Configuration.from_sites(cfg.L, a.cluster_sites)
    if not is_Dbar(cluster_cfg, params):
        return False
    fp = next(iter(a.free_sites))
    return fp in rings(cluster_cfg, i)


# ---------------------------------------------------------------------------
# dumps
# ---------------------------------------------------------------------------

def anatomy_json(cfg: Configuration) -> str:
    rec = decompose(cfg).as_record()
    rec["grid"] = cfg.to_grid().splitlines()
    return json.dumps(rec, indent=2, sort_keys=True)


def rectangle(L: int, anchor: tuple[int, int], l1: int, l2: int) -> Configuration:
    """R(l1, l2): l1 horizontal, l2 vertical, lower-left corner at anchor."""
    ax, ay = anchor
    return Configuration.from_sites(
        L, [(ax + x, ay + y) for x in range(l1) for y in range(l2)])


def rectangle_energy_int(l1: int, l2: int, params: ModelParams) -> int:
    return params.u1_i * l2 + params.u2_i * l1 - params.eps_i * l1 * l2
