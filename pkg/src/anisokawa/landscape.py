"""Freidlin-Wentzell machinery realized as bounded graph search: sublevel
exploration, communication heights, saddles, gates, minimal gates and
essentiality certificates, plus the constructive reference nucleation path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from collections import deque

import numpy as np
from numba import njit

from .params import ModelParams, REGIME_STRONG
from .model import Configuration, neighbour_targets, energy_int, in_interior
from .engine import SiteTables, StateGraphData, BudgetExceeded, INF, _get_bit
from . import engine_ops
from .geometry import (GeometryError, slide_bar, enumerate_Dbar, is_Qbar,
                       good_bad_sites, decompose, rectangle)


class UnreachableWithinBounds(RuntimeError):
    pass


@dataclass(frozen=True)
class PhiResult:
    """Bottleneck height; `reachable` distinguishes a certified value from an
    unreachable-within-bounds outcome (never a silent infinity)."""
    value_int: int
    reachable: bool

    @property
    def value(self) -> float:
        if not self.reachable:
            raise UnreachableWithinBounds(
                "communication height not certified within the explored bounds; "
                "widen E_max / N_max")
        return self.value_int * 1e-4


@dataclass
class PathCertificate:
    """Explicit configuration sequence witnessing a max-energy bound."""
    states: list
    max_energy_int: int
    argmax: tuple

    @property
    def max_energy(self) -> float:
        return self.max_energy_int * 1e-4

    def validate(self, params: ModelParams) -> bool:
        """Recompute: consecutive states one move apart, max matches."""
        for a, b in zip(self.states, self.states[1:]):
            if b not in neighbour_targets(a, params):
                return False
        hs = [energy_int(c, params) for c in self.states]
        m = max(hs)
        am = tuple(i for i, h in enumerate(hs) if h == m)
        return m == self.max_energy_int and am == tuple(self.argmax)


class StateGraph:
    """Lazily explored transition graph under an energy cutoff and particle
    cap; queries are bottleneck heights and reachability sweeps."""

    def __init__(self, params: ModelParams, data: StateGraphData):
        self.params = params
        self.data = data
        self._level_index = None
        self._phi_cache: dict = {}

    # -- construction -----------------------------------------------------
    @classmethod
    def explore(cls, params: ModelParams, sources, e_max: float,
                n_max: int, freeze_n: int | None = None,
                budget_states: int = 200_000_000) -> "StateGraph":
        tables = SiteTables(params)
        e_int = int(round(e_max / 1e-4))
        data = StateGraphData(tables, e_int, n_max, freeze_n, budget_states)
        data.add_sources(list(sources))
        data.run()
        return cls(params, data)

    # -- basic access -----------------------------------------------------
    @property
    def n_states(self) -> int:
        return self.data.count

    def lookup(self, cfg: Configuration) -> int:
        return self.data.lookup(cfg)

    def require(self, cfg: Configuration) -> int:
        sid = self.data.lookup(cfg)
        if sid < 0:
            raise KeyError("configuration not in the explored graph")
        return sid

    def config(self, sid: int) -> Configuration:
        return self.data.config(sid)

    def h_int(self, sid: int) -> int:
        return int(self.data.h[sid])

    @property
    def level_index(self):
        if self._level_index is None:
            self._level_index = engine_ops.LevelIndex(self.data)
        return self._level_index

    # -- bottleneck heights -------------------------------------------------
    def phi_from_ids(self, source_ids) -> np.ndarray:
        key = tuple(sorted(int(s) for s in source_ids))
        if key not in self._phi_cache:
            self._phi_cache[key] = engine_ops.phi_from(
                self.data, list(key), self.level_index)
        return self._phi_cache[key]

    def communication_height(self, a: Configuration, b) -> PhiResult:
        """Phi(a, b); b is a configuration, a state id, or an id iterable."""
        sid = self.require(a) if isinstance(a, Configuration) else int(a)
        phi = self.phi_from_ids([sid])
        if isinstance(b, Configuration):
            tids = [self.require(b)]
        elif np.isscalar(b):
            tids = [int(b)]
        else:
            tids = [int(x) for x in b]
        if not tids:
            return PhiResult(int(INF), False)
        best = min(int(phi[t]) for t in tids)
        return PhiResult(best, best < INF)

    def restricted_communication_height(self, a: Configuration, b: Configuration,
                                        allowed: np.ndarray) -> PhiResult:
        """Phi restricted to a supplied state subset (mask over state ids)."""
        sid, tid = self.require(a), self.require(b)
        if not allowed[sid] or not allowed[tid]:
            return PhiResult(int(INF), False)
        levels = self.level_index.levels
        lo = int(np.searchsorted(levels, max(self.h_int(sid), self.h_int(tid))))
        for li in range(lo, len(levels)):
            cut = int(levels[li])
            blocked = (~allowed.astype(bool)).astype(np.uint8)
            mask = engine_ops.reach_mask(self.data, [sid], cut, blocked=blocked)
            if mask[tid]:
                return PhiResult(cut, True)
        return PhiResult(int(INF), False)

    def reach(self, source_ids, cutoff_int: int, blocked=None) -> np.ndarray:
        return engine_ops.reach_mask(self.data, list(source_ids), cutoff_int,
                                     blocked=blocked)


# ---------------------------------------------------------------------------
# supercritical target
# ---------------------------------------------------------------------------

@njit(cache=True)
def _block_mask_run(w0a, w1a, w2a, count, side, wblock, hblock, col_mask,
                    y_lo, y_hi, out):
    for sid in range(count):
        w0 = w0a[sid]
        w1 = w1a[sid]
        w2 = w2a[sid]
        hit = False
        for y in range(y_lo, y_hi - hblock + 2):
            m = np.uint64(0xFFFFFFFFFFFFFFFF)
            for k in range(hblock):
                pos = (y + k) * side
                word = pos >> 6
                off = np.uint64(pos & 63)
                if word == 0:
                    v = w0 >> off
                    if off > np.uint64(0):
                        v |= w1 << (np.uint64(64) - off)
                elif word == 1:
                    v = w1 >> off
                    if off > np.uint64(0):
                        v |= w2 << (np.uint64(64) - off)
                else:
                    v = w2 >> off
                m &= v
            m &= col_mask
            r = m
            for _ in range(wblock - 1):
                r &= m >> np.uint64(1)
                m = m >> np.uint64(1)
            if r != np.uint64(0):
                hit = True
                break
        out[sid] = 1 if hit else 0


def supercritical_mask(graph: StateGraph) -> np.ndarray:
    """States holding a completely filled (2l2*-2) x l2* rectangle of interior
    sites: the protocritical rectangle completed, droplet past the gate.

    This pins down 'supercritical' for the finite-box analyses: a mere
    circumscribed-rectangle criterion admits flat subcritical slabs reachable
    far below Gamma*, while the filled rectangle needs n_c + 2 particles and
    is first reached at the nucleation barrier.
    """
    p = graph.params
    if p.regime != REGIME_STRONG:
        raise GeometryError("supercritical target defined for the strong regime")
    l2 = p.l2star
    side = p.L + 1
    col_mask = np.uint64(sum(1 << x for x in range(1, p.L)))
    out = np.zeros(graph.n_states, dtype=np.uint8)
    _block_mask_run(graph.data.w0, graph.data.w1, graph.data.w2, graph.n_states,
                    side, 2 * l2 - 2, l2, col_mask, 1, p.L - 1, out)
    return out


def is_supercritical(cfg: Configuration, params: ModelParams) -> bool:
    l2 = params.l2star
    w, h = 2 * l2 - 2, l2
    occ = set(cfg.sites())
    L = params.L
    for ax in range(1, L - w + 1):
        for ay in range(1, L - h + 1):
            if all((ax + dx, ay + dy) in occ for dx in range(w) for dy in range(h)):
                return True
    return False


# ---------------------------------------------------------------------------
# bottoms, stability levels, stable / metastable sets
# ---------------------------------------------------------------------------

def bottom(graph: StateGraph, subset_ids=None) -> list[int]:
    h = graph.data.h[:graph.n_states]
    if subset_ids is None:
        m = int(h.min())
        return [int(i) for i in np.nonzero(h == m)[0]]
    subset_ids = list(subset_ids)
    hs = h[subset_ids]
    m = int(hs.min())
    return [int(s) for s, v in zip(subset_ids, hs) if v == m]


def stability_level(graph: StateGraph, sid: int) -> PhiResult:
    """V_zeta = Phi(zeta, {H < H(zeta)}) - H(zeta); infinite when no lower
    state exists in the graph (value_int = INF, reachable False)."""
    h = graph.data.h[:graph.n_states]
    below = np.nonzero(h < h[sid])[0]
    if len(below) == 0:
        return PhiResult(int(INF), False)
    phi = graph.phi_from_ids([sid])
    best = int(phi[below].min())
    if best >= INF:
        return PhiResult(int(INF), False)
    return PhiResult(best - int(h[sid]), True)


def stable_set(graph: StateGraph) -> list[int]:
    return bottom(graph)

# guard: metastable classification does one bottleneck sweep per state
_METASTABLE_LIMIT = 300_000


def metastable_set(graph: StateGraph, limit: int = _METASTABLE_LIMIT) -> list[int]:
    if graph.n_states > limit:
        raise BudgetExceeded(
            f"metastable_set over {graph.n_states} states exceeds the limit")
    stable = set(stable_set(graph))
    best_v = None
    arg: list[int] = []
    for sid in range(graph.n_states):
        if sid in stable:
            continue
        v = stability_level(graph, sid)
        key = (1, 0) if not v.reachable else (0, v.value_int)
        if best_v is None or key > best_v:
            best_v = key
            arg = [sid]
        elif key == best_v:
            arg.append(sid)
    return arg


# ---------------------------------------------------------------------------
# saddles, gates, minimal gates
# ---------------------------------------------------------------------------

def saddle_set(graph: StateGraph, source_id: int, target_mask: np.ndarray
               ) -> np.ndarray:
    """S(a, b): states at the communication level lying on optimal paths,
    found by forward/backward reachability sweeps inside {H <= Phi}."""
    target_ids = np.nonzero(target_mask)[0]
    res = graph.communication_height(source_id, target_ids)
    if not res.reachable:
        raise UnreachableWithinBounds("saddle_set needs a certified Phi")
    gamma = res.value_int
    fwd = graph.reach([source_id], gamma)
    bwd = graph.reach([int(t) for t in target_ids if fwd[t]], gamma)
    h = graph.data.h[:graph.n_states]
    return ((h == gamma) & fwd.astype(bool) & bwd.astype(bool))


class RidgeStructure:
    """The transition region at the communication level, quotiented:
    strict-sublevel connected components become single nodes, ridge states
    (H == Phi) stay explicit. Gate and essentiality queries reduce to tiny
    breadth-first searches over this graph."""

    def __init__(self, graph: StateGraph, source_id: int, target_mask: np.ndarray):
        self.graph = graph
        self.source_id = int(source_id)
        res = graph.communication_height(source_id, np.nonzero(target_mask)[0])
        if not res.reachable:
            raise UnreachableWithinBounds("target not reachable within bounds")
        self.gamma = res.value_int
        phi = graph.phi_from_ids([source_id])
        h = graph.data.h[:graph.n_states]
        relevant = phi <= self.gamma
        self.strict_mask = relevant & (h < self.gamma)
        ridge = relevant & (h == self.gamma)
        self.ridge_ids = np.nonzero(ridge)[0].astype(np.int64)
        self.ridge_pos = {int(s): i for i, s in enumerate(self.ridge_ids)}
        labels = engine_ops.strict_components(
            graph.data, self.gamma, within=self.strict_mask)
        reps = np.unique(labels[labels >= 0])
        remap = {int(r): i for i, r in enumerate(reps)}
        self.n_comps = len(reps)
        self.comp_of = np.full(graph.n_states, -1, dtype=np.int64)
        for sid in np.nonzero(labels >= 0)[0]:
            self.comp_of[sid] = remap[int(labels[sid])]
        starts, flat = engine_ops.ridge_adjacency(
            graph.data, self.ridge_ids, self.comp_of, self.gamma)
        self.adj_starts = starts
        self.adj_flat = flat
        # reverse adjacency comp -> ridge positions
        comp_deg = np.zeros(self.n_comps + 1, dtype=np.int64)
        for v in flat:
            if v < 0:
                comp_deg[-v] += 0  # placeholder, filled below
        pairs_c = []
        pairs_r = []
        for rpos in range(len(self.ridge_ids)):
            for v in flat[starts[rpos]:starts[rpos + 1]]:
                if v < 0:
                    pairs_c.append(-int(v) - 1)
                    pairs_r.append(rpos)
        pairs_c = np.array(pairs_c, dtype=np.int64)
        pairs_r = np.array(pairs_r, dtype=np.int64)
        order = np.argsort(pairs_c, kind="stable")
        self.rev_flat = pairs_r[order]
        self.rev_starts = np.zeros(self.n_comps + 1, dtype=np.int64)
        np.add.at(self.rev_starts[1:], pairs_c, 1)
        np.cumsum(self.rev_starts, out=self.rev_starts)
        # targets
        tmask = target_mask.astype(bool)
        self.target_comps = np.unique(
            self.comp_of[np.nonzero(tmask & self.strict_mask)[0]])
        self.ridge_is_target = np.zeros(len(self.ridge_ids), dtype=np.uint8)
        for rpos, sid in enumerate(self.ridge_ids):
            if tmask[sid]:
                self.ridge_is_target[rpos] = 1
        self.source_comp = int(self.comp_of[self.source_id])
        if self.source_comp < 0:
            raise ValueError("source must live strictly below the ridge")

    def sweep(self, allowed_ridge: np.ndarray, from_source: bool = True,
              stop_at_target: bool = False):
        """BFS over (components | allowed ridge states). Returns
        (comp_visited, ridge_visited, target_hit)."""
        comp_seen = np.zeros(self.n_comps, dtype=np.uint8)
        ridge_seen = np.zeros(len(self.ridge_ids), dtype=np.uint8)
        cq: deque = deque()
        rq: deque = deque()
        hit = False

        def visit_comp(c):
            nonlocal hit
            if c >= 0 and not comp_seen[c]:
                comp_seen[c] = 1
                cq.append(c)
                if c in self._target_comp_set:
                    hit = True

        def visit_ridge(r):
            nonlocal hit
            if allowed_ridge[r] and not ridge_seen[r]:
                ridge_seen[r] = 1
                rq.append(r)
                if self.ridge_is_target[r]:
                    hit = True

        self._target_comp_set = set(int(c) for c in self.target_comps)
        if from_source:
            visit_comp(self.source_comp)
        else:
            for c in self.target_comps:
                visit_comp(int(c))
            for r in np.nonzero(self.ridge_is_target)[0]:
                visit_ridge(int(r))
        while (cq or rq) and not (stop_at_target and hit):
            while rq:
                r = rq.popleft()
                for v in self.adj_flat[self.adj_starts[r]:self.adj_starts[r + 1]]:
                    if v < 0:
                        visit_comp(-int(v) - 1)
                    else:
                        visit_ridge(int(v))
            if cq:
                c = cq.popleft()
                for r in self.rev_flat[self.rev_starts[c]:self.rev_starts[c + 1]]:
                    visit_ridge(int(r))
        return comp_seen, ridge_seen, hit

    def ridge_mask_from_ids(self, state_ids) -> np.ndarray:
        m = np.zeros(len(self.ridge_ids), dtype=np.uint8)
        for sid in state_ids:
            pos = self.ridge_pos.get(int(sid))
            if pos is not None:
                m[pos] = 1
        return m


def is_gate(structure: RidgeStructure, w_state_ids) -> bool:
    """W is a gate iff no optimal path survives with W deleted."""
    w = structure.ridge_mask_from_ids(w_state_ids)
    allowed = (1 - w).astype(np.uint8)
    _, _, hit = structure.sweep(allowed, stop_at_target=True)
    return not hit


def is_minimal_gate(structure: RidgeStructure, w_state_ids) -> bool:
    """Gate such that every member is crossed exclusively by some optimal
    path: each eta in W must touch both the forward and the backward sweep of
    the W-avoiding region."""
    w_ids = [int(s) for s in w_state_ids]
    w = structure.ridge_mask_from_ids(w_ids)
    if int(w.sum()) != len(set(w_ids)):
        raise ValueError("gate candidate contains states off the ridge")
    allowed = (1 - w).astype(np.uint8)
    comp_f, ridge_f, hit = structure.sweep(allowed, from_source=True)
    if hit:
        return False
    comp_b, ridge_b, _ = structure.sweep(allowed, from_source=False)
    for sid in set(w_ids):
        rpos = structure.ridge_pos[sid]
        row = structure.adj_flat[
            structure.adj_starts[rpos]:structure.adj_starts[rpos + 1]]
        fwd_ok = bwd_ok = False
        for v in row:
            if v < 0:
                c = -int(v) - 1
                fwd_ok = fwd_ok or bool(comp_f[c])
                bwd_ok = bwd_ok or bool(comp_b[c])
            else:
                fwd_ok = fwd_ok or bool(ridge_f[int(v)])
                bwd_ok = bwd_ok or bool(ridge_b[int(v)])
        if structure.ridge_is_target[rpos]:
            bwd_ok = True
        if not (fwd_ok and bwd_ok):
            return False
    return True


# ---------------------------------------------------------------------------
# essentiality certificates
# ---------------------------------------------------------------------------

@dataclass
class EssentialityResult:
    verdict: str                       # "essential" | "unessential" | "unknown"
    condition: str | None = None       # "(i)" or "(ii)" for essential
    witness: PathCertificate | None = None
    witness_argmax_ids: tuple = ()
    detail: str = ""


def _level_path_to(structure: RidgeStructure, ridge_target_pos,
                   allowed: np.ndarray):
    """BFS over the ridge structure from the source component to one of the
    given ridge positions, minimizing ridge crossings; returns the ridge
    positions crossed (in order) or None."""
    targets = set(int(r) for r in ridge_target_pos)
    comp_par = {}
    ridge_par = {}
    dq = deque()
    dq.append(("c", structure.source_comp))
    comp_par[structure.source_comp] = None
    found = None
    while dq and found is None:
        kind, node = dq.popleft()
        if kind == "c":
            for r in structure.rev_flat[
                    structure.rev_starts[node]:structure.rev_starts[node + 1]]:
                r = int(r)
                if allowed[r] and r not in ridge_par:
                    ridge_par[r] = ("c", node)
                    if r in targets:
                        found = r
                        break
                    dq.append(("r", r))
        else:
            for v in structure.adj_flat[
                    structure.adj_starts[node]:structure.adj_starts[node + 1]]:
                if v < 0:
                    c = -int(v) - 1
                    if c not in comp_par:
                        comp_par[c] = ("r", node)
                        dq.append(("c", c))
                else:
                    r = int(v)
                    if allowed[r] and r not in ridge_par:
                        ridge_par[r] = ("r", node)
                        if r in targets:
                            found = r
                            break
                        dq.append(("r", r))
    if found is None:
        return None
    crossings = [found]
    cur = ridge_par[found]
    while cur is not None:
        kind, node = cur
        if kind == "r":
            crossings.append(node)
            cur = ridge_par[node]
        else:
            cur = comp_par[node]
    return list(reversed(crossings))


def essential_certificate(structure: RidgeStructure, xi_state_id: int,
                          witness_budget: int = 8) -> EssentialityResult:
    """Classify a saddle as essential/unessential.

    Condition (i): some optimal path has xi as its unique maximum; checked by
    strict-sublevel sweeps. Condition (ii): a witness optimal path through xi
    exists whose maximum set M cannot be shrunk past xi by any optimal path;
    verified by deleting all ridge states outside M \\ {xi}. `unknown` is an
    explicit outcome when the witness budget is exhausted.
    """
    if witness_budget < 1:
        raise ValueError("witness budget must be positive")
    g = structure.graph
    xi = int(xi_state_id)
    rpos = structure.ridge_pos.get(xi)
    if rpos is None:
        raise ValueError("state is not on the ridge at the communication level")
    # condition (i): strict sweeps
    strict_cut = structure.gamma - 1
    fwd = g.reach([structure.source_id], strict_cut)
    bwd_sources = [int(s) for s in np.nonzero(
        structure.strict_mask)[0]
        if structure.comp_of[s] in set(int(c) for c in structure.target_comps)]
    # restrict to one representative per target component for speed
    reps = {}
    for s in bwd_sources:
        reps.setdefault(int(structure.comp_of[s]), s)
    bwd = g.reach(list(reps.values()), strict_cut) if reps else \
        np.zeros(g.n_states, dtype=np.uint8)
    nbr = [t for t, _, _ in engine_ops.neighbours(g.data, xi) if t >= 0]
    has_f = any(fwd[t] for t in nbr)
    has_b = any(bwd[t] for t in nbr)
    if has_f and has_b:
        path_f = _strict_path(g, structure, xi, fwd, from_source=True)
        path_b = _strict_path(g, structure, xi, bwd, from_source=False)
        cert = _join_paths(g, path_f, xi, path_b)
        return EssentialityResult("essential", "(i)", cert,
                                  witness_argmax_ids=(xi,),
                                  detail="unique-maximum path")
    # condition (ii): witness enumeration
    all_allowed = np.ones(len(structure.ridge_ids), dtype=np.uint8)
    banned = np.zeros(len(structure.ridge_ids), dtype=np.uint8)
    for attempt in range(witness_budget):
        allowed = (all_allowed & (1 - banned)).astype(np.uint8)
        allowed[rpos] = 1
        to_xi = _level_path_to(structure, [rpos], allowed)
        if to_xi is None:
            break
        # continue from xi to the target through allowed ridge states
        onward = _onward_crossings(structure, rpos, allowed)
        if onward is None:
            banned[to_xi[-2] if len(to_xi) > 1 else rpos] = 1
            continue
        m_set = sorted(set(to_xi) | set(onward))
        shrunk = np.zeros(len(structure.ridge_ids), dtype=np.uint8)
        for r in m_set:
            shrunk[r] = 1
        shrunk[rpos] = 0
        _, _, hit = structure.sweep(shrunk, stop_at_target=True)
        if not hit:
            ids = tuple(int(structure.ridge_ids[r]) for r in m_set)
            return EssentialityResult(
                "essential", "(ii)", None, witness_argmax_ids=ids,
                detail=f"witness with {len(m_set)} ridge crossings, "
                       f"no optimal path inside the shrunk maximum set")
        for r in m_set:
            if r != rpos:
                banned[r] = 1
    return EssentialityResult("unknown", None, None, (),
                              detail="witness budget exhausted")


def _onward_crossings(structure: RidgeStructure, rpos: int, allowed):
    """Ridge crossings of a continuation xi -> target (BFS as in
    _level_path_to but started at the ridge state)."""
    comp_par = {}
    ridge_par = {rpos: None}
    dq = deque([("r", rpos)])
    found = None
    if structure.ridge_is_target[rpos]:
        return [rpos]
    tset = set(int(c) for c in structure.target_comps)
    while dq and found is None:
        kind, node = dq.popleft()
        if kind == "r":
            for v in structure.adj_flat[
                    structure.adj_starts[node]:structure.adj_starts[node + 1]]:
                if v < 0:
                    c = -int(v) - 1
                    if c not in comp_par:
                        comp_par[c] = ("r", node)
                        if c in tset:
                            found = ("c", c)
                            break
                        dq.append(("c", c))
                else:
                    r = int(v)
                    if allowed[r] and r not in ridge_par:
                        ridge_par[r] = ("r", node)
                        if structure.ridge_is_target[r]:
                            found = ("r", r)
                            break
                        dq.append(("r", r))
        else:
            for r in structure.rev_flat[
                    structure.rev_starts[node]:structure.rev_starts[node + 1]]:
                r = int(r)
                if allowed[r] and r not in ridge_par:
                    ridge_par[r] = ("c", node)
                    if structure.ridge_is_target[r]:
                        found = ("r", r)
                        break
                    dq.append(("r", r))
    if found is None:
        return None
    crossings = []
    cur = found
    while cur is not None:
        kind, node = cur
        if kind == "r":
            crossings.append(node)
            cur = ridge_par[node]
        else:
            cur = comp_par[node]
    return crossings


def _strict_path(graph: StateGraph, structure: RidgeStructure, xi: int,
                 mask: np.ndarray, from_source: bool):
    """Parented BFS inside the strict sublevel from (source | targets) to a
    neighbour of xi; returns the state-id path ending next to xi."""
    cut = structure.gamma - 1
    starts = [structure.source_id] if from_source else None
    if starts is None:
        tset = set(int(c) for c in structure.target_comps)
        starts = []
        seen_comp = set()
        for s in np.nonzero(structure.strict_mask)[0]:
            c = int(structure.comp_of[s])
            if c in tset and c not in seen_comp:
                seen_comp.add(c)
                starts.append(int(s))
    parent = {int(s): None for s in starts}
    dq = deque(int(s) for s in starts)
    goal = set(t for t, _, _ in engine_ops.neighbours(graph.data, xi)
               if t >= 0 and mask[t])
    found = None
    for s in dq:
        if s in goal:
            found = s
    while dq and found is None:
        s = dq.popleft()
        for t, h_int, _ in engine_ops.neighbours(graph.data, s):
            if t < 0 or h_int > cut or t in parent:
                continue
            parent[t] = s
            if t in goal:
                found = t
                break
            dq.append(t)
    if found is None:
        raise RuntimeError("strict path vanished; masks inconsistent")
    path = []
    cur = found
    while cur is not None:
        path.append(cur)
        cur = parent[cur]
    return list(reversed(path))


def _join_paths(graph: StateGraph, path_f, xi, path_b) -> PathCertificate:
    ids = path_f + [xi] + list(reversed(path_b))
    states = [graph.config(s) for s in ids]
    hs = [graph.h_int(s) for s in ids]
    m = max(hs)
    return PathCertificate(states, m, tuple(i for i, h in enumerate(hs) if h == m))


# ---------------------------------------------------------------------------
# reference nucleation path
# ---------------------------------------------------------------------------

def _is_safe_site(cfg: Configuration, site) -> bool:
    """A free particle can sit here without binding: boundary-ring sites
    always, interior sites iff no occupied interior neighbour."""
    x, y = site
    L = cfg.L
    if not in_interior(L, x, y):
        return True
    for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        nx, ny = x + dx, y + dy
        if in_interior(L, nx, ny) and cfg.occupied(nx, ny):
            return False
    return True


def _free_walk(cfg: Configuration, dst, src=None):
    """Site path for a free particle from a border entry (or src) to dst,
    through safe empty sites; dst itself may be an attachment site."""
    L = cfg.L
    border = [(x, y) for x in range(L + 1) for y in range(L + 1)
              if not in_interior(L, x, y) and not cfg.occupied(x, y)]
    starts = [src] if src is not None else border
    parent = {}
    dq = deque()
    for s in starts:
        parent[s] = None
        dq.append(s)
    goal_pre = set()
    for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        pre = (dst[0] + dx, dst[1] + dy)
        if 0 <= pre[0] <= L and 0 <= pre[1] <= L and not cfg.occupied(*pre) \
                and _is_safe_site(cfg, pre):
            goal_pre.add(pre)
    end = None
    for s in starts:
        if s == dst or s in goal_pre:
            end = s
            break
    while dq and end is None:
        s = dq.popleft()
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            t = (s[0] + dx, s[1] + dy)
            if not (0 <= t[0] <= L and 0 <= t[1] <= L) or t in parent:
                continue
            if cfg.occupied(*t) or not _is_safe_site(cfg, t):
                continue
            parent[t] = s
            if t == dst or t in goal_pre:
                end = t
                break
            dq.append(t)
    if end is None:
        raise GeometryError(f"no free-particle route to {dst}")
    sites = []
    cur = end
    while cur is not None:
        sites.append(cur)
        cur = parent[cur]
    sites.reverse()
    if sites[-1] != dst:
        sites.append(dst)
    return sites


def _deliver(path: list, dst) -> None:
    """Create a particle at the border and walk it onto dst (in place)."""
    cfg = path[-1]
    sites = _free_walk(cfg, dst)
    cur = cfg.with_site(*sites[0], 1)
    path.append(cur)
    for a, b in zip(sites, sites[1:]):
        cur = cur.with_site(*a, 0).with_site(*b, 1)
        path.append(cur)


def _remove(path: list, site) -> None:
    """Detach the particle at site, walk it to the border, annihilate."""
    cfg = path[-1]
    vacated = cfg.with_site(*site, 0)
    L = cfg.L
    first = None
    for dx, dy in ((0, 1), (1, 0), (-1, 0), (0, -1)):
        t = (site[0] + dx, site[1] + dy)
        if 0 <= t[0] <= L and 0 <= t[1] <= L and not cfg.occupied(*t) \
                and _is_safe_site(vacated, t):
            first = t
            break
    if first is None:
        raise GeometryError(f"cannot detach particle at {site}")
    cur = vacated.with_site(*first, 1)
    path.append(cur)
    # walk to the nearest empty border site through safe cells
    parent = {first: None}
    dq = deque([first])
    end = first if not in_interior(L, *first) else None
    base = cur.with_site(*first, 0)
    while dq and end is None:
        s = dq.popleft()
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            t = (s[0] + dx, s[1] + dy)
            if not (0 <= t[0] <= L and 0 <= t[1] <= L) or t in parent:
                continue
            if base.occupied(*t) or not _is_safe_site(base, t):
                continue
            parent[t] = s
            if not in_interior(L, *t):
                end = t
                break
            dq.append(t)
    if end is None:
        raise GeometryError("no exit route to the boundary")
    sites = []
    c = end
    while c is not None:
        sites.append(c)
        c = parent[c]
    sites.reverse()
    for a, b in zip(sites, sites[1:]):
        cur = cur.with_site(*a, 0).with_site(*b, 1)
        path.append(cur)
    path.append(cur.with_site(*end if not sites[1:] else sites[-1], 0))


def _frozen_path_to_qbar(start: Configuration, params: ModelParams):
    """Particle-conserving U1-path from a protocritical state to the
    protocritical rectangle-plus-protuberance shape, by bounded search."""
    cap = energy_int(start, params) + params.u1_i
    n0 = start.n_particles
    parent = {start.bits: None}
    cfgs = {start.bits: start}
    dq = deque([start.bits])
    goal = None
    if is_Qbar(start, params):
        goal = start.bits
    while dq and goal is None:
        bits = dq.popleft()
        cfg = cfgs[bits]
        for t in neighbour_targets(cfg, params):
            if t.n_particles != n0 or t.bits in parent:
                continue
            if energy_int(t, params) > cap:
                continue
            parent[t.bits] = bits
            cfgs[t.bits] = t
            if is_Qbar(t, params):
                goal = t.bits
                break
            dq.append(t.bits)
    if goal is None:
        raise GeometryError("no bar-sliding route to the rectangle shape")
    out = []
    cur = goal
    while cur is not None:
        out.append(cfgs[cur])
        cur = parent[cur]
    return list(reversed(out))


def reference_nucleation_path(params: ModelParams) -> PathCertificate:
    """Explicit nucleation path from the empty box to a supercritical state
    with maximal energy exactly Gamma*.

    The critical segment climbs through the wide-rectangle staircase, slides
    the east bar around a frame-angle (crossing the sliding saddles and the
    critical set), detours through the protocritical rectangle-plus-
    protuberance shape, re-creates the free particle (critical set again) and
    completes the filled supercritical rectangle.
    """
    if params.regime != REGIME_STRONG:
        raise GeometryError("reference path requires strongly anisotropic parameters")
    l2 = params.l2star
    L = params.L
    if l2 < 3:
        raise GeometryError("reference path needs l2* >= 3")
    if L < 2 * l2 + 2:
        raise GeometryError(f"box too small: need L >= {2 * l2 + 2}")
    path = [Configuration.empty(L)]
    # stage A: staircase to the (2l2*-1) x (l2*-1) rectangle, column by column
    for x in range(1, 2 * l2):
        for y in range(1, 3):
            _deliver(path, (x, y))
    for y in range(3, l2):
        for x in range(1, 2 * l2):
            _deliver(path, (x, y))
    # stage B: north protuberance next to the ne frame-angle
    _deliver(path, (2 * l2 - 2, l2))
    # stage C: slide the east bar around the ne frame-angle
    for cfg in slide_bar(path[-1], "e", "n")[1:]:
        path.append(cfg)
    # stage D: shed the west end of the new top bar
    _remove(path, (l2 - 1, l2))
    # stage E: particle-conserving route to the rectangle-plus-protuberance
    for cfg in _frozen_path_to_qbar(path[-1], params)[1:]:
        path.append(cfg)
    # stage F: free particle re-created and attached at a good site
    good, _bad = good_bad_sites(path[-1])
    occ = set(path[-1].sites())
    best = max(good, key=lambda g: sum(
        ((g[0] + dx, g[1] + dy) in occ) * (params.u1_i if dy == 0 else params.u2_i)
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1))))
    _deliver(path, best)
    # stage G: complete the filled supercritical rectangle
    while not is_supercritical(path[-1], params):
        fr_cells = decompose(path[-1]).cluster_sites
        x0 = min(x for x, _ in fr_cells)
        y0 = min(y for _, y in fr_cells)
        x1 = max(x for x, _ in fr_cells)
        y1 = max(y for _, y in fr_cells)
        todo = [(x, y) for x in range(x0, x1 + 1) for y in range(y0, y1 + 1)
                if (x, y) not in fr_cells]
        todo.sort(key=lambda c: -sum(
            ((c[0] + dx, c[1] + dy) in fr_cells) *
            (params.u1_i if dy == 0 else params.u2_i)
            for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1))))
        if not todo:
            raise GeometryError("supercritical completion stalled")
        _deliver(path, todo[0])
    hs = [energy_int(c, params) for c in path]
    m = max(hs)
    if m != params.gamma_i:
        raise GeometryError(
            f"reference path peaked at {m * 1e-4}, expected {params.gamma_star}")
    return PathCertificate(path, m, tuple(i for i, h in enumerate(hs) if h == m))
