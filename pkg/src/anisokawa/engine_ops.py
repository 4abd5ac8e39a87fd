"""Graph analytics over the explored state table: bottleneck heights,
reachability sweeps, strict-sublevel components and the ridge-level graph.

Everything regenerates moves on the fly from the bit-packed states; no edge
lists are stored except the (deduplicated) ridge-level adjacency.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .engine import (StateGraphData, _gen_moves, _probe, INF, BudgetExceeded)


@njit(cache=True)
def _neighbour_ids(sid, tw0, tw1, tw2, th, tn, tab, nbr, bond, interior,
                   ext_mult, border_sites, delta_i, freeze,
                   bw0, bw1, bw2, bh, bn, bm, out_ids):
    cnt = _gen_moves(tw0[sid], tw1[sid], tw2[sid], th[sid], np.int64(tn[sid]),
                     nbr, bond, interior, ext_mult, border_sites, delta_i,
                     freeze, bw0, bw1, bw2, bh, bn, bm)
    m = 0
    for i in range(cnt):
        res = _probe(tab, tw0, tw1, tw2, bw0[i], bw1[i], bw2[i])
        out_ids[m] = res  # negative when the neighbour left the explored set
        m += 1
    return m


def _buffers(tables):
    nbuf = 4 * tables.n_sites + 8
    return (np.empty(nbuf, dtype=np.uint64), np.empty(nbuf, dtype=np.uint64),
            np.empty(nbuf, dtype=np.uint64), np.empty(nbuf, dtype=np.int64),
            np.empty(nbuf, dtype=np.int64), np.empty(nbuf, dtype=np.int64),
            np.empty(nbuf, dtype=np.int64))


def neighbours(graph: StateGraphData, sid: int) -> list[tuple[int, int, int]]:
    """(neighbour id, H_int, multiplicity) for in-graph neighbours; id < 0
    marks a move that exits the explored bounds."""
    t = graph.tables
    bw0, bw1, bw2, bh, bn, bm, _ = _buffers(t)
    freeze = graph.freeze_n is not None
    cnt = _gen_moves(graph.w0[sid], graph.w1[sid], graph.w2[sid],
                     graph.h[sid], np.int64(graph.n[sid]), t.nbr, t.bond,
                     t.interior, t.ext_mult, t.border_sites, t.delta_i, freeze,
                     bw0, bw1, bw2, bh, bn, bm)
    out = []
    for i in range(cnt):
        res = _probe(graph.tab, graph.w0, graph.w1, graph.w2, bw0[i], bw1[i], bw2[i])
        out.append((int(res), int(bh[i]), int(bm[i])))
    return out


@njit(cache=True)
def _phi_run(tw0, tw1, tw2, th, tn, tab, count, nbr, bond, interior, ext_mult,
             border_sites, delta_i, freeze, levels, h_idx, phi_idx,
             q_state, q_next, bucket_head, qc, start_level):
    """Bucketed bottleneck Dijkstra over level indices. Returns
    (qc, level, status); status 1 = queue full (grow and resume)."""
    n_levels = levels.shape[0]
    nbuf = 4 * nbr.shape[0] + 8
    bw0 = np.empty(nbuf, dtype=np.uint64)
    bw1 = np.empty(nbuf, dtype=np.uint64)
    bw2 = np.empty(nbuf, dtype=np.uint64)
    bh = np.empty(nbuf, dtype=np.int64)
    bn = np.empty(nbuf, dtype=np.int64)
    bm = np.empty(nbuf, dtype=np.int64)
    qcap = q_state.shape[0]
    for lvl in range(start_level, n_levels):
        while True:
            ptr = bucket_head[lvl]
            if ptr < 0:
                break
            bucket_head[lvl] = q_next[ptr]
            sid = q_state[ptr]
            if phi_idx[sid] != lvl:
                continue
            cnt = _gen_moves(tw0[sid], tw1[sid], tw2[sid], th[sid],
                             np.int64(tn[sid]), nbr, bond, interior, ext_mult,
                             border_sites, delta_i, freeze,
                             bw0, bw1, bw2, bh, bn, bm)
            for i in range(cnt):
                res = _probe(tab, tw0, tw1, tw2, bw0[i], bw1[i], bw2[i])
                if res < 0:
                    continue
                tid = res
                cand = lvl if lvl > h_idx[tid] else h_idx[tid]
                if cand < phi_idx[tid]:
                    phi_idx[tid] = cand
                    if qc >= qcap:
                        return qc, lvl, 1
                    q_state[qc] = tid
                    q_next[qc] = bucket_head[cand]
                    bucket_head[cand] = qc
                    qc += 1
    return qc, n_levels, 0


class LevelIndex:
    """Distinct energy levels of the explored set, for bucket queues."""

    def __init__(self, graph: StateGraphData):
        h = graph.h[:graph.count]
        self.levels = np.unique(h)
        self.h_idx = np.searchsorted(self.levels, h).astype(np.int32)

    def index_of(self, h_int: int) -> int:
        i = int(np.searchsorted(self.levels, h_int))
        if i == len(self.levels) or self.levels[i] != h_int:
            raise KeyError(f"energy {h_int} is not a level of the graph")
        return i


def phi_from(graph: StateGraphData, source_ids, level_index: LevelIndex | None = None
             ) -> np.ndarray:
    """Bottleneck value Phi(sources, x) for every state, as int64 energy units
    (INF where unreachable within the explored bounds)."""
    li = level_index or LevelIndex(graph)
    count = graph.count
    n_levels = len(li.levels)
    phi_idx = np.full(count, n_levels, dtype=np.int32)
    qcap = max(4 * count, 1 << 12)
    q_state = np.empty(qcap, dtype=np.int64)
    q_next = np.empty(qcap, dtype=np.int64)
    bucket_head = np.full(n_levels, -1, dtype=np.int64)
    qc = 0
    start_level = n_levels
    for sid in source_ids:
        lvl = li.h_idx[sid]
        if lvl < phi_idx[sid]:
            phi_idx[sid] = lvl
            q_state[qc] = sid
            q_next[qc] = bucket_head[lvl]
            bucket_head[lvl] = qc
            qc += 1
            start_level = min(start_level, int(lvl))
    t = graph.tables
    freeze = graph.freeze_n is not None
    while True:
        qc, level, status = _phi_run(
            graph.w0, graph.w1, graph.w2, graph.h, graph.n, graph.tab, count,
            t.nbr, t.bond, t.interior, t.ext_mult, t.border_sites, t.delta_i,
            freeze, li.levels, li.h_idx, phi_idx, q_state, q_next, bucket_head,
            qc, start_level)
        if status == 0:
            break
        start_level = level
        q_state = np.concatenate([q_state, np.empty(len(q_state), dtype=np.int64)])
        q_next = np.concatenate([q_next, np.empty(len(q_next), dtype=np.int64)])
    phi = np.where(phi_idx < n_levels, li.levels[np.minimum(phi_idx, n_levels - 1)],
                   INF)
    return phi.astype(np.int64)


@njit(cache=True)
def _reach_run(tw0, tw1, tw2, th, tn, tab, nbr, bond, interior, ext_mult,
               border_sites, delta_i, freeze, cutoff, visited, blocked, queue, qn):
    nbuf = 4 * nbr.shape[0] + 8
    bw0 = np.empty(nbuf, dtype=np.uint64)
    bw1 = np.empty(nbuf, dtype=np.uint64)
    bw2 = np.empty(nbuf, dtype=np.uint64)
    bh = np.empty(nbuf, dtype=np.int64)
    bn = np.empty(nbuf, dtype=np.int64)
    bm = np.empty(nbuf, dtype=np.int64)
    head = 0
    while head < qn:
        sid = queue[head]
        head += 1
        cnt = _gen_moves(tw0[sid], tw1[sid], tw2[sid], th[sid], np.int64(tn[sid]),
                         nbr, bond, interior, ext_mult, border_sites, delta_i,
                         freeze, bw0, bw1, bw2, bh, bn, bm)
        for i in range(cnt):
            if bh[i] > cutoff:
                continue
            res = _probe(tab, tw0, tw1, tw2, bw0[i], bw1[i], bw2[i])
            if res < 0:
                continue
            tid = res
            if visited[tid] or blocked[tid]:
                continue
            visited[tid] = 1
            queue[qn] = tid
            qn += 1
    return qn


def reach_mask(graph: StateGraphData, source_ids, cutoff_int: int,
               blocked: np.ndarray | None = None) -> np.ndarray:
    """States reachable from the sources through {H <= cutoff} avoiding
    blocked states. Sources must satisfy the constraint themselves."""
    count = graph.count
    visited = np.zeros(count, dtype=np.uint8)
    if blocked is None:
        blocked = np.zeros(count, dtype=np.uint8)
    queue = np.empty(count, dtype=np.int64)
    qn = 0
    for sid in source_ids:
        if graph.h[sid] <= cutoff_int and not blocked[sid] and not visited[sid]:
            visited[sid] = 1
            queue[qn] = sid
            qn += 1
    t = graph.tables
    _reach_run(graph.w0, graph.w1, graph.w2, graph.h, graph.n, graph.tab,
               t.nbr, t.bond, t.interior, t.ext_mult, t.border_sites, t.delta_i,
               graph.freeze_n is not None, np.int64(cutoff_int), visited,
               blocked, queue, qn)
    return visited


@njit(cache=True)
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@njit(cache=True)
def _components_run(tw0, tw1, tw2, th, tn, tab, count, nbr, bond, interior,
                    ext_mult, border_sites, delta_i, freeze, cutoff, parent,
                    in_set):
    nbuf = 4 * nbr.shape[0] + 8
    bw0 = np.empty(nbuf, dtype=np.uint64)
    bw1 = np.empty(nbuf, dtype=np.uint64)
    bw2 = np.empty(nbuf, dtype=np.uint64)
    bh = np.empty(nbuf, dtype=np.int64)
    bn = np.empty(nbuf, dtype=np.int64)
    bm = np.empty(nbuf, dtype=np.int64)
    for sid in range(count):
        if not in_set[sid]:
            continue
        cnt = _gen_moves(tw0[sid], tw1[sid], tw2[sid], th[sid], np.int64(tn[sid]),
                         nbr, bond, interior, ext_mult, border_sites, delta_i,
                         freeze, bw0, bw1, bw2, bh, bn, bm)
        for i in range(cnt):
            if bh[i] > cutoff:
                continue
            res = _probe(tab, tw0, tw1, tw2, bw0[i], bw1[i], bw2[i])
            if res < 0 or not in_set[res]:
                continue
            ra = _find(parent, sid)
            rb = _find(parent, res)
            if ra != rb:
                if ra < rb:
                    parent[rb] = ra
                else:
                    parent[ra] = rb
    for sid in range(count):
        if in_set[sid]:
            parent[sid] = _find(parent, sid)


def strict_components(graph: StateGraphData, cutoff_int: int,
                      within: np.ndarray | None = None) -> np.ndarray:
    """Connected components of {H < cutoff} (optionally intersected with a
    mask); labels are representative state ids, -1 outside the set."""
    count = graph.count
    in_set = (graph.h[:count] < cutoff_int)
    if within is not None:
        in_set &= within.astype(bool)
    parent = np.arange(count, dtype=np.int64)
    t = graph.tables
    _components_run(graph.w0, graph.w1, graph.w2, graph.h, graph.n, graph.tab,
                    count, t.nbr, t.bond, t.interior, t.ext_mult, t.border_sites,
                    t.delta_i, graph.freeze_n is not None, np.int64(cutoff_int),
                    parent, in_set)
    labels = np.where(in_set, parent, -1)
    return labels


@njit(cache=True)
def _ridge_adj_run(ridge_ids, tw0, tw1, tw2, th, tn, tab, nbr, bond, interior,
                   ext_mult, border_sites, delta_i, freeze, cutoff, comp_label,
                   is_ridge, ridge_pos, starts, flat, pass_fill):
    """Dedup adjacency of ridge states to (strict components | ridge states).
    Component entries are encoded as ~comp_label (negative); ridge entries as
    the ridge position index."""
    nbuf = 4 * nbr.shape[0] + 8
    bw0 = np.empty(nbuf, dtype=np.uint64)
    bw1 = np.empty(nbuf, dtype=np.uint64)
    bw2 = np.empty(nbuf, dtype=np.uint64)
    bh = np.empty(nbuf, dtype=np.int64)
    bn = np.empty(nbuf, dtype=np.int64)
    bm = np.empty(nbuf, dtype=np.int64)
    local = np.empty(nbuf, dtype=np.int64)
    total = 0
    for k in range(ridge_ids.shape[0]):
        sid = ridge_ids[k]
        cnt = _gen_moves(tw0[sid], tw1[sid], tw2[sid], th[sid], np.int64(tn[sid]),
                         nbr, bond, interior, ext_mult, border_sites, delta_i,
                         freeze, bw0, bw1, bw2, bh, bn, bm)
        m = 0
        for i in range(cnt):
            if bh[i] > cutoff:
                continue
            res = _probe(tab, tw0, tw1, tw2, bw0[i], bw1[i], bw2[i])
            if res < 0:
                continue
            if is_ridge[res]:
                code = ridge_pos[res]
            elif comp_label[res] >= 0:
                code = -np.int64(comp_label[res]) - 1
            else:
                continue
            seen = False
            for j in range(m):
                if local[j] == code:
                    seen = True
                    break
            if not seen:
                local[m] = code
                m += 1
        if pass_fill:
            base = starts[k]
            for j in range(m):
                flat[base + j] = local[j]
        else:
            starts[k] = m
        total += m
    return total


def ridge_adjacency(graph: StateGraphData, ridge_ids: np.ndarray,
                    comp_label: np.ndarray, cutoff_int: int):
    """CSR adjacency of the ridge (H == cutoff) states: entries >= 0 are ridge
    positions, entries < 0 encode strict components as ~comp."""
    count = graph.count
    is_ridge = np.zeros(count, dtype=np.uint8)
    ridge_pos = np.full(count, -1, dtype=np.int64)
    for k, sid in enumerate(ridge_ids):
        is_ridge[sid] = 1
        ridge_pos[sid] = k
    t = graph.tables
    args = (graph.w0, graph.w1, graph.w2, graph.h, graph.n, graph.tab,
            t.nbr, t.bond, t.interior, t.ext_mult, t.border_sites, t.delta_i,
            graph.freeze_n is not None, np.int64(cutoff_int), comp_label,
            is_ridge, ridge_pos)
    counts = np.zeros(len(ridge_ids), dtype=np.int64)
    _ridge_adj_run(ridge_ids, *args, counts, np.empty(0, dtype=np.int64), False)
    starts = np.zeros(len(ridge_ids) + 1, dtype=np.int64)
    np.cumsum(counts, out=starts[1:])
    flat = np.empty(int(starts[-1]), dtype=np.int64)
    _ridge_adj_run(ridge_ids, *args, starts[:-1].copy(), flat, True)
    return starts, flat
