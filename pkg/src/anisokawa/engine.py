"""Bit-packed state-space engine.

States are (L+1)^2 <= 192 occupancy bits in three 64-bit words. The engine
holds an insertion-ordered state table with an open-addressing index, and
regenerates moves on the fly instead of storing edges. All heavy kernels are
numba-compiled; wrappers own the (growable) arrays.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .model import Configuration
from .params import ModelParams

U64 = np.uint64
INF = np.int64(2 ** 62)

MAX_WORDS = 3
MAX_SITES = 192


class BudgetExceeded(RuntimeError):
    """State budget blown; carries a frontier snapshot for diagnostics."""

    def __init__(self, message, n_states=None, frontier_head=None):
        super().__init__(message)
        self.n_states = n_states
        self.frontier_head = frontier_head


class SiteTables:
    """Per-(L, params) geometry and energy tables used by the kernels."""

    def __init__(self, params: ModelParams):
        L = params.L
        side = L + 1
        n = side * side
        if n > MAX_SITES:
            raise ValueError(f"engine supports boxes up to {MAX_SITES} sites")
        self.params = params
        self.L = L
        self.side = side
        self.n_sites = n
        nbr = np.full((n, 4), -1, dtype=np.int32)
        bond = np.zeros((n, 4), dtype=np.int64)
        interior = np.zeros(n, dtype=np.bool_)
        ext_mult = np.zeros(n, dtype=np.int8)
        dirs = ((1, 0), (-1, 0), (0, 1), (0, -1))
        for y in range(side):
            for x in range(side):
                s = y * side + x
                interior[s] = 1 <= x <= L - 1 and 1 <= y <= L - 1
                for d, (dx, dy) in enumerate(dirs):
                    nx, ny = x + dx, y + dy
                    if 0 <= nx <= L and 0 <= ny <= L:
                        nbr[s, d] = ny * side + nx
                    else:
                        ext_mult[s] += 1
        for s in range(n):
            for d in range(4):
                t = nbr[s, d]
                if t >= 0 and interior[s] and interior[t]:
                    bond[s, d] = params.u1_i if d < 2 else params.u2_i
        self.nbr = nbr
        self.bond = bond
        self.interior = interior
        self.ext_mult = ext_mult
        self.border_sites = np.array(
            [s for s in range(n) if ext_mult[s] > 0], dtype=np.int32)
        self.delta_i = np.int64(params.delta_i)
        self.n_bonds = np.int64(4 * side * (side - 1) + 8 * side)


def config_to_words(cfg: Configuration) -> np.ndarray:
    w = np.zeros(MAX_WORDS, dtype=np.uint64)
    bits = cfg.bits
    for i in range(MAX_WORDS):
        w[i] = (bits >> (64 * i)) & 0xFFFFFFFFFFFFFFFF
    return w


def words_to_config(L: int, w0, w1, w2) -> Configuration:
    bits = int(w0) | (int(w1) << 64) | (int(w2) << 128)
    return Configuration(L, bits)


@njit(cache=True, inline="always")
def _get_bit(w0, w1, w2, idx):
    word = idx >> 6
    off = np.uint64(idx & 63)
    if word == 0:
        return (w0 >> off) & np.uint64(1)
    elif word == 1:
        return (w1 >> off) & np.uint64(1)
    return (w2 >> off) & np.uint64(1)


@njit(cache=True, inline="always")
def _flip_bit(w0, w1, w2, idx):
    word = idx >> 6
    mask = np.uint64(1) << np.uint64(idx & 63)
    if word == 0:
        w0 ^= mask
    elif word == 1:
        w1 ^= mask
    else:
        w2 ^= mask
    return w0, w1, w2


@njit(cache=True, inline="always")
def _mix(w0, w1, w2):
    h = w0 * np.uint64(0x9E3779B97F4A7C15)
    h ^= w1 * np.uint64(0xC2B2AE3D27D4EB4F) + (h >> np.uint64(29))
    h ^= w2 * np.uint64(0x165667B19E3779F9) + (h << np.uint64(13))
    h ^= h >> np.uint64(33)
    h *= np.uint64(0xFF51AFD7ED558CCD)
    h ^= h >> np.uint64(33)
    return h


@njit(cache=True)
def _full_energy(w0, w1, w2, nbr, bond, delta_i):
    n = nbr.shape[0]
    e = np.int64(0)
    npart = np.int64(0)
    for s in range(n):
        if _get_bit(w0, w1, w2, s):
            npart += 1
            # count east (d=0) and north (d=2) bonds once per pair
            for d in (0, 2):
                t = nbr[s, d]
                if t >= 0 and bond[s, d] != 0 and _get_bit(w0, w1, w2, t):
                    e -= bond[s, d]
    return e + delta_i * npart, npart


@njit(cache=True, inline="always")
def _probe(tab, tw0, tw1, tw2, w0, w1, w2):
    """Return state id or -(slot)-1 if absent (slot = free slot)."""
    cap = tab.shape[0]
    mask = np.uint64(cap - 1)
    slot = _mix(w0, w1, w2) & mask
    while True:
        sid = tab[slot]
        if sid < 0:
            return -np.int64(slot) - 1
        if tw0[sid] == w0 and tw1[sid] == w1 and tw2[sid] == w2:
            return np.int64(sid)
        slot = (slot + np.uint64(1)) & mask


@njit(cache=True)
def _rehash(tab, tw0, tw1, tw2, count):
    tab[:] = -1
    cap = tab.shape[0]
    mask = np.uint64(cap - 1)
    for sid in range(count):
        slot = _mix(tw0[sid], tw1[sid], tw2[sid]) & mask
        while tab[slot] >= 0:
            slot = (slot + np.uint64(1)) & mask
        tab[slot] = sid


@njit(cache=True, inline="always")
def _gen_moves(w0, w1, w2, h, npart, nbr, bond, interior, ext_mult, border_sites,
               delta_i, freeze, out_w0, out_w1, out_w2, out_h, out_n, out_mult):
    """All distinct one-move neighbours of a state. Exchanges carry
    multiplicity 2 (two oriented bonds realize each swap); boundary moves
    carry the exterior-neighbour count of their site."""
    n = nbr.shape[0]
    cnt = 0
    # exchange moves: iterate occupied sites, move to empty nn
    for s in range(n):
        if not _get_bit(w0, w1, w2, s):
            continue
        for d in range(4):
            t = nbr[s, d]
            if t < 0 or _get_bit(w0, w1, w2, t):
                continue
            # energy delta: lose bonds at s, gain bonds at t (s removed first)
            dh = np.int64(0)
            for dd in range(4):
                u = nbr[s, dd]
                if u >= 0 and bond[s, dd] != 0 and _get_bit(w0, w1, w2, u):
                    dh += bond[s, dd]
            nw0, nw1, nw2 = _flip_bit(w0, w1, w2, s)
            for dd in range(4):
                u = nbr[t, dd]
                if u >= 0 and bond[t, dd] != 0 and _get_bit(nw0, nw1, nw2, u):
                    dh -= bond[t, dd]
            nw0, nw1, nw2 = _flip_bit(nw0, nw1, nw2, t)
            out_w0[cnt] = nw0
            out_w1[cnt] = nw1
            out_w2[cnt] = nw2
            out_h[cnt] = h + dh
            out_n[cnt] = npart
            out_mult[cnt] = 2
            cnt += 1
    if not freeze:
        for bi in range(border_sites.shape[0]):
            s = border_sites[bi]
            if _get_bit(w0, w1, w2, s):
                nw0, nw1, nw2 = _flip_bit(w0, w1, w2, s)
                out_h[cnt] = h - delta_i
                out_n[cnt] = npart - 1
            else:
                nw0, nw1, nw2 = _flip_bit(w0, w1, w2, s)
                out_h[cnt] = h + delta_i
                out_n[cnt] = npart + 1
            out_w0[cnt] = nw0
            out_w1[cnt] = nw1
            out_w2[cnt] = nw2
            out_mult[cnt] = ext_mult[s]
            cnt += 1
    return cnt


@njit(cache=True)
def _explore_run(tw0, tw1, tw2, th, tn, tab, head, count,
                 nbr, bond, interior, ext_mult, border_sites, delta_i,
                 e_max, n_max, freeze):
    """BFS closure from tw0[..count]; returns (head, count, status).
    status 0 = done, 1 = state arrays full, 2 = hash table too loaded."""
    maxstates = tw0.shape[0]
    cap = tab.shape[0]
    limit = (cap * 3) // 4
    nbuf = 4 * nbr.shape[0] + 8
    bw0 = np.empty(nbuf, dtype=np.uint64)
    bw1 = np.empty(nbuf, dtype=np.uint64)
    bw2 = np.empty(nbuf, dtype=np.uint64)
    bh = np.empty(nbuf, dtype=np.int64)
    bn = np.empty(nbuf, dtype=np.int64)
    bm = np.empty(nbuf, dtype=np.int64)
    while head < count:
        w0 = tw0[head]
        w1 = tw1[head]
        w2 = tw2[head]
        h = th[head]
        npart = np.int64(tn[head])
        cnt = _gen_moves(w0, w1, w2, h, npart, nbr, bond, interior, ext_mult,
                         border_sites, delta_i, freeze, bw0, bw1, bw2, bh, bn, bm)
        for i in range(cnt):
            if bh[i] > e_max or bn[i] > n_max:
                continue
            res = _probe(tab, tw0, tw1, tw2, bw0[i], bw1[i], bw2[i])
            if res >= 0:
                continue
            if count >= maxstates:
                return head, count, 1
            if count >= limit:
                return head, count, 2
            slot = -(res + 1)
            tab[slot] = count
            tw0[count] = bw0[i]
            tw1[count] = bw1[i]
            tw2[count] = bw2[i]
            th[count] = bh[i]
            tn[count] = bn[i]
            count += 1
        head += 1
    return head, count, 0


class StateGraphData:
    """Explored sublevel set: insertion-ordered state arrays plus hash index.

    Moves are regenerated on demand; adjacency is symmetric because every
    Kawasaki move is reversible.
    """

    def __init__(self, tables: SiteTables, e_max_int: int, n_max: int,
                 freeze_n: int | None, budget_states: int):
        self.tables = tables
        self.e_max_int = int(e_max_int)
        self.n_max = int(n_max)
        self.freeze_n = freeze_n
        self.budget_states = int(budget_states)
        cap0 = 1 << 14
        self.w0 = np.zeros(cap0, dtype=np.uint64)
        self.w1 = np.zeros(cap0, dtype=np.uint64)
        self.w2 = np.zeros(cap0, dtype=np.uint64)
        self.h = np.zeros(cap0, dtype=np.int64)
        self.n = np.zeros(cap0, dtype=np.int16)
        self.tab = np.full(cap0 * 2, -1, dtype=np.int64)
        self.count = 0
        self.head = 0

    @property
    def n_states(self) -> int:
        return self.count

    def _grow_states(self):
        new = min(max(2 * len(self.w0), 1 << 15), max(self.budget_states, 1 << 15))
        if new <= len(self.w0):
            raise BudgetExceeded(
                f"state budget {self.budget_states} exceeded during exploration",
                n_states=self.count, frontier_head=self.head)
        for name in ("w0", "w1", "w2", "h", "n"):
            arr = getattr(self, name)
            grown = np.zeros(new, dtype=arr.dtype)
            grown[:self.count] = arr[:self.count]
            setattr(self, name, grown)

    def _grow_table(self):
        self.tab = np.full(2 * len(self.tab), -1, dtype=np.int64)
        _rehash(self.tab, self.w0, self.w1, self.w2, self.count)

    def add_sources(self, configs):
        t = self.tables
        for cfg in configs:
            w = config_to_words(cfg)
            res = _probe(self.tab, self.w0, self.w1, self.w2, w[0], w[1], w[2])
            if res >= 0:
                continue
            if self.count >= len(self.w0):
                self._grow_states()
            if self.count * 4 >= len(self.tab) * 3:
                self._grow_table()
            res = _probe(self.tab, self.w0, self.w1, self.w2, w[0], w[1], w[2])
            slot = -(res + 1)
            e, npart = _full_energy(w[0], w[1], w[2], t.nbr, t.bond, t.delta_i)
            if e > self.e_max_int or npart > self.n_max:
                raise ValueError("source configuration violates the bounds")
            self.tab[slot] = self.count
            self.w0[self.count] = w[0]
            self.w1[self.count] = w[1]
            self.w2[self.count] = w[2]
            self.h[self.count] = e
            self.n[self.count] = npart
            self.count += 1

    def run(self):
        t = self.tables
        freeze = self.freeze_n is not None
        while True:
            head, count, status = _explore_run(
                self.w0, self.w1, self.w2, self.h, self.n, self.tab,
                self.head, self.count, t.nbr, t.bond, t.interior, t.ext_mult,
                t.border_sites, t.delta_i, np.int64(self.e_max_int),
                np.int64(self.n_max), freeze)
            self.head, self.count = head, count
            if status == 0:
                return self
            if status == 1:
                self._grow_states()
            else:
                self._grow_table()

    def lookup(self, cfg: Configuration) -> int:
        w = config_to_words(cfg)
        res = _probe(self.tab, self.w0, self.w1, self.w2, w[0], w[1], w[2])
        return int(res) if res >= 0 else -1

    def lookup_words(self, w0, w1, w2) -> int:
        res = _probe(self.tab, self.w0, self.w1, self.w2, w0, w1, w2)
        return int(res) if res >= 0 else -1

    def config(self, sid: int) -> Configuration:
        return words_to_config(self.tables.L, self.w0[sid], self.w1[sid], self.w2[sid])

    def energies_float(self) -> np.ndarray:
        return self.h[:self.count] * 1e-4
