"""Configurations, bonds, Kawasaki moves, Hamiltonian and transition kernel.

A configuration is a bit-packed occupancy of the (L+1)x(L+1) box Lambda,
row-major (site index = y*(L+1) + x). Interactions act only between
nearest-neighbour pairs whose *both* endpoints lie in the interior
Lambda_0 = Lambda minus its inner boundary ring.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Iterator

from .params import ModelParams

BOND_EXCHANGE = "internal-exchange"
BOND_OUT = "boundary-out"
BOND_IN = "boundary-in"


@dataclass(frozen=True)
class Configuration:
    """Occupancy bitset over Lambda. Equal iff (L, bits) equal."""

    L: int
    bits: int

    def __post_init__(self):
        side = self.L + 1
        if self.bits < 0 or self.bits >> (side * side):
            raise ValueError("occupancy bits outside the box")

    @property
    def side(self) -> int:
        return self.L + 1

    @property
    def n_particles(self) -> int:
        return self.bits.bit_count()

    def occupied(self, x: int, y: int) -> bool:
        return (self.bits >> (y * self.side + x)) & 1 == 1

    def occupied_idx(self, idx: int) -> bool:
        return (self.bits >> idx) & 1 == 1

    def sites(self) -> Iterator[tuple[int, int]]:
        side = self.side
        b = self.bits
        while b:
            low = b & -b
            idx = low.bit_length() - 1
            yield (idx % side, idx // side)
            b ^= low

    def with_site(self, x: int, y: int, value: int) -> "Configuration":
        idx = y * self.side + x
        if value:
            return Configuration(self.L, self.bits | (1 << idx))
        return Configuration(self.L, self.bits & ~(1 << idx))

    @classmethod
    def empty(cls, L: int) -> "Configuration":
        return cls(L, 0)

    @classmethod
    def full(cls, L: int) -> "Configuration":
        side = L + 1
        return cls(L, (1 << (side * side)) - 1)

    @classmethod
    def from_sites(cls, L: int, sites: Iterable[tuple[int, int]]) -> "Configuration":
        side = L + 1
        bits = 0
        for x, y in sites:
            if not (0 <= x <= L and 0 <= y <= L):
                raise ValueError(f"site {(x, y)} outside the box")
            bits |= 1 << (y * side + x)
        return cls(L, bits)

    @classmethod
    def from_grid(cls, text: str) -> "Configuration":
        """Parse a '.'/'#' grid; row 0 of the text is the top row (max y)."""
        rows = [line for line in text.splitlines() if line.strip()]
        side = len(rows)
        if any(len(r) != side for r in rows):
            raise ValueError("grid must be square")
        sites = []
        for j, row in enumerate(rows):
            y = side - 1 - j
            for x, ch in enumerate(row):
                if ch == "#":
                    sites.append((x, y))
                elif ch != ".":
                    raise ValueError(f"bad grid character {ch!r}")
        return cls.from_sites(side - 1, sites)

    def to_grid(self) -> str:
        side = self.side
        lines = []
        for y in range(side - 1, -1, -1):
            lines.append("".join("#" if self.occupied(x, y) else "." for x in range(side)))
        return "\n".join(lines)


@dataclass(frozen=True)
class Bond:
    """Oriented bond. Exterior ends of boundary bonds are virtual (None)."""

    kind: str
    src: tuple[int, int] | None
    dst: tuple[int, int] | None


def in_box(L: int, x: int, y: int) -> bool:
    return 0 <= x <= L and 0 <= y <= L

def in_interior(L: int, x: int, y: int) -> bool:
    return 1 <= x <= L - 1 and 1 <= y <= L - 1

def on_inner_boundary(L: int, x: int, y: int) -> bool:
    return in_box(L, x, y) and not in_interior(L, x, y)


_DIRS = ((1, 0), (-1, 0), (0, 1), (0, -1))


@lru_cache(maxsize=32)
def enumerate_bonds(L: int) -> tuple[Bond, ...]:
    """All oriented bonds: internal exchanges, boundary-out, boundary-in.

    |bonds| = 4*n*(n-1) + 8*n with n = L+1.
    """
    if L < 2:
        raise ValueError("need L >= 2")
    bonds = []
    for y in range(L + 1):
        for x in range(L + 1):
            for dx, dy in _DIRS:
                nx, ny = x + dx, y + dy
                if in_box(L, nx, ny):
                    bonds.append(Bond(BOND_EXCHANGE, (x, y), (nx, ny)))
                else:
                    bonds.append(Bond(BOND_OUT, (x, y), None))
                    bonds.append(Bond(BOND_IN, None, (x, y)))
    return tuple(bonds)


def exterior_neighbour_count(L: int, x: int, y: int) -> int:
    return sum(1 for dx, dy in _DIRS if not in_box(L, x + dx, y + dy))


def apply_move(cfg: Configuration, bond: Bond) -> Configuration | None:
    """Apply T_b; returns None when T_b eta == eta (no-op marker)."""
    if bond.kind == BOND_EXCHANGE:
        (x1, y1), (x2, y2) = bond.src, bond.dst
        a = cfg.occupied(x1, y1)
        b = cfg.occupied(x2, y2)
        if a == b:
            return None
        return cfg.with_site(x1, y1, int(b)).with_site(x2, y2, int(a))
    if bond.kind == BOND_OUT:
        x, y = bond.src
        if not cfg.occupied(x, y):
            return None
        return cfg.with_site(x, y, 0)
    if bond.kind == BOND_IN:
        x, y = bond.dst
        if cfg.occupied(x, y):
            return None
        return cfg.with_site(x, y, 1)
    raise ValueError(f"unknown bond kind {bond.kind}")


def energy_int(cfg: Configuration, params: ModelParams) -> int:
    """Hamiltonian in integer 1e-4 units: pairwise sum over interior bonds."""
    L = cfg.L
    side = cfg.side
    bits = cfg.bits
    hb = 0
    vb = 0
    for y in range(1, L):
        row_base = y * side
        for x in range(1, L):
            if not (bits >> (row_base + x)) & 1:
                continue
            if x + 1 <= L - 1 and (bits >> (row_base + x + 1)) & 1:
                hb += 1
            if y + 1 <= L - 1 and (bits >> (row_base + side + x)) & 1:
                vb += 1
    return -params.u1_i * hb - params.u2_i * vb + params.delta_i * cfg.n_particles


def energy_pairwise(cfg: Configuration, params: ModelParams) -> float:
    return energy_int(cfg, params) * 1e-4


def gibbs_weight(cfg: Configuration, params: ModelParams) -> float:
    return math.exp(-params.beta * energy_pairwise(cfg, params))


def log_gibbs_weight(cfg: Configuration, params: ModelParams) -> float:
    return -params.beta * energy_pairwise(cfg, params)


def partition_function(states: Iterable[Configuration], params: ModelParams) -> float:
    logs = [log_gibbs_weight(s, params) for s in states]
    if not logs:
        raise ValueError("partition function over an empty state list")
    m = max(logs)
    return math.exp(m) * sum(math.exp(v - m) for v in logs)


def gibbs_measure(states: list[Configuration], params: ModelParams) -> list[float]:
    logs = [log_gibbs_weight(s, params) for s in states]
    m = max(logs)
    ws = [math.exp(v - m) for v in logs]
    z = sum(ws)
    return [w / z for w in ws]


def neighbour_targets(cfg: Configuration, params: ModelParams) -> dict[Configuration, int]:
    """Distinct one-move targets with bond multiplicities (T_b eta != eta)."""
    out: dict[Configuration, int] = {}
    for bond in enumerate_bonds(cfg.L):
        nxt = apply_move(cfg, bond)
        if nxt is not None:
            out[nxt] = out.get(nxt, 0) + 1
    return out


def transition_probability(cfg_a: Configuration, cfg_b: Configuration,
                           params: ModelParams) -> float:
    """Metropolis kernel P(a,b); the diagonal completes the row to 1."""
    if cfg_a.L != cfg_b.L:
        raise ValueError("configurations live in different boxes")
    nb = len(enumerate_bonds(cfg_a.L))
    if cfg_a == cfg_b:
        off_diag = sum(m * _accept(cfg_a, t, params) / nb
                       for t, m in neighbour_targets(cfg_a, params).items())
        return 1.0 - off_diag
    targets = neighbour_targets(cfg_a, params)
    mult = targets.get(cfg_b, 0)
    if mult == 0:
        return 0.0
    return mult * _accept(cfg_a, cfg_b, params) / nb


def _accept(a: Configuration, b: Configuration, params: ModelParams) -> float:
    dh = energy_int(b, params) - energy_int(a, params)
    if dh <= 0:
        return 1.0
    return math.exp(-params.beta * dh * 1e-4)


def transition_row(cfg: Configuration, params: ModelParams) -> dict[Configuration, float]:
    """Full kernel row, diagonal included; sums to 1."""
    nb = len(enumerate_bonds(cfg.L))
    row: dict[Configuration, float] = {}
    total = 0.0
    for target, mult in neighbour_targets(cfg, params).items():
        p = mult * _accept(cfg, target, params) / nb
        row[target] = p
        total += p
    row[cfg] = row.get(cfg, 0.0) + (1.0 - total)
    return row
