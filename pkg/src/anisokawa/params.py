"""Model parameters for the anisotropic lattice gas.

Energies are kept on an exact decimal grid: every coupling is converted to an
integer number of 1e-4 energy units at construction time, so all reachable
configuration energies are exact integers internally and level-set comparisons
never suffer float fuzz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from fractions import Fraction

# internal energy quantum: all couplings are integer multiples of this
ENERGY_UNIT = Decimal("0.0001")

REGIME_ISOTROPIC = "isotropic"
REGIME_WEAK = "weakly-anisotropic"
REGIME_STRONG = "strongly-anisotropic"
REGIME_OUT = "out-of-scope"


class ParameterError(ValueError):
    pass


def _to_units(value, name: str) -> int:
    """Convert a decimal-valued coupling to integer 1e-4 units, exactly."""
    try:
        d = Decimal(str(value))
    except InvalidOperation as exc:
        raise ParameterError(f"{name} is not a decimal number: {value!r}") from exc
    q = d / ENERGY_UNIT
    if q != q.to_integral_value():
        raise ParameterError(
            f"{name}={value} is not an exact multiple of {ENERGY_UNIT}; "
            "couplings must live on the decimal grid"
        )
    return int(q)


def classify_regime(u1, u2, delta=None) -> str:
    """Regime tag from the raw couplings.

    strongly-anisotropic iff U1 > 2*U2; isotropic iff U1 == U2;
    weakly-anisotropic iff U1 < 2*U2 - 2*eps (needs Delta to form eps);
    anything else (boundary cases) is out-of-scope.
    """
    u1i = _to_units(u1, "U1")
    u2i = _to_units(u2, "U2")
    if u1i <= 0 or u2i <= 0:
        raise ParameterError("binding energies must be positive")
    if u1i < u2i:
        raise ParameterError("convention U1 >= U2 violated")
    if u1i == u2i:
        return REGIME_ISOTROPIC
    if u1i > 2 * u2i:
        return REGIME_STRONG
    if delta is None:
        return REGIME_OUT
    di = _to_units(delta, "Delta")
    epsi = u1i + u2i - di
    if u1i < 2 * u2i - 2 * epsi:
        return REGIME_WEAK
    return REGIME_OUT


@dataclass(frozen=True)
class ModelParams:
    """Physical constants plus the derived critical scales.

    The box is Lambda = {0..L}^2 (side L+1). Integer fields named *_i are the
    couplings in exact 1e-4 energy units; float twins are for reporting.
    """

    U1: float
    U2: float
    Delta: float
    beta: float
    L: int
    u1_i: int = field(repr=False)
    u2_i: int = field(repr=False)
    delta_i: int = field(repr=False)
    eps_i: int = field(repr=False)
    regime: str = field(default=REGIME_OUT)
    l2star: int = field(default=0)
    gamma_i: int = field(default=0, repr=False)

    @property
    def eps(self) -> float:
        return self.eps_i * 1e-4

    @property
    def gamma_star(self) -> float:
        return self.gamma_i * 1e-4

    @property
    def side(self) -> int:
        return self.L + 1

    @property
    def n_sites(self) -> int:
        return self.side * self.side

    def to_float(self, e_int: int) -> float:
        return e_int * 1e-4

    def as_dict(self) -> dict:
        return {
            "U1": self.U1,
            "U2": self.U2,
            "Delta": self.Delta,
            "beta": self.beta,
            "L": self.L,
            "eps": self.eps,
            "l2star": self.l2star,
            "GammaStar": self.gamma_star,
            "regime": self.regime,
        }


def make_params(u1, u2, delta, beta, L, require_metastable: bool = True) -> ModelParams:
    """Build validated ModelParams.

    Enforces U1 >= U2 > 0, Delta in (U1, U1+U2) (so 0 < eps < U2) and the
    degeneracy guard U2/eps not an integer, unless require_metastable=False.
    """
    u1i = _to_units(u1, "U1")
    u2i = _to_units(u2, "U2")
    di = _to_units(delta, "Delta")
    beta = float(beta)
    L = int(L)
    if u1i <= 0 or u2i <= 0:
        raise ParameterError("binding energies must be positive")
    if u1i < u2i:
        raise ParameterError("convention U1 >= U2 violated")
    if beta <= 0:
        raise ParameterError("beta must be positive")
    if L < 2:
        raise ParameterError("box parameter L must be at least 2")
    epsi = u1i + u2i - di
    l2 = 0
    gam = 0
    if require_metastable:
        if not (u1i < di < u1i + u2i):
            raise ParameterError("Delta must lie strictly between U1 and U1+U2")
        if u2i % epsi == 0:
            raise ParameterError(
                "U2/eps is an integer; critical length would be degenerate"
            )
    if 0 < epsi and u2i % epsi != 0:
        l2 = u2i // epsi + 1
        # Gamma* for the strongly anisotropic regime
        gam = (u1i * l2 + 2 * u2i * l2 + u1i - u2i
               - 2 * epsi * l2 * l2 + 3 * epsi * l2 - 2 * epsi)
    regime = classify_regime(u1, u2, delta)
    return ModelParams(
        U1=u1i * 1e-4, U2=u2i * 1e-4, Delta=di * 1e-4, beta=beta, L=L,
        u1_i=u1i, u2_i=u2i, delta_i=di, eps_i=epsi,
        regime=regime, l2star=l2, gamma_i=gam,
    )


# published presets
#  SA3: smallest strongly anisotropic parameters with non-degenerate
#       protocritical geometry (l2* = 3); used for all landscape checks.
#  SA2: Monte Carlo smoke preset (l2* = 2, degenerate droplet geometry;
#       geometry-level checks are disabled for it).
_PRESETS = {
    "SA3": ("3.0", "1.0", "3.6"),
    "SA2": ("1.2", "0.5", "1.4"),
}


def preset(name: str, beta: float = 10.0, L: int = 12) -> ModelParams:
    try:
        u1, u2, d = _PRESETS[name]
    except KeyError:
        raise ParameterError(f"unknown preset {name!r}; have {sorted(_PRESETS)}")
    return make_params(u1, u2, d, beta, L)


def preset_names():
    return sorted(_PRESETS)


def load_params_file(path, beta=None, L=None) -> ModelParams:
    """Read `KEY = value` lines (keys U1, U2, Delta, beta, L), exact decimals."""
    values = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParameterError(f"malformed parameter line: {raw!r}")
            key, val = (part.strip() for part in line.split("=", 1))
            values[key] = val
    for key in ("U1", "U2", "Delta"):
        if key not in values:
            raise ParameterError(f"parameter file missing {key}")
    beta = beta if beta is not None else values.get("beta")
    L = L if L is not None else values.get("L")
    if beta is None or L is None:
        raise ParameterError("beta and L must come from the file or the caller")
    return make_params(values["U1"], values["U2"], values["Delta"], beta, L)


def critical_length(u2_i: int, eps_i: int) -> int:
    """l2* = floor(U2/eps) + 1 ('integer part plus 1'); integer ratio rejected."""
    if eps_i <= 0:
        raise ParameterError("eps must be positive")
    if u2_i % eps_i == 0:
        raise ParameterError("U2/eps integer: l2* undefined under the paper convention")
    return u2_i // eps_i + 1
