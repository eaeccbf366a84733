"""Mining economics and the Reg-Up/Reg-Down participation decision.

Capacity prices are $/MW for one hour of cleared capacity; mining return and
electricity prices are $/MWh. The two are kept apart by name (``UsdPerMw`` vs
``UsdPerMwh``) throughout.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NewType

import numpy as np

from minereg.errors import ValidationError

UsdPerMw = NewType("UsdPerMw", float)
UsdPerMwh = NewType("UsdPerMwh", float)

JOULES_PER_MWH = 3.6e9
# Expected terahashes per block is difficulty / 2**8.
_TH_PER_DIFFICULTY = 1.0 / 2**8


@dataclass(frozen=True)
class MinerSpec:
    efficiency_j_per_th: float
    network_difficulty: float = 39.35e12
    block_reward_btc: float = 6.25

    def __post_init__(self) -> None:
        for name in ("efficiency_j_per_th", "network_difficulty", "block_reward_btc"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValidationError(f"{name}={value!r} must be finite and nonnegative")
        if self.network_difficulty == 0 or self.block_reward_btc == 0:
            raise ValidationError("network_difficulty and block_reward_btc must be > 0")


S19_XP = MinerSpec(21.5)
S19J_PRO = MinerSpec(29.5)
MINERS = {"s19xp": S19_XP, "s19jpro": S19J_PRO}


class Choice(str, enum.Enum):
    REG_UP = "RegUp"
    REG_DOWN = "RegDown"
    NEITHER = "Neither"


@dataclass(frozen=True)
class CapacityDecision:
    c_up_mw: float
    c_dn_mw: float

    def __post_init__(self) -> None:
        if self.c_up_mw < 0 or self.c_dn_mw < 0:
            raise ValidationError(f"negative capacity in {self}")

    @property
    def choice(self) -> Choice:
        if self.c_up_mw > 0:
            return Choice.REG_UP
        if self.c_dn_mw > 0:
            return Choice.REG_DOWN
        return Choice.NEITHER


@dataclass(frozen=True)
class HourEconomics:
    """Every per-hour input of the participation decision."""

    hour: int
    price_up: UsdPerMw
    price_dn: UsdPerMw
    rho: UsdPerMwh
    eps_up: float
    eps_dn: float
    capacity_limit_mw: float
    btc_value: float
    energy_per_btc: float
    elec_price: UsdPerMwh

    def __post_init__(self) -> None:
        _check_eps(self.eps_up, self.eps_dn)
        if not (-1 <= self.eps_up and self.eps_dn <= 1):
            raise ValidationError(f"deployment rates outside [-1, 1]: {self.eps_up}, {self.eps_dn}")
        if self.capacity_limit_mw < 0:
            raise ValidationError(f"capacity_limit_mw={self.capacity_limit_mw} must be >= 0")
        expected = mining_rate_of_return(self.btc_value, self.energy_per_btc, self.elec_price)
        if not math.isclose(self.rho, expected, rel_tol=1e-9, abs_tol=1e-9):
            raise ValidationError(f"rho={self.rho} inconsistent with prices (expected {expected})")

    @classmethod
    def build(
        cls,
        hour: int,
        price_up: float,
        price_dn: float,
        eps_up: float,
        eps_dn: float,
        capacity_limit_mw: float,
        btc_value: float,
        energy_per_btc: float,
        elec_price: float,
    ) -> HourEconomics:
        """Construct with ``rho`` derived from the coin and electricity prices."""
        rho = mining_rate_of_return(btc_value, energy_per_btc, elec_price)
        return cls(
            hour, price_up, price_dn, rho, eps_up, eps_dn,
            capacity_limit_mw, btc_value, energy_per_btc, elec_price,
        )

    def worthwhileness(self) -> tuple[float, float]:
        return worthwhileness(self.price_up, self.price_dn, self.rho, self.eps_up, self.eps_dn)


def energy_per_bitcoin(spec: MinerSpec) -> float:
    """Expected energy (MWh) spent per bitcoin earned."""
    th_per_block = spec.network_difficulty * _TH_PER_DIFFICULTY
    joules_per_block = th_per_block * spec.efficiency_j_per_th
    return joules_per_block / spec.block_reward_btc / JOULES_PER_MWH


def mining_rate_of_return(btc_value: float, energy_per_btc: float, elec_price: float) -> UsdPerMwh:
    """Value of mining per MWh, net of the electricity bill. May be negative."""
    if energy_per_btc <= 0:
        raise ZeroDivisionError(f"energy_per_btc={energy_per_btc} must be > 0")
    return UsdPerMwh(btc_value / energy_per_btc - elec_price)


def _check_eps(eps_up: float, eps_dn: float) -> None:
    if eps_up > 0 or eps_dn < 0:
        raise ValidationError(
            f"deployment rates need eps_up <= 0 <= eps_dn, got ({eps_up}, {eps_dn})"
        )


def dam_reward(price_up: float, c_up: float, price_dn: float, c_dn: float) -> float:
    if min(price_up, c_up, price_dn, c_dn) < 0:
        raise ValidationError("day-ahead prices and capacities must be >= 0")
    return price_up * c_up + price_dn * c_dn


def base_reward(rho: float, capacity_limit: float, c_up: float, c_dn: float) -> float:
    """Mining reward before any deployment, given the headroom held back."""
    if c_up < 0 or c_dn < 0:
        raise ValidationError("capacities must be >= 0")
    if c_up + c_dn > capacity_limit * (1 + 1e-12):
        raise ValidationError(f"c_up + c_dn = {c_up + c_dn} exceeds capacity limit {capacity_limit}")
    return rho * (capacity_limit - c_dn) if rho >= 0 else rho * c_up


def deployment_reward(rho: float, eps_up: float, c_up: float, eps_dn: float, c_dn: float) -> float:
    _check_eps(eps_up, eps_dn)
    return rho * (eps_up * c_up + eps_dn * c_dn)


def worthwhileness(
    price_up: float, price_dn: float, rho: float, eps_up: float, eps_dn: float
) -> tuple[float, float]:
    """Per-MW profit of holding one hour of Reg-Up and of Reg-Down capacity."""
    _check_eps(eps_up, eps_dn)
    w_up = price_up + rho * (eps_up + (1.0 if rho < 0 else 0.0))
    w_dn = price_dn + rho * (eps_dn - (1.0 if rho >= 0 else 0.0))
    return w_up, w_dn


def worthwhileness_array(price_up, price_dn, rho, eps_up, eps_dn) -> tuple[np.ndarray, np.ndarray]:
    """Elementwise :func:`worthwhileness` over arrays (broadcasting ``rho``)."""
    price_up, price_dn, rho, eps_up, eps_dn = map(
        np.asarray, (price_up, price_dn, rho, eps_up, eps_dn)
    )
    if np.any(eps_up > 0) or np.any(eps_dn < 0):
        raise ValidationError("deployment rates need eps_up <= 0 <= eps_dn")
    w_up = price_up + rho * (eps_up + (rho < 0))
    w_dn = price_dn + rho * (eps_dn - (rho >= 0))
    return w_up, w_dn


def opportunity_cost(rho: float, eps_up: float) -> float:
    """Mining value forgone per MW of Reg-Up capacity (the non-price part of w_up)."""
    return -rho * (eps_up + (1.0 if rho < 0 else 0.0))


def net_reward(econ: HourEconomics, decision: CapacityDecision) -> float:
    C = econ.capacity_limit_mw
    if decision.c_up_mw + decision.c_dn_mw > C * (1 + 1e-12):
        raise ValidationError(f"{decision} exceeds capacity limit {C} MW")
    w_up, w_dn = econ.worthwhileness()
    return w_up * decision.c_up_mw + w_dn * decision.c_dn_mw + C * max(econ.rho, 0.0)


def optimal_capacity_split(
    expected_w_up: float, expected_w_dn: float, capacity_limit: float
) -> CapacityDecision:
    """Best (c_up, c_dn) for the linearised expected-profit program.

    The optimum sits on a vertex of the simplex: all capacity to the better
    product when that product pays, otherwise nothing.
    """
    if capacity_limit < 0:
        raise ValidationError(f"capacity_limit={capacity_limit} must be >= 0")
    if expected_w_up >= expected_w_dn and expected_w_up > 0:
        return CapacityDecision(capacity_limit, 0.0)
    if expected_w_dn > expected_w_up and expected_w_dn > 0:
        return CapacityDecision(0.0, capacity_limit)
    return CapacityDecision(0.0, 0.0)


def optimal_participation_profit(
    expected_w_up: float, expected_w_dn: float, capacity_limit: float
) -> float:
    """Profit of the optimal split, relative to not participating at all."""
    if capacity_limit < 0:
        raise ValidationError(f"capacity_limit={capacity_limit} must be >= 0")
    return capacity_limit * max(expected_w_up, expected_w_dn, 0.0)


def classify(expected_w_up: float, expected_w_dn: float) -> Choice:
    return optimal_capacity_split(expected_w_up, expected_w_dn, 1.0).choice
