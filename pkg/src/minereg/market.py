"""Day-ahead Reg-Up/Reg-Down capacity market.

Each product is cleared independently with a single uniform price in merit
order (ascending offer price) against an inelastic hourly demand.
"""

from __future__ import annotations

import csv
import enum
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from minereg.errors import ContractViolation, ValidationError


class Product(str, enum.Enum):
    REG_UP = "UP"
    REG_DOWN = "DN"


@dataclass(frozen=True)
class Offer:
    entity_id: str
    product: Product
    capacity_mw: float
    price_per_mw: float

    def __post_init__(self) -> None:
        for name in ("capacity_mw", "price_per_mw"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValidationError(
                    f"offer from entity {self.entity_id!r}: {name}={value!r} must be finite and >= 0"
                )


@dataclass(frozen=True)
class DemandSchedule:
    hour: int
    demand_up_mw: float
    demand_dn_mw: float

    def __post_init__(self) -> None:
        if not 0 <= self.hour <= 23:
            raise ValidationError(f"hour {self.hour} outside 0-23")
        for name in ("demand_up_mw", "demand_dn_mw"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValidationError(f"{name}={value!r} must be finite and >= 0")


@dataclass(frozen=True)
class Award:
    entity_id: str
    cleared_up_mw: float
    cleared_dn_mw: float


@dataclass(frozen=True)
class ClearingResult:
    hour: int
    price_up: float
    price_dn: float
    awards: list[Award] = field(default_factory=list)
    shortfall_up_mw: float = 0.0
    shortfall_dn_mw: float = 0.0

    @property
    def n_cleared(self) -> int:
        """Number of entities cleared for nonzero capacity in either product."""
        return sum(1 for a in self.awards if a.cleared_up_mw > 0 or a.cleared_dn_mw > 0)

    def to_dict(self) -> dict:
        return {
            "hour": self.hour,
            "price_up": self.price_up,
            "price_dn": self.price_dn,
            "awards": [
                {
                    "entity_id": a.entity_id,
                    "cleared_up_mw": a.cleared_up_mw,
                    "cleared_dn_mw": a.cleared_dn_mw,
                }
                for a in self.awards
            ],
            "shortfall_up_mw": self.shortfall_up_mw,
            "shortfall_dn_mw": self.shortfall_dn_mw,
        }


def pro_rata_tie_split(tied_offers: Sequence[Offer], residual_mw: float) -> list[tuple[str, float]]:
    """Split ``residual_mw`` across offers sharing the marginal price.

    Each entity gets a share proportional to its offered capacity. Entities are
    ordered by ``entity_id`` and the last one absorbs floating-point residue, so
    the allocations always sum to ``residual_mw``.
    """
    if not tied_offers:
        if residual_mw != 0:
            raise ContractViolation("nonzero residual with no tied offers")
        return []
    prices = {o.price_per_mw for o in tied_offers}
    if len(prices) != 1:
        raise ContractViolation(f"tied offers carry different prices: {sorted(prices)}")
    ordered = sorted(tied_offers, key=lambda o: o.entity_id)
    total = math.fsum(o.capacity_mw for o in ordered)
    if residual_mw < 0 or residual_mw > total * (1 + 1e-12):
        raise ContractViolation(
            f"residual {residual_mw} MW outside [0, {total}] MW of tied capacity"
        )
    if residual_mw == 0 or total == 0:
        return [(o.entity_id, 0.0) for o in ordered]

    shares = [residual_mw * o.capacity_mw / total for o in ordered[:-1]]
    last = residual_mw - math.fsum(shares)
    last = min(max(last, 0.0), ordered[-1].capacity_mw)
    return [(o.entity_id, s) for o, s in zip(ordered, shares + [last])]


def _clear_product(offers: list[Offer], demand_mw: float) -> tuple[float, dict[str, float], float]:
    """Merit-order clearing for one product: (price, cleared by entity, shortfall)."""
    cleared = {o.entity_id: 0.0 for o in offers}
    if demand_mw == 0 or not offers:
        return 0.0, cleared, demand_mw

    by_price: dict[float, list[Offer]] = {}
    for o in offers:
        by_price.setdefault(o.price_per_mw, []).append(o)

    remaining = demand_mw
    price = 0.0
    for level in sorted(by_price):
        group = by_price[level]
        group_cap = math.fsum(o.capacity_mw for o in group)
        if group_cap == 0:
            continue
        price = level
        if group_cap >= remaining:
            for entity_id, mw in pro_rata_tie_split(group, remaining):
                cleared[entity_id] = mw
            return price, cleared, 0.0
        for o in group:
            cleared[o.entity_id] = o.capacity_mw
        remaining -= group_cap

    # Scarcity: everything cleared, price is the highest offer.
    price = max(by_price)
    shortfall = demand_mw - math.fsum(cleared.values())
    return price, cleared, max(shortfall, 0.0)


def clear_market(offers: Iterable[Offer], demand: DemandSchedule) -> ClearingResult:
    """Clear Reg-Up and Reg-Down independently at uniform prices.

    Zero demand for a product yields a zero price and zero awards. If demand
    exceeds total offered capacity, every offer clears in full, the price is the
    highest offer and the gap is reported as shortfall.
    """
    offers = list(offers)
    seen: set[tuple[str, Product]] = set()
    for o in offers:
        key = (o.entity_id, o.product)
        if key in seen:
            raise ValidationError(
                f"entity {o.entity_id!r} submitted more than one {o.product.value} offer"
            )
        seen.add(key)

    up_offers = [o for o in offers if o.product is Product.REG_UP]
    dn_offers = [o for o in offers if o.product is Product.REG_DOWN]
    price_up, up, short_up = _clear_product(up_offers, demand.demand_up_mw)
    price_dn, dn, short_dn = _clear_product(dn_offers, demand.demand_dn_mw)

    entities = sorted({o.entity_id for o in offers})
    awards = [Award(e, up.get(e, 0.0), dn.get(e, 0.0)) for e in entities]
    return ClearingResult(
        hour=demand.hour,
        price_up=price_up,
        price_dn=price_dn,
        awards=awards,
        shortfall_up_mw=short_up,
        shortfall_dn_mw=short_dn,
    )


OFFER_COLUMNS = ("hour", "entity_id", "product", "capacity_mw", "price_per_mw")


def load_offers_csv(path: str | Path, hour: int | None = None) -> list[Offer]:
    """Read offers from CSV, optionally keeping only one hour.

    Raises ValidationError naming the row (1-based, header is row 1) on bad data.
    """
    offers = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in OFFER_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ValidationError(f"{path}: missing column(s) {', '.join(missing)}")
        for rowno, row in enumerate(reader, start=2):
            try:
                row_hour = int(row["hour"])
                product = Product(row["product"].strip().upper())
                offer = Offer(
                    entity_id=row["entity_id"].strip(),
                    product=product,
                    capacity_mw=float(row["capacity_mw"]),
                    price_per_mw=float(row["price_per_mw"]),
                )
            except (ValueError, TypeError, AttributeError) as exc:
                raise ValidationError(f"{path}: row {rowno}: {exc}") from exc
            if hour is None or row_hour == hour:
                offers.append(offer)
    return offers
