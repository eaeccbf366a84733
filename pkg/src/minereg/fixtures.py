"""Synthetic hourly market data with realistic daily structure.

Real operator data is not redistributed. The generator gives Reg-Up prices an
afternoon peak with rare spikes, keeps Reg-Up deployment low in the early
morning and makes Reg-Down deployment heavy overnight. With ``match_table1``
the series are rescaled so the hourly averages equal the published 2022
summary: $21.67/MW and $8.46/MW, 359 MW and 348 MW procured, 16% and 25%
deployment.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

import numpy as np

from minereg.data import DEFAULT_TZ_OFFSET_HOURS, MarketRecord


@dataclass(frozen=True)
class Table1Targets:
    price_up: float = 21.67
    price_dn: float = 8.46
    procured_up_mw: float = 359.0
    procured_dn_mw: float = 348.0
    eps_up: float = 0.16
    eps_dn: float = 0.25


TABLE1 = Table1Targets()

# Hour-of-day (local) shape factors.
_HOURS = np.arange(24)
_PRICE_UP_SHAPE = 1.0 + 0.9 * np.exp(-0.5 * ((_HOURS - 17) / 2.5) ** 2) + 0.4 * np.exp(-0.5 * ((_HOURS - 7) / 1.0) ** 2)
_PRICE_DN_SHAPE = 1.0 + 0.5 * np.exp(-0.5 * ((_HOURS - 3) / 2.0) ** 2)
_PROC_UP_SHAPE = 1.0 + 0.35 * np.exp(-0.5 * ((_HOURS - 7) / 1.5) ** 2)
_PROC_DN_SHAPE = 1.0 + 0.25 * np.exp(-0.5 * ((_HOURS - 4) / 2.0) ** 2)
_EPS_UP_SHAPE = 0.18 - 0.15 * np.exp(-0.5 * ((_HOURS - 6.5) / 1.0) ** 2) + 0.05 * np.exp(-0.5 * ((_HOURS - 19) / 2.0) ** 2)
_EPS_DN_SHAPE = 0.18 + 0.35 * np.exp(-0.5 * ((_HOURS - 3.5) / 1.5) ** 2)

_DECIMALS = 4


def _month_starts(start: datetime, months: int) -> tuple[datetime, datetime]:
    year, month = start.year, start.month + months
    year += (month - 1) // 12
    month = (month - 1) % 12 + 1
    return start, start.replace(year=year, month=month)


def generate_market_fixture(
    months: int = 12,
    seed: int = 0,
    match_table1: bool = False,
    start_year: int = 2022,
    start_month: int = 1,
    tz_offset_hours: float = DEFAULT_TZ_OFFSET_HOURS,
    btc_start_usd: float = 40000.0,
) -> list[MarketRecord]:
    """Hourly records covering ``months`` whole local calendar months.

    Deterministic for a given seed. Values are rounded to four decimals so a
    CSV written from the records reloads to identical records.
    """
    if months < 1:
        raise ValueError(f"months={months} must be >= 1")
    rng = np.random.default_rng(seed)
    offset = timedelta(hours=tz_offset_hours)
    local_start, local_end = _month_starts(datetime(start_year, start_month, 1), months)
    n = int((local_end - local_start) / timedelta(hours=1))
    first_utc = (local_start - offset).replace(tzinfo=timezone.utc)
    ts = [first_utc + timedelta(hours=i) for i in range(n)]
    hour = np.array([(local_start + timedelta(hours=i)).hour for i in range(n)])
    month_idx = np.array([(local_start + timedelta(hours=i)).month for i in range(n)])

    # Summer stress raises prices.
    season = 1.0 + 0.6 * np.exp(-0.5 * ((month_idx - 7.5) / 1.2) ** 2)
    price_up = 14.0 * _PRICE_UP_SHAPE[hour] * season * rng.lognormal(0.0, 0.55, n)
    spikes = rng.random(n) < 0.02
    price_up[spikes] *= rng.uniform(4.0, 12.0, spikes.sum())
    price_dn = 7.0 * _PRICE_DN_SHAPE[hour] * rng.lognormal(0.0, 0.5, n)

    proc_up = 340.0 * _PROC_UP_SHAPE[hour] * rng.uniform(0.9, 1.1, n)
    proc_dn = 330.0 * _PROC_DN_SHAPE[hour] * rng.uniform(0.9, 1.1, n)
    frac_up = np.clip(_EPS_UP_SHAPE[hour] * rng.lognormal(0.0, 0.4, n), 0.0, 0.6)
    frac_dn = np.clip(_EPS_DN_SHAPE[hour] * rng.lognormal(0.0, 0.4, n), 0.0, 0.8)

    if match_table1:
        price_up *= TABLE1.price_up / price_up.mean()
        price_dn *= TABLE1.price_dn / price_dn.mean()
        proc_up *= TABLE1.procured_up_mw / proc_up.mean()
        proc_dn *= TABLE1.procured_dn_mw / proc_dn.mean()
        frac_up *= TABLE1.eps_up * proc_up.sum() / np.dot(frac_up, proc_up)
        frac_dn *= TABLE1.eps_dn * proc_dn.sum() / np.dot(frac_dn, proc_dn)

    dep_up = -np.minimum(frac_up, 1.0) * proc_up
    dep_dn = np.minimum(frac_dn, 1.0) * proc_dn

    daily = rng.normal(0.0005, 0.03, n // 24 + 1)
    btc = btc_start_usd * np.exp(np.cumsum(daily))[np.arange(n) // 24]

    def r(a: np.ndarray) -> np.ndarray:
        return np.round(a, _DECIMALS)

    cols = [r(price_up), r(price_dn), r(proc_up), r(proc_dn), r(dep_up), r(dep_dn), np.round(btc, 2)]
    # Rounding may push |deployed| a hair above procured.
    cols[4] = np.maximum(cols[4], -cols[2])
    cols[5] = np.minimum(cols[5], cols[3])
    return [
        MarketRecord(
            ts=ts[i],
            price_up=float(cols[0][i]),
            price_dn=float(cols[1][i]),
            procured_up_mw=float(cols[2][i]),
            procured_dn_mw=float(cols[3][i]),
            deployed_up_mw=float(cols[4][i]) + 0.0,
            deployed_dn_mw=float(cols[5][i]),
            btc_usd=float(cols[6][i]),
        )
        for i in range(n)
    ]
