"""Historical market records: ingestion, deployment rates, choice maps, sweeps.

Timestamps are UTC in files. Hour-of-day and month grouping happen in local
time via a fixed offset (Texas local hours by default).
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, fields
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import stats

from minereg import economics
from minereg.economics import Choice
from minereg.errors import ValidationError

DEFAULT_TZ_OFFSET_HOURS = -6.0

REQUIRED_COLUMNS = (
    "ts",
    "price_up",
    "price_dn",
    "procured_up_mw",
    "procured_dn_mw",
    "deployed_up_mw",
    "deployed_dn_mw",
)
OPTIONAL_COLUMNS = ("freq_hz", "btc_usd")
MARKET_COLUMNS = REQUIRED_COLUMNS + OPTIONAL_COLUMNS


@dataclass(frozen=True)
class MarketRecord:
    ts: datetime
    price_up: float
    price_dn: float
    procured_up_mw: float
    procured_dn_mw: float
    deployed_up_mw: float
    deployed_dn_mw: float
    freq_hz: float | None = None
    btc_usd: float | None = None

    def __post_init__(self) -> None:
        if self.ts.tzinfo is None:
            object.__setattr__(self, "ts", self.ts.replace(tzinfo=timezone.utc))
        for f in fields(self)[1:]:
            value = getattr(self, f.name)
            if value is not None and not math.isfinite(value):
                raise _ColumnError(f.name, f"{value!r} is not finite")
        for name in ("price_up", "price_dn", "procured_up_mw", "procured_dn_mw"):
            if getattr(self, name) < 0:
                raise _ColumnError(name, "must be >= 0")
        if self.deployed_up_mw > 0:
            raise _ColumnError("deployed_up_mw", "Reg-Up deployment must be <= 0 (consumption reduction)")
        if self.deployed_dn_mw < 0:
            raise _ColumnError("deployed_dn_mw", "Reg-Down deployment must be >= 0")
        if -self.deployed_up_mw > self.procured_up_mw * (1 + 1e-9):
            raise _ColumnError("deployed_up_mw", "exceeds procured Reg-Up capacity")
        if self.deployed_dn_mw > self.procured_dn_mw * (1 + 1e-9):
            raise _ColumnError("deployed_dn_mw", "exceeds procured Reg-Down capacity")

    @property
    def eps_up(self) -> float:
        """Realized Reg-Up deployment rate of this hour (0 when nothing procured)."""
        return self.deployed_up_mw / self.procured_up_mw if self.procured_up_mw > 0 else 0.0

    @property
    def eps_dn(self) -> float:
        return self.deployed_dn_mw / self.procured_dn_mw if self.procured_dn_mw > 0 else 0.0


class _ColumnError(ValidationError):
    def __init__(self, column: str, message: str) -> None:
        super().__init__(f"column {column}: {message}")
        self.column = column


class MonthHourKey(NamedTuple):
    year: int
    month: int
    hour: int


def parse_ts(text: str) -> datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_ts(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def local_time(ts: datetime, tz_offset_hours: float = DEFAULT_TZ_OFFSET_HOURS) -> datetime:
    return ts.astimezone(timezone.utc) + timedelta(hours=tz_offset_hours)


def month_hour_key(ts: datetime, tz_offset_hours: float = DEFAULT_TZ_OFFSET_HOURS) -> MonthHourKey:
    t = local_time(ts, tz_offset_hours)
    return MonthHourKey(t.year, t.month, t.hour)


def load_market_csv(path: str | Path) -> list[MarketRecord]:
    """Parse a market CSV. Errors name the offending row and column."""
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise ValidationError(f"{path}: missing column(s) {', '.join(missing)}")
        for rowno, row in enumerate(reader, start=2):
            records.append(_parse_row(row, rowno, path))
    return records


def _parse_row(row: dict, rowno: int, path) -> MarketRecord:
    values: dict = {}
    for col in MARKET_COLUMNS:
        raw = (row.get(col) or "").strip()
        try:
            if col == "ts":
                values[col] = parse_ts(raw)
            elif col in OPTIONAL_COLUMNS:
                values[col] = float(raw) if raw else None
            else:
                values[col] = float(raw)
        except ValueError as exc:
            raise ValidationError(f"{path}: row {rowno}, column {col}: {exc}") from exc
    try:
        return MarketRecord(**values)
    except _ColumnError as exc:
        raise ValidationError(f"{path}: row {rowno}, {exc}") from exc


def _fmt(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def records_to_csv(records: Iterable[MarketRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MARKET_COLUMNS)
    for r in records:
        writer.writerow([format_ts(r.ts)] + [_fmt(getattr(r, c)) for c in MARKET_COLUMNS[1:]])
    return buf.getvalue()


def write_market_csv(records: Iterable[MarketRecord], path: str | Path) -> None:
    Path(path).write_text(records_to_csv(records))


def compute_deployment_rates(
    records: Sequence[MarketRecord], tz_offset_hours: float = DEFAULT_TZ_OFFSET_HOURS
) -> dict[int, tuple[float | None, float | None]]:
    """Hour-of-day deployment rates as ratio of means (deployed over procured).

    A rate is None for an hour whose mean procurement is zero. Hours without
    any records are absent.
    """
    sums: dict[int, np.ndarray] = {}
    for r in records:
        h = local_time(r.ts, tz_offset_hours).hour
        acc = sums.setdefault(h, np.zeros(4))
        acc += (r.deployed_up_mw, r.procured_up_mw, r.deployed_dn_mw, r.procured_dn_mw)
    return {h: (_ratio(a[0], a[1]), _ratio(a[2], a[3])) for h, a in sorted(sums.items())}


def overall_deployment_rates(records: Sequence[MarketRecord]) -> tuple[float | None, float | None]:
    dep_up = math.fsum(r.deployed_up_mw for r in records)
    dep_dn = math.fsum(r.deployed_dn_mw for r in records)
    proc_up = math.fsum(r.procured_up_mw for r in records)
    proc_dn = math.fsum(r.procured_dn_mw for r in records)
    return _ratio(dep_up, proc_up), _ratio(dep_dn, proc_dn)


def _ratio(num: float, den: float) -> float | None:
    return num / den if den > 0 else None


@dataclass(frozen=True)
class MarketSummary:
    price_up: float
    price_dn: float
    procured_up_mw: float
    procured_dn_mw: float
    eps_up: float | None
    eps_dn: float | None


def summarize(records: Sequence[MarketRecord]) -> MarketSummary:
    """Hourly averages in the layout of the market summary table."""
    if not records:
        raise ValidationError("no records to summarize")
    eps_up, eps_dn = overall_deployment_rates(records)
    return MarketSummary(
        price_up=float(np.mean([r.price_up for r in records])),
        price_dn=float(np.mean([r.price_dn for r in records])),
        procured_up_mw=float(np.mean([r.procured_up_mw for r in records])),
        procured_dn_mw=float(np.mean([r.procured_dn_mw for r in records])),
        eps_up=eps_up,
        eps_dn=eps_dn,
    )


def split_at(records: Sequence[MarketRecord], instant: datetime) -> tuple[list[MarketRecord], list[MarketRecord]]:
    """Records strictly before ``instant`` and those at or after it."""
    if instant.tzinfo is None:
        instant = instant.replace(tzinfo=timezone.utc)
    before = [r for r in records if r.ts < instant]
    after = [r for r in records if r.ts >= instant]
    return before, after


# A coin valuation is a constant $/BTC or "historical" (each record's btc_usd).
Valuation = float | str


def _valuation_array(records: Sequence[MarketRecord], valuation: Valuation) -> np.ndarray:
    if isinstance(valuation, str):
        if valuation != "historical":
            raise ValidationError(f"unknown valuation {valuation!r}; use a number or 'historical'")
        missing = [i for i, r in enumerate(records) if r.btc_usd is None]
        if missing:
            raise ValidationError(
                f"historical valuation needs btc_usd, missing on {len(missing)} record(s) "
                f"(first at data row {missing[0] + 2})"
            )
        return np.array([r.btc_usd for r in records], dtype=float)
    if not valuation > 0:
        raise ValidationError(f"coin valuation {valuation} must be > 0")
    return np.full(len(records), float(valuation))


class _Columns(NamedTuple):
    price_up: np.ndarray
    price_dn: np.ndarray
    eps_up: np.ndarray
    eps_dn: np.ndarray
    group: np.ndarray
    keys: list[MonthHourKey]


def _columns(records: Sequence[MarketRecord], tz_offset_hours: float) -> _Columns:
    key_index: dict[MonthHourKey, int] = {}
    group = np.empty(len(records), dtype=int)
    for i, r in enumerate(records):
        group[i] = key_index.setdefault(month_hour_key(r.ts, tz_offset_hours), len(key_index))
    return _Columns(
        np.array([r.price_up for r in records], dtype=float),
        np.array([r.price_dn for r in records], dtype=float),
        np.array([r.eps_up for r in records], dtype=float),
        np.array([r.eps_dn for r in records], dtype=float),
        group,
        list(key_index),
    )


def _group_means(values: np.ndarray, group: np.ndarray, n_groups: int) -> np.ndarray:
    counts = np.bincount(group, minlength=n_groups)
    return np.bincount(group, weights=values, minlength=n_groups) / counts


def expected_worthwhileness(
    records: Sequence[MarketRecord],
    energy_per_btc: float,
    valuation: Valuation,
    elec_price: float,
    tz_offset_hours: float = DEFAULT_TZ_OFFSET_HOURS,
) -> dict[MonthHourKey, tuple[float, float]]:
    """Month-hour means of (w_up, w_dn), the expectations fed to the split rule."""
    if not records:
        return {}
    cols = _columns(records, tz_offset_hours)
    rho = _valuation_array(records, valuation) / energy_per_btc - elec_price
    w_up, w_dn = economics.worthwhileness_array(cols.price_up, cols.price_dn, rho, cols.eps_up, cols.eps_dn)
    n = len(cols.keys)
    mu_up = _group_means(w_up, cols.group, n)
    mu_dn = _group_means(w_dn, cols.group, n)
    return {k: (float(mu_up[i]), float(mu_dn[i])) for i, k in enumerate(cols.keys)}


def month_hour_choice_map(
    records: Sequence[MarketRecord],
    miner: economics.MinerSpec,
    valuation: Valuation,
    elec_price: float,
    tz_offset_hours: float = DEFAULT_TZ_OFFSET_HOURS,
) -> dict[MonthHourKey, Choice]:
    """Optimal product (Reg-Up, Reg-Down or neither) per month-hour group."""
    e = economics.energy_per_bitcoin(miner)
    means = expected_worthwhileness(records, e, valuation, elec_price, tz_offset_hours)
    return {k: economics.classify(w_up, w_dn) for k, (w_up, w_dn) in sorted(means.items())}


@dataclass(frozen=True)
class HourDecision:
    ts: datetime
    decision: economics.CapacityDecision
    profit_usd: float


def hourly_decisions(
    records: Sequence[MarketRecord],
    energy_per_btc: float,
    valuation: Valuation,
    elec_price: float,
    capacity_limit: float,
    tz_offset_hours: float = DEFAULT_TZ_OFFSET_HOURS,
) -> list[HourDecision]:
    """Per-hour optimal split and its expected profit over not participating.

    Every hour of a month-hour group shares that group's expected w values.
    """
    means = expected_worthwhileness(records, energy_per_btc, valuation, elec_price, tz_offset_hours)
    out = []
    for r in records:
        w_up, w_dn = means[month_hour_key(r.ts, tz_offset_hours)]
        out.append(
            HourDecision(
                r.ts,
                economics.optimal_capacity_split(w_up, w_dn, capacity_limit),
                economics.optimal_participation_profit(w_up, w_dn, capacity_limit),
            )
        )
    return out


HOUR_ECONOMICS_COLUMNS = (
    "ts",
    "price_up",
    "price_dn",
    "eps_up",
    "eps_dn",
    "btc_usd",
    "elec_usd_per_mwh",
    "capacity_limit_mw",
)
DECISION_COLUMNS = ("ts", "c_up_mw", "c_dn_mw", "profit_usd")


def load_hour_economics_csv(
    path: str | Path, energy_per_btc: float, tz_offset_hours: float = DEFAULT_TZ_OFFSET_HOURS
) -> list[tuple[datetime, economics.HourEconomics]]:
    """Read per-hour economic inputs; each row's rates are taken as its expectations."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in HOUR_ECONOMICS_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ValidationError(f"{path}: missing column(s) {', '.join(missing)}")
        for rowno, row in enumerate(reader, start=2):
            try:
                ts = parse_ts(row["ts"])
                v = {c: float(row[c]) for c in HOUR_ECONOMICS_COLUMNS[1:]}
                econ = economics.HourEconomics.build(
                    hour=local_time(ts, tz_offset_hours).hour,
                    price_up=v["price_up"],
                    price_dn=v["price_dn"],
                    eps_up=v["eps_up"],
                    eps_dn=v["eps_dn"],
                    capacity_limit_mw=v["capacity_limit_mw"],
                    btc_value=v["btc_usd"],
                    energy_per_btc=energy_per_btc,
                    elec_price=v["elec_usd_per_mwh"],
                )
            except (ValueError, TypeError) as exc:
                raise ValidationError(f"{path}: row {rowno}: {exc}") from exc
            out.append((ts, econ))
    return out


def decide_hours(rows: Sequence[tuple[datetime, economics.HourEconomics]]) -> list[HourDecision]:
    out = []
    for ts, econ in rows:
        w_up, w_dn = econ.worthwhileness()
        C = econ.capacity_limit_mw
        out.append(
            HourDecision(
                ts,
                economics.optimal_capacity_split(w_up, w_dn, C),
                economics.optimal_participation_profit(w_up, w_dn, C),
            )
        )
    return out


def decisions_to_csv(decisions: Iterable[HourDecision]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(DECISION_COLUMNS)
    for d in decisions:
        writer.writerow(
            [format_ts(d.ts), repr(d.decision.c_up_mw), repr(d.decision.c_dn_mw), repr(float(d.profit_usd))]
        )
    return buf.getvalue()


def sweep_to_csv(rows: Iterable[SweepRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for r in rows:
        writer.writerow([getattr(r, c) for c in SWEEP_COLUMNS])
    return buf.getvalue()


@dataclass(frozen=True)
class SweepSpec:
    btc_price_grid: tuple[float, ...]
    energy_per_btc_grid: tuple[float, ...]
    elec_price_grid: tuple[float, ...]

    def __post_init__(self) -> None:
        for f in fields(self):
            grid = tuple(float(v) for v in getattr(self, f.name))
            if not grid:
                raise ValidationError(f"{f.name} is empty")
            if any(not (v > 0 and math.isfinite(v)) for v in grid):
                raise ValidationError(f"{f.name} entries must be finite and > 0")
            object.__setattr__(self, f.name, grid)

    def points(self) -> list[tuple[float, float, float]]:
        return list(itertools.product(self.btc_price_grid, self.energy_per_btc_grid, self.elec_price_grid))


@dataclass(frozen=True)
class SweepRow:
    btc_usd: float
    energy_per_btc: float
    elec_price: float
    avg_profit_per_hour: float
    up_hours: int
    dn_hours: int
    neither_hours: int


SWEEP_COLUMNS = tuple(f.name for f in fields(SweepRow))


def profit_sweep(
    records: Sequence[MarketRecord],
    sweep: SweepSpec,
    capacity_limit: float,
    tz_offset_hours: float = DEFAULT_TZ_OFFSET_HOURS,
) -> list[SweepRow]:
    """Average optimal profit per hour at every (coin price, MWh/BTC, $/MWh) point.

    Rows come out in grid order (coin price slowest, electricity price fastest).
    The choice counts are per hour and let callers check that declining to
    participate grows with the coin price.
    """
    if capacity_limit < 0:
        raise ValidationError(f"capacity_limit={capacity_limit} must be >= 0")
    if not records:
        raise ValidationError("no records to sweep over")
    cols = _columns(records, tz_offset_hours)
    n = len(cols.keys)
    counts = np.bincount(cols.group, minlength=n)
    mean_price_up = _group_means(cols.price_up, cols.group, n)
    mean_price_dn = _group_means(cols.price_dn, cols.group, n)
    mean_eps_up = _group_means(cols.eps_up, cols.group, n)
    mean_eps_dn = _group_means(cols.eps_dn, cols.group, n)

    rows = []
    for btc, energy, elec in sweep.points():
        rho = economics.mining_rate_of_return(btc, energy, elec)
        # rho is constant across hours here, so the mean of w is w of the means.
        w_up, w_dn = economics.worthwhileness_array(mean_price_up, mean_price_dn, rho, mean_eps_up, mean_eps_dn)
        profit = capacity_limit * np.maximum(np.maximum(w_up, w_dn), 0.0)
        up = (w_up >= w_dn) & (w_up > 0)
        dn = (w_dn > w_up) & (w_dn > 0)
        rows.append(
            SweepRow(
                btc,
                energy,
                elec,
                float(np.dot(counts, profit) / counts.sum()),
                int(counts[up].sum()),
                int(counts[dn].sum()),
                int(counts[~(up | dn)].sum()),
            )
        )
    return rows


class BetaFit(NamedTuple):
    beta: float
    r_squared: float
    stderr: float
    intercept: float


def calibrate_beta(freq_trace: Sequence[float], deployed_trace: Sequence[float], nominal_hz: float = 60.0) -> BetaFit:
    """Least-squares slope of the step change in deployed regulation against frequency deviation.

    ``deployed_trace[t + 1] - deployed_trace[t]`` is regressed on
    ``freq_trace[t] - nominal_hz`` over consecutive 4 s samples.
    """
    f = np.asarray(freq_trace, dtype=float)
    d = np.asarray(deployed_trace, dtype=float)
    if f.shape != d.shape or f.ndim != 1:
        raise ValidationError(f"traces differ in shape: {f.shape} vs {d.shape}")
    if f.size < 3:
        raise ValidationError("need at least 3 samples to fit")
    x = f[:-1] - nominal_hz
    y = np.diff(d)
    if np.ptp(x) == 0:
        raise ValidationError("frequency trace is constant; beta cannot be fitted")
    fit = stats.linregress(x, y)
    return BetaFit(float(fit.slope), float(fit.rvalue**2), float(fit.stderr), float(fit.intercept))
