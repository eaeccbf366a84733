"""Real-time regulation dispatch over one market hour.

Sign convention: dispatch ``d`` is positive for Reg-Down (the load consumes
more) and negative for Reg-Up (the load consumes less). Every step the
operator turns the frequency deviation into a required net change ``delta``,
bounds each entity's increment by its ramp limits and cleared capacity, and
allocates ``delta`` with either the equitable or the sparse policy.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING

import numpy as np

from minereg.errors import ContractViolation, ValidationError

if TYPE_CHECKING:
    from minereg.grid import CoupledGrid

_TOL = 1e-9


class Policy(str, enum.Enum):
    EQUITABLE = "equitable"
    SPARSE = "sparse"


@dataclass(frozen=True)
class EpisodeConfig:
    beta: float = 800.0
    f_lo: float = 60.0
    f_hi: float = 60.0
    policy: Policy = Policy.EQUITABLE
    steps: int = 900
    step_seconds: float = 4.0

    def __post_init__(self) -> None:
        if not self.f_lo <= self.f_hi:
            raise ValidationError(f"f_lo={self.f_lo} exceeds f_hi={self.f_hi}")
        if self.steps < 1:
            raise ValidationError(f"steps={self.steps} must be >= 1")
        if not self.beta > 0:
            raise ValidationError(f"beta={self.beta} must be > 0")
        if not self.step_seconds > 0:
            raise ValidationError(f"step_seconds={self.step_seconds} must be > 0")
        object.__setattr__(self, "policy", Policy(self.policy))


@dataclass(frozen=True)
class EntityLimits:
    """Cleared capacities (MW) and ramp limits (MW per step) for one entity."""

    entity_id: str
    cap_up_mw: float
    cap_dn_mw: float
    ramp_lo_mw: float
    ramp_hi_mw: float

    def __post_init__(self) -> None:
        if self.cap_up_mw < 0 or self.cap_dn_mw < 0:
            raise ValidationError(f"entity {self.entity_id!r}: capacities must be >= 0")
        if not self.ramp_lo_mw <= 0 <= self.ramp_hi_mw:
            raise ValidationError(
                f"entity {self.entity_id!r}: need ramp_lo <= 0 <= ramp_hi, "
                f"got [{self.ramp_lo_mw}, {self.ramp_hi_mw}]"
            )

    @classmethod
    def from_rates(
        cls,
        entity_id: str,
        cap_up_mw: float,
        cap_dn_mw: float,
        up_rate_mw_per_s: float,
        dn_rate_mw_per_s: float,
        step_seconds: float = 4.0,
    ) -> EntityLimits:
        """Build limits from ramp rates in MW/s (Reg-Up rate, Reg-Down rate)."""
        return cls(
            entity_id,
            cap_up_mw,
            cap_dn_mw,
            ramp_lo_mw=-abs(up_rate_mw_per_s) * step_seconds,
            ramp_hi_mw=abs(dn_rate_mw_per_s) * step_seconds,
        )


@dataclass
class EpisodeState:
    t: int
    dispatch_mw: np.ndarray
    limits: list[EntityLimits]

    def __post_init__(self) -> None:
        self.dispatch_mw = np.asarray(self.dispatch_mw, dtype=float)
        if self.dispatch_mw.shape != (len(self.limits),):
            raise ContractViolation(
                f"dispatch vector has shape {self.dispatch_mw.shape}, expected ({len(self.limits)},)"
            )
        self.cap_up = np.array([lim.cap_up_mw for lim in self.limits], dtype=float)
        self.cap_dn = np.array([lim.cap_dn_mw for lim in self.limits], dtype=float)
        self.ramp_lo = np.array([lim.ramp_lo_mw for lim in self.limits], dtype=float)
        self.ramp_hi = np.array([lim.ramp_hi_mw for lim in self.limits], dtype=float)

    @classmethod
    def initial(cls, limits: Sequence[EntityLimits]) -> EpisodeState:
        return cls(0, np.zeros(len(limits)), list(limits))


@dataclass
class EpisodeLog:
    entity_ids: list[str]
    t: list[int] = field(default_factory=list)
    freq_hz: list[float] = field(default_factory=list)
    delta_mw: list[float] = field(default_factory=list)
    shortfall_mw: list[float] = field(default_factory=list)
    x_mw: list[np.ndarray] = field(default_factory=list)
    dispatch_mw: list[np.ndarray] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.t)

    def append(self, t, freq, delta, x, d) -> None:
        self.t.append(t)
        self.freq_hz.append(freq)
        self.delta_mw.append(delta)
        self.shortfall_mw.append(abs(delta - math.fsum(x)))
        self.x_mw.append(x)
        self.dispatch_mw.append(d)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            ["t", "freq_hz", "delta_mw", "shortfall_mw"]
            + [f"x_{e}" for e in self.entity_ids]
            + [f"d_{e}" for e in self.entity_ids]
        )
        for i in range(len(self)):
            writer.writerow(
                [self.t[i], repr(self.freq_hz[i]), repr(self.delta_mw[i]), repr(self.shortfall_mw[i])]
                + [repr(float(v)) for v in self.x_mw[i]]
                + [repr(float(v)) for v in self.dispatch_mw[i]]
            )
        return buf.getvalue()


def required_delta(f: float, cfg: EpisodeConfig) -> float:
    """Net dispatch change demanded by frequency ``f`` (positive means Reg-Down)."""
    if not math.isfinite(f):
        raise ValidationError(f"frequency {f!r} is not finite")
    return cfg.beta * (max(0.0, f - cfg.f_hi) + min(0.0, f - cfg.f_lo))


def incremental_bounds(state: EpisodeState) -> tuple[np.ndarray, np.ndarray]:
    d = state.dispatch_mw
    bad = np.flatnonzero((d < -state.cap_up - _TOL) | (d > state.cap_dn + _TOL))
    if bad.size:
        i = int(bad[0])
        raise ContractViolation(
            f"entity {state.limits[i].entity_id!r}: dispatch {d[i]} outside "
            f"[-{state.cap_up[i]}, {state.cap_dn[i]}]"
        )
    x_lo = np.minimum(np.maximum(state.ramp_lo, -state.cap_up - d), 0.0)
    x_hi = np.maximum(np.minimum(state.ramp_hi, state.cap_dn - d), 0.0)
    return x_lo, x_hi


def _check_bounds(x_lo, x_hi) -> tuple[np.ndarray, np.ndarray]:
    x_lo = np.asarray(x_lo, dtype=float)
    x_hi = np.asarray(x_hi, dtype=float)
    if x_lo.shape != x_hi.shape or x_lo.ndim != 1:
        raise ContractViolation(f"bound vectors have shapes {x_lo.shape} and {x_hi.shape}")
    if np.any(x_lo > 0) or np.any(x_hi < 0):
        raise ContractViolation("bounds must satisfy x_lo <= 0 <= x_hi")
    return x_lo, x_hi


def equitable_dispatch(delta: float, x_lo, x_hi) -> np.ndarray:
    """Share ``delta`` across entities in proportion to their available bound."""
    x_lo, x_hi = _check_bounds(x_lo, x_hi)
    if delta == 0:
        return np.zeros_like(x_hi)
    bound = x_hi if delta > 0 else x_lo
    total = math.fsum(bound)
    if abs(delta) >= abs(total):
        return bound.copy()
    # Scaling by a ratio <= 1 keeps every share inside its bound after rounding.
    x = bound * (delta / total)
    # The entity with the most headroom absorbs rounding so the sum is exact;
    # its share dwarfs the residue, so the sign cannot flip.
    k = int(np.argmax(np.abs(bound)))
    x[k] = 0.0
    x[k] = np.clip(delta - math.fsum(x), min(0.0, bound[k]), max(0.0, bound[k]))
    return x


def sparse_dispatch(delta: float, x_lo, x_hi) -> np.ndarray:
    """Fill entities with the largest headroom first, touching as few as possible."""
    x_lo, x_hi = _check_bounds(x_lo, x_hi)
    if delta == 0:
        return np.zeros_like(x_hi)
    bound = x_hi if delta > 0 else -x_lo
    need = abs(delta)
    if need >= math.fsum(bound):
        return x_hi.copy() if delta > 0 else x_lo.copy()

    order = np.argsort(-bound, kind="stable")
    x = np.zeros_like(bound)
    filled = 0.0
    for i in order:
        if filled + bound[i] >= need:
            x[i] = need - filled
            break
        x[i] = bound[i]
        filled += bound[i]
    return x if delta > 0 else -x


def apply_step(state: EpisodeState, x) -> EpisodeState:
    x = np.asarray(x, dtype=float)
    if x.shape != state.dispatch_mw.shape:
        raise ContractViolation(f"increment has shape {x.shape}, expected {state.dispatch_mw.shape}")
    if np.any(x > _TOL) and np.any(x < -_TOL):
        pos = state.limits[int(np.argmax(x))].entity_id
        neg = state.limits[int(np.argmin(x))].entity_id
        raise ContractViolation(
            f"increment mixes signs (entity {pos!r} up, entity {neg!r} down); "
            "regulation moves in one direction per step"
        )
    x_lo, x_hi = incremental_bounds(state)
    bad = np.flatnonzero((x < x_lo - _TOL) | (x > x_hi + _TOL))
    if bad.size:
        i = int(bad[0])
        raise ContractViolation(
            f"entity {state.limits[i].entity_id!r}: increment {x[i]} outside [{x_lo[i]}, {x_hi[i]}]"
        )
    d = np.clip(state.dispatch_mw + x, -state.cap_up, state.cap_dn)
    return replace(state, t=state.t + 1, dispatch_mw=d)


ALLOCATORS = {
    Policy.EQUITABLE: equitable_dispatch,
    Policy.SPARSE: sparse_dispatch,
}


def run_episode(
    cfg: EpisodeConfig,
    limits: Sequence[EntityLimits],
    frequency_source: Sequence[float] | CoupledGrid,
) -> EpisodeLog:
    """Run ``cfg.steps`` dispatch steps.

    ``frequency_source`` is either a trace of ``cfg.steps`` frequencies (Hz) or
    a :class:`minereg.grid.CoupledGrid`, in which case the total increment of
    each step is fed back to the grid as extra consumption.
    """
    if not limits:
        raise ValidationError("no entities to dispatch")
    coupled = hasattr(frequency_source, "advance")
    if not coupled:
        trace = np.asarray(frequency_source, dtype=float)
        if trace.shape != (cfg.steps,):
            raise ValidationError(f"frequency trace has {trace.size} samples, expected {cfg.steps}")

    allocate = ALLOCATORS[cfg.policy]
    state = EpisodeState.initial(limits)
    log = EpisodeLog([lim.entity_id for lim in limits])
    for t in range(cfg.steps):
        f = frequency_source.freq_hz if coupled else float(trace[t])
        delta = required_delta(f, cfg)
        x_lo, x_hi = incremental_bounds(state)
        x = allocate(delta, x_lo, x_hi)
        state = apply_step(state, x)
        log.append(t, f, delta, x, state.dispatch_mw)
        if coupled:
            # More consumption is less net injection.
            frequency_source.advance(-math.fsum(x), cfg.step_seconds)
    return log


LIMIT_COLUMNS = ("entity_id", "cap_up_mw", "cap_dn_mw", "ramp_lo_mw", "ramp_hi_mw")


def load_limits_csv(path) -> list[EntityLimits]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in LIMIT_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ValidationError(f"{path}: missing column(s) {', '.join(missing)}")
        for rowno, row in enumerate(reader, start=2):
            try:
                out.append(
                    EntityLimits(
                        row["entity_id"].strip(),
                        float(row["cap_up_mw"]),
                        float(row["cap_dn_mw"]),
                        float(row["ramp_lo_mw"]),
                        float(row["ramp_hi_mw"]),
                    )
                )
            except (ValueError, TypeError) as exc:
                raise ValidationError(f"{path}: row {rowno}: {exc}") from exc
    return out


def load_trace_csv(path) -> np.ndarray:
    """Single-column CSV of Hz values; a non-numeric first line is a header."""
    values = []
    with open(path, newline="") as fh:
        for rowno, row in enumerate(csv.reader(fh), start=1):
            if not row or not row[0].strip():
                continue
            try:
                values.append(float(row[0]))
            except ValueError as exc:
                if rowno == 1:
                    continue
                raise ValidationError(f"{path}: row {rowno}: {exc}") from exc
    return np.asarray(values, dtype=float)
