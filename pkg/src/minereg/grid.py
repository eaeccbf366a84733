"""Aggregate single-bus frequency model and generation-loss contingencies.

The whole interconnection is one swing equation,
``M * d(df)/dt = imbalance - D * df``, stepped with explicit Euler. Regulation
is the integral droop of :mod:`minereg.dispatch` run on one aggregate entity
whose ramp and capacity limits describe the regulating fleet.
"""

from __future__ import annotations

import configparser
import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from minereg import dispatch
from minereg.errors import ValidationError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridParams:
    inertia_mws_per_hz: float
    damping_mw_per_hz: float
    nominal_hz: float = 60.0

    def __post_init__(self) -> None:
        if not self.inertia_mws_per_hz > 0:
            raise ValidationError(f"inertia={self.inertia_mws_per_hz} must be > 0")
        if not self.damping_mw_per_hz >= 0:
            raise ValidationError(f"damping={self.damping_mw_per_hz} must be >= 0")

    @property
    def time_constant_s(self) -> float:
        if self.damping_mw_per_hz == 0:
            return math.inf
        return self.inertia_mws_per_hz / self.damping_mw_per_hz


@dataclass(frozen=True)
class Disturbance:
    """Persistent steps in net generation minus load, as ``(time_s, mw)`` pairs."""

    schedule: tuple[tuple[float, float], ...] = ()

    def __post_init__(self) -> None:
        schedule = tuple((float(t), float(p)) for t, p in self.schedule)
        times = [t for t, _ in schedule]
        if any(t < 0 for t in times):
            raise ValidationError("disturbance times must be >= 0")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValidationError("disturbance times must be strictly increasing")
        object.__setattr__(self, "schedule", schedule)

    @classmethod
    def generation_loss(cls, loss_mw: float, at_s: float) -> Disturbance:
        if loss_mw == 0:
            return cls()
        return cls(((at_s, -loss_mw),))

    def change_in(self, t0: float, t1: float) -> float:
        """Total step size of events with ``t0 <= time < t1``."""
        return math.fsum(p for t, p in self.schedule if t0 <= t < t1)


@dataclass(frozen=True)
class GridState:
    time_s: float = 0.0
    freq_hz: float = 60.0
    net_imbalance_mw: float = 0.0

    def __post_init__(self) -> None:
        for name in ("time_s", "freq_hz", "net_imbalance_mw"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"{name} is not finite")


def step_frequency(
    state: GridState, params: GridParams, injection_change_mw: float, dt_s: float
) -> GridState:
    """Advance one explicit-Euler step after adding ``injection_change_mw`` to the imbalance."""
    if not dt_s > 0:
        raise ValidationError(f"dt_s={dt_s} must be > 0")
    if dt_s > 0.1 * params.time_constant_s:
        log.warning("dt=%.3g s is coarse for M/D=%.3g s", dt_s, params.time_constant_s)
    imbalance = state.net_imbalance_mw + injection_change_mw
    df = state.freq_hz - params.nominal_hz
    df += dt_s * (imbalance - params.damping_mw_per_hz * df) / params.inertia_mws_per_hz
    return GridState(state.time_s + dt_s, params.nominal_hz + df, imbalance)


@dataclass
class CoupledGrid:
    """Frequency source for :func:`minereg.dispatch.run_episode` driven by the swing model.

    Each ``advance`` call applies the regulation injection change, then steps
    the grid over ``duration_s`` in substeps of at most ``dt_s`` while the
    disturbance schedule plays out.
    """

    params: GridParams
    disturbance: Disturbance = field(default_factory=Disturbance)
    state: GridState = field(default_factory=GridState)
    dt_s: float = 0.1

    @property
    def freq_hz(self) -> float:
        return self.state.freq_hz

    def advance(self, injection_change_mw: float, duration_s: float) -> GridState:
        n = max(1, math.ceil(duration_s / self.dt_s - 1e-9))
        h = duration_s / n
        change = injection_change_mw
        for _ in range(n):
            t = self.state.time_s
            change += self.disturbance.change_in(t, t + h)
            self.state = step_frequency(self.state, self.params, change, h)
            change = 0.0
        return self.state


@dataclass(frozen=True)
class ContingencyScenario:
    params: GridParams
    disturbance: Disturbance
    regulation_ramp_mw_per_s: float
    regulation_cap_mw: float
    sim_seconds: float
    dt_s: float = 0.1
    # Integral droop gain in MW per Hz per second of deviation.
    gain_mw_per_hz_s: float = 200.0

    def __post_init__(self) -> None:
        if not self.dt_s > 0:
            raise ValidationError(f"dt_s={self.dt_s} must be > 0")
        if not self.sim_seconds >= self.dt_s:
            raise ValidationError(f"sim_seconds={self.sim_seconds} shorter than dt_s={self.dt_s}")
        if self.regulation_ramp_mw_per_s < 0 or self.regulation_cap_mw < 0:
            raise ValidationError("regulation ramp and cap must be >= 0")
        if not self.gain_mw_per_hz_s > 0:
            raise ValidationError(f"gain={self.gain_mw_per_hz_s} must be > 0")


@dataclass
class FrequencyTrace:
    time_s: np.ndarray
    freq_hz: np.ndarray
    regulation_mw: np.ndarray

    def __len__(self) -> int:
        return len(self.time_s)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["time_s", "freq_hz", "regulation_mw"])
        for row in zip(self.time_s, self.freq_hz, self.regulation_mw):
            writer.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


def simulate_contingency(scenario: ContingencyScenario) -> FrequencyTrace:
    """Simulate the grid with the regulating fleet responding to the disturbance.

    ``regulation_mw`` is the fleet's injection (positive while it props up
    an under-frequency).
    """
    dt = scenario.dt_s
    steps = int(round(scenario.sim_seconds / dt))
    cap = scenario.regulation_cap_mw
    cfg = dispatch.EpisodeConfig(
        beta=scenario.gain_mw_per_hz_s * dt,
        f_lo=scenario.params.nominal_hz,
        f_hi=scenario.params.nominal_hz,
        steps=steps,
        step_seconds=dt,
    )
    fleet = dispatch.EntityLimits.from_rates(
        "fleet", cap, cap, scenario.regulation_ramp_mw_per_s, scenario.regulation_ramp_mw_per_s, dt
    )
    grid = CoupledGrid(
        scenario.params,
        scenario.disturbance,
        GridState(0.0, scenario.params.nominal_hz, 0.0),
        dt,
    )
    episode = dispatch.run_episode(cfg, [fleet], grid)

    # Rounded so sample times print cleanly (0.1 * 3 is not 0.3).
    time_s = np.round(np.arange(steps + 1) * dt, 9)
    freq = np.append(np.asarray(episode.freq_hz), grid.freq_hz)
    # Regulation in effect at each sample: dispatch decided on the previous step.
    d = np.concatenate([[0.0], np.array([v[0] for v in episode.dispatch_mw])])
    return FrequencyTrace(time_s, freq, -d)


def recovery_time(trace: FrequencyTrace, band_hz: tuple[float, float]) -> float | None:
    """Time at which the frequency is back inside ``band_hz`` for good.

    Returns 0 when the trace never leaves the band and None when it ends outside.
    """
    if len(trace) == 0:
        raise ValidationError("empty trace")
    lo, hi = band_hz
    inside = (trace.freq_hz >= lo) & (trace.freq_hz <= hi)
    if inside.all():
        return 0.0
    if not inside[-1]:
        return None
    last_outside = int(np.flatnonzero(~inside)[-1])
    return float(trace.time_s[last_outside + 1])


SCENARIO_KEYS = ("inertia", "damping", "loss_mw", "loss_time_s", "ramp_mw_per_s", "cap_mw", "dt_s", "sim_s")
_OPTIONAL_KEYS = ("gain", "nominal_hz", "band_hz")


def scenario_from_mapping(values: dict[str, str], name: str = "scenario") -> tuple[ContingencyScenario, float]:
    """Build a scenario and its recovery band half-width (Hz) from flat key-value pairs."""
    missing = [k for k in SCENARIO_KEYS if k not in values]
    if missing:
        raise ValidationError(f"scenario {name!r}: missing key(s) {', '.join(missing)}")
    unknown = set(values) - set(SCENARIO_KEYS) - set(_OPTIONAL_KEYS)
    if unknown:
        raise ValidationError(f"scenario {name!r}: unknown key(s) {', '.join(sorted(unknown))}")
    try:
        v = {k: float(s) for k, s in values.items()}
    except ValueError as exc:
        raise ValidationError(f"scenario {name!r}: {exc}") from exc
    params = GridParams(v["inertia"], v["damping"], v.get("nominal_hz", 60.0))
    scenario = ContingencyScenario(
        params=params,
        disturbance=Disturbance.generation_loss(v["loss_mw"], v["loss_time_s"]),
        regulation_ramp_mw_per_s=v["ramp_mw_per_s"],
        regulation_cap_mw=v["cap_mw"],
        sim_seconds=v["sim_s"],
        dt_s=v["dt_s"],
        gain_mw_per_hz_s=v.get("gain", 200.0),
    )
    return scenario, v.get("band_hz", 0.01)


def load_scenarios(path: str | Path) -> dict[str, tuple[ContingencyScenario, float]]:
    """Read a scenario file.

    A file of bare ``key = value`` lines is one scenario named after the file;
    ``[sections]`` define several scenarios sharing any keys under ``[DEFAULT]``.
    """
    text = Path(path).read_text()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError:
        parser.read_string(f"[{Path(path).stem}]\n{text}")
    sections = parser.sections()
    if not sections:
        raise ValidationError(f"{path}: no scenarios defined")
    return {name: scenario_from_mapping(dict(parser[name]), name) for name in sections}


def bundled_scenario_path() -> Path:
    return Path(__file__).with_name("data") / "fig9.scenario"


def run_scenarios(
    scenarios: dict[str, tuple[ContingencyScenario, float]],
) -> dict[str, tuple[FrequencyTrace, float | None]]:
    out = {}
    for name, (scenario, band) in scenarios.items():
        trace = simulate_contingency(scenario)
        nominal = scenario.params.nominal_hz
        out[name] = (trace, recovery_time(trace, (nominal - band, nominal + band)))
    return out

