"""Command-line entry point.

Exit codes: 0 on success, 2 on invalid input, 1 on internal errors. Errors are
reported on stderr as a single JSON line.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from minereg import data, dispatch, economics, fixtures, grid, market
from minereg.config import data_path, load_config
from minereg.errors import MineregError

log = logging.getLogger("minereg")


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int) -> None:
        super().__init__(message)
        self.kind = kind
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", f"{self.prog}: {message}", 2)


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _emit(args, filename: str, text: str) -> None:
    """Write ``text`` into the output directory, or to stdout without one."""
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / filename).write_text(text)
        log.info("wrote %s", out / filename)
    else:
        sys.stdout.write(text)


def _pick(flag, section, key, cfg, cast=float):
    return flag if flag is not None else cast(cfg[section][key])


def cmd_clear(args, cfg) -> None:
    offers = market.load_offers_csv(args.offers, hour=args.hour)
    hour = args.hour
    if hour is None:
        hours = _offer_hours(args.offers)
        if len(hours) > 1:
            raise CliError("validation", "offers span several hours; pass --hour", 2)
        hour = hours.pop() if hours else 0
    result = market.clear_market(offers, market.DemandSchedule(hour, args.demand_up, args.demand_dn))
    _emit(args, f"clearing_h{hour:02d}.json", json.dumps(result.to_dict(), indent=2) + "\n")


def _offer_hours(path) -> set[int]:
    with open(path, newline="") as fh:
        return {int(row["hour"]) for row in csv.DictReader(fh)}


def cmd_dispatch(args, cfg) -> None:
    sec = "dispatch"
    ep = dispatch.EpisodeConfig(
        beta=_pick(args.beta, sec, "beta", cfg),
        f_lo=_pick(args.f_lo, sec, "f_lo", cfg),
        f_hi=_pick(args.f_hi, sec, "f_hi", cfg),
        policy=dispatch.Policy(_pick(args.policy, sec, "policy", cfg, str)),
        steps=_pick(args.steps, sec, "steps", cfg, int),
        step_seconds=_pick(args.step_seconds, sec, "step_seconds", cfg),
    )
    limits = dispatch.load_limits_csv(args.limits)
    trace = dispatch.load_trace_csv(args.freq)
    episode = dispatch.run_episode(ep, limits, trace)
    _emit(args, "episode.csv", episode.to_csv())


def cmd_contingency(args, cfg) -> None:
    """Traces go to the output directory; the summary always goes to stdout."""
    path = args.scenario or data_path(cfg["contingency"]["scenario"])
    scenarios = grid.load_scenarios(path)
    results = grid.run_scenarios(scenarios)
    summary = {}
    for name, (trace, rec) in results.items():
        sc, band = scenarios[name]
        summary[name] = {
            "ramp_mw_per_s": sc.regulation_ramp_mw_per_s,
            "cap_mw": sc.regulation_cap_mw,
            "band_hz": band,
            "recovery_time_s": rec,
            "min_freq_hz": float(trace.freq_hz.min()),
        }
        if args.out:
            _emit(args, f"trace_{name}.csv", trace.to_csv())
    times = [v["recovery_time_s"] for v in summary.values()]
    times = [float("inf") if t is None else t for t in times]
    doc = {
        "scenarios": summary,
        "strictly_decreasing": all(a > b for a, b in zip(times, times[1:])),
    }
    text = json.dumps(doc, indent=2) + "\n"
    if args.out:
        _emit(args, "summary.json", text)
    sys.stdout.write(text)


def _miner(args, cfg) -> economics.MinerSpec:
    sec = cfg["economics"]
    name = args.miner or sec["miner"]
    difficulty = args.difficulty if args.difficulty is not None else float(sec["network_difficulty"])
    reward = args.block_reward if args.block_reward is not None else float(sec["block_reward_btc"])
    if name == "custom":
        if args.efficiency is None:
            raise CliError("validation", "--miner custom needs --efficiency", 2)
        efficiency = args.efficiency
    else:
        efficiency = args.efficiency or economics.MINERS[name].efficiency_j_per_th
    return economics.MinerSpec(efficiency, difficulty, reward)


def _valuation(text: str) -> data.Valuation:
    if text == "historical":
        return text
    try:
        return float(text)
    except ValueError:
        raise CliError("validation", f"--btc must be a number or 'historical', got {text!r}", 2) from None


def _is_hour_economics(path) -> bool:
    with open(path, newline="") as fh:
        header = fh.readline()
    return "eps_up" in header.strip().split(",")


def cmd_profit(args, cfg) -> None:
    sec = "economics"
    e = economics.energy_per_bitcoin(_miner(args, cfg))
    tz = float(cfg["data"]["tz_offset_hours"])
    if _is_hour_economics(args.market_csv):
        decisions = data.decide_hours(data.load_hour_economics_csv(args.market_csv, e, tz))
    else:
        records = data.load_market_csv(args.market_csv)
        decisions = data.hourly_decisions(
            records,
            e,
            _valuation(args.btc or cfg[sec]["btc"]),
            _pick(args.elec, sec, "elec_usd_per_mwh", cfg),
            _pick(args.capacity, sec, "capacity_mw", cfg),
            tz,
        )
    _emit(args, "decisions.csv", data.decisions_to_csv(decisions))
    if decisions:
        mean = sum(d.profit_usd for d in decisions) / len(decisions)
        counts = {c.value: 0 for c in economics.Choice}
        for d in decisions:
            counts[d.decision.choice.value] += 1
        log.info("mean profit %.4f $/h over %d hours; choices %s", mean, len(decisions), counts)


def cmd_sweep(args, cfg) -> None:
    sec = "economics"
    records = data.load_market_csv(args.market_csv)
    energy = args.energy_grid or [round(economics.energy_per_bitcoin(_miner(args, cfg)), 6)]
    spec = data.SweepSpec(
        tuple(args.btc_grid),
        tuple(energy),
        tuple(args.elec_grid or [float(cfg[sec]["elec_usd_per_mwh"])]),
    )
    rows = data.profit_sweep(
        records, spec, _pick(args.capacity, sec, "capacity_mw", cfg), float(cfg["data"]["tz_offset_hours"])
    )
    _emit(args, "sweep.csv", data.sweep_to_csv(rows))


def cmd_fixture(args, cfg) -> None:
    seed = args.seed if args.seed is not None else int(cfg["data"]["seed"])
    months = args.months if args.months is not None else int(cfg["data"]["months"])
    records = fixtures.generate_market_fixture(
        months=months,
        seed=seed,
        match_table1=args.match_table1,
        tz_offset_hours=float(cfg["data"]["tz_offset_hours"]),
    )
    _emit(args, "fixture.csv", data.records_to_csv(records))


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--out", metavar="DIR", default=default, help="write outputs into DIR instead of stdout")
    parser.add_argument("--config", metavar="FILE", default=default, help="INI file overriding bundled defaults")
    parser.add_argument("--seed", type=int, metavar="N", default=default, help="seed for fixture generation")
    parser.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS if suppress else 0)
    parser.add_argument("-q", "--quiet", action="count", default=argparse.SUPPRESS if suppress else 0)


def _miner_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--miner", choices=["s19xp", "s19jpro", "custom"])
    p.add_argument("--efficiency", type=float, metavar="J_PER_TH")
    p.add_argument("--difficulty", type=float)
    p.add_argument("--block-reward", type=float, metavar="BTC")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="minereg",
        description="Frequency-regulation market, dispatch, grid and mining-economics simulator.",
    )
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        _global_flags(p, suppress=True)
        p.set_defaults(fn=fn)
        return p

    p = add("clear", cmd_clear, "clear the day-ahead Reg-Up/Reg-Down market for one hour")
    p.add_argument("--offers", required=True, help="offers CSV")
    p.add_argument("--demand-up", type=float, required=True, metavar="MW")
    p.add_argument("--demand-dn", type=float, required=True, metavar="MW")
    p.add_argument("--hour", type=int)

    p = add("dispatch", cmd_dispatch, "run one real-time regulation episode")
    p.add_argument("--limits", required=True, help="entity limits CSV")
    p.add_argument("--freq", required=True, help="single-column frequency trace CSV (Hz)")
    p.add_argument("--policy", choices=[pol.value for pol in dispatch.Policy])
    p.add_argument("--beta", type=float, metavar="MW_PER_HZ")
    p.add_argument("--f-lo", type=float, metavar="HZ")
    p.add_argument("--f-hi", type=float, metavar="HZ")
    p.add_argument("--steps", type=int)
    p.add_argument("--step-seconds", type=float)

    p = add("contingency", cmd_contingency, "simulate generation-loss scenarios")
    p.add_argument("scenario", nargs="?", help="scenario file (default: bundled fig9.scenario)")

    p = add("profit", cmd_profit, "per-hour participation decisions and profit")
    p.add_argument("market_csv")
    _miner_flags(p)
    p.add_argument("--btc", help="coin valuation in $/BTC, or 'historical'")
    p.add_argument("--elec", type=float, metavar="USD_PER_MWH")
    p.add_argument("--capacity", type=float, metavar="MW")

    p = add("sweep", cmd_sweep, "average profit over coin, energy and electricity price grids")
    p.add_argument("market_csv")
    _miner_flags(p)
    p.add_argument(
        "--btc-grid",
        type=_float_list,
        default=[float(v) for v in range(20000, 100001, 10000)],
        metavar="LIST",
    )
    p.add_argument("--energy-grid", type=_float_list, metavar="LIST", help="MWh/BTC values (default: miner's)")
    p.add_argument("--elec-grid", type=_float_list, metavar="LIST")
    p.add_argument("--capacity", type=float, metavar="MW")

    p = add("fixture", cmd_fixture, "generate a synthetic hourly market CSV")
    p.add_argument("--months", type=int)
    p.add_argument("--match-table1", action="store_true", help="rescale to the 2022 summary averages")
    return parser


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except CliError as exc:
        return _fail(exc.kind, str(exc), exc.code)
    level = logging.WARNING - 10 * args.verbose + 10 * args.quiet
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config)
        args.fn(args, cfg)
    except CliError as exc:
        return _fail(exc.kind, str(exc), exc.code)
    except (MineregError, FileNotFoundError, ValueError) as exc:
        return _fail("validation", str(exc), 2)
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        return _fail("internal", f"{type(exc).__name__}: {exc}", 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
