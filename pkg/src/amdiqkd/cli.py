"""Command-line front end: predict | simulate | keyrate | scan | optimize | reproduce.

Exit codes: 0 success, 2 input error, 3 no positive key, 1 failed golden checks.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from . import published as ref
from .config import ConfigError, ExperimentConfig, PairingMode, load_config
from .keyrate import KeyRateReport, compute_key_rate
from .mcsim import DEFAULT_BLOCK, ClickLogError, simulate_tally
from .optimize import SearchBox, optimize_params
from .pairing import ContractError, KeyMapping, TallySheet
from .predict import expected_tallies, pairing_stats, pk_scaling

EXIT_OK, EXIT_FAILED, EXIT_INPUT, EXIT_INFEASIBLE = 0, 1, 2, 3


class InputError(Exception):
    pass


def _count(text: str) -> int:
    """Accept integer counts written as 1000000 or 1e6."""
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if value != int(value) or value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return int(value)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="master random seed (default 0)")
    p.add_argument("--mode", choices=[m.value for m in PairingMode], default=None,
                   help="pairing mode (default filtered, or the tally's mode for keyrate)")
    p.add_argument("--out", default="-", help="output file (default stdout)")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker processes")


def _config_source(p: argparse.ArgumentParser, required: bool = True) -> None:
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--config", help="experiment configuration JSON")
    g.add_argument("--reference", type=float, metavar="KM",
                   help=f"published settings at one of {', '.join(map(str, ref.DISTANCES))} km")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="amdiqkd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("predict", help="analytic tallies and key rate for a configuration")
    _common(p)
    _config_source(p)

    p = sub.add_parser("simulate", help="Monte Carlo clicks, pairing and tally")
    _common(p)
    _config_source(p)
    p.add_argument("--bins", type=_count, required=True, help="number of time bins to simulate")
    p.add_argument("--mapping", choices=[m.value for m in KeyMapping], default=KeyMapping.FIG_S1B.value)
    p.add_argument("--log", help="also write the binary click log here")
    p.add_argument("--block-size", type=_count, default=DEFAULT_BLOCK)

    p = sub.add_parser("keyrate", help="decoy estimate and key length from a tally")
    _common(p)
    _config_source(p)
    p.add_argument("--tally", required=True, help="tally JSON (bare, or the output of simulate)")
    p.add_argument("--f-ec", type=float, default=None, help="override the error-correction inefficiency")

    p = sub.add_parser("scan", help="key rate versus distance as CSV")
    _common(p)
    _config_source(p, required=False)
    p.add_argument("--distances", type=float, nargs="+", required=True, metavar="KM")
    p.add_argument("--optimize", action="store_true", help="optimize source parameters at each distance")
    p.add_argument("--grid", type=int, default=8)
    p.add_argument("--counts", choices=["predict", "reference"], default="predict",
                   help="expected tallies, or the published tallies (published distances only)")

    p = sub.add_parser("optimize", help="maximize the predicted key rate over source parameters")
    _common(p)
    _config_source(p)
    box = SearchBox()
    for name in ("mu", "nu", "p_mu", "p_nu"):
        p.add_argument(f"--{name.replace('_', '-')}", type=float, nargs=2, metavar=("LO", "HI"),
                       default=getattr(box, name))
    p.add_argument("--min-p-o", type=float, default=box.min_p_o)
    p.add_argument("--grid", type=int, default=8)

    p = sub.add_parser("reproduce", help="run the golden checks against the published tables")
    _common(p)
    return parser


def _load(args) -> ExperimentConfig:
    if getattr(args, "reference", None) is not None:
        try:
            return ref.reference_config(args.reference)
        except KeyError as exc:
            raise InputError(str(exc.args[0])) from None
    if getattr(args, "config", None):
        return load_config(args.config)
    raise InputError("give --config or --reference")


def _mode(args, default: str = PairingMode.FILTERED.value) -> PairingMode:
    return PairingMode.parse(args.mode or default)


def _envelope(command: str, config: ExperimentConfig | None, **payload) -> dict:
    out = {"tool": "amdiqkd", "version": __version__, "command": command}
    if config is not None:
        out["config"] = config.to_dict()
    out.update(payload)
    return out


def _emit(text: str, dest: str) -> None:
    if dest in ("-", ""):
        sys.stdout.write(text)
    else:
        Path(dest).write_text(text)


def _emit_json(obj: dict, dest: str) -> None:
    _emit(json.dumps(obj, indent=2) + "\n", dest)


def _status(report: KeyRateReport) -> int:
    if report.key_length <= 0:
        for msg in report.diagnostics:
            print(f"amdiqkd: {msg}", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_predict(args) -> int:
    cfg = _load(args)
    mode = _mode(args)
    tally = expected_tallies(cfg, mode)
    report = compute_key_rate(tally, cfg, mode)
    stats = pairing_stats(cfg, mode)
    pk, c = pk_scaling(cfg, mode)
    _emit_json(
        _envelope(
            "predict", cfg, mode=mode.value,
            pairing={**stats._asdict(), "p_k": pk, "c_sqrt_eta": c},
            expected_tally=tally.to_dict(), report=report.to_dict(),
        ),
        args.out,
    )
    return _status(report)


def cmd_simulate(args) -> int:
    cfg = _load(args)
    mode = _mode(args)
    log = open(args.log, "wb") if args.log else None
    try:
        tally = simulate_tally(
            cfg, args.bins, args.seed, mode, args.mapping,
            block_size=args.block_size, log=log, workers=max(1, args.threads),
        )
    finally:
        if log is not None:
            log.close()
    _emit_json(
        _envelope("simulate", cfg, mode=mode.value, seed=args.seed, n_bins=args.bins,
                  mapping=args.mapping, tally=tally.to_dict()),
        args.out,
    )
    return EXIT_OK


def _read_tally(path: str) -> TallySheet:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read tally {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed JSON in {path}: {exc}") from None
    if isinstance(data, dict) and "tally" in data:
        data = data["tally"]
    if not isinstance(data, dict):
        raise InputError(f"{path}: tally must be a JSON object")
    return TallySheet.from_dict(data)


def cmd_keyrate(args) -> int:
    cfg = _load(args)
    tally = _read_tally(args.tally)
    mode = _mode(args, default=tally.mode)
    if mode.value != tally.mode:
        raise InputError(f"tally was counted in {tally.mode} mode but --mode {mode.value} was requested")
    report = compute_key_rate(tally, cfg, mode, f_ec=args.f_ec)
    _emit_json(_envelope("keyrate", cfg, mode=mode.value, report=report.to_dict()), args.out)
    return _status(report)


def at_distance(template: ExperimentConfig, km: float) -> ExperimentConfig:
    """Template moved to a symmetric link of total length ``km`` with nominal attenuation."""
    link = dataclasses.replace(template.link, l_a=km / 2, l_b=km / 2, loss_a_db=None, loss_b_db=None)
    return dataclasses.replace(template, link=link, name=f"{km:g} km")


def _scan_row(task):
    km, template, mode, optimize, grid, counts = task
    if counts == "reference":
        cfg = ref.reference_config(km)
        report = compute_key_rate(ref.reference_tally(km), cfg, mode)
    elif optimize:
        cfg = at_distance(template, km)
        res = optimize_params(cfg, mode=mode, grid=grid)
        report = res.report
        if report is None:
            report = compute_key_rate(expected_tallies(cfg, mode), cfg, mode)
    else:
        cfg = at_distance(template, km)
        report = compute_key_rate(expected_tallies(cfg, mode), cfg, mode)
    return km, cfg.link.fiber_loss_db, report.skr_per_clock, report.skc0_per_clock, report.ratio


def cmd_scan(args) -> int:
    mode = _mode(args)
    if args.counts == "reference":
        for km in args.distances:
            try:
                ref.reference_config(km)
            except KeyError as exc:
                raise InputError(str(exc.args[0])) from None
        template = None
    else:
        template = _load(args)
    tasks = [(km, template, mode, args.optimize, args.grid, args.counts) for km in args.distances]
    if args.threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as ex:
            rows = list(ex.map(_scan_row, tasks))
    else:
        rows = [_scan_row(t) for t in tasks]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["distance_km", "loss_db", "skr_per_clock", "skc0", "ratio"])
    for km, loss, skr, cap, ratio in rows:
        w.writerow([f"{km:g}", f"{loss:.4f}", repr(skr), repr(cap), repr(ratio)])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_optimize(args) -> int:
    cfg = _load(args)
    mode = _mode(args)
    box = SearchBox(mu=tuple(args.mu), nu=tuple(args.nu), p_mu=tuple(args.p_mu), p_nu=tuple(args.p_nu),
                    min_p_o=args.min_p_o)
    res = optimize_params(cfg, box, mode, grid=args.grid, workers=max(1, args.threads))
    _emit_json(_envelope("optimize", cfg, mode=mode.value, box=dataclasses.asdict(box), result=res.to_dict()),
               args.out)
    if not res.feasible:
        print(f"amdiqkd: {res.message or 'no positive key'}", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_reproduce(args) -> int:
    from .golden import calibrated_f_ec, run_all

    checks = run_all()
    f_ec, worst = calibrated_f_ec()
    lines = [f"calibrated f_ec = {f_ec:.5f} (worst SKR deviation {worst:.2e})"]
    lines += [c.line() for c in checks]
    n_pass = sum(c.passed for c in checks)
    lines.append(f"{n_pass}/{len(checks)} checks passed")
    text = "\n".join(lines) + "\n"
    if args.out in ("-", ""):
        sys.stdout.write(text)
    else:
        _emit_json(
            _envelope("reproduce", None, f_ec=f_ec,
                      checks=[{**dataclasses.asdict(c), "passed": c.passed} for c in checks]),
            args.out,
        )
        sys.stdout.write(text)
    return EXIT_OK if n_pass == len(checks) else EXIT_FAILED


COMMANDS = {
    "predict": cmd_predict,
    "simulate": cmd_simulate,
    "keyrate": cmd_keyrate,
    "scan": cmd_scan,
    "optimize": cmd_optimize,
    "reproduce": cmd_reproduce,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (InputError, ConfigError, ContractError, ClickLogError) as exc:
        print(f"amdiqkd: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"amdiqkd: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
