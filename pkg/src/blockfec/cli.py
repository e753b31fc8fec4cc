"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 validation failure, 3 I/O error.
Options may also come from a JSON ``--config`` file whose keys are the long
option names (``blocks``, ``points``, ...); flags given on the command line win.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .analytics import ESTIMATORS, CodeParams, LossModel
from .channel import SimConfig, simulate_stream
from .emodel import builtin_codec_profiles, find_profile, load_codec_profiles
from .emulator import EmulationConfig, run_emulation, write_trace_csv
from .planner import (
    METHODS,
    PRESETS,
    CodePoint,
    SweepSpec,
    evaluate,
    preset_spec,
    run_sweep,
    validate_grid,
    write_csv,
    write_json,
)

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_IO = 0, 1, 2, 3

DEFAULTS = {
    "n": 5,
    "k": 2,
    "p": None,
    "codec": "g711-plc",
    "tolerance": 1e-6,
    "blocks": None,
    "seed": 0,
    "out": None,
    "format": "csv",
    "no_coding": False,
    "estimator": None,
    "points": None,
    "method": "analytic",
    "preset": None,
    "jobs": 1,
    "sigma": 4.0,
    "interval": None,
    "payload": 32,
    "trace": None,
    "udp": False,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _common(sub: argparse.ArgumentParser, *names: str):
    flags = {
        "n": lambda: sub.add_argument("--n", type=int, help="source packets per block (N)"),
        "k": lambda: sub.add_argument("--k", type=int, help="repair packets per block (K)"),
        "p": lambda: sub.add_argument("--p", type=_floats, help="network loss probability (comma list where allowed)"),
        "codec": lambda: sub.add_argument("--codec", help="codec profile name (comma list for sweep)"),
        "tolerance": lambda: sub.add_argument("--tolerance", type=float, help="series truncation tolerance"),
        "blocks": lambda: sub.add_argument("--blocks", type=int, help="number of blocks to simulate"),
        "seed": lambda: sub.add_argument("--seed", type=int, help="random seed (unsigned 64-bit)"),
        "out": lambda: sub.add_argument("--out", help="output file"),
        "format": lambda: sub.add_argument("--format", choices=("csv", "json"), help="output format"),
        "no_coding": lambda: sub.add_argument("--no-coding", dest="no_coding", action="store_true", default=None,
                                              help="evaluate without erasure coding (T = 0)"),
        "estimator": lambda: sub.add_argument("--estimator", choices=ESTIMATORS, help="run-length estimator"),
    }
    for name in names:
        flags[name]()


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="blockfec", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file with option values")
    parser.add_argument("--profiles", help="JSON file with extra codec profiles")
    parser.add_argument("-v", "--verbose", action="store_true")
    subs = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub = subs.add_parser("analyze", help="evaluate one operating point")
    _common(sub, "n", "k", "p", "codec", "tolerance", "no_coding", "estimator", "format", "out")

    sub = subs.add_parser("validate", help="analytic vs Monte Carlo cross-check")
    _common(sub, "p", "tolerance", "blocks", "seed", "format", "out")
    sub.add_argument("--points", help="comma list of N:K code points (default 10:3,5:2)")
    sub.add_argument("--estimator", choices=(*ESTIMATORS, "both"), help="which run-length estimator(s) to check")
    sub.add_argument("--sigma", type=float, help="pass threshold in standard errors (default 4)")

    sub = subs.add_parser("sweep", help="evaluate a grid of operating points")
    _common(sub, "p", "codec", "tolerance", "blocks", "seed", "out", "format", "estimator")
    sub.add_argument("--points", help="comma list of N:K code points or 'none'")
    sub.add_argument("--method", choices=METHODS)
    sub.add_argument("--preset", choices=sorted(PRESETS), help="predefined grid of codecs, code points and loss rates")
    sub.add_argument("--jobs", type=int, help="parallel workers")
    sub.add_argument("--payload", type=int, help="payload bytes for --method emulate")

    sub = subs.add_parser("simulate", help="Monte Carlo run of the coded channel")
    _common(sub, "n", "k", "p", "blocks", "seed", "format", "out")

    sub = subs.add_parser("emulate", help="packet-level emulation with a real RS codec")
    _common(sub, "n", "k", "p", "codec", "blocks", "seed", "format", "out")
    sub.add_argument("--interval", type=float, help="packet interval d in ms (default: codec's)")
    sub.add_argument("--payload", type=int, help="payload bytes per packet")
    sub.add_argument("--trace", help="write per-packet trace CSV here")
    sub.add_argument("--udp", action="store_true", default=None, help="send over loopback UDP sockets")

    subs.add_parser("profiles", help="list codec profiles")
    return parser


def _resolve(args: argparse.Namespace) -> argparse.Namespace:
    config = {}
    if args.config:
        try:
            config = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise OSError(f"cannot read config {args.config}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(config, dict):
            raise UsageError("config file must hold a JSON object")
        config = {k.replace("-", "_"): v for k, v in config.items()}
    for key, default in DEFAULTS.items():
        if getattr(args, key, None) is None:
            value = config.get(key, default)
            if key == "p" and value is not None and not isinstance(value, list):
                value = _floats(value) if isinstance(value, str) else [float(value)]
            if key in ("points", "codec") and isinstance(value, list):
                value = ",".join(str(v) for v in value)
            setattr(args, key, value)
    return args


def _emit(records: list[dict], fmt: str, out: str | None, fields=None):
    if out:
        path = Path(out)
        with path.open("w", newline="") as fh:
            _dump(records, fmt, fh, fields)
        print(f"wrote {len(records)} rows to {path}", file=sys.stderr)
    else:
        _dump(records, fmt, sys.stdout, fields)


def _dump(records, fmt, fh, fields):
    if fmt == "json":
        json.dump(records, fh, indent=2, default=str)
        fh.write("\n")
        return
    if not records:
        return
    writer = csv.DictWriter(fh, fieldnames=fields or list(records[0]))
    writer.writeheader()
    writer.writerows(records)


def _table(records: list[dict]):
    if not records:
        return
    cols = list(records[0])
    widths = {c: max(len(c), *(len(str(r[c])) for r in records)) for c in cols}
    print("  ".join(c.rjust(widths[c]) for c in cols))
    for r in records:
        print("  ".join(str(r[c]).rjust(widths[c]) for c in cols))


def _single_p(args) -> float:
    if not args.p:
        raise UsageError("--p is required")
    if len(args.p) != 1:
        raise UsageError("this command takes a single --p value")
    return args.p[0]


def _extra_profiles(args):
    return load_codec_profiles(args.profiles) if args.profiles else []


def cmd_analyze(args) -> int:
    p = _single_p(args)
    codec = find_profile(args.codec, _extra_profiles(args))
    point = CodePoint(None) if args.no_coding else CodePoint(CodeParams(args.n, args.k))
    row = evaluate(codec, point, p, "analytic", args.estimator or "cluster", args.tolerance)
    if args.out or args.format == "json":
        _emit([row.json_record() if args.format == "json" else row.csv_record()], args.format, args.out)
    else:
        _table([row.display()])
    return EXIT_OK


def cmd_validate(args) -> int:
    points = [CodePoint.parse(t) for t in (args.points or "10:3,5:2").split(",")]
    if any(not pt.coding for pt in points):
        raise UsageError("validate needs N:K code points")
    p_values = args.p or [0.0, 0.05, 0.10, 0.12, 0.15]
    estimators = ESTIMATORS if args.estimator in (None, "both") else (args.estimator,)
    blocks = args.blocks or 1_000_000
    cells = validate_grid([pt.code for pt in points], p_values, blocks, args.seed, args.tolerance,
                          estimators, args.sigma)
    records = [c.record() for c in cells]
    if args.out or args.format == "json":
        _emit(records, args.format, args.out)
    else:
        shown = []
        for rec in records:
            shown.append({
                k: (f"{v:.3f}" if isinstance(v, float) else ("PASS" if v is True else "FAIL" if v is False else v))
                for k, v in rec.items()
            })
        _table(shown)
    failed = sum(not c.passed for c in cells)
    print(f"{len(cells) - failed}/{len(cells)} cells within {args.sigma:g} standard errors", file=sys.stderr)
    return EXIT_OK if failed == 0 else EXIT_VALIDATION


def cmd_sweep(args) -> int:
    extra = _extra_profiles(args)
    common = dict(
        method=args.method,
        estimator=args.estimator or "cluster",
        tolerance=args.tolerance,
        num_blocks=args.blocks or 100_000,
        seed=args.seed,
        payload_bytes=args.payload,
    )
    if args.preset:
        spec = preset_spec(args.preset, **common)
        if args.p is not None:
            spec = SweepSpec(tuple(args.p), spec.code_points, spec.codecs, **common)
    else:
        if args.p is None:
            raise UsageError("--p is required (or use --preset)")
        spec = SweepSpec(
            p_values=tuple(args.p),
            code_points=tuple(CodePoint.parse(t) for t in (args.points or "none,10:3,5:2").split(",")),
            codecs=tuple(find_profile(c, extra) for c in args.codec.split(",")),
            **common,
        )
    rows = run_sweep(spec, jobs=args.jobs)
    meta = {"preset": args.preset, **common}
    if args.out:
        writer = write_json if args.format == "json" else write_csv
        path = writer(rows, args.out, meta) if args.format == "json" else writer(rows, args.out)
        print(f"wrote {len(rows)} rows to {path}", file=sys.stderr)
    elif args.format == "json":
        json.dump({"meta": meta, "rows": [r.json_record() for r in rows]}, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    else:
        _table([r.display() for r in rows])
    return EXIT_OK


def cmd_simulate(args) -> int:
    p = _single_p(args)
    res = simulate_stream(SimConfig(CodeParams(args.n, args.k), LossModel(p), args.blocks or 100_000, args.seed))
    est = res.estimates
    record = {
        "N": args.n, "K": args.k, "p": p, "blocks": res.config.num_blocks, "seed": args.seed,
        "packets_sent": res.packets_sent, "packets_unrecovered": res.packets_unrecovered,
        "Ppl_percent": 100 * est.ppl, "Ppl_se": 100 * est.ppl_se,
        "BurstR_pooled": est.pooled_burst_ratio, "BurstR_pooled_se": est.pooled_burst_ratio_se,
        "BurstR_cluster": est.cluster_burst_ratio, "BurstR_cluster_se": est.cluster_burst_ratio_se,
    }
    if args.format == "json":
        record["run_length_histogram"] = res.run_length_histogram
    _emit([record], args.format, args.out)
    return EXIT_OK


def cmd_emulate(args) -> int:
    p = _single_p(args)
    codec = find_profile(args.codec, _extra_profiles(args))
    cfg = EmulationConfig(
        CodeParams(args.n, args.k), LossModel(p), args.interval or codec.packet_interval_ms,
        args.payload, args.blocks or 10_000, args.seed,
    )
    if args.udp:
        from .udp import udp_loopback_run

        report = udp_loopback_run(cfg)
    else:
        report = run_emulation(cfg)
    if args.trace:
        write_trace_csv(report, args.trace)
        print(f"wrote trace to {args.trace}", file=sys.stderr)
    _emit([report.summary()], args.format, args.out)
    return EXIT_OK


def cmd_profiles(args) -> int:
    profiles = builtin_codec_profiles() + _extra_profiles(args)
    _table([{"name": p.name, "Ie": f"{p.ie:g}", "Bpl": f"{p.bpl:g}", "d_ms": f"{p.packet_interval_ms:g}"}
            for p in profiles])
    return EXIT_OK


COMMANDS = {
    "analyze": cmd_analyze,
    "validate": cmd_validate,
    "sweep": cmd_sweep,
    "simulate": cmd_simulate,
    "emulate": cmd_emulate,
    "profiles": cmd_profiles,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        _resolve(args)
        return COMMANDS[args.command](args)
    except (UsageError, ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"blockfec: error: {msg}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        where = f" ({exc.filename})" if getattr(exc, "filename", None) else ""
        print(f"blockfec: I/O error{where}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
