"""Command-line front end.

Subcommands build specs, evaluate analytic traces, run simulations and
estimations, and extract derived reports as CSV/JSON plot data:

    circascade analytic --n 6 --pair 2,1 --gamma 1 --tau -8:8 --steps 1600 --out fig.csv
    circascade general --rates rates.json --pair 2,1 --tau -8:8 --steps 1600 --out g.csv
    circascade simulate --n 6 --gamma 1 --events 1e6 --seed 42 --out run.events
    circascade correlate --in run.events --pair 1,1 --bin 0.05 --taumax 15 --out g.csv
    circascade peaks --n 50 --k 1 --gamma 1 --orders 8 --out peaks.json
    circascade cscheck --n 6 --gamma 1 --pair 3,1 --tau-samples 0.02:0.1:5 --out cs.json

Every command writes a `<out>.manifest.json` sidecar recording the full
parameter set, output names and wall-clock duration; data outputs are
byte-identical across reruns with the same parameters (manifest timing is
diagnostic only). Exit codes: 2 usage/validation, 3 internal-consistency
failure, 4 I/O, 5 insufficient samples. CASCADE_THREADS caps the grid
evaluation parallelism (defaults to the machine parallelism).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .analysis import cs_check, find_peaks, find_peaks_cross
from .analytic_equal import g2_equal_pair, g2_subset
from .estimator import HistogramConfig, correlate, correlate_subset, write_trace_csv
from .model import (
    CascadeError,
    CascadeSpec,
    ConfigInvalid,
    CorrelationTrace,
    EmptyChannel,
    EmptySubset,
    InsufficientSamples,
    InvalidConfig,
    KOutOfRange,
    NoPeaksFound,
    NumericalFailure,
    StreamInvariantViolation,
    SubsetSpec,
    ValidationError,
    validate,
)
from .spectral_general import g2_general, g2_three_level
from .stochastic import (
    SimConfig,
    read_events_binary,
    read_events_text,
    simulate,
    write_events_binary,
    write_events_text,
)

EXIT_USAGE = 2
EXIT_CONSISTENCY = 3
EXIT_IO = 4
EXIT_SAMPLES = 5

# figure-reproduction presets: every pinned parameter set lives here
PRESETS = {
    "fig1c": {"command": "analytic", "n": 6, "pair": "1,1", "gamma": 1.0,
              "tau": "-15:15", "steps": 1500},
    "fig1d": {"command": "analytic", "n": 6, "pair": "2,1", "gamma": 1.0,
              "tau": "-8:8", "steps": 1600},
    "fig3a": {"command": "analytic", "n": 25, "pair": "2,1", "gamma": 1.0,
              "tau": "-60:60", "steps": 2400},
    "fig3b": {"command": "analytic", "n": 25, "k": 1, "gamma": 1.0,
              "tau": "-60:60", "steps": 2400},
    "fig3c": {"command": "analytic", "n": 25, "k": 2, "gamma": 1.0,
              "tau": "-60:60", "steps": 2400},
    "fig3d": {"command": "analytic", "n": 25, "k": 13, "gamma": 1.0,
              "tau": "-60:60", "steps": 2400},
    "fig4a": {"command": "analytic", "n": 50, "subset": "1,2", "gamma": 1.0,
              "tau": "-100:100", "steps": 4000},
    "fig2": {"command": "peaks", "scan": "3:50", "k": 1, "gamma": 1.0,
             "orders": 8, "cross_orders": 7},
    "fig5": {"command": "general", "rates_inline": "1,1.1,0.025", "pair": "2,1",
             "tau": "-8:8", "steps": 1600},
    "fig5dashed": {"command": "general",
                   "rates_inline": "0.7083333333333334,0.7083333333333334,0.7083333333333334",
                   "pair": "2,1", "tau": "-8:8", "steps": 1600},
}


def worker_count() -> int:
    env = os.environ.get("CASCADE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigInvalid(f"CASCADE_THREADS={env!r} is not an integer")
    return os.cpu_count() or 1


def grid_map(fn, taus: np.ndarray) -> np.ndarray:
    """Evaluate fn over the grid in parallel chunks; order-preserving merge."""
    workers = worker_count()
    if workers <= 1 or len(taus) < 1024:
        return np.atleast_1d(fn(taus))
    chunks = np.array_split(taus, workers * 4)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda c: np.atleast_1d(fn(c)), chunks))
    return np.concatenate(parts)


def _parse_pair(text: str) -> tuple[int, int]:
    try:
        m, n = (int(x) for x in text.split(","))
    except ValueError:
        raise ConfigInvalid(f"--pair expects 'm,n', got {text!r}")
    return m, n


def _parse_range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(x) for x in text.split(":"))
    except ValueError:
        raise ConfigInvalid(f"--tau expects 'lo:hi', got {text!r}")
    if hi <= lo:
        raise ConfigInvalid(f"--tau range must have hi > lo, got {text!r}")
    return lo, hi


def _tau_grid(args) -> np.ndarray:
    lo, hi = _parse_range(args.tau or "-10:10")
    steps = args.steps if args.steps is not None else 1000
    if steps < 1:
        raise ConfigInvalid("--steps must be >= 1")
    return np.linspace(lo, hi, steps + 1)


def _write_manifest(args, command: str, outputs: list[str], started: float) -> None:
    params = {
        k: v for k, v in sorted(vars(args).items())
        if k not in {"func"} and v is not None
    }
    manifest = {
        "artifact_version": __version__,
        "subcommand": command,
        "parameters": params,
        "outputs": outputs,
        "duration_seconds": time.monotonic() - started,
    }
    with open(outputs[0] + ".manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _apply_preset(args) -> None:
    preset = PRESETS.get(args.preset)
    if preset is None:
        raise ConfigInvalid(f"unknown preset {args.preset!r}")
    if preset["command"] != args.command:
        raise ConfigInvalid(
            f"preset {args.preset!r} belongs to the {preset['command']!r} command"
        )
    for key, value in preset.items():
        if key == "command":
            continue
        if getattr(args, key, None) in (None, False):
            setattr(args, key, value)


def _spec_from_file(path: str) -> CascadeSpec:
    with open(path) as fh:
        text = fh.read()
    try:
        return CascadeSpec.from_json(text)
    except ValidationError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigInvalid(f"--rates file {path!r} is not a valid spec: {exc}")


def _spec_from_flags(args) -> CascadeSpec:
    spec = CascadeSpec.equal(args.n, args.gamma)
    try:
        validate(spec)
    except ValidationError as exc:
        raise ConfigInvalid(f"--n/--gamma: {exc}")
    return spec


def cmd_analytic(args) -> int:
    started = time.monotonic()
    if args.preset:
        _apply_preset(args)
    if args.n is None or args.out is None:
        raise ConfigInvalid("--n and --out are required")
    _spec_from_flags(args)
    taus = _tau_grid(args)
    chosen = [x for x in (args.pair, args.k, args.subset) if x is not None]
    if len(chosen) != 1:
        raise ConfigInvalid("give exactly one of --pair, --k or --subset")
    if args.subset is not None:
        subset = SubsetSpec(tuple(int(x) for x in args.subset.split(",")))
        values = grid_map(lambda t: g2_subset(args.n, subset, args.gamma, t), taus)
    else:
        if args.k is not None:
            m, n = 0, (args.k - 1) % args.n  # any pair of the requested class
        else:
            m, n = _parse_pair(args.pair)
        values = grid_map(lambda t: g2_equal_pair(args.n, m, n, args.gamma, t), taus)
    trace = CorrelationTrace(tau=taus, values=values, source="analytic")
    write_trace_csv(trace, args.out)
    _write_manifest(args, "analytic", [args.out], started)
    return 0


def cmd_general(args) -> int:
    started = time.monotonic()
    if args.preset:
        _apply_preset(args)
    if args.out is None:
        raise ConfigInvalid("--out is required")
    if args.rates_inline:
        spec_rates = tuple(float(x) for x in args.rates_inline.split(","))
        spec = CascadeSpec(len(spec_rates), spec_rates)
    elif args.rates:
        spec = _spec_from_file(args.rates)
    else:
        raise ConfigInvalid("--rates (JSON file) or --rates-inline is required")
    try:
        validate(spec)
    except ValidationError as exc:
        raise ConfigInvalid(f"--rates: {exc}")
    m, n = _parse_pair(args.pair or "1,1")
    taus = _tau_grid(args)
    values = grid_map(lambda t: g2_general(spec, m, n, t), taus)
    if spec.n_levels == 3:
        closed = grid_map(lambda t: g2_three_level(*spec.rates, m, n, t), taus)
        gap = float(np.abs(closed - values).max())
        if gap > 1e-6:
            print(
                f"internal consistency failure: closed form vs propagation "
                f"disagree by {gap:.3e}", file=sys.stderr,
            )
            return EXIT_CONSISTENCY
    trace = CorrelationTrace(tau=taus, values=values, source="spectral", spec=spec)
    write_trace_csv(trace, args.out)
    _write_manifest(args, "general", [args.out], started)
    return 0


def cmd_simulate(args) -> int:
    started = time.monotonic()
    if args.rates:
        spec = _spec_from_file(args.rates)
    elif args.n is not None:
        spec = _spec_from_flags(args)
    else:
        raise ConfigInvalid("--n/--gamma or --rates is required")
    if args.out is None:
        raise ConfigInvalid("--out is required")
    config = SimConfig(
        spec=spec,
        seed=args.seed,
        duration=args.duration,
        total_events=int(float(args.events)) if args.events else None,
        initial_level=args.initial,
        burn_in=args.burn_in,
    )
    stream = simulate(config)
    if args.format == "text":
        write_events_text(stream, args.out)
    else:
        write_events_binary(stream, args.out)
    _write_manifest(args, "simulate", [args.out], started)
    return 0


def _read_stream(path: str):
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == b"CEV1":
        return read_events_binary(path)
    return read_events_text(path)


def cmd_correlate(args) -> int:
    started = time.monotonic()
    if args.out is None:
        raise ConfigInvalid("--out is required")
    stream = _read_stream(getattr(args, "in"))
    if args.subset:
        subset = SubsetSpec(tuple(int(x) for x in args.subset.split(",")))
        cfg = HistogramConfig(args.bin, args.taumax)
        trace = correlate_subset(stream, subset, cfg)
    else:
        if not args.pair:
            raise ConfigInvalid("give --pair or --subset")
        cfg = HistogramConfig(args.bin, args.taumax, channels=_parse_pair(args.pair))
        trace = correlate(stream, cfg)
    write_trace_csv(trace, args.out)
    _write_manifest(args, "correlate", [args.out], started)
    return 0


def cmd_peaks(args) -> int:
    started = time.monotonic()
    if args.preset:
        _apply_preset(args)
    if args.out is None:
        raise ConfigInvalid("--out is required")
    orders = args.orders if args.orders is not None else 3
    cross_orders = args.cross_orders if args.cross_orders is not None else 7
    if args.scan:
        lo, hi = (int(x) for x in args.scan.split(":"))
        rows = ["kind,n_levels,order,tau,g2"]
        for n in range(lo, hi + 1):
            for kind, n_orders in (("auto", orders), ("cross", cross_orders)):
                try:
                    report = (
                        find_peaks(n, args.gamma, args.k, n_orders)
                        if kind == "auto"
                        else find_peaks_cross(n, args.gamma, n_orders)
                    )
                except CascadeError:
                    continue
                rows += [
                    f"{kind},{n},{p.order},{p.tau:.17g},{p.magnitude:.17g}"
                    for p in report.peaks
                ]
        with open(args.out, "w") as fh:
            fh.write("\n".join(rows) + "\n")
    else:
        if args.n is None:
            raise ConfigInvalid("--n is required")
        report = (
            find_peaks_cross(args.n, args.gamma, orders)
            if args.cross
            else find_peaks(args.n, args.gamma, args.k, orders)
        )
        with open(args.out, "w") as fh:
            fh.write(report.to_json())
            fh.write("\n")
        if args.csv:
            with open(args.csv, "w") as fh:
                fh.write(report.to_csv())
    _write_manifest(args, "peaks", [args.out], started)
    return 0


def cmd_cscheck(args) -> int:
    started = time.monotonic()
    if args.out is None:
        raise ConfigInvalid("--out is required")
    if args.rates:
        spec = _spec_from_file(args.rates)
    else:
        spec = _spec_from_flags(args)
    m, n = _parse_pair(args.pair)
    lo, hi, count = args.tau_samples.split(":")
    taus = np.linspace(float(lo), float(hi), int(count))
    report = cs_check(spec, m, n, taus)
    with open(args.out, "w") as fh:
        fh.write(report.to_json())
        fh.write("\n")
    _write_manifest(args, "cscheck", [args.out], started)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="circascade",
        description="correlation functions of one-way N-level cascades",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analytic", help="equal-rate closed-form trace to CSV")
    p.add_argument("--n", type=int)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--pair", help="transition pair m,n")
    p.add_argument("--k", type=int, help="trace class instead of a pair")
    p.add_argument("--subset", help="comma-separated transition subset")
    p.add_argument("--tau", help="range lo:hi (default -10:10)")
    p.add_argument("--steps", type=int)
    p.add_argument("--preset", help="|".join(k for k in PRESETS if PRESETS[k]["command"] == "analytic"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_analytic)

    p = sub.add_parser("general", help="arbitrary-rate spectral trace to CSV")
    p.add_argument("--rates", help="JSON file {n_levels, rates}")
    p.add_argument("--rates-inline", dest="rates_inline", help="comma-separated rates")
    p.add_argument("--pair")
    p.add_argument("--tau")
    p.add_argument("--steps", type=int)
    p.add_argument("--preset", help="fig5|fig5dashed")
    p.add_argument("--out")
    p.set_defaults(func=cmd_general)

    p = sub.add_parser("simulate", help="run one trajectory, write event stream")
    p.add_argument("--n", type=int)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--rates", help="JSON file {n_levels, rates}")
    p.add_argument("--events", help="stop after this many events")
    p.add_argument("--duration", type=float, help="stop after this much time")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--burn-in", dest="burn_in", type=float, default=0.0)
    p.add_argument("--initial", type=int, help="initial level (default: stationary draw)")
    p.add_argument("--format", choices=("binary", "text"), default="binary")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("correlate", help="coincidence histogram from an event stream")
    p.add_argument("--in", dest="in", required=True, help="event stream file")
    p.add_argument("--pair")
    p.add_argument("--subset")
    p.add_argument("--bin", type=float, required=True)
    p.add_argument("--taumax", type=float, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("peaks", help="oscillation peak report (JSON, optional CSV)")
    p.add_argument("--n", type=int)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--orders", type=int, help="peak count (default 3)")
    p.add_argument("--cross", action="store_true", help="opposite-transition trace")
    p.add_argument("--cross-orders", dest="cross_orders", type=int)
    p.add_argument("--scan", help="N range lo:hi (one CSV row per peak)")
    p.add_argument("--preset", help="fig2")
    p.add_argument("--csv", help="also write order,tau,g2 CSV here")
    p.add_argument("--out")
    p.set_defaults(func=cmd_peaks)

    p = sub.add_parser("cscheck", help="Cauchy-Schwarz violation report (JSON)")
    p.add_argument("--n", type=int)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--rates", help="JSON file {n_levels, rates}")
    p.add_argument("--pair", required=True)
    p.add_argument("--tau-samples", dest="tau_samples", default="0.01:0.1:10",
                   help="lo:hi:count sample grid")
    p.add_argument("--out")
    p.set_defaults(func=cmd_cscheck)

    return parser


_RANGE_FLAGS = {"--tau", "--tau-samples", "--scan"}


def _join_range_flags(argv: list[str]) -> list[str]:
    """Fold '--tau -8:8' into '--tau=-8:8' so argparse accepts the value."""
    out = []
    skip = False
    for i, tok in enumerate(argv):
        if skip:
            skip = False
            continue
        if tok in _RANGE_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{tok}={argv[i + 1]}")
            skip = True
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(_join_range_flags(list(argv if argv is not None else sys.argv[1:])))
    try:
        return args.func(args)
    except (ConfigInvalid, ValidationError, InvalidConfig, EmptySubset, KOutOfRange) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EmptyChannel, InsufficientSamples, NoPeaksFound) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SAMPLES
    except NumericalFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONSISTENCY
    except (OSError, StreamInvariantViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # any remaining malformed flag value (ranges, subsets, counts)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
