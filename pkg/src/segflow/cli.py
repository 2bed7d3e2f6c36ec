"""Command-line interface.

    segflow segment DEMO.csv -o PLAN.json      plan + <stem>.nis.csv + <stem>.gmm.json
    segflow detect SERIES.csv [--fixture]      one "t value" line per peak
    segflow replay PLAN.json DEMO.csv -o TRACE.json   trace JSON + CSV
    segflow synth SCRIPT.json -o DEMO.csv      demonstration + <stem>.truth.json
    segflow version

Exit codes: 0 success, 2 invalid input, 3 runtime failure. Errors are printed
to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path
from typing import Mapping, Sequence

from . import __version__
from .config import RunConfig, parse_override
from .data_core import format_demonstration, load_demonstration
from .errors import InputError, InvalidConfig, SegflowError, SegmentTimeout
from .force_detector import detect_peaks, estimate_noise, load_nis_csv, nis_series, nis_threshold
from .fusion import SegmentPlan
from .pipeline import prepare, replay, segment_demonstration
from .synth_oracle import generate, load_script


def write_files_atomic(contents: Mapping[Path, str]) -> None:
    """Write every file to a temporary sibling first, then rename them all;
    on failure nothing is left behind."""
    staged = []
    try:
        for path, text in contents.items():
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
            staged.append((tmp, path))
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        for tmp, path in staged:
            os.replace(tmp, path)
    finally:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.unlink(tmp)


def sibling(path: Path, suffix: str) -> Path:
    return path.with_name(path.stem + suffix)


def _config(args) -> RunConfig:
    overrides = dict(parse_override(s) for s in args.set or [])
    return RunConfig.resolve(args.config, overrides)


def _schema(args):
    if not getattr(args, "schema", None):
        return None
    try:
        schema = json.loads(args.schema)
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"--schema is not valid JSON: {exc.msg}") from None
    if not isinstance(schema, dict):
        raise InvalidConfig("--schema must be a JSON object")
    return schema


# ---------------------------------------------------------------- commands


def cmd_segment(args) -> int:
    cfg = _config(args)
    demo = load_demonstration(args.input, schema=_schema(args))
    result = segment_demonstration(demo, cfg)
    out = Path(args.output)
    write_files_atomic(
        {
            out: result.plan.to_json(),
            sibling(out, ".nis.csv"): result.nis.to_csv(),
            sibling(out, ".gmm.json"): json.dumps(result.gmm.to_dict(), indent=2) + "\n",
        }
    )
    plan = result.plan
    print(f"{len(plan.segments)} segments, k={result.gmm.k}, force threshold {result.threshold:.4g}")
    print(f"{'#':>2}  {'start':>8}  {'end':>8}  {'end condition':<14} {'source':<8} label")
    right = {round(p.t, 9): p.source.value for p in plan.boundaries}
    for i, s in enumerate(plan.segments):
        src = right.get(round(s.contact_time if s.contact_time is not None else s.t_end, 9), "-")
        print(f"{i:>2}  {s.t_start:8.3f}  {s.t_end:8.3f}  {s.end_condition.value:<14} {src:<8} {s.label}")
    return 0


def cmd_detect(args) -> int:
    cfg = _config(args)
    if args.fixture:
        series = load_nis_csv(args.input)
        threshold = cfg["detector.threshold"]
    else:
        demo = prepare(load_demonstration(args.input, schema=_schema(args)))
        noise = estimate_noise(demo, window_s=cfg["kalman.r2_window_s"], r1_scale=cfg["kalman.r1_scale"])
        series = nis_series(demo, noise, cfg["kalman.normalizer"])
        threshold = nis_threshold(noise, cfg["detector.false_alarm"], cfg["kalman.normalizer"])
    for p in detect_peaks(series, threshold, cfg["detector.min_separation_s"]):
        print(f"{p.t:.6g} {p.strength:.3f}")
    return 0


def cmd_replay(args) -> int:
    cfg = _config(args)
    try:
        with open(args.plan, encoding="utf-8") as fh:
            plan = SegmentPlan.from_dict(json.load(fh))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise InvalidConfig(f"{args.plan} is not a valid plan: {exc}", path=str(args.plan)) from None
    demo = load_demonstration(args.demo, schema=_schema(args))
    out = Path(args.output)
    _, trace = replay(demo, plan, cfg, raise_on_timeout=False)
    write_files_atomic({out: trace.to_json(), out.with_suffix(".csv"): trace.to_csv(demo.q_names)})
    for e in trace.events:
        extra = f" ({e['reason']})" if "reason" in e else ""
        print(f"{e['t']:8.3f}  segment {e['segment']}: {e['type']}{extra}")
    timeouts = trace.events_of("Timeout")
    if timeouts:
        e = timeouts[0]
        raise SegmentTimeout(f"segment {e['segment']} timed out at t={e['t']:.3f} s", segment=e["segment"])
    return 0


def cmd_synth(args) -> int:
    cfg = _config(args)
    script = load_script(args.script)
    seed = args.seed if args.seed is not None else cfg["seed"]
    if seed is not None:
        script = script.with_seed(seed)
    demo, truth = generate(script)
    out = Path(args.output)
    write_files_atomic(
        {
            out: format_demonstration(demo),
            sibling(out, ".truth.json"): json.dumps(truth.to_dict(), indent=2) + "\n",
        }
    )
    print(f"{len(demo)} samples, boundaries {list(truth.boundary_times)}, contacts {list(truth.contact_times)}")
    return 0


def cmd_version(args) -> int:
    print(f"segflow {__version__}")
    return 0


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="segflow", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, schema=True):
        p.add_argument("--config", help="JSON config file (default: $SEGFLOW_CONFIG)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        if schema:
            p.add_argument("--schema", help="JSON object mapping CSV columns to t / q:<name> / w:<name>")

    p = sub.add_parser("segment", help="segment a demonstration")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True, help="plan JSON path")
    common(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("detect", help="print contact-change peaks")
    p.add_argument("input")
    p.add_argument("--fixture", action="store_true", help="input is a precomputed t,value series")
    common(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("replay", help="replay a plan on the simulated robot")
    p.add_argument("plan")
    p.add_argument("demo")
    p.add_argument("-o", "--output", required=True, help="trace JSON path (CSV written alongside)")
    common(p)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("synth", help="generate a synthetic demonstration")
    p.add_argument("script")
    p.add_argument("-o", "--output", required=True, help="demonstration CSV path")
    p.add_argument("--seed", type=int)
    common(p, schema=False)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("version", help="print the version")
    p.set_defaults(func=cmd_version)
    return parser


def _report(payload: dict, code: int) -> int:
    print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SegflowError as exc:
        return _report(exc.to_dict(), exc.exit_code)
    except FileNotFoundError as exc:
        return _report({"error": "FileNotFound", "message": f"{exc.filename}: not found", "path": exc.filename}, InputError.exit_code)
    except OSError as exc:
        return _report({"error": "IOError", "message": str(exc), "path": exc.filename}, InputError.exit_code)


if __name__ == "__main__":
    sys.exit(main())
