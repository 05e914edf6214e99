"""Command-line interface: corrupt, eval, report, inspect.

Exit codes: 0 success, 1 partial failure (some frames failed), 2 config or
validation error. Defaults can come from a key=value config file
(--config); explicit flags override file values. CORRUPT3D_JOBS sets the
default worker count.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from .errors import ConfigError, Corrupt3dError
from .pipeline import RunConfig, inspect_render, run_corrupt, run_eval
from .severities import KITTI_CORRUPTIONS, PhysicsConstants


def _read_config_file(path: str) -> dict:
    """key = value lines; '#' comments; lists are comma separated."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def _parse_list(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _default_jobs() -> int:
    env = os.environ.get("CORRUPT3D_JOBS")
    return int(env) if env else 1


def _constants_from(overrides: dict) -> PhysicsConstants:
    fields = {f.name: f.type for f in dataclasses.fields(PhysicsConstants)}
    kwargs = {}
    for key, value in overrides.items():
        if key not in fields:
            raise ConfigError(f"unknown physics constant {key!r}")
        kwargs[key] = type(getattr(PhysicsConstants(), key))(value)
    return PhysicsConstants(**kwargs)


def _cmd_corrupt(args) -> int:
    file_vals = _read_config_file(args.config) if args.config else {}
    corruptions = (_parse_list(args.corruptions) if args.corruptions
                   else _parse_list(file_vals.get("corruptions", ""))
                   or list(KITTI_CORRUPTIONS))
    severities = ([int(s) for s in _parse_list(args.severities)]
                  if args.severities
                  else [int(s) for s in
                        _parse_list(file_vals.get("severities", ""))]
                  or [1, 2, 3, 4, 5])
    constant_overrides = {k.split(".", 1)[1]: v for k, v in file_vals.items()
                          if k.startswith("constants.")}
    config = RunConfig(
        input_root=args.input or file_vals.get("input", ""),
        output_root=args.output or file_vals.get("output", ""),
        corruptions=tuple(corruptions),
        severities=tuple(severities),
        master_seed=args.seed if args.seed is not None
        else int(file_vals.get("seed", 0)),
        jobs=args.jobs or int(file_vals.get("jobs", _default_jobs())),
        force=args.force,
        allow_incomplete=args.allow_incomplete,
        constants=_constants_from(constant_overrides),
    )
    if not config.input_root or not config.output_root:
        raise ConfigError("--input and --output are required")
    entries, errors = run_corrupt(config)
    print(f"wrote {len(entries)} artifacts to {config.output_root}")
    if errors:
        for frame, corruption, severity, tb in errors:
            print(f"FAILED {frame} {corruption} s{severity}:\n{tb}",
                  file=sys.stderr)
        print(f"{len(errors)} work units failed", file=sys.stderr)
        return 1
    return 0


def _cmd_eval(args) -> int:
    corruptions = (_parse_list(args.corruptions) if args.corruptions
                   else list(KITTI_CORRUPTIONS))
    report = run_eval(args.gt, args.det, corruptions, cls=args.cls,
                      difficulty=args.difficulty, iou_threshold=args.iou)
    out = Path(args.out) if args.out else Path(args.det)
    (out / "metrics.json").write_text(report.to_json() + "\n")
    (out / "metrics.csv").write_text(report.to_csv())
    print(report.to_table())
    return 0


def _cmd_report(args) -> int:
    payload = json.loads(Path(args.metrics).read_text())
    if args.format == "json":
        print(json.dumps(payload, indent=2))
    elif args.format == "csv":
        print("corruption,mean")
        for c, block in payload["corruptions"].items():
            print(f"{c},{block['mean']:.4f}")
        print(f"AP_clean,{payload['ap_clean']:.4f}")
        print(f"AP_cor,{payload['ap_cor']:.4f}")
        print(f"RCE,{payload['rce']:.6f}")
    else:
        width = max(len(c) for c in payload["corruptions"]) + 2
        for c, block in payload["corruptions"].items():
            print(f"{c:<{width}}{block['mean']:.2f}")
        print(f"{'AP_clean':<{width}}{payload['ap_clean']:.2f}")
        print(f"{'AP_cor':<{width}}{payload['ap_cor']:.2f}")
        print(f"{'RCE':<{width}}{100.0 * payload['rce']:.2f}%")
    return 0


def _cmd_inspect(args) -> int:
    inspect_render(args.input, args.frame, args.corruption, args.severity,
                   args.out, master_seed=args.seed or 0)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="corrupt3d")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("corrupt", help="expand a dataset by corruptions x severities")
    p.add_argument("--input", help="clean KITTI-layout dataset root")
    p.add_argument("--output", help="output root")
    p.add_argument("--corruptions", help="comma-separated corruption ids")
    p.add_argument("--severities", help="comma-separated severities (default 1-5)")
    p.add_argument("--seed", type=int, default=None, help="master seed")
    p.add_argument("--jobs", type=int, default=None, help="worker count")
    p.add_argument("--force", action="store_true",
                   help="allow non-empty output root")
    p.add_argument("--allow-incomplete", action="store_true",
                   help="skip frames with missing modality files")
    p.add_argument("--config", help="key=value config file; flags override")
    p.set_defaults(func=_cmd_corrupt)

    p = sub.add_parser("eval", help="compute AP_clean, AP_cor, and RCE")
    p.add_argument("--gt", required=True, help="clean dataset root (labels)")
    p.add_argument("--det", required=True,
                   help="detections root: clean/ + <corruption>/<severity>/")
    p.add_argument("--class", dest="cls", default="Car")
    p.add_argument("--difficulty", default="Moderate")
    p.add_argument("--iou", type=float, default=0.7)
    p.add_argument("--corruptions", help="comma-separated corruption ids")
    p.add_argument("--out", help="report output directory (default: det root)")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("report", help="reformat a metrics.json file")
    p.add_argument("--metrics", required=True)
    p.add_argument("--format", choices=["csv", "json", "table"], default="table")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("inspect", help="render clean vs corrupted comparison")
    p.add_argument("--input", required=True)
    p.add_argument("--frame", required=True)
    p.add_argument("--corruption", required=True)
    p.add_argument("--severity", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Corrupt3dError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
