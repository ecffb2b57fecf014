"""Command-line entry point: ``surgscene {simulate,track,depth,fuse,eval}``."""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

from . import __version__
from .errors import SurgSceneError

_HELP = {
    "simulate": "write a synthetic dataset and its pipeline.json",
    "track": "run the tool tracker over detections and encoders",
    "depth": "stereo depth from image pairs or external disparity maps",
    "fuse": "fuse masked depth maps into a surfel model",
    "eval": "score stage outputs against ground truth",
}


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="surgscene", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in _HELP.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        if name == "simulate":
            p.add_argument("--config", help="scenario JSON (default: the bundled scenario)")
            p.add_argument("--out", required=True, help="dataset directory to create")
        else:
            p.add_argument("--config", required=True, help="pipeline JSON")
            p.add_argument("--out", help="output root (default: the config file's directory)")
        p.add_argument("--seed", type=_seed, help="override the configured seed")
        p.add_argument("--no-figures", action="store_true", help="skip PNG figures")
    return parser


def _summary_line(command: str, report: dict) -> str:
    parts = [f"{m}={s['mean']:.4g}" for m, s in report["summary"].items() if "/" not in m]
    return f"{command}: " + (", ".join(parts) if parts else "done")


def _run(args) -> str:
    from . import pipeline

    if args.command == "simulate":
        out = pipeline.run_sim(args.config, args.out, args.seed)
        return f"simulate: dataset written to {out}"
    config = pipeline.load_config(args.config, args.seed, args.out)
    if args.no_figures:
        from dataclasses import replace

        config = replace(config, figures=False)
    runner = {
        "track": pipeline.run_track,
        "depth": pipeline.run_depth,
        "fuse": pipeline.run_fuse,
        "eval": pipeline.run_eval,
    }[args.command]
    return _summary_line(args.command, runner(config))


def _show_warning(message, category, filename, lineno, file=None, line=None):
    print(f"surgscene: warning: {message}", file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    warnings.showwarning = _show_warning
    try:
        print(_run(args))
    except (SurgSceneError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"surgscene {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
