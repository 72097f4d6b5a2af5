"""Command-line front end.

Subcommands ``analyze``, ``synthesize``, ``simulate`` and ``estimate`` take a
scenario file or a directory of them.  Machine-readable JSON goes to stdout,
diagnostics to stderr.

Exit codes
----------
0  success
2  unreadable file, malformed JSON or schema violation
3  analysis or synthesis failure (including a non-minimal plant)
4  delay stability margin not below one
5  numerical blowup during simulation (partial output is written)
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .config import Options, analyze, build_scenario, build_system, load_document, synthesize, tolerances
from .controller import ControllerParams
from .errors import NumericalBlowup, SDCError, StabilityMarginFailed, ValidationError
from .sim import dumps, run_closed_loop

log = logging.getLogger("sdc")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_ANALYSIS = 3
EXIT_MARGIN = 4
EXIT_BLOWUP = 5


def _line_sign(text: str) -> int:
    table = {"+": 1, "+1": 1, "1": 1, "plus": 1, "-": -1, "-1": -1, "minus": -1}
    try:
        return table[text.strip().lower()]
    except KeyError:
        raise argparse.ArgumentTypeError("expected + or -") from None


def _positive_int(text: str) -> int:
    k = int(text)
    if k < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return k


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol-rank", type=float, help="relative singular value threshold for rank decisions")
    common.add_argument("--tol-decomp", type=float, help="residual tolerance for the pencil decomposition")
    common.add_argument("--margin-line-sign", type=_line_sign, metavar="{+,-}",
                        help="evaluate the delay margin on Re s = +v1 or -v1 (default -)")
    common.add_argument("--ksyn", type=_positive_int, help="steps between adaptive resyntheses")
    common.add_argument("--seed", type=int, help="seed for noise signals")

    parser = argparse.ArgumentParser(prog="sdc", description="Singular delay systems: analysis, synthesis, simulation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", parents=[common], help="structural report of the plant")
    p.add_argument("path", help="scenario file or directory")

    p = sub.add_parser("synthesize", parents=[common], help="controller parameters")
    p.add_argument("path", help="scenario file or directory")
    p.add_argument("-o", "--out", help="params file (directory when path is a directory)")

    p = sub.add_parser("simulate", parents=[common], help="closed-loop run")
    p.add_argument("path", help="scenario file or directory")
    p.add_argument("-o", "--outdir", required=True, help="output directory")
    p.add_argument("--params", help="params file from 'sdc synthesize' (skips synthesis)")

    p = sub.add_parser("estimate", parents=[common], help="open-loop estimation run")
    p.add_argument("path", help="scenario file or directory")
    p.add_argument("-o", "--outdir", required=True, help="output directory")
    return parser


def _options(args) -> Options:
    return Options(tol_rank=args.tol_rank, tol_decomp=args.tol_decomp, line_sign=args.margin_line_sign,
                   k_syn=args.ksyn, seed=args.seed)


def _write(path, text: str) -> None:
    parent = os.path.dirname(os.fspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _load_params(path) -> ControllerParams:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"{path}: cannot read: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: params must be a JSON object")
    return ControllerParams.from_json(data)


def _summary(result) -> dict:
    d = result.diagnostics
    keys = ("blowup", "margin", "max_abs_y", "max_abs_u", "resyntheses", "resynthesis_failures",
            "frozen_fraction", "covariance_degenerate")
    return {k: d[k] for k in keys if k in d}


def _run_one(command: str, path: Path, args, opts: Options, out: Path | None) -> tuple[int, dict]:
    """Run ``command`` on one scenario; returns the exit code and the stdout record."""
    doc = load_document(path)
    sys_ = build_system(doc)
    if command == "analyze":
        tol_rank, tol_decomp, _ = tolerances(doc, opts)
        return EXIT_OK, analyze(sys_, tol_rank, tol_decomp)
    if command == "synthesize":
        params = synthesize(doc, sys_, opts).to_json()
        if out is not None:
            _write(out, dumps(params))
        return EXIT_OK, params
    params = None
    if command == "simulate" and args.params:
        params = _load_params(args.params)
    sc = build_scenario(doc, sys_, opts, params=params, open_loop=command == "estimate")
    if command == "estimate" and sc.adaptive is None:
        raise ValidationError(f"{path}: estimate needs an adaptive controller section")
    try:
        result = run_closed_loop(sc)
    except NumericalBlowup as exc:
        files = exc.result.write(out) if exc.result is not None else []
        raise _Blowup(exc, files) from exc
    files = result.write(out)
    return EXIT_OK, {"files": [os.fspath(f) for f in files], **_summary(result)}


class _Blowup(Exception):
    def __init__(self, exc: NumericalBlowup, files):
        self.exc = exc
        self.files = [os.fspath(f) for f in files]


def _error_record(code: int, exc: Exception) -> dict:
    rec = {"exit_code": code, "error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, StabilityMarginFailed):
        rec["margin"] = exc.margin
    return rec


def _dispatch(command: str, path: Path, args, opts: Options, out: Path | None) -> tuple[int, dict]:
    try:
        return _run_one(command, path, args, opts, out)
    except ValidationError as exc:
        print(f"sdc: {exc}", file=sys.stderr)
        return EXIT_VALIDATION, _error_record(EXIT_VALIDATION, exc)
    except StabilityMarginFailed as exc:
        print(f"sdc: {path}: delay stability margin {exc.margin:.6g} (must be < 1)", file=sys.stderr)
        return EXIT_MARGIN, _error_record(EXIT_MARGIN, exc)
    except _Blowup as b:
        exc = b.exc
        print(f"sdc: {path}: {exc}", file=sys.stderr)
        rec = _error_record(EXIT_BLOWUP, exc)
        rec.update(step=exc.step, t=exc.t, files=b.files)
        return EXIT_BLOWUP, rec
    except SDCError as exc:
        print(f"sdc: {path}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS, _error_record(EXIT_ANALYSIS, exc)


def _output_for(command: str, args, base: Path | None, name: str | None) -> Path | None:
    target = getattr(args, "outdir", None) if command in ("simulate", "estimate") else getattr(args, "out", None)
    if target is None:
        return None
    if name is None:
        return Path(target)
    if command == "synthesize":
        return Path(target) / f"{name}.params.json"
    return Path(target) / name


def main(argv=None) -> int:
    level = os.environ.get("SDC_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    opts = _options(args)
    path = Path(args.path)

    if path.is_dir():
        files = sorted(path.glob("*.json"))
        if not files:
            print(f"sdc: {path}: no scenario files", file=sys.stderr)
            return EXIT_VALIDATION
        code, records = EXIT_OK, {}
        for f in files:
            log.info("processing %s", f)
            c, rec = _dispatch(args.command, f, args, opts, _output_for(args.command, args, path, f.stem))
            records[f.name] = rec
            code = max(code, c)
        sys.stdout.write(dumps(records))
        return code

    code, rec = _dispatch(args.command, path, args, opts, _output_for(args.command, args, None, None))
    sys.stdout.write(dumps(rec))
    return code


if __name__ == "__main__":
    sys.exit(main())
