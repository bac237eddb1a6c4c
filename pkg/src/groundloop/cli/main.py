"""Command-line entry point: ``groundloop <verb> [--config FILE] [--seed N] [--out DIR] [--<key> VALUE ...]``."""

import argparse
import logging
import subprocess
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from ..config import known_keys, load_run_config
from ..errors import ConfigError, GroundloopError
from .experiments import ExperimentKind, ExperimentSpec, run_experiment
from .report import ReportFormat, ReportRow, emit_report, load_rows, render_structured

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

VERBS = {
    "simulate": ExperimentKind.STREAM,
    "converge": ExperimentKind.CONVERGENCE,
    "ablate": ExperimentKind.ABLATION,
    "sensitivity": ExperimentKind.SENSITIVITY,
    "run-adapter": ExperimentKind.ADAPTER_RUN,
    "latency": ExperimentKind.LATENCY_MODEL,
    "stability": ExperimentKind.STABILITY_BOUNDARY,
}

DASHBOARD_SCRIPT = Path(__file__).resolve().parent.parent / "dashboard" / "app.py"


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="key = value configuration file")
    common.add_argument("--seed", type=int, default=None, help="base seed (sim.seed); repetition i uses seed + i")
    common.add_argument("--out", type=Path, default=Path("runs"), help="output directory")
    common.add_argument("--name", default=None, help="experiment name (default: the verb)")

    keys = common.add_argument_group("configuration keys")
    for key, section in known_keys().items():
        field = section.keys()[key]
        keys.add_argument(f"--{key}", dest=f"key:{key}", default=argparse.SUPPRESS, metavar="VALUE", help=section.schema()[field]["help"])

    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="groundloop", description="Feedback-controlled grounded scene description experiments.")
    verbs = parser.add_subparsers(dest="verb", required=True)
    common = _common_parser()

    for verb, kind in VERBS.items():
        verbs.add_parser(verb, parents=[common], help=f"run a {kind.value} experiment")

    report = verbs.add_parser("report", help="re-render the rows of a finished run")
    report.add_argument("run_dir", type=Path)
    report.add_argument("--format", choices=[f.value for f in ReportFormat], default=ReportFormat.STRUCTURED_TEXT.value)

    dashboard = verbs.add_parser("dashboard", help="browse run directories in streamlit")
    dashboard.add_argument("--out", type=Path, default=Path("runs"))

    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, str]:
    overrides = {name[len("key:"):]: value for name, value in vars(args).items() if name.startswith("key:")}
    if args.seed is not None:
        overrides["sim.seed"] = str(args.seed)
    return overrides


def _configure_logging(level: str) -> None:
    logging.basicConfig(level=level.upper(), format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _run(args: argparse.Namespace) -> int:
    overrides = _overrides(args)
    settings = load_run_config(args.config, overrides)
    _configure_logging(settings.run.log_level)

    spec = ExperimentSpec(
        name=args.name or args.verb,
        kind=VERBS[args.verb],
        output_dir=args.out,
        base_config=args.config,
        overrides=tuple(sorted(overrides.items())),
    )
    rows, files = run_experiment(spec, settings)

    sys.stdout.write(render_structured(rows))
    logger.info(f"Wrote {len(files)} file(s) under {spec.run_dir}")
    return EXIT_OK


def _report(args: argparse.Namespace) -> int:
    rows: List[ReportRow] = load_rows(args.run_dir / f"rows{ReportFormat.DELIMITED_TABLE.suffix}")
    fmt = ReportFormat(args.format)
    if fmt is ReportFormat.STRUCTURED_TEXT:
        sys.stdout.write(render_structured(rows))
    else:
        path = emit_report(rows, fmt, args.run_dir / f"rows{fmt.suffix}")
        sys.stdout.write(path.read_text(encoding="utf-8"))
    return EXIT_OK


def _dashboard(args: argparse.Namespace) -> int:
    command = [sys.executable, "-m", "streamlit", "run", str(DASHBOARD_SCRIPT), "--", "--out", str(args.out)]
    try:
        return subprocess.call(command)
    except OSError as e:
        logger.error(f"Cannot start streamlit: {e}")
        return EXIT_RUNTIME


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    try:
        if args.verb == "report":
            return _report(args)
        if args.verb == "dashboard":
            return _dashboard(args)
        return _run(args)

    except ConfigError as e:
        sys.stderr.write(f"groundloop: configuration error: {e}\n")
        return EXIT_CONFIG

    except (GroundloopError, OSError) as e:
        logger.error(f"{args.verb} failed: {e}")
        sys.stderr.write(f"groundloop: {e}\n")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
