"""
Command line entry point.

    python -m app.cli constants --config problem.json
    python -m app.cli certify   --config problem.json --out results/
    python -m app.cli validate  --config problem.json --out results/

Exit codes: 0 completed, 2 invalid configuration, 3 constants unavailable,
4 integrator failure (a partial report is still written).
"""

import argparse
import json
import sys
from typing import List, Optional

from app.core.config import settings
from app.core.errors import CertificationError, ConfigValidationError
from app.core.logging_config import app_logger, error_logger
from app.models.certification import CertifyConfig
from app.services import certification, report_service


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ns-certify",
        description="A posteriori existence certificates for Navier-Stokes / Euler on the torus",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("command", choices=["constants", "certify", "validate"])
    parser.add_argument("--config", required=True, help="Problem configuration (JSON)")
    parser.add_argument("--out", default=None, help="Output directory (overrides out_dir of the config)")
    parser.add_argument("--threads", type=int, default=settings.THREADS, help="Worker threads for lattice sums and estimators")
    parser.add_argument("--seed", type=int, default=None, help="Seed for random data (overrides the config)")
    return parser


def load_config(path: str, seed: Optional[int] = None) -> CertifyConfig:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            raw = json.load(handle)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigValidationError(f"Cannot read configuration {path}: {e}") from e
    if seed is not None:
        raw["seed"] = seed
    return certification.parse_config(raw)


def run_constants(config: CertifyConfig, threads: int) -> int:
    table = certification.fetch_constants(config, workers=threads)
    for entry in table.entries:
        print(f"d={entry.d} p={entry.p} n={entry.n}: K_pn={entry.K_pn!r} G_pn={entry.G_pn!r} plateau={entry.plateau}")
    return 0


def run_certify(config: CertifyConfig, out_dir: str, threads: int, validate: bool) -> int:
    if validate and config.validation is None:
        raise ConfigValidationError("The validate command needs a 'validation' block with ref_M")
    try:
        report = certification.run_certification(config, workers=threads, validate=validate)
    except CertificationError as e:
        if e.partial_report is not None:
            report_service.emit_outputs(e.partial_report, out_dir)
        raise
    report_service.emit_outputs(report, out_dir, save_trace=config.save_trace)
    print(f"T_c = {report.t_c} ({report.certified}); outputs in {out_dir}")
    if report.validation is not None:
        print(f"Validation passed: {report.validation.passed}; max ratios {report.validation.max_ratio}")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, args.seed)
        out_dir = args.out or config.out_dir or settings.CERTIFICATES_DIR
        app_logger.info(f"CLI {args.command} with config {args.config}")
        if args.command == "constants":
            return run_constants(config, args.threads)
        return run_certify(config, out_dir, args.threads, validate=args.command == "validate")
    except CertificationError as e:
        error_logger.error(f"{args.command} failed (exit {e.exit_code}): {e}")
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
