import json
import os
from typing import Dict, Optional

import numpy as np
import pandas as pd
from jinja2 import Environment, FileSystemLoader

from app.core.config import settings
from app.core.logging_config import app_logger, error_logger
from app.models.certification import CertificationReport

TEMPLATES_DIR = os.path.join(os.path.dirname(os.path.dirname(__file__)), "templates")

env = Environment(loader=FileSystemLoader(TEMPLATES_DIR), keep_trailing_newline=True)


def bounds_frame(report: CertificationReport) -> pd.DataFrame:
    """t, R_n, then R_p and A_p for each bound order p."""
    solution = report.solution
    base = solution.base_order
    frame = pd.DataFrame({"t": np.asarray(solution.times, dtype=float), f"R_{base}": np.asarray(solution.r_n, dtype=float)})
    for p in sorted(solution.curves):
        curve = solution.curves[p]
        frame[f"R_{p}"] = np.asarray(curve.bound, dtype=float)
        frame[f"A_{p}"] = np.asarray(curve.exponent, dtype=float)
    return frame


def estimators_frame(report: CertificationReport) -> pd.DataFrame:
    """t, then eps_q and D_q for every estimated order q."""
    est = report.estimators
    frame = pd.DataFrame({"t": np.asarray(est.times, dtype=float)})
    for q in est.orders:
        frame[f"eps_{q}"] = np.asarray(est.eps[q], dtype=float)
        frame[f"D_{q}"] = np.asarray(est.growth[q], dtype=float)
    return frame


def render_summary(report: CertificationReport) -> str:
    template = env.get_template("summary.md.j2")
    t_c = report.t_c
    return template.render(
        report=report,
        t_c="inf" if t_c is not None and np.isinf(t_c) else t_c,
        orders=list(report.delta),
    )


def write_trace(report: CertificationReport, out_dir: str) -> str:
    """trace.json header plus one JSON file per sample under trace/."""
    trace = report.trace
    folder = os.path.join(out_dir, "trace")
    os.makedirs(folder, exist_ok=True)
    files = []
    for i in range(trace.size):
        name = f"sample_{i:05d}.json"
        payload = {"t": float(trace.times[i]), "field": trace.field(i).to_json_dict(), "derivative": trace.derivative(i).to_json_dict()}
        with open(os.path.join(folder, name), "w", encoding="utf-8") as handle:
            json.dump(payload, handle)
        files.append(name)
    header_path = os.path.join(out_dir, "trace.json")
    with open(header_path, "w", encoding="utf-8") as handle:
        json.dump({**trace.header(), "files": files}, handle, indent=2)
    return header_path


def emit_outputs(report: CertificationReport, out_dir: Optional[str] = None, save_trace: bool = False) -> Dict[str, str]:
    """
    Writes report.json, bounds.csv, estimators.csv, summary.md and timings.json.
    All but timings.json are byte-identical for identical inputs and seeds.
    """
    out_dir = out_dir or settings.CERTIFICATES_DIR
    try:
        os.makedirs(out_dir, exist_ok=True)
        paths: Dict[str, str] = {}

        if report.solution is not None:
            paths["bounds"] = os.path.join(out_dir, "bounds.csv")
            bounds_frame(report).to_csv(paths["bounds"], index=False)
        if report.estimators is not None:
            paths["estimators"] = os.path.join(out_dir, "estimators.csv")
            estimators_frame(report).to_csv(paths["estimators"], index=False)
        if save_trace and report.trace is not None:
            paths["trace"] = write_trace(report, out_dir)

        paths["summary"] = os.path.join(out_dir, "summary.md")
        paths["report"] = os.path.join(out_dir, "report.json")
        report.files = {key: os.path.basename(path) for key, path in paths.items()}

        with open(paths["summary"], "w", encoding="utf-8") as handle:
            handle.write(render_summary(report))
        with open(paths["report"], "w", encoding="utf-8") as handle:
            handle.write(report.model_dump_json(indent=2))

        paths["timings"] = os.path.join(out_dir, "timings.json")
        with open(paths["timings"], "w", encoding="utf-8") as handle:
            json.dump(report.timings, handle, indent=2)
    except OSError as e:
        error_logger.error(f"Writing outputs to {out_dir} failed: {e}")
        raise

    app_logger.info(f"Certification outputs written to {out_dir}: {sorted(paths)}")
    return paths
