"""Deterministic JSON run summaries."""

from __future__ import annotations

import json
import math
from pathlib import Path

SUMMARY_NAME = "summary.json"


def _clean(value):
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if hasattr(value, "item"):  # numpy scalar
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, Path):
        return str(value)
    return value


def render_report(experiment: str, headline: dict, config: dict, seeds, files,
                  complete: bool = True) -> str:
    doc = {
        "experiment": experiment,
        "complete": bool(complete),
        "headline": headline,
        "seeds": list(seeds),
        "config": config,
        "files": sorted(str(f) for f in files),
    }
    return json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n"


def emit_report(directory, experiment: str, headline: dict, config: dict, seeds,
                complete: bool = True) -> Path:
    """Write ``summary.json`` listing every other file already in ``directory``."""
    directory = Path(directory)
    files = [p.name for p in directory.iterdir() if p.is_file() and p.name != SUMMARY_NAME]
    files += [f"{p.parent.name}/{p.name}" for p in directory.glob("*/*") if p.is_file()]
    path = directory / SUMMARY_NAME
    path.write_text(render_report(experiment, headline, config, seeds, files, complete))
    return path
