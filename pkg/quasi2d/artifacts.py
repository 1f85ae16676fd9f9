"""CSV and JSON outputs: profiles, tables, reports and run manifests."""
import csv
import json
import logging
import math
import platform
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from quasi2d import __version__
from quasi2d.checks import CheckResult
from quasi2d.errors import InputError
from quasi2d.services.scattering import RadialProfile

logger = logging.getLogger(__name__)


def _plain(x):
    if isinstance(x, (np.floating, float)):
        x = float(x)
        if math.isnan(x) or math.isinf(x):
            return str(x)
        return x
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_plain(v) for v in x.tolist()]
    if isinstance(x, CheckResult):
        return x.to_dict()
    return x


def write_json(path: Path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")
    return path


def read_json(path: Path):
    return json.loads(Path(path).read_text())


def write_rows_csv(path: Path, rows: Sequence[dict], columns: Sequence[str]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(c)) for c in columns])
    logger.info(f"Wrote {len(rows)} rows to {path}")
    return path


def _cell(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return "" if x is None else x


def write_columns_csv(path: Path, header: Sequence[str], *columns: Iterable) -> Path:
    arrays = [np.asarray(c).ravel() for c in columns]
    if len({a.size for a in arrays}) != 1:
        raise InputError("CSV columns must have equal length")
    rows = [dict(zip(header, vals)) for vals in zip(*(a.tolist() for a in arrays))]
    return write_rows_csv(path, rows, header)


def read_rows_csv(path: Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def profile_to_csv(prof: RadialProfile, path: Path) -> Path:
    return write_columns_csv(path, ("r", "value"), prof.radii, prof.samples)


def profile_from_csv(path: Path, r_support: Optional[float] = None) -> RadialProfile:
    """Read a two-column (r, value) profile on a uniform grid starting at r = 0."""
    rows = read_rows_csv(path)
    if len(rows) < 2 or set(rows[0]) != {"r", "value"}:
        raise InputError(f"{path} is not an (r, value) profile")
    r = np.array([float(row["r"]) for row in rows])
    v = np.array([float(row["value"]) for row in rows])
    dr = r[1] - r[0]
    if r[0] != 0.0 or dr <= 0 or np.max(np.abs(np.diff(r) - dr)) > 1e-9 * max(1.0, r[-1]):
        raise InputError(f"{path} must hold a uniform grid starting at r=0")
    if r_support is None:
        nonzero = np.flatnonzero(v)
        r_support = (int(nonzero[-1]) + 0.5) * dr if nonzero.size else dr
    return RadialProfile(v, float(dr), float(r_support))


def write_report(path: Path, rows: list[CheckResult], **extra) -> Path:
    doc = {"rows": [r.to_dict() for r in rows], "pass": all(r.passed for r in rows), **extra}
    return write_json(path, doc)


def versions() -> dict:
    out = {"quasi2d": __version__, "python": platform.python_version()}
    for package in ("numpy", "scipy", "pydantic", "aiosqlite"):
        try:
            out[package] = version(package)
        except PackageNotFoundError:
            out[package] = "unknown"
    return out


def write_manifest(output_dir: Path, config: dict, wall_time: float, summary: dict,
                   files: Sequence[str] = ()) -> Path:
    return write_json(Path(output_dir) / "manifest.json", {
        "config": config,
        "versions": versions(),
        "wall_time": wall_time,
        "summary": summary,
        "files": sorted(files),
    })
