"""Artifact writers: deterministic JSON/CSV and saved solutions."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
import sys
from pathlib import Path

import numpy as np

from .errors import FormatError
from .net import Network


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if hasattr(obj, "value") and not isinstance(obj, (str, int)):
        return obj.value
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj):
    Path(path).write_text(dumps(obj))


def read_json(path):
    return json.loads(Path(path).read_text())


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v)) if math.isfinite(v) else ""
    if v is None:
        return ""
    return str(v)


def write_csv(path, rows, fields):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for row in rows:
            w.writerow([_fmt(row.get(f)) for f in fields])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_params(path, params):
    np.asarray(params, dtype="<f8").tofile(path)


def read_params(path, expected=None):
    raw = Path(path).read_bytes()
    if len(raw) % 8:
        raise FormatError(f"{path}: size {len(raw)} is not a multiple of 8", len(raw))
    params = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    if expected is not None and params.size != expected:
        raise FormatError(f"{path}: expected {expected} float64 values, found {params.size}", 0)
    return params


def save_solution(solution, stem) -> Path:
    """Write ``<stem>.json`` and the raw little-endian float64 sidecar ``<stem>.f64``."""
    stem = Path(stem)
    bin_path = stem.with_suffix(".f64")
    write_params(bin_path, solution.params)
    meta = solution.metadata()
    meta["params_file"] = bin_path.name
    meta["params_sha256"] = hashlib.sha256(bin_path.read_bytes()).hexdigest()
    json_path = stem.with_suffix(".json")
    write_json(json_path, meta)
    return json_path


def load_solution(json_path):
    """Returns ``(Network, metadata)`` with the saved parameters loaded bit-exactly."""
    json_path = Path(json_path)
    meta = read_json(json_path)
    net = Network(tuple(meta["layer_dims"]), meta.get("activation", "relu"))
    params = read_params(json_path.parent / meta["params_file"], net.num_params)
    return net.with_params(params), meta


def environment_fingerprint():
    import scipy

    return {
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "platform": platform.platform(),
        "machine": platform.machine(),
    }
