"""CSV writers and run manifests.

Floats are written in positional notation with 17 significant digits so a
re-run can be compared byte for byte.
"""
import csv
import hashlib
import json
import math
import os
from decimal import Decimal
from datetime import datetime, timezone

import numpy as np

SCHEMA_VERSION = 1

OBSERVABLE_COLUMNS = ["U", "V", "q", "S", "H", "M", "p_max"]


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return ""
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if v == 0.0:
            v = 0.0  # drop the sign of -0.0
        # 17 significant digits, then the exact decimal in positional form
        return format(Decimal(f"{v:.16e}"), "f")
    return str(value)


def trajectory_header(K: int):
    return ["trial", "step", "provenance"] + OBSERVABLE_COLUMNS + [f"mean_{k}" for k in range(K)]


def record_row(trial, step, provenance, rec):
    return [trial, step, provenance, rec.U, rec.V, rec.q, rec.S, rec.H, rec.M, rec.p_max,
            *rec.mean.tolist()]


def trajectory_rows(traj, trial=0):
    for i, s in enumerate(traj.steps):
        yield record_row(trial, int(s), "exact", traj.record(i))


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


ESTIMATE_HEADER = ["name", "value", "std_error", "n", "config_hash"]


def estimate_row(name, est, config_hash):
    return [name, est.value, est.std_error, est.n, config_hash]


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=_json_default)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def now_iso():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_manifest(out_dir, command, config: dict, seed, outputs, started, build):
    """Write ``manifest.json`` next to the data files and return its path."""
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": config,
        "config_hash": config_hash(config),
        "seed": seed,
        "build": build,
        "started": started,
        "finished": now_iso(),
        "outputs": [
            {"path": os.path.basename(p), "sha256": file_digest(p), "bytes": os.path.getsize(p)}
            for p in outputs
        ],
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return path


def verify_manifest(path) -> bool:
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    base = os.path.dirname(path)
    return all(file_digest(os.path.join(base, o["path"])) == o["sha256"] for o in manifest["outputs"])
