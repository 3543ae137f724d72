"""Artifact emission: report.json, errors.csv, raw field dumps.

Byte-level determinism is part of the contract: two runs of the same
config must produce identical files, so reductions upstream are ordered,
JSON is dumped with sorted keys, and the only wall-clock content is the
isolated meta.generated_at field injected here at write time.
"""
from __future__ import annotations

import csv
import io
import json
import os
from datetime import datetime, timezone

import numpy as np

from .errors import ConfigError, FieldError
from .fields import ComplexField, RealField, _Field
from .grids import PeriodicGrid

CSV_HEADER = ("epsilon", "s", "metric", "value")


def report_json_bytes(report: dict) -> bytes:
    """Canonical serialization; raises on anything JSON cannot express."""
    text = json.dumps(report, indent=2, sort_keys=True, allow_nan=False)
    return (text + "\n").encode("utf-8")


def errors_csv_bytes(rows) -> bytes:
    """rows: (epsilon, s, metric, value); sorted here (epsilon descending,
    then metric, then s) so emission order never depends on driver internals."""
    def key(row):
        eps, s, metric, _ = row
        return (-float(eps), str(metric), str(s))

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for eps, s, metric, value in sorted(rows, key=key):
        writer.writerow([repr(float(eps)), s, metric, repr(float(value))])
    return buf.getvalue().encode("utf-8")


def field_dump_bytes(field: _Field) -> bytes:
    """Interleaved (re, im) little-endian float64, C order; real fields get
    an explicit zero imaginary channel so the layout never varies."""
    vals = np.ascontiguousarray(field.values)
    flat = vals.ravel()
    out = np.empty(2 * flat.size, dtype="<f8")
    out[0::2] = flat.real
    out[1::2] = flat.imag if np.iscomplexobj(flat) else 0.0
    return out.tobytes()


def field_sidecar(field: _Field, time: float, name: str) -> dict:
    return {
        "name": name,
        "time": float(time),
        "role": field.role,
        "grid": {"lengths": list(field.grid.lengths),
                 "sizes": list(field.grid.sizes)},
        "layout": "interleaved-re-im",
        "dtype": "<f8",
        "count": int(np.prod(field.grid.shape)),
        "complex": bool(np.iscomplexobj(field.values)),
    }


def load_field_dump(base_path: str):
    """Round-trip loader for dumps written by write_artifacts."""
    with open(base_path + ".json", encoding="utf-8") as fh:
        meta = json.load(fh)
    raw = np.fromfile(base_path + ".bin", dtype="<f8")
    if raw.size != 2 * meta["count"]:
        raise FieldError(f"dump {base_path} has {raw.size} scalars, "
                         f"expected {2 * meta['count']}")
    grid = PeriodicGrid(lengths=tuple(meta["grid"]["lengths"]),
                        sizes=tuple(meta["grid"]["sizes"]))
    vals = (raw[0::2] + 1j * raw[1::2]).reshape(grid.shape)
    if meta["complex"]:
        return ComplexField(grid, vals, role=meta["role"]), meta
    return RealField(grid, vals.real, role=meta["role"]), meta


def write_artifacts(result, out_dir: str, stamp: bool = True) -> dict:
    """Write report.json, errors.csv and any field dumps under out_dir.

    All content is rendered to bytes before the first file is opened, so a
    serialization failure leaves no partial artifacts.  Returns the paths
    written.
    """
    report = dict(result.report)
    meta = {"format": "nlswkb-report-v1"}
    if stamp:
        meta["generated_at"] = datetime.now(timezone.utc).isoformat()
    report["meta"] = meta

    blobs = {"report.json": report_json_bytes(report),
             "errors.csv": errors_csv_bytes(result.csv_rows)}
    for name, field, time in result.field_dumps:
        safe = name.replace(os.sep, "_")
        blobs[f"{safe}.bin"] = field_dump_bytes(field)
        blobs[f"{safe}.json"] = report_json_bytes(field_sidecar(field, time, name))

    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    for name, payload in blobs.items():
        path = os.path.join(out_dir, name)
        with open(path, "wb") as fh:
            fh.write(payload)
        paths[name] = path
    return paths


def load_config_file(path: str) -> dict:
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
