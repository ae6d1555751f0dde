"""Certified values, run manifests and their serialization."""
from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import __version__
from .core import CONVENTION


def _plain(x: Any) -> Any:
    """Convert numpy / complex values into JSON-ready Python objects."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (complex, np.complexfloating)):
        return {"re": float(np.real(x)), "im": float(np.imag(x))}
    if isinstance(x, (np.floating, float)):
        x = float(x)
        if math.isnan(x) or math.isinf(x):
            return repr(x)
        return x
    return x


def fmt(x: float) -> str:
    return "%.17g" % float(x)


@dataclass
class CertifiedReport:
    """A computed value with the parameters and error estimates that back it."""

    name: str
    value: Any
    params: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    tolerance: float | None = None
    passed: bool | None = None
    seed: int | None = None
    extra: dict = field(default_factory=dict)

    @property
    def error_budget(self) -> float:
        return float(sum(v for v in self.errors.values() if isinstance(v, (int, float))))

    def to_json(self) -> dict:
        d = {"name": self.name, "value": self.value, "params": self.params,
             "errors": self.errors, "tolerance": self.tolerance, "passed": self.passed,
             "seed": self.seed, "convention": CONVENTION}
        if self.extra:
            d["extra"] = self.extra
        return _plain(d)


def canonical(obj: Any) -> str:
    return json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"))


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical(config).encode()).hexdigest()


@dataclass
class RunManifest:
    config: dict
    reports: list[CertifiedReport] = field(default_factory=list)
    tables: dict[str, tuple[list[str], list[Sequence]]] = field(default_factory=dict)
    checks: dict[str, bool] = field(default_factory=dict)
    streams: list[str] = field(default_factory=list)
    complete: bool = True
    error: str | None = None
    wall_clock: float | None = None
    started: str = field(default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat())

    @property
    def config_hash(self) -> str:
        return config_hash(self.config)

    @property
    def passed(self) -> bool:
        return self.complete and all(self.checks.values())

    def content(self) -> dict:
        """Everything that must reproduce bit-for-bit (no timestamps)."""
        return _plain({
            "config": self.config,
            "config_hash": self.config_hash,
            "version": __version__,
            "reports": [r.to_json() for r in self.reports],
            "tables": {k: {"columns": c, "rows": [[fmt(v) if isinstance(v, float) else v
                                                    for v in row] for row in rows]}
                       for k, (c, rows) in sorted(self.tables.items())},
            "checks": dict(sorted(self.checks.items())),
            "rng_streams": list(self.streams),
            "complete": self.complete,
            "error": self.error,
        })

    def hash(self) -> str:
        return hashlib.sha256(canonical(self.content()).encode()).hexdigest()

    def to_json(self) -> dict:
        d = self.content()
        d["manifest_hash"] = self.hash()
        d["passed"] = self.passed
        d["wall_clock"] = self.wall_clock
        d["started"] = self.started
        return d

    @classmethod
    def from_json(cls, d: dict) -> "RunManifest":
        m = cls(config=d["config"], complete=d["complete"], error=d.get("error"),
                wall_clock=d.get("wall_clock"), started=d.get("started", ""))
        m.checks = dict(d["checks"])
        m.streams = list(d.get("rng_streams", []))
        for r in d["reports"]:
            m.reports.append(CertifiedReport(
                name=r["name"], value=r["value"], params=r["params"], errors=r["errors"],
                tolerance=r["tolerance"], passed=r["passed"], seed=r["seed"],
                extra=r.get("extra", {})))
        for k, t in d["tables"].items():
            m.tables[k] = (list(t["columns"]), [list(row) for row in t["rows"]])
        return m


def emit_report(manifest: RunManifest, out_dir: str, fmt_name: str = "json") -> list[str]:
    """Write the manifest as ``manifest.json`` or as a CSV bundle plus manifest."""
    if fmt_name not in ("json", "csv_bundle"):
        raise ValueError(f"unknown format {fmt_name!r}")
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise OSError(f"output path not writable: {out_dir}") from exc
    if not os.access(out_dir, os.W_OK):
        raise OSError(f"output path not writable: {out_dir}")
    paths = []
    p = os.path.join(out_dir, "manifest.json")
    with open(p, "w") as fh:
        json.dump(manifest.to_json(), fh, indent=1, sort_keys=True)
    paths.append(p)
    if fmt_name == "csv_bundle":
        for name, (cols, rows) in sorted(manifest.tables.items()):
            p = os.path.join(out_dir, f"{name}.csv")
            with open(p, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["config_hash"] + list(cols))
                for row in rows:
                    w.writerow([manifest.config_hash] +
                               [fmt(v) if isinstance(v, float) else v for v in row])
            paths.append(p)
    return paths


def load_manifest(path: str) -> RunManifest:
    with open(path) as fh:
        return RunManifest.from_json(json.load(fh))
