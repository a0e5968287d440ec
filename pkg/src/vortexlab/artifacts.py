"""CSV/JSON writers and run manifests."""
from __future__ import annotations

import csv
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def _plain(obj):
    """Convert numpy containers and scalars to JSON-friendly Python objects."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def write_csv(path, header, columns):
    """Write equal-length columns; floats use a round-trip repr."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = [np.asarray(c).ravel() for c in columns]
    n = cols[0].size if cols else 0
    if any(c.size != n for c in cols):
        raise ValueError("columns of unequal length")
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def read_csv(path):
    with Path(path).open() as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in r] for r in body]) if body else np.zeros((0, len(header)))
    return header, data


@dataclass
class RunManifest:
    """Record of one subcommand run; written as manifest.json in its run directory
    and appended to the output root's manifests.jsonl."""

    subcommand: str
    scenario_hash: str
    run_dir: Path
    parameters: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    invariants: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    status: str = "running"
    exit_code: int | None = None
    message: str = ""
    notes: list = field(default_factory=list)
    _t0: float = field(default_factory=time.perf_counter)

    def add_output(self, path):
        rel = os.path.relpath(Path(path), self.run_dir)
        if rel not in self.outputs:
            self.outputs.append(rel)
        return path

    def as_dict(self):
        return {"subcommand": self.subcommand, "scenario_hash": self.scenario_hash,
                "parameters": self.parameters, "outputs": sorted(self.outputs),
                "invariants": self.invariants, "timings": self.timings, "status": self.status,
                "exit_code": self.exit_code, "message": self.message, "notes": self.notes,
                "run_dir": str(self.run_dir)}

    def finish(self, status, exit_code, message=""):
        self.status, self.exit_code, self.message = status, exit_code, message
        self.timings["wall_clock_s"] = time.perf_counter() - self._t0
        self.run_dir.mkdir(parents=True, exist_ok=True)
        write_json(self.run_dir / "manifest.json", self.as_dict())
        log = self.run_dir.parent / "manifests.jsonl"
        with log.open("a") as fh:
            fh.write(json.dumps(_plain(self.as_dict()), sort_keys=True) + "\n")
        return self
