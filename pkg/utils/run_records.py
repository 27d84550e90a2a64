"""Run configuration, result records and their CSV/JSON writers."""

import csv
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from utils.errors import ConfigError
from utils.sos_engine import component_labels

METHODS = ("sos", "dl", "both")
TOPOLOGIES = ("3star", "4star", "3wire")


@dataclass
class RunConfig:
    graph_path: str = None
    topology: str = None
    method: str = "both"
    modes: int = 30
    grid: int = 2001
    rotate_edge: int = None
    sweep_start: float = 0.0
    sweep_stop: float = 360.0
    steps: int = 73
    samples: int = 1000
    seed: int = 42
    length_range: tuple = (0.1, 1.0)
    angle_range: tuple = (0.0, 360.0)
    audit_samples: int = 0
    workers: int = 1
    bench_modes: tuple = (10, 20, 30, 40, 50)
    repeats: int = 5
    out: str = None
    dump_fields: str = None

    def validate(self):
        if self.method not in METHODS:
            raise ConfigError(f"Unknown method '{self.method}', expected one of {METHODS}")
        if self.modes < 2:
            raise ConfigError(f"--modes must be at least 2, got {self.modes}")
        if self.grid < 3 or self.grid % 2 == 0:
            raise ConfigError(f"--grid must be odd and at least 3, got {self.grid}")
        if self.steps < 1:
            raise ConfigError(f"Sweep needs at least one step, got {self.steps}")
        if self.samples < 1:
            raise ConfigError(f"Monte Carlo needs at least one sample, got {self.samples}")
        if self.topology is not None and self.topology not in TOPOLOGIES:
            raise ConfigError(f"Unknown topology '{self.topology}', expected one of {TOPOLOGIES}")
        low, high = self.length_range
        if not 0.0 < low <= high:
            raise ConfigError(f"Length range must satisfy 0 < low <= high, got {self.length_range}")
        if self.workers < 1:
            raise ConfigError(f"Worker count must be positive, got {self.workers}")
        if self.repeats < 1:
            raise ConfigError(f"Benchmark repeats must be positive, got {self.repeats}")
        return self

    def to_dict(self):
        return asdict(self)


@dataclass
class RunResult:
    graph: dict
    method: str
    modes: int
    E0: float = None
    E1: float = None
    raw: dict = field(default_factory=dict)
    intrinsic: dict = field(default_factory=dict)
    trk_residual: float = None
    dl_diagnostics: dict = field(default_factory=dict)
    deviations: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    beta_vanishes: bool = False
    parameters: dict = field(default_factory=dict)
    error: str = None
    fields: dict = field(default=None, repr=False)
    ground: object = field(default=None, repr=False)

    @property
    def flagged(self):
        return bool(self.flags)

    def to_dict(self):
        record = {
            "graph": self.graph,
            "method": self.method,
            "modes": self.modes,
            "parameters": self.parameters,
            "E0": self.E0,
            "E1": self.E1,
            "raw": {m: t.components() for m, t in self.raw.items()},
            "intrinsic": {m: t.components() for m, t in self.intrinsic.items()},
            "trk_residual": self.trk_residual,
            "dl_diagnostics": self.dl_diagnostics,
            "deviations": self.deviations,
            "timings": self.timings,
            "flags": self.flags,
            "beta_vanishes": self.beta_vanishes,
        }
        if self.error:
            record["error"] = self.error
        return record

    def csv_row(self, methods):
        """Parameters, flags and intrinsic components; timings never go into rows."""
        row = dict(self.parameters)
        row["E0"] = self.E0
        row["E1"] = self.E1
        row["flags"] = ";".join(self.flags)
        row["error"] = self.error or ""
        for method in methods:
            values = self.intrinsic[method].components() if method in self.intrinsic else {}
            for name in tensor_columns():
                row[f"{method}_{name}"] = values.get(name, "")
        return row


def tensor_columns():
    return [f"beta_{c}" for c in component_labels(3)] + [f"gamma_{c}" for c in component_labels(4)]


def methods_of(method):
    return ("sos", "dl") if method == "both" else (method,)


def _ensure_parent(path):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return value


def write_json(path, document):
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8") as outfile:
        json.dump(_jsonable(document), outfile, indent=4)


def write_csv(path, rows, fieldnames=None):
    _ensure_parent(path)
    if fieldnames is None:
        fieldnames = list(rows[0].keys()) if rows else []
    with open(path, "w", newline="", encoding="utf-8") as outfile:
        writer = csv.DictWriter(outfile, fieldnames=fieldnames, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _format(v) for k, v in row.items()})


def _format(value):
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float):
        return repr(value)
    return value


def write_results_csv(path, results, method, parameter_names):
    methods = methods_of(method)
    fieldnames = list(parameter_names) + ["E0", "E1", "flags", "error"]
    fieldnames += [f"{m}_{name}" for m in methods for name in tensor_columns()]
    write_csv(path, [r.csv_row(methods) for r in results], fieldnames)


def write_field_dump(directory, graph, ground, fields):
    """One CSV per graph with every DL field sampled along each edge."""
    os.makedirs(directory, exist_ok=True)
    labels = sorted(fields)
    path = os.path.join(directory, f"{graph.name}_fields.csv")
    rows = []
    for edge in graph.edges:
        s, x, y = graph.coordinate_samples(edge.id, ground.n_points)
        psi = ground.psi(edge.id)
        for i in range(len(s)):
            row = {"edge": edge.id, "s": s[i], "x": x[i], "y": y[i], "psi0": psi[i]}
            for label in labels:
                row[label] = fields[label].values[edge.id][i]
            rows.append(row)
    write_csv(path, rows, ["edge", "s", "x", "y", "psi0"] + labels)
    return path
