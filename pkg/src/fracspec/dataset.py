"""Measurement-set files: the discrete source-to-solution map on disk.

A dataset is a single .npz with a JSON header (manifold, regions, grids,
source tags), per-record payloads (xi coefficients and the u|_W2 time
series), and a sealed JSON section holding the true exponents. The public
loader never reads the sealed section; the inversion consumes datasets
through it, which enforces the information barrier of the inverse problem.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

from .forward import TimeGrid

__all__ = [
    "MeasurementRecord",
    "MeasurementSet",
    "SCHEMA_VERSION",
    "load_measurement_set",
    "save_measurement_set",
]

SCHEMA_VERSION = 1


@dataclass
class MeasurementRecord:
    """One tagged source and its measured restriction to W2."""

    profile: str                 # "triangle" | "bump" | "bspline"
    t0: float
    xi: np.ndarray               # coefficients on the W1 sample basis
    series: np.ndarray           # (n_w2_nodes, n_t) complex
    horizon: float
    n_t: int

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.horizon, self.n_t)


@dataclass
class MeasurementSet:
    """All records plus the geometry metadata the inversion may use.

    True exponents are withheld (sealed in the file, absent here unless the
    sealed loader is used explicitly for benchmarking).
    """

    manifold_kind: str
    resolution: tuple
    w1_bounds: tuple
    w2_bounds: tuple
    records: list = field(default_factory=list)
    flags: dict = field(default_factory=dict)
    sealed: dict | None = None

    @property
    def dim(self) -> int:
        return {"t1": 1, "t2": 2, "t3": 3, "s2": 2}[self.manifold_kind]

    def by_profile(self, profile: str) -> list:
        return [r for r in self.records if r.profile == profile]


def save_measurement_set(path, ms: MeasurementSet, sealed: dict | None = None,
                         dtype=np.complex128) -> None:
    header = {
        "schema_version": SCHEMA_VERSION,
        "manifold_kind": ms.manifold_kind,
        "resolution": list(ms.resolution),
        "w1_bounds": [list(b) for b in ms.w1_bounds],
        "w2_bounds": [list(b) for b in ms.w2_bounds],
        "flags": ms.flags,
        "n_records": len(ms.records),
        "records": [
            {
                "profile": r.profile,
                "t0": r.t0,
                "horizon": r.horizon,
                "n_t": r.n_t,
            }
            for r in ms.records
        ],
        "units": {"time": "dimensionless", "length": "radians on the model manifold"},
    }
    arrays = {
        "header": np.frombuffer(json.dumps(header).encode(), dtype=np.uint8),
        "sealed": np.frombuffer(
            json.dumps(sealed if sealed is not None else {}).encode(), dtype=np.uint8
        ),
    }
    for i, r in enumerate(ms.records):
        arrays[f"rec{i}_xi"] = np.asarray(r.xi, dtype=np.complex128)
        arrays[f"rec{i}_series"] = np.asarray(r.series, dtype=dtype)
    with open(path, "wb") as fh:
        np.savez_compressed(fh, **arrays)


def load_measurement_set(path, with_sealed: bool = False) -> MeasurementSet:
    """Load a dataset; the sealed section is dropped unless explicitly
    requested (benchmark comparisons only, never inside the inversion)."""
    with np.load(path) as data:
        header = json.loads(bytes(data["header"].tobytes()).decode())
        if header.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported dataset schema {header.get('schema_version')}")
        records = []
        for i, meta in enumerate(header["records"]):
            records.append(
                MeasurementRecord(
                    profile=meta["profile"],
                    t0=float(meta["t0"]),
                    xi=np.asarray(data[f"rec{i}_xi"]),
                    series=np.asarray(data[f"rec{i}_series"], dtype=np.complex128),
                    horizon=float(meta["horizon"]),
                    n_t=int(meta["n_t"]),
                )
            )
        sealed = None
        if with_sealed:
            sealed = json.loads(bytes(data["sealed"].tobytes()).decode())
    return MeasurementSet(
        manifold_kind=header["manifold_kind"],
        resolution=tuple(header["resolution"]),
        w1_bounds=tuple(tuple(b) for b in header["w1_bounds"]),
        w2_bounds=tuple(tuple(b) for b in header["w2_bounds"]),
        records=records,
        flags=header.get("flags", {}),
        sealed=sealed,
    )
