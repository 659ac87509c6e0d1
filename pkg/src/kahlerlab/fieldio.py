"""CSV + JSON-sidecar storage for sampled fields and metric paths.

A field file ``name.csv`` holds one row per node: the node coordinates
followed by the field values, written with 17 significant digits so that
doubles round-trip exactly.  ``name.json`` records the grid.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .grid import CONVENTION_VERSION, GridSpec

_FMT = "{:.17g}"


def _coordinate_names(grid: GridSpec) -> list[str]:
    if grid.topology == "sphere-axisym":
        return ["theta"]
    return [f"x{i + 1}" for i in range(grid.real_dim)]


def _value_names(trailing: tuple[int, ...]) -> list[str]:
    if not trailing:
        return ["value"]
    if len(trailing) == 2:
        return [f"g{i}{j}" for i in range(trailing[0]) for j in range(trailing[1])]
    raise ValueError(f"unsupported field shape suffix {trailing}")


def grid_metadata(grid: GridSpec) -> dict:
    return {
        "topology": grid.topology,
        "resolution": grid.resolution,
        "convention_version": CONVENTION_VERSION,
    }


def grid_from_metadata(meta: dict) -> GridSpec:
    if meta.get("convention_version") != CONVENTION_VERSION:
        raise ValueError(f"unsupported convention_version {meta.get('convention_version')!r}")
    return GridSpec(meta["topology"], meta["resolution"])


def write_field(path, grid: GridSpec, values, extra_meta: dict | None = None) -> Path:
    """Write a scalar or tensor field to ``path`` (.csv) and its .json sidecar."""
    path = Path(path).with_suffix(".csv")
    values = np.asarray(values, dtype=float)
    trailing = values.shape[len(grid.shape):]
    if values.shape[: len(grid.shape)] != grid.shape:
        raise ValueError("field does not match grid")
    coords = np.stack([c.ravel() for c in grid.coordinates], axis=1)
    flat = values.reshape(grid.size, -1)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_coordinate_names(grid) + _value_names(trailing))
        for c, v in zip(coords, flat):
            w.writerow([_FMT.format(x) for x in c] + [_FMT.format(x) for x in v])
    meta = grid_metadata(grid)
    meta["value_shape"] = list(trailing)
    if extra_meta:
        meta.update(extra_meta)
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def read_field(path) -> tuple[GridSpec, np.ndarray]:
    """Inverse of :func:`write_field`."""
    path = Path(path).with_suffix(".csv")
    meta = json.loads(path.with_suffix(".json").read_text())
    grid = grid_from_metadata(meta)
    trailing = tuple(meta.get("value_shape", []))
    ncoord = len(grid.coordinates)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    data = np.array([[float(x) for x in row] for row in rows[1:]])
    if data.shape[0] != grid.size:
        raise ValueError(f"expected {grid.size} rows, found {data.shape[0]}")
    return grid, data[:, ncoord:].reshape(grid.shape + trailing)


def write_metric_path(directory, path, generator: str) -> Path:
    """Export a :class:`~kahlerlab.ebin.MetricPath`: one CSV per time sample."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for j, g in enumerate(path.metrics):
        name = f"metric_{j:05d}.csv"
        write_field(directory / name, path.grid, g)
        files.append(name)
    manifest = {
        "times": [float(t) for t in path.times],
        "grid": grid_metadata(path.grid),
        "generator": generator,
        "files": files,
    }
    out = directory / "manifest.json"
    out.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out


def read_metric_path(directory):
    from .ebin import MetricPath

    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    grid = grid_from_metadata(manifest["grid"])
    metrics = np.stack([read_field(directory / f)[1] for f in manifest["files"]])
    return MetricPath(grid, np.asarray(manifest["times"]), metrics)


def write_table(path, columns: dict[str, np.ndarray]) -> Path:
    """Write named equal-length columns as CSV with 17-digit floats."""
    path = Path(path)
    names = list(columns)
    cols = [np.asarray(columns[k], dtype=float).ravel() for k in names]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([_FMT.format(x) for x in row])
    return path
