"""Command-line entry point.

    kahlerlab verify --suite kahler --grid torus2d:64
    kahlerlab distance --pair random --seed 7 --count 100
    kahlerlab flow --initial mode:1 --amplitude 0.05 --t-end 30
    kahlerlab geodesic --grid sphere:256 --seed 3
    kahlerlab equivalence --grid torus2d:64 --count 20

Settings come from an optional ``--config`` file of ``key = value`` lines;
flags given on the command line win.  Every command writes
``summary.json`` (the list of reports), ``summary.txt`` and data CSVs to
``--out``.

Exit codes: 0 all checks pass, 1 some check failed, 2 usage or
configuration error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import densities as dens
from . import kahler, krf, suites
from .fieldio import write_table
from .grid import GridError, GridSpec, SingularMetricError
from .report import Report, write_reports

COMMANDS = ("verify", "geodesic", "distance", "flow", "equivalence")
GRID_ALIASES = {"torus2d": "torus-2d", "torus4d": "torus-4d", "sphere": "sphere-axisym"}
RESOLUTION_RANGES = {"torus-2d": (16, 256), "torus-4d": (8, 16), "sphere-axisym": (64, 1024)}
DEFAULT_GRIDS = {
    "verify": "torus2d:64",
    "geodesic": "torus2d:64",
    "distance": "torus2d:64",
    "flow": "sphere:256",
    "equivalence": "torus2d:64",
}
SUITE_GRIDS = {"kahler": "torus2d:64", "ebin": "torus2d:32", "densities": "torus2d:64", "krf": "sphere:256"}


class ConfigError(ValueError):
    """Invalid configuration; maps to exit status 2."""


@dataclass
class RunConfig:
    command: str
    grid: str | None = None
    seed: int = 0
    tol: float | None = None
    out: str = "kahlerlab-out"
    suite: str = "kahler"
    pair: str = "random"
    count: int | None = None
    initial_mode: str = "mode:2"
    amplitude: float = 0.05
    t_end: float = 30.0
    dt0: float = 1e-3
    s_threshold: float = krf.S_SUP_THRESHOLD
    l1_threshold: float = krf.L1_RATE_THRESHOLD

    def grid_spec(self) -> GridSpec:
        default = SUITE_GRIDS[self.suite] if self.command == "verify" else DEFAULT_GRIDS[self.command]
        return parse_grid(self.grid or default)


_KEYS = {f.name for f in fields(RunConfig)}
_CONVERTERS = {"seed": int, "count": int, "tol": float, "amplitude": float, "t_end": float,
               "dt0": float, "s_threshold": float, "l1_threshold": float}


def parse_grid(text: str) -> GridSpec:
    """``torus2d:64`` / ``torus4d:12`` / ``sphere:256`` (canonical topology names also accepted)."""
    try:
        name, res = text.split(":")
        res = int(res)
    except ValueError as exc:
        raise ConfigError(f"bad grid {text!r}; expected e.g. torus2d:64") from exc
    topology = GRID_ALIASES.get(name, name)
    if topology not in RESOLUTION_RANGES:
        raise ConfigError(f"unknown manifold {name!r}")
    lo, hi = RESOLUTION_RANGES[topology]
    if not lo <= res <= hi:
        raise ConfigError(f"resolution {res} outside supported range {lo}-{hi} for {topology}")
    try:
        return GridSpec(topology, res)
    except GridError as exc:
        raise ConfigError(str(exc)) from exc


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment.  Unknown keys are rejected."""
    values = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value': {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}: {raw.strip()!r}")
        values[key] = _convert(key, value, f"{path}:{lineno}")
    return values


def _convert(key, value, where):
    conv = _CONVERTERS.get(key)
    if conv is None:
        return value
    try:
        return conv(value)
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value for {key}: {value!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kahlerlab", description=__doc__.split("\n\n")[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="file of key = value settings")
    p.add_argument("--grid", help="manifold:resolution, e.g. torus2d:64, torus4d:12, sphere:256")
    p.add_argument("--seed", type=int)
    p.add_argument("--tol", type=float, help="tolerance override for identity checks")
    p.add_argument("--out", help="output directory")
    p.add_argument("--suite", choices=sorted(suites.SUITES))
    p.add_argument("--pair", choices=("random", "bump"))
    p.add_argument("--count", type=int)
    p.add_argument("--initial", dest="initial_mode", help="mode:<l>, random or zero")
    p.add_argument("--amplitude", type=float)
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--dt0", type=float)
    return p


def config_from_args(argv) -> RunConfig:
    args = build_parser().parse_args(argv)
    values = read_config_file(args.config) if args.config else {}
    values.pop("command", None)
    for key, value in vars(args).items():
        if key in ("config", "command") or value is None:
            continue
        values[key] = value
    cfg = RunConfig(command=args.command, **values)
    if cfg.suite not in suites.SUITES:
        raise ConfigError(f"unknown suite {cfg.suite!r}")
    if cfg.pair not in ("random", "bump"):
        raise ConfigError(f"unknown pair kind {cfg.pair!r}")
    if cfg.count is not None and cfg.count < 1:
        raise ConfigError("count must be positive")
    if cfg.t_end <= 0 or cfg.dt0 <= 0:
        raise ConfigError("t_end and dt0 must be positive")
    cfg.grid_spec()
    return cfg


# ---------------------------------------------------------------------------
# Commands


def _verify(cfg: RunConfig, grid: GridSpec, out: Path) -> list[Report]:
    fn = suites.SUITES[cfg.suite]
    kwargs = {"seed": cfg.seed}
    if cfg.count is not None:
        kwargs["count"] = cfg.count
    if cfg.tol is not None:
        kwargs["tol"] = cfg.tol
    try:
        return fn(grid, **kwargs)
    except GridError as exc:
        raise ConfigError(str(exc)) from exc


def _geodesic(cfg: RunConfig, grid: GridSpec, out: Path) -> list[Report]:
    rng = np.random.default_rng(cfg.seed)
    mu1, mu2 = dens.random_density(grid, rng), dens.random_density(grid, rng)
    count = cfg.count or 65
    T = dens.geodesic_length(mu1, mu2)
    times = np.linspace(0.0, T, count)
    probes = np.linspace(0, grid.size - 1, 4).astype(int)
    cols = {"t": times}
    flat = [dens.calabi_geodesic(mu1, mu2, t).ratio.ravel() for t in times]
    for p in probes:
        cols[f"F_node{p}"] = np.array([f[p] for f in flat])
    speeds = []
    for t in times:
        v = dens.calabi_geodesic_velocity(mu1, mu2, t)
        speeds.append(np.sqrt(dens.gtilde_inner(dens.calabi_geodesic(mu1, mu2, t), v, v)))
    cols["speed"] = np.array(speeds)
    write_table(out / "geodesic.csv", cols)
    return dens.geodesic_checks(mu1, mu2, num=count if count % 2 else count + 1, tol=cfg.tol or 1e-8)


def _distance(cfg: RunConfig, grid: GridSpec, out: Path) -> list[Report]:
    reports = suites.pair_suite(grid, cfg.pair, cfg.seed, cfg.count or (100 if cfg.pair == "random" else 3))
    rows = [r for r in reports if r.check_name == "volume_form_equivalence"]
    write_table(out / "distances.csv", {
        "index": np.arange(len(rows)),
        "dV": [r.lhs for r in rows],
        "dtildeV": [r.rhs for r in rows],
        "ratio": [r.details["ratio"] for r in rows],
        "pass": [float(r.passed) for r in rows],
    })
    return reports


def _flow(cfg: RunConfig, grid: GridSpec, out: Path) -> list[Report]:
    if grid.topology != "sphere-axisym":
        raise ConfigError("flow runs on the sphere grid")
    try:
        phi0 = krf.initial_potential(grid, cfg.initial_mode, cfg.amplitude, cfg.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    traj = krf.krf_integrate(grid, phi0, cfg.t_end, cfg.dt0)
    write_table(out / "trajectory.csv", traj.table())
    conv = krf.convergence_report(traj, s_tol=cfg.s_threshold, l1_rate_tol=cfg.l1_threshold)
    vol_gap = float(np.max(np.abs(traj.volume - grid.volume)) / grid.volume)
    return [
        conv,
        krf.flow_length_report(traj, cfg.tol or krf.LENGTH_RTOL),
        Report("krf_volume_conservation", vol_gap, 0.0, 1e-8, 1e-8, vol_gap <= 1e-8),
    ]


def _equivalence(cfg: RunConfig, grid: GridSpec, out: Path) -> list[Report]:
    if not grid.is_torus:
        raise ConfigError("equivalence runs on a torus grid")
    rng = np.random.default_rng(cfg.seed)
    reports = []
    for j in range(cfg.count or 20):
        phi1 = kahler.random_potential(grid, rng)
        phi2 = kahler.random_potential(grid, rng)
        r = kahler.equivalence_chain_check(grid, phi1, phi2, tol=cfg.tol or 1e-8)
        r.details["pair"] = j
        reports.append(r)
    write_table(out / "equivalence.csv", {
        "index": np.arange(len(reports)),
        "dC": [r.details["dC"] for r in reports],
        "dtildeV": [r.details["dtildeV"] for r in reports],
        "ratio": [r.details["ratio"] for r in reports],
        "pass": [float(r.passed) for r in reports],
    })
    return reports


HANDLERS = {"verify": _verify, "geodesic": _geodesic, "distance": _distance,
            "flow": _flow, "equivalence": _equivalence}


def run(cfg: RunConfig) -> int:
    """Execute one command; returns the exit status."""
    grid = cfg.grid_spec()
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from exc
    reports = HANDLERS[cfg.command](cfg, grid, out)
    write_reports(out / "summary.json", reports)
    passed = sum(r.passed for r in reports)
    lines = [r.line() for r in reports]
    lines.append(f"{passed}/{len(reports)} checks passed")
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    return 0 if passed == len(reports) else 1


def main(argv=None) -> int:
    try:
        cfg = config_from_args(sys.argv[1:] if argv is None else argv)
        status = run(cfg)
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code or 0)
    except ConfigError as exc:
        print(f"kahlerlab: error: {exc}", file=sys.stderr)
        return 2
    except (SingularMetricError, FloatingPointError, RuntimeError) as exc:
        print(f"kahlerlab: numerical abort: {exc}", file=sys.stderr)
        return 3
    summary = Path(cfg.out) / "summary.txt"
    print(summary.read_text(), end="")
    return status


if __name__ == "__main__":
    sys.exit(main())
