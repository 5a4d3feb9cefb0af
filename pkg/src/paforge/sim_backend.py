"""Simulation backends producing P2dB (dBm) for design points.

Three backends share one ``evaluate(point) -> float`` interface:

* :class:`SyntheticPABackend` - closed-form behavioral PA model, used as the
  desk-scale oracle;
* :class:`CSVBackend` - replays a stored results table;
* :class:`CommandBackend` - runs an external program per point (or per batch)
  and reads the value from its stdout.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
import shlex
import subprocess
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .design_space import DesignPoint, DesignSpace, DesignSpaceError, encode, format_level

logger = logging.getLogger(__name__)

SIM_CMD_ENV = "PAFORGE_SIM_CMD"


class SimulationError(RuntimeError):
    """A batch failed; ``results`` holds what did complete."""

    def __init__(self, message: str, failures=None, results=None):
        super().__init__(message)
        self.failures = failures or []
        self.results = results or []


@dataclass(frozen=True)
class SimulationResult:
    point_id: int
    p2db_dbm: float

    def __post_init__(self):
        if not math.isfinite(self.p2db_dbm):
            raise SimulationError(f"non-finite P2dB for point {self.point_id}")


# --- synthetic model -------------------------------------------------------

REFERENCE = {"Vcc": 3.4, "Temp": 25.0, "VSWR": 1.0, "Freq": 5.0e9, "Phase": 90.0}
KNOWN_PARAMS = frozenset(REFERENCE) | {"Mode"}


@dataclass(frozen=True)
class SyntheticPAConfig:
    """Behavioral P2dB model.

    ``P0 + a(Vcc-3.4) + b(T-25) + c(VSWR-1)(1 + e(T-25))
    + r sin(2pi (f-5GHz)/2GHz) cos(phase) + mode_step * mode_index + noise``
    """

    noise_sigma_dbm: float = 0.1
    seed: int = 0
    p0: float = 28.0
    vcc_slope: float = 2.5
    temp_slope: float = -0.015
    vswr_slope: float = -0.8
    vswr_temp_coupling: float = 0.004
    ripple: float = 0.3
    mode_step: float = 0.25

    def __post_init__(self):
        if not self.noise_sigma_dbm >= 0:
            raise ValueError("noise_sigma_dbm must be >= 0")


def _mode_index(space: DesignSpace | None, value) -> int:
    if space is not None and "Mode" in space.names:
        return space.parameter("Mode").index_of(value)
    return int(float(value))


def synthetic_p2db(
    values: dict,
    config: SyntheticPAConfig = SyntheticPAConfig(),
    point_id: int | None = None,
    space: DesignSpace | None = None,
) -> float:
    """Evaluate the behavioral model for a ``{name: value}`` mapping.

    Missing parameters take reference values; noise is drawn from a stream
    keyed on ``(seed, point_id)`` so it does not depend on evaluation order.
    """
    unknown = set(values) - KNOWN_PARAMS
    if unknown:
        logger.warning("synthetic model ignores parameters: %s", ", ".join(sorted(unknown)))
    v = {**REFERENCE, **{k: float(x) for k, x in values.items() if k in REFERENCE}}
    dt = v["Temp"] - 25.0
    p = (
        config.p0
        + config.vcc_slope * (v["Vcc"] - 3.4)
        + config.temp_slope * dt
        + config.vswr_slope * (v["VSWR"] - 1.0) * (1.0 + config.vswr_temp_coupling * dt)
        + config.ripple
        * math.sin(2 * math.pi * (v["Freq"] - 5.0e9) / 2.0e9)
        * math.cos(v["Phase"] * math.pi / 180.0)
    )
    if "Mode" in values:
        p += config.mode_step * _mode_index(space, values["Mode"])
    if config.noise_sigma_dbm > 0:
        if point_id is None:
            raise ValueError("a point_id is needed to draw reproducible noise")
        rng = np.random.default_rng([config.seed, point_id])
        p += config.noise_sigma_dbm * rng.standard_normal()
    return p


class Backend:
    """Interface: ``evaluate`` one point, thread-safe."""

    name = "backend"
    deterministic = True

    def evaluate(self, point: DesignPoint) -> float:
        raise NotImplementedError

    def evaluate_batch(self, points: Sequence[DesignPoint]) -> list[float] | None:
        """Optional whole-batch path; ``None`` means evaluate per point."""
        return None


class SyntheticPABackend(Backend):
    name = "synthetic"

    def __init__(self, space: DesignSpace, config: SyntheticPAConfig = SyntheticPAConfig()):
        self.space = space
        self.config = config
        unknown = set(space.names) - KNOWN_PARAMS
        if unknown:
            logger.warning("synthetic model ignores parameters: %s", ", ".join(sorted(unknown)))
        self._names = [n for n in space.names if n in KNOWN_PARAMS]

    def evaluate(self, point: DesignPoint) -> float:
        named = dict(zip(self.space.names, point.values))
        return synthetic_p2db({k: named[k] for k in self._names}, self.config, point.point_id, self.space)


class CSVBackend(Backend):
    """Replay of a results CSV; a missing point is an error."""

    name = "csv"

    def __init__(self, space: DesignSpace, text: str, source: str = "<csv>"):
        self.space = space
        self.source = source
        self.table = {r.point_id: r.p2db_dbm for r in results_from_csv(space, text)}

    @classmethod
    def from_path(cls, space: DesignSpace, path) -> "CSVBackend":
        with open(path, encoding="utf-8") as fh:
            return cls(space, fh.read(), str(path))

    def evaluate(self, point: DesignPoint) -> float:
        try:
            return self.table[point.point_id]
        except KeyError:
            raise SimulationError(f"{self.source} has no result for point_id {point.point_id}") from None


class CommandBackend(Backend):
    """External simulator bridge.

    Per-point mode runs ``<cmd> --param NAME=VALUE ...`` and reads the first
    stdout token as P2dB in dBm. Batch mode runs ``<cmd> --batch`` once with a
    ``point_id,<names>`` CSV on stdin and expects ``point_id,p2db`` lines.
    """

    name = "command"
    deterministic = False

    def __init__(self, space: DesignSpace, command: str | None = None, batch: bool = False, timeout: float | None = None):
        command = command or os.environ.get(SIM_CMD_ENV)
        if not command:
            raise SimulationError(f"no simulator command given and {SIM_CMD_ENV} is unset")
        self.space = space
        self.argv = shlex.split(command)
        self.batch = batch
        self.timeout = timeout

    def _args(self, point: DesignPoint) -> list[str]:
        args = []
        for p, v in zip(self.space.parameters, point.values):
            args += ["--param", f"{p.name}={format_level(p, v)}"]
        return args

    def evaluate(self, point: DesignPoint) -> float:
        proc = subprocess.run(
            self.argv + self._args(point), capture_output=True, text=True, timeout=self.timeout
        )
        if proc.returncode != 0:
            raise SimulationError(f"exit status {proc.returncode}: {proc.stderr.strip()[:200]}")
        toks = proc.stdout.split()
        try:
            value = float(toks[0])
        except (IndexError, ValueError):
            raise SimulationError(f"unparseable simulator output {proc.stdout[:80]!r}") from None
        if not math.isfinite(value):
            raise SimulationError(f"non-finite simulator output {toks[0]!r}")
        return value

    def evaluate_batch(self, points):
        if not self.batch:
            return None
        stdin = samples_csv(self.space, points)
        proc = subprocess.run(
            self.argv + ["--batch"], input=stdin, capture_output=True, text=True, timeout=self.timeout
        )
        if proc.returncode != 0:
            raise SimulationError(f"batch exit status {proc.returncode}: {proc.stderr.strip()[:200]}")
        got = {}
        for line in proc.stdout.splitlines():
            line = line.strip()
            if not line:
                continue
            try:
                pid, val = line.replace(",", " ").split()[:2]
                got[int(pid)] = float(val)
            except ValueError:
                raise SimulationError(f"unparseable batch line {line!r}") from None
        missing = [p.point_id for p in points if p.point_id not in got]
        if missing:
            raise SimulationError(f"batch output lacks point_ids {missing[:10]}")
        return [got[p.point_id] for p in points]


def samples_csv(space: DesignSpace, points: Sequence[DesignPoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["point_id", *space.names])
    for pt in points:
        w.writerow([pt.point_id, *(format_level(p, v) for p, v in zip(space.parameters, pt.values))])
    return buf.getvalue()


class CountingBackend(Backend):
    """Wraps a backend and counts ``evaluate`` calls."""

    def __init__(self, inner: Backend):
        self.inner = inner
        self.name = f"counting({inner.name})"
        self.deterministic = inner.deterministic
        self.calls = 0
        self._lock = threading.Lock()

    def evaluate(self, point):
        with self._lock:
            self.calls += 1
        return self.inner.evaluate(point)


@dataclass
class PointFailure:
    point_id: int
    attempts: int
    error: str


def simulate_batch(
    backend: Backend,
    points: Sequence[DesignPoint],
    workers: int | None = None,
    retries: int = 2,
) -> list[SimulationResult]:
    """One result per point, sorted by point_id.

    Failing points are retried up to ``retries`` times; if any still fail, a
    :class:`SimulationError` carries the per-point failure log and the
    partial results.
    """
    points = list(points)
    ids = [p.point_id for p in points]
    if len(set(ids)) != len(ids):
        raise SimulationError("duplicate point_ids in simulation request")
    if not points:
        return []

    batch = backend.evaluate_batch(points)
    if batch is not None:
        return sorted((SimulationResult(p.point_id, float(v)) for p, v in zip(points, batch)), key=lambda r: r.point_id)

    def run(point):
        last = None
        for attempt in range(1, retries + 2):
            try:
                return SimulationResult(point.point_id, float(backend.evaluate(point))), None
            except (SimulationError, OSError, subprocess.SubprocessError) as exc:
                last = exc
                logger.warning("point %d attempt %d failed: %s", point.point_id, attempt, exc)
        return None, PointFailure(point.point_id, retries + 1, str(last))

    workers = workers or os.cpu_count() or 1
    if workers > 1 and len(points) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run, points))
    else:
        outcomes = [run(p) for p in points]

    results = sorted((r for r, _ in outcomes if r is not None), key=lambda r: r.point_id)
    failures = sorted((f for _, f in outcomes if f is not None), key=lambda f: f.point_id)
    if failures:
        raise SimulationError(
            f"{len(failures)} of {len(points)} points failed", failures=failures, results=results
        )
    return results


def make_backend(spec: str, space: DesignSpace, noise_seed: int = 0, noise_sigma: float = 0.1) -> Backend:
    """Build a backend from ``synthetic``, ``csv:<path>``, ``command:<cmd>``
    or ``command-batch:<cmd>``."""
    if spec == "synthetic":
        return SyntheticPABackend(space, SyntheticPAConfig(noise_sigma_dbm=noise_sigma, seed=noise_seed))
    kind, _, arg = spec.partition(":")
    if kind == "csv" and arg:
        return CSVBackend.from_path(space, arg)
    if kind in ("command", "command-batch"):
        return CommandBackend(space, arg or None, batch=kind == "command-batch")
    raise ValueError(f"unknown backend spec {spec!r}")


# --- results CSV -------------------------------------------------------------

def results_to_csv(space: DesignSpace, results: Sequence[SimulationResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["point_id", *space.names, "p2db_dbm"])
    for r in sorted(results, key=lambda r: r.point_id):
        pt = space.point(r.point_id)
        w.writerow([r.point_id, *(format_level(p, v) for p, v in zip(space.parameters, pt.values)), repr(float(r.p2db_dbm))])
    return buf.getvalue()


def results_from_csv(space: DesignSpace, text: str) -> list[SimulationResult]:
    rows = list(csv.reader(io.StringIO(text)))
    expected = ["point_id", *space.names, "p2db_dbm"]
    if not rows or rows[0] != expected:
        raise SimulationError(f"results CSV header must be {','.join(expected)}")
    out = []
    seen = set()
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            pid = int(row[0])
            if encode(space, row[1:-1]) != pid:
                raise SimulationError(f"line {lineno}: parameter values do not match point_id {pid}")
            value = float(row[-1])
        except (ValueError, DesignSpaceError) as exc:
            raise SimulationError(f"line {lineno}: {exc}") from None
        if pid in seen:
            raise SimulationError(f"line {lineno}: duplicate point_id {pid}")
        seen.add(pid)
        out.append(SimulationResult(pid, value))
    return sorted(out, key=lambda r: r.point_id)
