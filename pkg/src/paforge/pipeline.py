"""End-to-end run: sample -> simulate -> train -> cross-validate -> predict -> rank.

Every stage is a plain function so the CLI subcommands and the one-shot
pipeline share code paths; composing the subcommands with the same master
seed reproduces the pipeline artifacts byte for byte.

Seed derivation from the master seed ``s``: sampler ``s+1``, simulator noise
``s+2``, CV folds ``s+3``, model ``s+4``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import platform
import tempfile
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .design_space import (
    DesignSpace,
    DesignSpaceError,
    encode_indices,
    format_level,
    level_indices,
    load_space,
    parse_space,
    serialize_space,
)
from .features import Dataset, build_features, dataset_to_csv
from .ranking import TargetSpec, assemble_report, meet_probability, predict_full_space, top_n
from .regressor import BoostConfig, BoostedModel, fit, save_model
from .sampler import SamplerConfig, draw_samples, sample_count, samples_to_csv
from .sim_backend import Backend, SimulationResult, make_backend, results_to_csv, simulate_batch
from .validation import CVReport, cross_validate

logger = logging.getLogger(__name__)

MANIFEST_VERSION = "paforge-manifest v1"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def derive_seeds(master: int) -> dict[str, int]:
    return {"sampler": master + 1, "noise": master + 2, "folds": master + 3, "model": master + 4}


@dataclass
class PipelineConfig:
    space: str
    backend: str = "synthetic"
    fraction: float = 0.35
    sampler: str = "maxmin"
    iterations: int = 100
    depth: int = 2
    learning_rate: float = 0.5
    l2: float = 2.0
    k: int = 5
    target: float = 28.0
    tolerance: float = 0.4
    seed: int = 0
    out: str = "paforge-run"
    workers: int | None = None
    mode_column: str | None = None
    sample_scope: str = "global"
    noise_sigma: float = 0.1
    top: int | None = None

    def boost_config(self) -> BoostConfig:
        return BoostConfig(
            iterations=self.iterations,
            depth=self.depth,
            learning_rate=self.learning_rate,
            l2_leaf_reg=self.l2,
            seed=derive_seeds(self.seed)["model"],
        )

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(fraction=self.fraction, seed=derive_seeds(self.seed)["sampler"])

    def spec(self) -> TargetSpec:
        return TargetSpec(self.target, self.tolerance)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**d)


# --- small helpers ---------------------------------------------------------

def write_atomic(path, data) -> str:
    """Write via a temp file in the same directory and rename; returns sha256."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    raw = data.encode("utf-8") if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(raw)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return hashlib.sha256(raw).hexdigest()


def _with_mode(space: DesignSpace, mode_column: str | None):
    if mode_column is None:
        return None
    try:
        return space.index(mode_column)
    except ValueError:
        raise ConfigError(f"--mode-column {mode_column!r} is not a parameter of the space") from None


# --- stages ------------------------------------------------------------------

def stage_sample(space: DesignSpace, config: PipelineConfig) -> np.ndarray:
    """Grid ids to simulate. Per-mode scope samples each mode level's
    sub-grid separately with the same fraction."""
    scfg = config.sampler_config()
    if config.sampler not in ("maxmin", "random"):
        raise ConfigError(f"unknown sampler {config.sampler!r}")
    mode_pos = _with_mode(space, config.mode_column)
    if mode_pos is None or config.sample_scope == "global":
        n = sample_count(space.size, config.fraction, config.k, space.dim)
        return draw_samples(space, n, config.sampler, scfg).grid_ids
    if config.sample_scope != "per-mode":
        raise ConfigError(f"unknown sample scope {config.sample_scope!r}")
    params = list(space.parameters)
    mode_param = params.pop(mode_pos)
    if not params:
        raise ConfigError("per-mode sampling needs at least one parameter besides the mode column")
    sub = DesignSpace(tuple(params))
    n = sample_count(sub.size, config.fraction, config.k, sub.dim)
    ids = []
    for level in range(mode_param.n_levels):
        cfg = SamplerConfig(fraction=scfg.fraction, seed=scfg.seed + 1000 * level)
        sub_ids = draw_samples(sub, n, config.sampler, cfg).grid_ids
        idx = level_indices(sub, sub_ids)
        full = np.insert(idx, mode_pos, level, axis=1)
        ids.append(encode_indices(space, full))
    return np.sort(np.concatenate(ids))


def stage_simulate(space: DesignSpace, ids, backend: Backend, workers=None) -> list[SimulationResult]:
    return simulate_batch(backend, space.points(ids), workers=workers)


def partition_by_mode(space: DesignSpace, dataset: Dataset, mode_column: str | None) -> dict[str | None, Dataset]:
    pos = _with_mode(space, mode_column)
    if pos is None:
        return {None: dataset}
    param = space.parameters[pos]
    col = dataset.X[:, pos]
    out = {}
    for i, level in enumerate(param.levels):
        value = i if param.is_categorical else level
        rows = np.flatnonzero(col == value)
        if rows.size:
            sub = dataset.subset(rows)
            sub.mode = str(level)
            out[str(level)] = sub
    return out


def stage_train(dataset: Dataset, config: BoostConfig) -> BoostedModel:
    return fit(dataset, config)


def stage_cv(dataset: Dataset, config: BoostConfig, k: int, fold_seed: int) -> CVReport:
    k_eff = min(k, len(dataset))
    if k_eff < 2:
        raise ConfigError(f"cross-validation needs at least 2 rows, got {len(dataset)}")
    return cross_validate(dataset, config, k_eff, fold_seed)


def stage_rank(space: DesignSpace, models: dict, residual_pools: dict, simulated_ids, spec: TargetSpec,
               mode_column: str | None = None, metadata=None):
    """Predict the whole grid (per-mode models route by the mode column)
    and assemble the ranked report."""
    ids = np.arange(space.size, dtype=np.int64)
    pred = np.empty(space.size)
    lo = np.empty(space.size)
    hi = np.empty(space.size)
    pm = np.empty(space.size)
    pos = _with_mode(space, mode_column)
    if pos is None:
        groups = {None: ids}
    else:
        lv = level_indices(space, ids)[:, pos]
        param = space.parameters[pos]
        groups = {str(param.levels[i]): ids[lv == i] for i in range(param.n_levels)}
    full = {key: predict_full_space(m, space) for key, m in models.items()}
    for key, rows in groups.items():
        if key not in models:
            raise StageError("rank", ValueError(f"no model trained for mode {key!r}"))
        res = np.asarray(residual_pools.get(key, []), dtype=float)
        p = full[key][rows]
        if res.size:
            q_low, q_high = (float(q) for q in np.quantile(res, [0.025, 0.975]))
        else:
            q_low = q_high = 0.0
        pred[rows] = p
        lo[rows] = p + min(q_low, 0.0)
        hi[rows] = p + max(q_high, 0.0)
        pm[rows] = meet_probability(p, res, spec.target_p2db_dbm)
    sim = np.isin(ids, np.asarray(simulated_ids, dtype=np.int64))
    return assemble_report(ids, pred, lo, hi, pm, sim, spec, metadata), pred


def predictions_csv(space: DesignSpace, pred: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["point_id", *space.names, "predicted_p2db_dbm"])
    for pt, p in zip(space.points(range(space.size)), pred):
        w.writerow([pt.point_id, *(format_level(q, v) for q, v in zip(space.parameters, pt.values)), repr(float(p))])
    return buf.getvalue()


def _suffix(key: str | None) -> str:
    return "" if key is None else f"_{key}"


# --- orchestration ---------------------------------------------------------------

def validate_config(config: PipelineConfig, backend: Backend | None = None):
    """Resolve paths and build the space/backend before any long stage."""
    try:
        space = load_space(config.space) if not config.space.startswith("inline:") else parse_space(config.space[7:])
    except OSError as exc:
        raise ConfigError(f"cannot read space file {config.space!r}: {exc}") from None
    except DesignSpaceError as exc:
        raise ConfigError(f"invalid space file {config.space!r}: {exc}") from None
    if not 0 < config.fraction <= 1:
        raise ConfigError("--fraction must be in (0, 1]")
    if config.k < 2:
        raise ConfigError("--k must be >= 2")
    if config.sampler not in ("maxmin", "random"):
        raise ConfigError(f"unknown sampler {config.sampler!r}")
    if config.sample_scope not in ("global", "per-mode"):
        raise ConfigError(f"unknown sample scope {config.sample_scope!r}")
    _with_mode(space, config.mode_column)
    try:
        config.boost_config()
        config.spec()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if backend is None:
        try:
            backend = make_backend(config.backend, space, derive_seeds(config.seed)["noise"], config.noise_sigma)
        except (OSError, ValueError, RuntimeError) as exc:
            raise ConfigError(f"backend {config.backend!r}: {exc}") from None
    out = Path(config.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None
    return space, backend, out


def run_pipeline(config: PipelineConfig, backend: Backend | None = None) -> dict:
    """Run every stage, writing artifacts into ``config.out``; returns the manifest.

    Raises :class:`ConfigError` before any work for bad configuration and
    :class:`StageError` (after writing a partial manifest) when a stage fails.
    """
    space, backend, out = validate_config(config, backend)
    seeds = derive_seeds(config.seed)
    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "config": asdict(config),
        "seeds": seeds,
        "space_text": serialize_space(space),
        "versions": {"paforge": __version__, "python": platform.python_version(), "numpy": np.__version__},
        "stages": {},
        "artifacts": {},
        "metrics": {},
        "status": "running",
    }
    boost = config.boost_config()

    def artifact(name, data):
        manifest["artifacts"][name] = write_atomic(out / name, data)

    def stage(name, fn):
        t0 = time.perf_counter()
        try:
            result = fn()
        except Exception as exc:
            manifest["stages"][name] = round(time.perf_counter() - t0, 6)
            manifest["status"] = "failed"
            manifest["failed_stage"] = name
            manifest["error"] = str(exc)
            failures = getattr(exc, "failures", ())
            if failures:
                manifest["failures"] = [
                    {"point_id": f.point_id, "attempts": f.attempts, "error": f.error} for f in failures
                ]
            write_atomic(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
            if isinstance(exc, StageError):
                raise
            raise StageError(name, exc) from exc
        manifest["stages"][name] = round(time.perf_counter() - t0, 6)
        return result

    ids = stage("sample", lambda: stage_sample(space, config))
    artifact("samples.csv", samples_to_csv(space, ids))

    results = stage("simulate", lambda: stage_simulate(space, ids, backend, config.workers))
    artifact("results.csv", results_to_csv(space, results))

    dataset = build_features(space, results)
    artifact("dataset.csv", dataset_to_csv(dataset))
    parts = partition_by_mode(space, dataset, config.mode_column)

    models = stage("train", lambda: {key: stage_train(ds, boost) for key, ds in parts.items()})
    for key, m in models.items():
        artifact(f"model{_suffix(key)}.txt", save_model(m))

    reports = stage("cv", lambda: {key: stage_cv(ds, boost, config.k, seeds["folds"]) for key, ds in parts.items()})
    for key, rep in reports.items():
        artifact(f"cv_folds{_suffix(key)}.csv", rep.folds_csv())
        artifact(f"cv_residuals{_suffix(key)}.csv", rep.residuals_csv())
        artifact(f"cv_summary{_suffix(key)}.json", rep.summary_json())

    pools = {key: rep.residual_pool for key, rep in reports.items()}
    report, pred = stage(
        "rank", lambda: stage_rank(space, models, pools, ids, config.spec(), config.mode_column)
    )
    artifact("predictions.csv", predictions_csv(space, pred))
    artifact("ranked.csv", report.to_csv(space))
    if config.top is not None:
        artifact("ranked_top.csv", top_n(report, config.top).to_csv(space))

    manifest["metrics"] = {
        "space_size": space.size,
        "simulated": int(len(results)),
        "cv": {str(key) if key is not None else "all": rep.summary() for key, rep in reports.items()},
        "importances": {
            str(key) if key is not None else "all": dict(zip(m.schema.names, map(float, m.importances)))
            for key, m in models.items()
        },
    }
    manifest["status"] = "ok"
    write_atomic(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def config_from_manifest(path, out: str | None = None) -> PipelineConfig:
    """Rebuild the run config; the embedded space text replaces the path."""
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("manifest_version") != MANIFEST_VERSION:
        raise ConfigError(f"unsupported manifest version {manifest.get('manifest_version')!r}")
    cfg = dict(manifest["config"])
    cfg["space"] = "inline:" + manifest["space_text"]
    if out is not None:
        cfg["out"] = out
    return PipelineConfig.from_dict(cfg)
