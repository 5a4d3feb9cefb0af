"""Regression metrics, target-stratified k-fold cross-validation and the
MaxMin-vs-random sampler benchmark."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .design_space import DesignSpace
from .features import Dataset, build_features, feature_matrix
from .regressor import BoostConfig, fit, predict
from .sampler import SamplerConfig, draw_samples, sample_count
from .sim_backend import Backend, simulate_batch

CI_LOW_Q, CI_HIGH_Q = 0.025, 0.975


@dataclass
class Metrics:
    r2: float
    rmse_dbm: float
    mae_dbm: float
    n: int
    residuals: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"r2": _json_float(self.r2), "rmse_dbm": self.rmse_dbm, "mae_dbm": self.mae_dbm, "n": self.n}


def _json_float(v: float):
    return None if v is None or not math.isfinite(v) else v


def compute_metrics(truth, pred, point_ids=None) -> Metrics:
    """R^2 = 1 - SSE/SST (NaN when the truth has no variance or n < 2),
    RMSE and MAE of ``truth - pred``."""
    y = np.asarray(truth, dtype=float)
    p = np.asarray(pred, dtype=float)
    if y.shape != p.shape:
        raise ValueError(f"length mismatch: {y.size} truths vs {p.size} predictions")
    if y.size == 0:
        raise ValueError("metrics need at least one value")
    res = y - p
    sse = float(np.sum(res * res))
    sst = float(np.sum((y - y.mean()) ** 2)) if y.size >= 2 else 0.0
    r2 = 1.0 - sse / sst if sst > 0 else math.nan
    ids = range(y.size) if point_ids is None else (int(i) for i in point_ids)
    return Metrics(
        r2=r2,
        rmse_dbm=math.sqrt(sse / y.size),
        mae_dbm=float(np.mean(np.abs(res))),
        n=int(y.size),
        residuals=list(zip(ids, res.tolist())),
    )


def kfold_stratified(targets, k: int = 5, seed: int | None = 0) -> np.ndarray:
    """Fold index per row.

    Rows are binned by target deciles (ties can merge bins); within each bin
    rows are shuffled and dealt round-robin, the dealing position carrying
    over from one bin to the next.
    """
    y = np.asarray(targets, dtype=float)
    n = y.size
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > n:
        raise ValueError(f"k={k} exceeds dataset size {n}")
    edges = np.unique(np.quantile(y, np.linspace(0.1, 0.9, 9)))
    strata = np.searchsorted(edges, y, side="right")
    rng = np.random.default_rng(seed)
    folds = np.empty(n, dtype=np.int64)
    pos = 0
    for s in np.unique(strata):
        rows = rng.permutation(np.flatnonzero(strata == s))
        folds[rows] = (pos + np.arange(rows.size)) % k
        pos += rows.size
    return folds


@dataclass
class CVReport:
    k: int
    folds: list
    pooled: Metrics
    q_low: float
    q_high: float
    fold_of: np.ndarray | None = None

    @property
    def residual_pool(self) -> np.ndarray:
        return np.array([r for _, r in self.pooled.residuals], dtype=float)

    def folds_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["fold", "r2", "rmse_dbm", "mae_dbm", "n"])
        for i, m in enumerate(self.folds):
            w.writerow([i, repr(m.r2), repr(m.rmse_dbm), repr(m.mae_dbm), m.n])
        return buf.getvalue()

    def residuals_csv(self) -> str:
        return residuals_to_csv(self.pooled.residuals)

    def summary(self) -> dict:
        return {
            "k": self.k,
            "pooled": self.pooled.as_dict(),
            "mean_residual_dbm": float(np.mean(self.residual_pool)) if self.pooled.n else None,
            "residual_quantiles": {str(CI_LOW_Q): self.q_low, str(CI_HIGH_Q): self.q_high},
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"


def residuals_to_csv(residuals) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["point_id", "residual_dbm"])
    for pid, r in sorted(residuals):
        w.writerow([int(pid), repr(float(r))])
    return buf.getvalue()


def residuals_from_csv(text: str) -> list[tuple[int, float]]:
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if not rows or rows[0] != ["point_id", "residual_dbm"]:
        raise ValueError("residual CSV header must be point_id,residual_dbm")
    return [(int(a), float(b)) for a, b in rows[1:]]


def cross_validate(dataset: Dataset, config: BoostConfig = BoostConfig(), k: int = 5, seed: int | None = 0) -> CVReport:
    fold_of = kfold_stratified(dataset.y, k, seed)
    per_fold = []
    oof = np.empty(len(dataset))
    for f in range(k):
        test = np.flatnonzero(fold_of == f)
        train = np.flatnonzero(fold_of != f)
        model = fit(dataset.subset(train), config)
        pred = predict(model, dataset.X[test])
        oof[test] = pred
        per_fold.append(compute_metrics(dataset.y[test], pred, dataset.point_ids[test]))
    pooled = compute_metrics(dataset.y, oof, dataset.point_ids)
    res = dataset.y - oof
    q_low, q_high = (float(q) for q in np.quantile(res, [CI_LOW_Q, CI_HIGH_Q]))
    return CVReport(k, per_fold, pooled, q_low, q_high, fold_of)


# --- sampler benchmark -------------------------------------------------------

@dataclass
class BenchmarkRow:
    sampler: str
    seed: int
    r2: float
    rmse_dbm: float
    d_min: float
    n_train: int
    n_test: int


@dataclass
class BenchmarkTable:
    rows: list

    def by_sampler(self, sampler: str) -> list:
        return [r for r in self.rows if r.sampler == sampler]

    def summary(self) -> dict:
        out = {}
        for name in sorted({r.sampler for r in self.rows}):
            rows = self.by_sampler(name)
            r2 = np.array([r.r2 for r in rows], dtype=float)
            rmse = np.array([r.rmse_dbm for r in rows], dtype=float)
            dmin = np.array([r.d_min for r in rows], dtype=float)
            ddof = 1 if len(rows) > 1 else 0
            out[name] = {
                "runs": len(rows),
                "r2_mean": _json_float(float(np.mean(r2))),
                "r2_std": _json_float(float(np.std(r2, ddof=ddof))),
                "rmse_mean": float(np.mean(rmse)),
                "rmse_std": float(np.std(rmse, ddof=ddof)),
                "d_min_mean": _json_float(float(np.mean(dmin))),
            }
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sampler", "seed", "r2", "rmse_dbm"])
        for r in self.rows:
            w.writerow([r.sampler, r.seed, repr(r.r2), repr(r.rmse_dbm)])
        return buf.getvalue()


def benchmark_samplers(
    space: DesignSpace,
    oracle: Backend,
    fraction: float = 0.35,
    seeds=range(20),
    config: BoostConfig = BoostConfig(),
    samplers=("maxmin", "random"),
    k: int = 5,
    workers: int | None = None,
    sample_cache: dict | None = None,
) -> BenchmarkTable:
    """Sample, train, and score on the unsampled complement for every
    (seed, sampler). Seeds follow the pipeline derivation: sampler seed+1,
    model seed+4. With no complement the training-set metrics are reported.

    ``sample_cache`` maps ``(sampler, sampler_seed, n)`` to a drawn
    SampleSet; draws are looked up there first and stored after.
    """
    truth = simulate_batch(oracle, space.points(range(space.size)), workers=workers)
    y_all = np.array([r.p2db_dbm for r in truth])
    X_all = feature_matrix(space, np.arange(space.size))
    n = sample_count(space.size, fraction, k, space.dim)
    rows = []
    for seed in seeds:
        for name in samplers:
            key = (name, seed + 1, n)
            if sample_cache is not None and key in sample_cache:
                ss = sample_cache[key]
            else:
                ss = draw_samples(space, n, name, SamplerConfig(fraction=fraction, seed=seed + 1))
                if sample_cache is not None:
                    sample_cache[key] = ss
            train = ss.grid_ids
            ds = build_features(space, [truth[i] for i in train])
            model = fit(ds, _with_seed(config, seed + 4))
            test = np.setdiff1d(np.arange(space.size), train)
            n_test = int(test.size)
            if n_test == 0:
                test = train
            m = compute_metrics(y_all[test], predict(model, X_all[test]))
            rows.append(BenchmarkRow(name, int(seed), m.r2, m.rmse_dbm, ss.d_min, int(train.size), n_test))
    return BenchmarkTable(rows)


def _with_seed(config: BoostConfig, seed: int) -> BoostConfig:
    return replace(config, seed=seed)
