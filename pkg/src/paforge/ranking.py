"""Full-space prediction and the ranked, interval-annotated design report."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .design_space import DesignSpace, format_level
from .features import feature_matrix, feature_schema
from .regressor import BoostedModel, predict

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TargetSpec:
    target_p2db_dbm: float
    tolerance_dbm: float = 0.4

    def __post_init__(self):
        if not self.tolerance_dbm >= 0:
            raise ValueError("tolerance_dbm must be >= 0")


@dataclass
class RankedReport:
    point_ids: np.ndarray
    predicted: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    p_meet: np.ndarray
    simulated: np.ndarray
    spec: TargetSpec
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.point_ids.size

    @property
    def ranks(self) -> np.ndarray:
        return np.arange(1, len(self) + 1)

    def to_csv(self, space: DesignSpace) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rank", "point_id", *space.names, "predicted_p2db_dbm", "ci_low_dbm", "ci_high_dbm", "p_meet", "simulated"])
        for rank, pt, pred, lo, hi, pm, sim in zip(
            self.ranks, space.points(self.point_ids), self.predicted, self.ci_low, self.ci_high, self.p_meet, self.simulated
        ):
            w.writerow([
                int(rank), pt.point_id,
                *(format_level(p, v) for p, v in zip(space.parameters, pt.values)),
                repr(float(pred)), repr(float(lo)), repr(float(hi)), repr(float(pm)),
                "true" if sim else "false",
            ])
        return buf.getvalue()


def predict_full_space(model: BoostedModel, space: DesignSpace) -> np.ndarray:
    """Prediction for every point_id, in point_id order."""
    X = feature_matrix(space, np.arange(space.size, dtype=np.int64))
    if X.shape[1] != model.schema.arity:
        raise ValueError(f"model expects {model.schema.arity} features; space yields {X.shape[1]}")
    if tuple(feature_schema(space).names) != tuple(model.schema.names):
        raise ValueError("model feature schema does not match the design space")
    return predict(model, X)


def meet_probability(predicted, residuals, target: float) -> np.ndarray:
    """Fraction of residual shifts r (truth - prediction) with pred + r >= target."""
    pred = np.asarray(predicted, dtype=float)
    res = np.asarray(residuals, dtype=float)
    if res.size == 0:
        logger.warning("empty residual pool; p_meet falls back to a hard threshold")
        return (pred >= target).astype(float)
    out = np.empty(pred.size)
    for start in range(0, pred.size, 4096):
        chunk = pred[start : start + 4096]
        out[start : start + 4096] = np.mean(chunk[:, None] + res[None, :] >= target, axis=1)
    return out


def rank(
    predictions,
    residuals,
    spec: TargetSpec,
    point_ids=None,
    simulated_ids=(),
    q_low: float | None = None,
    q_high: float | None = None,
    metadata: dict | None = None,
) -> RankedReport:
    """Rank points by descending p_meet, then descending prediction, then
    ascending point_id.

    Intervals are ``[pred + q_low, pred + q_high]`` from the residual
    quantiles, widened if needed so they always contain the prediction.
    """
    pred = np.asarray(predictions, dtype=float)
    ids = np.arange(pred.size, dtype=np.int64) if point_ids is None else np.asarray(point_ids, dtype=np.int64)
    res = np.asarray(residuals, dtype=float)
    if res.size and (q_low is None or q_high is None):
        q_low, q_high = (float(q) for q in np.quantile(res, [0.025, 0.975]))
    q_low = min(q_low or 0.0, 0.0)
    q_high = max(q_high or 0.0, 0.0)
    p_meet = meet_probability(pred, res, spec.target_p2db_dbm)
    sim = np.isin(ids, np.asarray(list(simulated_ids), dtype=np.int64))
    return assemble_report(ids, pred, pred + q_low, pred + q_high, p_meet, sim, spec, metadata)


def assemble_report(ids, pred, ci_low, ci_high, p_meet, simulated, spec: TargetSpec, metadata=None) -> RankedReport:
    """Sort precomputed columns into rank order."""
    ids = np.asarray(ids, dtype=np.int64)
    pred, p_meet = np.asarray(pred, dtype=float), np.asarray(p_meet, dtype=float)
    if np.unique(ids).size != ids.size:
        raise ValueError("duplicate point_ids in report")
    order = np.lexsort((ids, -pred, -p_meet))
    return RankedReport(
        point_ids=ids[order],
        predicted=pred[order],
        ci_low=np.asarray(ci_low, dtype=float)[order],
        ci_high=np.asarray(ci_high, dtype=float)[order],
        p_meet=p_meet[order],
        simulated=np.asarray(simulated, dtype=bool)[order],
        spec=spec,
        metadata=dict(metadata or {}),
    )


def top_n(report: RankedReport, n: int) -> RankedReport:
    if n < 0:
        raise ValueError("n must be >= 0")
    s = slice(0, n)
    return RankedReport(
        report.point_ids[s], report.predicted[s], report.ci_low[s], report.ci_high[s],
        report.p_meet[s], report.simulated[s], report.spec, dict(report.metadata),
    )
