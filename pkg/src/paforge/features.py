"""Feature matrices for the surrogate model.

Columns are the raw parameters in space order (categoricals as level index),
followed by ``temp_delta = Temp - 25`` and ``vswr_temp_interaction =
VSWR * temp_delta`` when the space has those parameters.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .design_space import DesignSpace, level_indices
from .sim_backend import SimulationResult

logger = logging.getLogger(__name__)

NOMINAL_TEMP = 25.0
TEMP, VSWR = "Temp", "VSWR"
TEMP_DELTA, VSWR_TEMP = "temp_delta", "vswr_temp_interaction"


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureSchema:
    names: tuple
    nominal_temp: float = NOMINAL_TEMP

    @property
    def arity(self) -> int:
        return len(self.names)


@dataclass
class Dataset:
    schema: FeatureSchema
    point_ids: np.ndarray
    X: np.ndarray
    y: np.ndarray
    mode: str | None = None

    def __post_init__(self):
        self.point_ids = np.asarray(self.point_ids, dtype=np.int64)
        self.X = np.asarray(self.X, dtype=float).reshape(len(self.point_ids), self.schema.arity)
        self.y = np.asarray(self.y, dtype=float)
        if self.y.shape != self.point_ids.shape:
            raise FeatureError("targets and point_ids differ in length")
        if np.unique(self.point_ids).size != self.point_ids.size:
            raise FeatureError("duplicate point_ids in dataset")

    def __len__(self) -> int:
        return self.point_ids.size

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.schema, self.point_ids[rows], self.X[rows], self.y[rows], self.mode)


def feature_schema(space: DesignSpace) -> FeatureSchema:
    names = list(space.names)
    if TEMP in names:
        names.append(TEMP_DELTA)
        if VSWR in names:
            names.append(VSWR_TEMP)
        else:
            logger.warning("space has no %s parameter; omitting %s", VSWR, VSWR_TEMP)
    else:
        logger.warning("space has no %s parameter; omitting engineered temperature features", TEMP)
    return FeatureSchema(tuple(names))


def feature_matrix(space: DesignSpace, point_ids) -> np.ndarray:
    """Feature rows for the given grid points, in schema order."""
    ids = np.asarray(point_ids, dtype=np.int64)
    schema = feature_schema(space)
    X = np.empty((ids.size, schema.arity))
    if ids.size == 0:
        return X
    idx = level_indices(space, ids)
    for k, p in enumerate(space.parameters):
        if p.is_categorical:
            X[:, k] = idx[:, k]
        else:
            X[:, k] = np.asarray(p.levels)[idx[:, k]]
    col = space.dim
    if TEMP_DELTA in schema.names:
        dt = X[:, space.index(TEMP)] - schema.nominal_temp
        X[:, col] = dt
        col += 1
        if VSWR_TEMP in schema.names:
            X[:, col] = X[:, space.index(VSWR)] * dt
    return X


def build_features(space: DesignSpace, results: Sequence[SimulationResult], mode: str | None = None) -> Dataset:
    results = sorted(results, key=lambda r: r.point_id)
    ids = np.array([r.point_id for r in results], dtype=np.int64)
    bad = ids[(ids < 0) | (ids >= space.size)]
    if bad.size:
        raise FeatureError(f"result for out-of-range point_id {int(bad[0])}")
    y = np.array([r.p2db_dbm for r in results], dtype=float)
    return Dataset(feature_schema(space), ids, feature_matrix(space, ids), y, mode)


def dataset_to_csv(ds: Dataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["point_id", *ds.schema.names, "p2db_dbm"])
    for pid, row, y in zip(ds.point_ids, ds.X, ds.y):
        w.writerow([int(pid), *(repr(float(v)) for v in row), repr(float(y))])
    return buf.getvalue()


def dataset_from_csv(text: str, mode: str | None = None) -> Dataset:
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if not rows or rows[0][0] != "point_id" or rows[0][-1] != "p2db_dbm":
        raise FeatureError("dataset CSV header must be point_id,<features...>,p2db_dbm")
    schema = FeatureSchema(tuple(rows[0][1:-1]))
    body = rows[1:]
    try:
        ids = np.array([int(r[0]) for r in body], dtype=np.int64)
        X = np.array([[float(v) for v in r[1:-1]] for r in body], dtype=float).reshape(len(body), schema.arity)
        y = np.array([float(r[-1]) for r in body], dtype=float)
    except ValueError as exc:
        raise FeatureError(f"bad dataset CSV: {exc}") from None
    return Dataset(schema, ids, X, y, mode)
