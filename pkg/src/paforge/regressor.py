"""Gradient boosting with oblivious (symmetric) regression trees.

Each tree applies one ``(feature, threshold)`` split per level to every node
of that level, so a depth-``D`` tree is ``D`` comparisons and a table of
``2**D`` leaf values. Leaf index bits are ``b_k = [x[f_k] > t_k]`` with the
first level as the most significant bit.

Training minimizes squared error: every iteration fits a tree to the
current residuals with L2-shrunk leaf values ``sum(r) / (count + l2)`` and
adds ``learning_rate * tree(x)`` to the running prediction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .features import Dataset, FeatureSchema

FORMAT_HEADER = "paforge-model v1"
_TIE_TOL = 1e-12


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class BoostConfig:
    iterations: int = 100
    depth: int = 2
    learning_rate: float = 0.5
    l2_leaf_reg: float = 2.0
    max_threshold_candidates: int = 32
    # Split ties break by (feature, threshold) order, so no shuffling
    # happens; the seed is carried for provenance.
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not self.l2_leaf_reg >= 0:
            raise ValueError("l2_leaf_reg must be >= 0")
        if self.max_threshold_candidates < 1:
            raise ValueError("max_threshold_candidates must be >= 1")


@dataclass(frozen=True)
class ObliviousTree:
    features: tuple
    thresholds: tuple
    leaf_values: tuple
    gains: tuple = ()

    @property
    def depth(self) -> int:
        return len(self.features)

    def leaf_index(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        idx = np.zeros(X.shape[0], dtype=np.int64)
        for f, t in zip(self.features, self.thresholds):
            idx = idx * 2 + (X[:, f] > t)
        return idx

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(self.leaf_values)[self.leaf_index(X)]


@dataclass
class BoostedModel:
    baseline: float
    trees: list
    config: BoostConfig
    schema: FeatureSchema
    importances: np.ndarray
    train_rmse: list = field(default_factory=list)

    def predict(self, X) -> np.ndarray:
        return predict(self, X)


# --- split search ------------------------------------------------------------

def candidate_thresholds(values: np.ndarray, cap: int = 32) -> np.ndarray:
    """Midpoints between adjacent distinct values, thinned to at most ``cap``
    boundaries located at evenly spaced quantiles of ``values``."""
    u = np.unique(values)
    if u.size < 2:
        return np.empty(0)
    mids = (u[:-1] + u[1:]) / 2.0
    if mids.size <= cap:
        return mids
    qs = np.quantile(values, np.linspace(0.0, 1.0, cap + 2)[1:-1])
    pos = np.clip(np.searchsorted(u, qs, side="right") - 1, 0, mids.size - 1)
    return np.unique(mids[pos])


def _leaf_score(s: np.ndarray, c: np.ndarray, l2: float) -> np.ndarray:
    """SSE reduction from fitting leaf value ``s / (c + l2)``:
    ``s**2 (c + 2 l2) / (c + l2)**2``; zero for empty leaves."""
    den = c + l2
    with np.errstate(divide="ignore", invalid="ignore"):
        out = s * s * (c + 2.0 * l2) / (den * den)
    return np.where(c > 0, out, 0.0)


class _SplitPlan:
    """Per-feature candidate thresholds and pre-binned training columns."""

    def __init__(self, X: np.ndarray, cap: int):
        self.thresholds = [candidate_thresholds(X[:, f], cap) for f in range(X.shape[1])]
        # bins[f][i] = number of thresholds strictly below X[i, f]; so
        # X[i, f] > thresholds[f][p]  <=>  p < bins[f][i].
        self.bins = [np.searchsorted(t, X[:, f], side="left") for f, t in enumerate(self.thresholds)]
        self.fallback = float(X[:, 0].max()) if X.shape[0] else 0.0


def fit_oblivious_tree(X, residuals, config: BoostConfig = BoostConfig(), plan: _SplitPlan | None = None) -> ObliviousTree:
    """Greedy level-wise oblivious tree on ``residuals``.

    Each level takes the single split maximizing the total regularized SSE
    reduction over all current leaves; ties go to the lowest feature index,
    then the lowest threshold. A level with no positive gain still splits
    on the best candidate.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    r = np.asarray(residuals, dtype=float)
    n, n_features = X.shape
    if r.shape != (n,) or n < 1:
        raise ValueError("residuals must be a non-empty vector matching the rows of X")
    plan = plan or _SplitPlan(X, config.max_threshold_candidates)
    l2 = config.l2_leaf_reg
    leaf = np.zeros(n, dtype=np.int64)
    feats, thrs, gains = [], [], []

    for level in range(config.depth):
        groups = 1 << level
        s_tot = np.bincount(leaf, weights=r, minlength=groups)
        c_tot = np.bincount(leaf, minlength=groups).astype(float)
        parent = _leaf_score(s_tot, c_tot, l2).sum()
        scores = []
        for f in range(n_features):
            m = plan.thresholds[f].size
            if m == 0:
                scores.append(np.empty(0))
                continue
            key = leaf * (m + 1) + plan.bins[f]
            s = np.bincount(key, weights=r, minlength=groups * (m + 1)).reshape(groups, m + 1)
            c = np.bincount(key, minlength=groups * (m + 1)).reshape(groups, m + 1).astype(float)
            s_left = np.cumsum(s, axis=1)[:, :m]
            c_left = np.cumsum(c, axis=1)[:, :m]
            total = (
                _leaf_score(s_left, c_left, l2)
                + _leaf_score(s_tot[:, None] - s_left, c_tot[:, None] - c_left, l2)
            ).sum(axis=0)
            scores.append(total)

        best = max((sc.max() for sc in scores if sc.size), default=None)
        if best is None:
            f_best, t_best, gain = 0, plan.fallback, 0.0
        else:
            tol = _TIE_TOL * max(1.0, abs(best))
            for f, sc in enumerate(scores):
                hit = np.flatnonzero(sc >= best - tol)
                if hit.size:
                    f_best, p = f, int(hit[0])
                    break
            t_best = float(plan.thresholds[f_best][p])
            gain = float(scores[f_best][p] - parent)
        feats.append(int(f_best))
        thrs.append(t_best)
        gains.append(max(gain, 0.0))
        leaf = leaf * 2 + (X[:, f_best] > t_best)

    leaves = 1 << config.depth
    s = np.bincount(leaf, weights=r, minlength=leaves)
    c = np.bincount(leaf, minlength=leaves).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        values = np.where(c > 0, s / (c + l2), 0.0)
    return ObliviousTree(tuple(feats), tuple(thrs), tuple(float(v) for v in values), tuple(gains))


# --- boosting ----------------------------------------------------------------

def _rmse(v: np.ndarray) -> float:
    return float(np.sqrt(np.mean(v * v)))


def fit(dataset: Dataset, config: BoostConfig = BoostConfig()) -> BoostedModel:
    if len(dataset) == 0:
        raise ValueError("cannot fit on an empty dataset")
    y = dataset.y
    if not np.all(np.isfinite(y)):
        raise ValueError("dataset contains non-finite targets")
    X = dataset.X
    # np.mean of a constant vector can be off by an ulp; keep it exact
    baseline = float(y[0]) if np.all(y == y[0]) else float(np.mean(y))
    F = np.full(y.shape, baseline)
    plan = _SplitPlan(X, config.max_threshold_candidates)
    gains = np.zeros(dataset.schema.arity)
    curve = [_rmse(y - F)]
    trees = []
    for _ in range(config.iterations):
        tree = fit_oblivious_tree(X, y - F, config, plan)
        trees.append(tree)
        F += config.learning_rate * tree(X)
        for f, g in zip(tree.features, tree.gains):
            gains[f] += config.learning_rate * g
        curve.append(_rmse(y - F))
    total = gains.sum()
    importances = gains / total if total > 0 else np.zeros_like(gains)
    return BoostedModel(baseline, trees, config, dataset.schema, importances, curve)


def predict(model: BoostedModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.schema.arity:
        raise ValueError(f"expected {model.schema.arity} features, got {X.shape[1]}")
    acc = np.zeros(X.shape[0])
    for tree in model.trees:
        acc += np.asarray(tree.leaf_values)[tree.leaf_index(X)]
    return model.baseline + model.config.learning_rate * acc


def predict_one(model: BoostedModel, x) -> float:
    """Scalar path; bit-identical to a row of :func:`predict`."""
    x = [float(v) for v in x]
    if len(x) != model.schema.arity:
        raise ValueError(f"expected {model.schema.arity} features, got {len(x)}")
    acc = 0.0
    for tree in model.trees:
        idx = 0
        for f, t in zip(tree.features, tree.thresholds):
            idx = idx * 2 + (x[f] > t)
        acc += tree.leaf_values[idx]
    return model.baseline + model.config.learning_rate * acc


def feature_importance(model: BoostedModel) -> dict[str, float]:
    return {name: float(v) for name, v in zip(model.schema.names, model.importances)}


# --- persistence ---------------------------------------------------------------

def _floats(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def save_model(model: BoostedModel) -> bytes:
    """Line-oriented text encoding; floats use shortest round-trip repr."""
    cfg = " ".join(f"{k}={v!r}" for k, v in asdict(model.config).items())
    lines = [
        FORMAT_HEADER,
        f"features {model.schema.arity} {' '.join(model.schema.names)}".rstrip(),
        f"nominal_temp {model.schema.nominal_temp!r}",
        f"config {cfg}",
        f"baseline {float(model.baseline)!r}",
        f"importances {_floats(model.importances)}".rstrip(),
        f"train_rmse {_floats(model.train_rmse)}".rstrip(),
        f"trees {len(model.trees)}",
    ]
    for t in model.trees:
        splits = " ".join(f"{f} {float(th)!r}" for f, th in zip(t.features, t.thresholds))
        lines.append(f"tree {t.depth} {splits} {_floats(t.leaf_values)} | {_floats(t.gains)}".rstrip())
    lines.append("end")
    return ("\n".join(lines) + "\n").encode("utf-8")


def _expect(line: str, key: str) -> list[str]:
    toks = line.split()
    if not toks or toks[0] != key:
        raise ModelFormatError(f"expected {key!r} line, got {line[:40]!r}")
    return toks[1:]


_CONFIG_TYPES = {"iterations": int, "depth": int, "learning_rate": float, "l2_leaf_reg": float,
                 "max_threshold_candidates": int, "seed": int}


def load_model(data: bytes) -> BoostedModel:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        raise ModelFormatError("model payload is not UTF-8 text") from None
    lines = text.splitlines()
    if not lines or not lines[0].startswith("paforge-model"):
        raise ModelFormatError("missing paforge-model header")
    if lines[0].strip() != FORMAT_HEADER:
        raise ModelFormatError(f"unsupported model version {lines[0].strip()!r}; expected {FORMAT_HEADER!r}")
    if len(lines) < 9 or lines[-1].strip() != "end":
        raise ModelFormatError("truncated model payload")
    try:
        toks = _expect(lines[1], "features")
        arity = int(toks[0])
        names = tuple(toks[1:])
        if len(names) != arity:
            raise ModelFormatError("feature count mismatch")
        nominal = float(_expect(lines[2], "nominal_temp")[0])
        cfg = {}
        for kv in _expect(lines[3], "config"):
            k, _, v = kv.partition("=")
            if k not in _CONFIG_TYPES:
                raise ModelFormatError(f"unknown config key {k!r}")
            cfg[k] = _CONFIG_TYPES[k](v)
        config = BoostConfig(**cfg)
        baseline = float(_expect(lines[4], "baseline")[0])
        importances = np.array([float(v) for v in _expect(lines[5], "importances")])
        curve = [float(v) for v in _expect(lines[6], "train_rmse")]
        n_trees = int(_expect(lines[7], "trees")[0])
        body = lines[8:-1]
        if len(body) != n_trees or importances.size != arity:
            raise ModelFormatError("tree or importance count mismatch")
        trees = []
        for line in body:
            head, _, tail = line.partition("|")
            toks = _expect(head, "tree")
            depth = int(toks[0])
            splits = toks[1 : 1 + 2 * depth]
            leaves = [float(v) for v in toks[1 + 2 * depth :]]
            if len(splits) != 2 * depth or len(leaves) != 1 << depth:
                raise ModelFormatError("malformed tree line")
            feats = tuple(int(f) for f in splits[0::2])
            if any(not 0 <= f < arity for f in feats):
                raise ModelFormatError("tree references unknown feature")
            thrs = tuple(float(t) for t in splits[1::2])
            gains = tuple(float(g) for g in tail.split())
            if not all(math.isfinite(v) for v in leaves):
                raise ModelFormatError("non-finite leaf value")
            trees.append(ObliviousTree(feats, thrs, tuple(leaves), gains))
    except (IndexError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"corrupt model payload: {exc}") from None
    return BoostedModel(baseline, trees, config, FeatureSchema(names, nominal), importances, curve)
