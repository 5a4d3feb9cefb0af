import itertools
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from paforge.features import Dataset, FeatureSchema
from paforge.regressor import (
    FORMAT_HEADER,
    BoostConfig,
    ModelFormatError,
    candidate_thresholds,
    feature_importance,
    fit,
    fit_oblivious_tree,
    load_model,
    predict,
    predict_one,
    save_model,
)

GOLDEN = Path(__file__).parent / "data" / "golden_model.txt"


def dataset(X, y):
    X = np.asarray(X, dtype=float).reshape(len(y), -1)
    schema = FeatureSchema(tuple(f"f{i}" for i in range(X.shape[1])))
    return Dataset(schema, np.arange(len(y)), X, y)


def golden_dataset():
    # small, fully deterministic training set for the golden file
    g = np.random.default_rng(2024)
    X = g.integers(0, 5, size=(40, 3)).astype(float)
    y = 28.0 + 0.8 * X[:, 0] - 0.3 * X[:, 1] * X[:, 2] + 0.05 * g.standard_normal(40)
    return dataset(X, y)


GOLDEN_CONFIG = BoostConfig(iterations=12, depth=2, learning_rate=0.5, l2_leaf_reg=2.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(-1e3, 1e3, allow_nan=False), st.integers(1, 30))
def test_constant_target(c, n):
    g = np.random.default_rng(n)
    X = g.normal(size=(n, 3))
    m = fit(dataset(X, np.full(n, c)), BoostConfig(iterations=10))
    assert all(v == 0.0 for t in m.trees for v in t.leaf_values)
    assert np.all(predict(m, g.normal(size=(20, 3))) == m.baseline)
    assert m.baseline == pytest.approx(c, rel=1e-15, abs=1e-300)


def test_constant_target_exact():
    for c in (28.0, 0.1, -3.7, 1e-5):
        m = fit(dataset(np.arange(7.0), np.full(7, c)), BoostConfig(iterations=5))
        assert np.all(predict(m, [[0.0], [100.0]]) == c)


def test_single_sample():
    m = fit(dataset([[1.0, 2.0]], np.array([27.5])), BoostConfig(iterations=3))
    assert m.baseline == 27.5
    assert all(v == 0.0 for t in m.trees for v in t.leaf_values)


def test_zero_residuals_give_zero_leaves():
    t = fit_oblivious_tree(np.random.default_rng(0).normal(size=(9, 2)), np.zeros(9))
    assert t.leaf_values == (0.0, 0.0, 0.0, 0.0)


def test_midpoint_split():
    t = fit_oblivious_tree([[0.0], [1.0]], [-1.0, 1.0], BoostConfig(depth=1, l2_leaf_reg=0.0))
    assert t.features == (0,) and t.thresholds == (0.5,)
    assert t.leaf_values == (-1.0, 1.0)


def test_depth_two_has_four_leaves(rng):
    t = fit_oblivious_tree(rng.normal(size=(30, 4)), rng.normal(size=30), BoostConfig(depth=2))
    assert len(t.leaf_values) == 4 and t.depth == 2


def test_shrinkage(rng):
    X, r = rng.normal(size=(25, 3)), rng.normal(size=25)
    plain = fit_oblivious_tree(X, r, BoostConfig(depth=2, l2_leaf_reg=0.0))
    shrunk = fit_oblivious_tree(X, r, BoostConfig(depth=2, l2_leaf_reg=2.0))
    # same splits here, so leaf by leaf n*mean/(n+2) against the plain mean
    if plain.features == shrunk.features and plain.thresholds == shrunk.thresholds:
        assert all(abs(s) <= abs(p) + 1e-15 for s, p in zip(shrunk.leaf_values, plain.leaf_values))
    fixed = BoostConfig(depth=2, l2_leaf_reg=2.0)
    leaf = shrunk.leaf_index(X)
    for k in range(4):
        rows = r[leaf == k]
        if rows.size:
            assert shrunk.leaf_values[k] == pytest.approx(rows.sum() / (rows.size + fixed.l2_leaf_reg))
            assert abs(shrunk.leaf_values[k]) <= abs(rows.mean())


def _brute_depth1(X, r, l2):
    """Lowest SSE over every (feature, midpoint) stump with shrunk leaves."""
    best = None
    for f in range(X.shape[1]):
        u = np.unique(X[:, f])
        for t in (u[:-1] + u[1:]) / 2:
            right = X[:, f] > t
            sse = 0.0
            for side in (~right, right):
                s, c = r[side].sum(), side.sum()
                v = s / (c + l2) if c else 0.0
                sse += float(np.sum((r[side] - v) ** 2))
            if best is None or sse < best[0] - 1e-12:
                best = (sse, f, t)
    return best


@pytest.mark.parametrize("seed", range(40))
def test_depth1_matches_brute_force(seed):
    g = np.random.default_rng(seed)
    n = int(g.integers(2, 9))
    X = g.integers(0, 4, size=(n, 3)).astype(float)
    r = g.normal(size=n)
    l2 = float(g.choice([0.0, 0.5, 2.0]))
    t = fit_oblivious_tree(X, r, BoostConfig(depth=1, l2_leaf_reg=l2))
    brute = _brute_depth1(X, r, l2)
    if brute is None:  # no feature has two distinct values
        assert t.thresholds == (float(X[:, 0].max()),)
        return
    sse = float(np.sum((r - np.asarray(t(X))) ** 2))
    assert sse == pytest.approx(brute[0], abs=1e-9)
    assert (t.features[0], t.thresholds[0]) == (brute[1], brute[2])


@pytest.mark.parametrize("seed", range(50))
def test_training_rmse_monotone(seed):
    g = np.random.default_rng(1000 + seed)
    n, d = int(g.integers(5, 120)), int(g.integers(1, 6))
    X = g.normal(size=(n, d))
    y = g.normal(size=n) * 3 + X[:, 0] ** 2
    cfg = BoostConfig(
        iterations=int(g.integers(5, 60)),
        depth=int(g.integers(1, 4)),
        learning_rate=float(g.uniform(0.05, 1.0)),
        l2_leaf_reg=float(g.uniform(0, 5)),
    )
    curve = fit(dataset(X, y), cfg).train_rmse
    assert len(curve) == cfg.iterations + 1
    assert all(b <= a + 1e-9 for a, b in zip(curve, curve[1:]))


def test_step_function_converges():
    X = np.linspace(0, 1, 30)[:, None]  # 29 midpoints, under the candidate cap
    y = np.where(X[:, 0] > 0.5, 2.0, -1.0)
    m = fit(dataset(X, y), BoostConfig(iterations=60, depth=1, l2_leaf_reg=1.0))
    assert m.train_rmse[-1] < 1e-6
    assert m.trees[0].thresholds[0] == pytest.approx((X[14, 0] + X[15, 0]) / 2)


def test_zero_tree_style_prediction_is_baseline():
    m = fit(dataset(np.zeros((5, 1)), np.arange(5.0)), BoostConfig(iterations=2))
    # no feature varies, so every tree is the fallback split with equal leaves
    assert np.allclose(predict(m, [[0.0]]), m.baseline + 0.5 * sum(t.leaf_values[0] for t in m.trees))


def test_drop_last_tree(rng):
    X, y = rng.normal(size=(60, 3)), rng.normal(size=60)
    m = fit(dataset(X, y), BoostConfig(iterations=15))
    full = predict(m, X)
    last = m.trees.pop()
    assert np.allclose(full - predict(m, X), m.config.learning_rate * np.asarray(last(X)), atol=1e-12)


def test_batch_equals_scalar(rng):
    X, y = rng.normal(size=(80, 4)), rng.normal(size=80)
    m = fit(dataset(X, y), BoostConfig(iterations=30, depth=3))
    Q = rng.normal(size=(200, 4))
    batch = predict(m, Q)
    assert [predict_one(m, q) for q in Q] == batch.tolist()
    assert np.array_equal(predict(m, Q), batch)


def test_importance_concentrates(rng):
    X = rng.normal(size=(200, 3))
    y = 3.0 * X[:, 1]
    m = fit(dataset(X, y), BoostConfig(iterations=20))
    imp = feature_importance(m)
    assert imp["f1"] > 0.95
    assert sum(imp.values()) == pytest.approx(1.0)
    single = fit(dataset(X, np.where(X[:, 2] > 0, 1.0, 0.0)), BoostConfig(iterations=1, depth=1))
    assert feature_importance(single)["f2"] == 1.0


def test_importance_zero_for_ignored_feature():
    X = np.array(list(itertools.product([0.0, 1.0], [0.0, 1.0])) * 5)
    y = X[:, 0] * 2.0
    imp = feature_importance(fit(dataset(X, y), BoostConfig(iterations=10, depth=1)))
    assert imp["f1"] == 0.0 and imp["f0"] == 1.0


def test_candidate_thresholds_cap(rng):
    v = rng.normal(size=1000)
    t = candidate_thresholds(v, 32)
    assert 1 <= t.size <= 32 and np.all(np.diff(t) > 0)
    assert candidate_thresholds(np.array([1.0, 1.0])).size == 0
    assert candidate_thresholds(np.array([0.0, 2.0, 1.0])).tolist() == [0.5, 1.5]


def test_save_load_round_trip(rng):
    X, y = rng.normal(size=(100, 5)), rng.normal(size=100)
    m = fit(dataset(X, y), BoostConfig(iterations=25, depth=3))
    again = load_model(save_model(m))
    Q = rng.normal(size=(1000, 5)) * 3
    assert np.array_equal(predict(m, Q), predict(again, Q))
    assert np.array_equal(m.importances, again.importances)
    assert m.train_rmse == again.train_rmse
    assert save_model(again) == save_model(m)


def test_golden_file():
    m = fit(golden_dataset(), GOLDEN_CONFIG)
    blob = GOLDEN.read_bytes()
    assert save_model(m) == blob
    loaded = load_model(blob)
    assert np.array_equal(loaded.importances, m.importances)
    assert np.array_equal(predict(loaded, golden_dataset().X), predict(m, golden_dataset().X))


@pytest.mark.parametrize(
    "mutate, match",
    [
        (lambda b: b.replace(b"paforge-model v1", b"gbm-model v1"), "header"),
        (lambda b: b.replace(b"paforge-model v1", b"paforge-model v9"), "version"),
        (lambda b: b.rsplit(b"\n", 3)[0], "truncated"),
        (lambda b: b.replace(b"trees 12", b"trees 13"), "count"),
        (lambda b: b.replace(b"baseline ", b"baseline x"), None),
        (lambda b: b"\xff\xfe" + b, None),
    ],
)
def test_corrupt_model(mutate, match):
    blob = mutate(GOLDEN.read_bytes())
    with pytest.raises(ModelFormatError, match=match):
        load_model(blob)


def test_header_constant():
    assert GOLDEN.read_text().splitlines()[0] == FORMAT_HEADER
