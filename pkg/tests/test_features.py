import logging

import numpy as np
import pytest

from paforge.design_space import encode, parse_space
from paforge.features import (
    Dataset,
    FeatureError,
    build_features,
    dataset_from_csv,
    dataset_to_csv,
    feature_matrix,
    feature_schema,
)
from paforge.sim_backend import SimulationResult

SPACE = parse_space(
    """
    param Temp continuous grid 25 85
    param VSWR continuous grid 2 3
    param Mode categorical values lo hi
    """
)


def test_schema(space):
    assert feature_schema(space).names == (
        "Vcc", "Temp", "Mode", "VSWR", "Freq", "Phase", "temp_delta", "vswr_temp_interaction",
    )


def test_nominal_temperature_row():
    x = feature_matrix(SPACE, [encode(SPACE, (25.0, 2.0, "lo"))])[0]
    assert x.tolist() == [25.0, 2.0, 0.0, 0.0, 0.0]


def test_hot_mismatch_row():
    x = feature_matrix(SPACE, [encode(SPACE, (85.0, 3.0, "hi"))])[0]
    assert x.tolist() == [85.0, 3.0, 1.0, 60.0, 180.0]


def test_missing_parameters_warn(caplog):
    s = parse_space("param Vcc continuous grid 3 4\n")
    with caplog.at_level(logging.WARNING):
        assert feature_schema(s).names == ("Vcc",)
    assert "temperature" in caplog.text
    s2 = parse_space("param Temp continuous grid 3 4\n")
    assert feature_schema(s2).names == ("Temp", "temp_delta")


def test_empty_results():
    ds = build_features(SPACE, [])
    assert len(ds) == 0
    assert ds.X.shape == (0, 5)
    assert ds.schema.arity == 5


def test_build_sorted_and_checked():
    res = [SimulationResult(5, 27.0), SimulationResult(1, 28.0)]
    ds = build_features(SPACE, res)
    assert ds.point_ids.tolist() == [1, 5]
    assert ds.y.tolist() == [28.0, 27.0]
    with pytest.raises(FeatureError):
        build_features(SPACE, [SimulationResult(8, 1.0)])
    with pytest.raises(FeatureError):
        build_features(SPACE, [SimulationResult(1, 1.0), SimulationResult(1, 2.0)])


def test_csv_round_trip_exact(space, rng):
    ids = rng.choice(space.size, 50, replace=False)
    res = [SimulationResult(int(i), float(v)) for i, v in zip(ids, rng.normal(28, 1, 50))]
    ds = build_features(space, res)
    back = dataset_from_csv(dataset_to_csv(ds))
    assert back.schema == ds.schema
    assert np.array_equal(back.point_ids, ds.point_ids)
    assert np.array_equal(back.X, ds.X)
    assert np.array_equal(back.y, ds.y)
    assert dataset_to_csv(back) == dataset_to_csv(ds)


def test_csv_bad_header():
    with pytest.raises(FeatureError):
        dataset_from_csv("id,a,b\n1,2,3\n")


def test_subset():
    ds = Dataset(feature_schema(SPACE), [0, 3, 5], feature_matrix(SPACE, [0, 3, 5]), [1.0, 2.0, 3.0])
    sub = ds.subset([2, 0])
    assert sub.point_ids.tolist() == [5, 0]
    assert sub.y.tolist() == [3.0, 1.0]
