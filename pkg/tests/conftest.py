import numpy as np
import pytest

from paforge import fixture_space
from paforge.features import build_features
from paforge.pipeline import PipelineConfig, derive_seeds, stage_sample
from paforge.regressor import fit
from paforge.sim_backend import make_backend, simulate_batch
from paforge.validation import cross_validate

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def space():
    return fixture_space()


class FixtureRun:
    """Default pipeline stages on the fixture at master seed 0, kept in memory."""

    def __init__(self, space, seed=0):
        cfg = PipelineConfig(space="<fixture>", seed=seed)
        seeds = derive_seeds(seed)
        self.config = cfg
        self.ids = stage_sample(space, cfg)
        oracle = make_backend("synthetic", space, seeds["noise"], cfg.noise_sigma)
        self.results = simulate_batch(oracle, space.points(self.ids))
        self.dataset = build_features(space, self.results)
        self.model = fit(self.dataset, cfg.boost_config())
        self.cv = cross_validate(self.dataset, cfg.boost_config(), cfg.k, seeds["folds"])


@pytest.fixture(scope="session")
def fixture_run(space):
    return FixtureRun(space)


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
