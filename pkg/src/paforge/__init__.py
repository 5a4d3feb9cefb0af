"""Surrogate-accelerated sweeps of discrete design spaces.

MaxMin Latin hypercube sampling picks a fraction of the grid, a simulation
backend evaluates those points, an oblivious-tree boosted regressor predicts
the rest, and the ranking stage reports which designs most likely meet a
P2dB floor.
"""

__version__ = "0.1.0"

from importlib import resources as _resources


def fixture_space_text() -> str:
    """The bundled 1755-point synthetic PA design space."""
    return _resources.files(__package__).joinpath("data/fixture.space").read_text(encoding="utf-8")


def fixture_space():
    from .design_space import parse_space

    return parse_space(fixture_space_text())
