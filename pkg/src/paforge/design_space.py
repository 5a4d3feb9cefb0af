"""Discrete design spaces: parsing, canonical serialization, mixed-radix
enumeration and normalization onto the unit hypercube.

Point ids are mixed-radix indices with the last parameter varying fastest,
so ``point_id = ((i0 * L1 + i1) * L2 + i2) ...``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

Level = Union[float, str]

CONTINUOUS = "continuous"
DISCRETE = "discrete"
CATEGORICAL = "categorical"
KINDS = (CONTINUOUS, DISCRETE, CATEGORICAL)

# Point ids are exchanged as int64 in numpy arrays.
MAX_SPACE_SIZE = 2**63 - 1

_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\-]*$")


class DesignSpaceError(ValueError):
    """Invalid design-space definition or point."""


class SpaceSyntaxError(DesignSpaceError):
    def __init__(self, lineno: int, message: str):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}")


@dataclass(frozen=True)
class Parameter:
    name: str
    kind: str
    levels: tuple
    unit: str | None = None

    def __post_init__(self):
        if not _NAME_RE.match(self.name):
            raise DesignSpaceError(f"invalid parameter name {self.name!r}")
        if self.kind not in KINDS:
            raise DesignSpaceError(f"unknown parameter kind {self.kind!r}")
        if len(self.levels) == 0:
            raise DesignSpaceError(f"parameter {self.name!r} has no levels")
        if self.is_categorical:
            if len(set(self.levels)) != len(self.levels):
                raise DesignSpaceError(f"parameter {self.name!r} has duplicate categorical levels")
        else:
            levels = tuple(float(v) for v in self.levels)
            if not all(math.isfinite(v) for v in levels):
                raise DesignSpaceError(f"parameter {self.name!r} has non-finite levels")
            if any(b <= a for a, b in zip(levels, levels[1:])):
                raise DesignSpaceError(f"parameter {self.name!r} levels are not strictly increasing")
            object.__setattr__(self, "levels", levels)

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def index_of(self, value: Level) -> int:
        """Level index of ``value``; numeric values must match a level exactly."""
        if self.is_categorical:
            try:
                return self.levels.index(str(value))
            except ValueError:
                raise DesignSpaceError(f"{value!r} is not a level of {self.name!r}") from None
        try:
            return self.levels.index(float(value))
        except (ValueError, TypeError):
            raise DesignSpaceError(f"{value!r} is not a level of {self.name!r}") from None


@dataclass(frozen=True)
class DesignPoint:
    point_id: int
    values: tuple

    def as_dict(self, space: "DesignSpace") -> dict:
        return dict(zip(space.names, self.values))


@dataclass(frozen=True)
class DesignSpace:
    parameters: tuple
    size: int = field(init=False)

    def __post_init__(self):
        params = tuple(self.parameters)
        if not params:
            raise DesignSpaceError("design space has no parameters")
        names = [p.name for p in params]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise DesignSpaceError(f"duplicate parameter name(s): {', '.join(dupes)}")
        size = 1
        for p in params:
            size *= p.n_levels
        if size > MAX_SPACE_SIZE:
            raise DesignSpaceError(f"design space size {size} overflows the point-id range")
        object.__setattr__(self, "parameters", params)
        object.__setattr__(self, "size", size)

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.parameters]

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(p.n_levels for p in self.parameters)

    @property
    def dim(self) -> int:
        return len(self.parameters)

    def categorical_mask(self) -> np.ndarray:
        return np.array([p.is_categorical for p in self.parameters], dtype=bool)

    def parameter(self, name: str) -> Parameter:
        for p in self.parameters:
            if p.name == name:
                return p
        raise KeyError(name)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def point(self, point_id: int) -> DesignPoint:
        return enumerate_point(self, point_id)

    def points(self, point_ids: Sequence[int]) -> list[DesignPoint]:
        ids = np.asarray(point_ids, dtype=np.int64)
        idx = level_indices(self, ids)
        return [
            DesignPoint(int(pid), tuple(p.levels[k] for p, k in zip(self.parameters, row)))
            for pid, row in zip(ids, idx)
        ]


def _validate_ids(space: DesignSpace, ids: np.ndarray) -> None:
    if ids.size and (ids.min() < 0 or ids.max() >= space.size):
        bad = ids[(ids < 0) | (ids >= space.size)][0]
        raise DesignSpaceError(f"point_id {int(bad)} out of range [0, {space.size})")


def level_indices(space: DesignSpace, point_ids) -> np.ndarray:
    """Vectorized mixed-radix decode to an ``(n, d)`` array of level indices."""
    ids = np.atleast_1d(np.asarray(point_ids, dtype=np.int64))
    _validate_ids(space, ids)
    out = np.empty((ids.size, space.dim), dtype=np.int64)
    rem = ids.copy()
    for k in range(space.dim - 1, -1, -1):
        radix = space.parameters[k].n_levels
        out[:, k] = rem % radix
        rem //= radix
    return out


def encode_indices(space: DesignSpace, indices) -> np.ndarray:
    idx = np.atleast_2d(np.asarray(indices, dtype=np.int64))
    shape = np.array(space.shape, dtype=np.int64)
    if idx.shape[1] != space.dim:
        raise DesignSpaceError(f"expected {space.dim} level indices per point, got {idx.shape[1]}")
    if np.any(idx < 0) or np.any(idx >= shape):
        raise DesignSpaceError("level index out of range")
    ids = np.zeros(idx.shape[0], dtype=np.int64)
    for k in range(space.dim):
        ids = ids * shape[k] + idx[:, k]
    return ids


def enumerate_point(space: DesignSpace, point_id: int) -> DesignPoint:
    """Decode ``point_id`` to its parameter values."""
    if not 0 <= point_id < space.size:
        raise DesignSpaceError(f"point_id {point_id} out of range [0, {space.size})")
    rem = int(point_id)
    values = [None] * space.dim
    for k in range(space.dim - 1, -1, -1):
        p = space.parameters[k]
        rem, i = divmod(rem, p.n_levels)
        values[k] = p.levels[i]
    return DesignPoint(int(point_id), tuple(values))


def encode(space: DesignSpace, values: Sequence[Level]) -> int:
    """Inverse of :func:`enumerate_point`."""
    if len(values) != space.dim:
        raise DesignSpaceError(f"expected {space.dim} values, got {len(values)}")
    pid = 0
    for p, v in zip(space.parameters, values):
        pid = pid * p.n_levels + p.index_of(v)
    return pid


def normalize_indices(space: DesignSpace, indices) -> np.ndarray:
    """Map level index k of an L-level parameter to the stratum center (k + 0.5) / L."""
    idx = np.asarray(indices, dtype=float)
    return (idx + 0.5) / np.asarray(space.shape, dtype=float)


def normalize(space: DesignSpace, point: DesignPoint) -> np.ndarray:
    idx = [p.index_of(v) for p, v in zip(space.parameters, point.values)]
    return normalize_indices(space, idx)


def grid_coordinates(space: DesignSpace, point_ids=None) -> np.ndarray:
    """Normalized coordinates of the given grid points (all points by default)."""
    if point_ids is None:
        point_ids = np.arange(space.size, dtype=np.int64)
    return normalize_indices(space, level_indices(space, point_ids))


def snap_coordinates(space: DesignSpace, x: np.ndarray) -> np.ndarray:
    """Nearest stratum center per coordinate, as level indices ``(n, d)``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    shape = np.asarray(space.shape)
    return np.clip(np.floor(x * shape).astype(np.int64), 0, shape - 1)


# --- text format ---------------------------------------------------------

def _parse_number(tok: str, lineno: int) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise SpaceSyntaxError(lineno, f"invalid number {tok!r}") from None
    if not math.isfinite(v):
        raise SpaceSyntaxError(lineno, f"non-finite number {tok!r}")
    return v


def parse_space(text: str) -> DesignSpace:
    """Parse the line-oriented design-space format.

    ::

        # comment
        param Vcc continuous grid 3.0 3.4 3.8
        param Mode categorical values lo mid hi
        unit Vcc V
    """
    params: list[dict] = []
    by_name: dict[str, dict] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        toks = line.split()
        head = toks[0]
        if head == "param":
            if len(toks) < 4:
                raise SpaceSyntaxError(lineno, "incomplete param statement")
            name, kind = toks[1], toks[2]
            if not _NAME_RE.match(name):
                raise SpaceSyntaxError(lineno, f"invalid parameter name {name!r}")
            if name in by_name:
                raise SpaceSyntaxError(lineno, f"duplicate parameter name {name!r}")
            if kind in (CONTINUOUS, DISCRETE):
                if toks[3] != "grid":
                    raise SpaceSyntaxError(lineno, f"expected 'grid' after {kind!r}")
                levels = tuple(_parse_number(t, lineno) for t in toks[4:])
            elif kind == CATEGORICAL:
                if toks[3] != "values":
                    raise SpaceSyntaxError(lineno, "expected 'values' after 'categorical'")
                levels = tuple(toks[4:])
                if len(set(levels)) != len(levels):
                    raise SpaceSyntaxError(lineno, f"duplicate categorical levels for {name!r}")
            else:
                raise SpaceSyntaxError(lineno, f"unknown kind keyword {kind!r}")
            if not levels:
                raise SpaceSyntaxError(lineno, f"parameter {name!r} has no levels")
            if kind != CATEGORICAL and any(b <= a for a, b in zip(levels, levels[1:])):
                raise SpaceSyntaxError(lineno, f"non-increasing levels for {name!r}")
            entry = {"name": name, "kind": kind, "levels": levels, "unit": None}
            params.append(entry)
            by_name[name] = entry
        elif head == "unit":
            if len(toks) < 3:
                raise SpaceSyntaxError(lineno, "incomplete unit statement")
            name = toks[1]
            if name not in by_name:
                raise SpaceSyntaxError(lineno, f"unit for undeclared parameter {name!r}")
            if by_name[name]["unit"] is not None:
                raise SpaceSyntaxError(lineno, f"duplicate unit for {name!r}")
            by_name[name]["unit"] = line.split(None, 2)[2]
        else:
            raise SpaceSyntaxError(lineno, f"unknown statement {head!r}")
    if not params:
        raise DesignSpaceError("design space declares no parameters")
    return DesignSpace(tuple(Parameter(**p) for p in params))


def format_level(param: Parameter, value) -> str:
    return str(value) if param.is_categorical else repr(float(value))


def serialize_space(space: DesignSpace) -> str:
    """Canonical text form; ``parse_space(serialize_space(s)) == s``."""
    lines = []
    for p in space.parameters:
        levels = " ".join(format_level(p, v) for v in p.levels)
        if p.is_categorical:
            lines.append(f"param {p.name} categorical values {levels}")
        else:
            lines.append(f"param {p.name} {p.kind} grid {levels}")
    for p in space.parameters:
        if p.unit is not None:
            lines.append(f"unit {p.name} {p.unit}")
    return "\n".join(lines) + "\n"


def load_space(path) -> DesignSpace:
    with open(path, encoding="utf-8") as fh:
        return parse_space(fh.read())
