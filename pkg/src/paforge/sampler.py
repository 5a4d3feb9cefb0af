"""Latin hypercube sampling with MaxMin swap optimization, grid snapping and a
uniform random baseline.

Distances are measured in the normalized design space: squared coordinate
differences for grid parameters plus ``weight * [levels differ]`` for
categorical parameters.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .design_space import (
    DesignSpace,
    DesignSpaceError,
    encode,
    encode_indices,
    format_level,
    grid_coordinates,
    level_indices,
    snap_coordinates,
)

# Relative slack when comparing squared distances that went through
# incremental updates.
_REL_TOL = 1e-9
_CHUNK = 1 << 12


class SamplingError(ValueError):
    pass


@dataclass
class SamplerConfig:
    fraction: float = 0.35
    max_sweeps: int = 100
    patience: int = 5
    seed: int = 0
    categorical_mismatch_weight: float = 1.0
    grid_refine: bool = True

    def __post_init__(self):
        if not 0 < self.fraction <= 1:
            raise ValueError(f"fraction must be in (0, 1], got {self.fraction}")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.categorical_mismatch_weight < 0:
            raise ValueError("categorical_mismatch_weight must be >= 0")


@dataclass
class SampleSet:
    points: np.ndarray
    d_min: float
    seed: int | None = None
    grid_ids: np.ndarray | None = None
    sweeps: int = 0
    history: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]


def sample_count(space_size: int, fraction: float, k: int = 5, d: int = 1) -> int:
    """Samples drawn for ``fraction`` of a grid: ``ceil(fraction * size)``,
    at least ``max(k + 1, d + 1)`` and at most the grid size."""
    n = math.ceil(fraction * space_size - 1e-9)
    return int(min(space_size, max(n, k + 1, d + 1)))


# --- distances -----------------------------------------------------------

def _dim_info(d: int, space: DesignSpace | None):
    if space is None:
        return np.zeros(d, dtype=bool), np.ones(d, dtype=np.int64)
    if space.dim != d:
        raise ValueError(f"points have {d} dims but space has {space.dim} parameters")
    return space.categorical_mask(), np.asarray(space.shape, dtype=np.int64)


def _categorical_levels(x: np.ndarray, n_levels: int) -> np.ndarray:
    return np.clip(np.floor(x * n_levels).astype(np.int64), 0, n_levels - 1)


def squared_distance_matrix(points, space: DesignSpace | None = None, weight: float = 1.0) -> np.ndarray:
    x = np.atleast_2d(np.asarray(points, dtype=float))
    n, d = x.shape
    cat, shape = _dim_info(d, space)
    d2 = np.zeros((n, n))
    for k in range(d):
        if cat[k]:
            lv = _categorical_levels(x[:, k], shape[k])
            d2 += weight * (lv[:, None] != lv[None, :])
        else:
            diff = x[:, k][:, None] - x[:, k][None, :]
            d2 += diff * diff
    return d2


def min_pairwise_distance(points, space: DesignSpace | None = None, weight: float = 1.0) -> float:
    """Smallest distance over all unordered pairs of ``points``."""
    x = np.atleast_2d(np.asarray(points, dtype=float))
    if x.shape[0] < 2:
        raise ValueError("min_pairwise_distance needs at least 2 points")
    d2 = squared_distance_matrix(x, space, weight)
    iu = np.triu_indices(x.shape[0], k=1)
    return float(np.sqrt(d2[iu].min()))


def _d_min_or_inf(points, space, weight) -> float:
    return min_pairwise_distance(points, space, weight) if len(points) >= 2 else math.inf


# --- Latin hypercube -------------------------------------------------------

def lhs_initial(n: int, d: int, seed: int | None = 0) -> SampleSet:
    """Random Latin hypercube with every point at its stratum center."""
    if n < 1 or d < 1:
        raise ValueError("lhs_initial needs n >= 1 and d >= 1")
    rng = np.random.default_rng(seed)
    x = np.empty((n, d))
    for k in range(d):
        x[:, k] = (rng.permutation(n) + 0.5) / n
    d_min = _d_min_or_inf(x, None, 1.0)
    return SampleSet(points=x, d_min=d_min, seed=seed)


def is_latin(points) -> bool:
    x = np.atleast_2d(np.asarray(points, dtype=float))
    n = x.shape[0]
    strata = np.floor(x * n).astype(np.int64)
    expected = np.arange(n)
    return all(np.array_equal(np.sort(strata[:, k]), expected) for k in range(x.shape[1]))


# Distance levels tracked for the lexicographic criterion.
_N_LEVELS = 4
_BATCH = 512
_NEAR = 12


def _group_levels(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Group sorted ``values`` into levels: a new level starts wherever a
    value exceeds its predecessor by more than ``_REL_TOL``. Returns each
    value's level number and the level start values."""
    if values.size == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    new = np.empty(values.size, dtype=bool)
    new[0] = True
    new[1:] = values[1:] > values[:-1] * (1 + _REL_TOL)
    return np.cumsum(new) - 1, values[new]


def _first_two_levels(values: np.ndarray, counts: np.ndarray | None = None) -> tuple[np.ndarray, ...]:
    """Row-wise smallest two distinct levels of ``values`` (weighted by
    ``counts``, default one each), merging levels equal within tolerance."""
    if counts is None:
        m1 = values.min(axis=1)
        at1 = values <= m1[:, None] * (1 + _REL_TOL)
        rest = np.where(at1, np.inf, values)
        m2 = rest.min(axis=1)
        at2 = (rest <= m2[:, None] * (1 + _REL_TOL)) & np.isfinite(rest)
        return m1, at1.sum(axis=1), m2, at2.sum(axis=1)
    v = np.where(counts > 0, values, np.inf)
    m1 = v.min(axis=1)
    at1 = v <= m1[:, None] * (1 + _REL_TOL)
    c1 = np.where(at1, counts, 0).sum(axis=1)
    rest = np.where(at1, np.inf, v)
    m2 = rest.min(axis=1)
    at2 = rest <= m2[:, None] * (1 + _REL_TOL)
    c2 = np.where(at2 & np.isfinite(rest), counts, 0).sum(axis=1)
    return m1, c1, m2, c2


def _better(cand, cur) -> np.ndarray:
    """Lexicographic improvement of ``(d1, -J1, d2, -J2)``: a larger minimum
    distance, else fewer pairs at it, else a larger second level, else fewer
    pairs at that."""
    m1, c1, m2, c2 = cand
    b1, j1, b2, j2 = cur
    up1 = m1 > b1 * (1 + _REL_TOL)
    eq1 = np.abs(m1 - b1) <= b1 * _REL_TOL
    up2 = (m2 > b2 * (1 + _REL_TOL)) if math.isfinite(b2) else np.zeros(m2.shape, dtype=bool)
    eq2 = (np.abs(m2 - b2) <= b2 * _REL_TOL) if math.isfinite(b2) else ~np.isfinite(m2)
    return up1 | (eq1 & ((c1 < j1) | ((c1 == j1) & (up2 | (eq2 & (c2 < j2))))))


class _SwapState:
    """Distance bookkeeping for coordinate-swap hill climbing.

    Keeps the full squared-distance matrix, the smallest few distance levels
    with their pair counts (overall and per point), and evaluates batches of
    candidate swaps in one vectorized pass.
    """

    def __init__(self, x: np.ndarray, cat: np.ndarray, shape: np.ndarray, weight: float):
        self.x = x
        self.n, self.d = x.shape
        self.cat = cat
        self.weight = weight
        self.lv = np.zeros_like(x, dtype=np.int64)
        for k in np.flatnonzero(cat):
            self.lv[:, k] = _categorical_levels(x[:, k], shape[k])
        self.d2 = self._full_matrix()
        self.n_pairs = self.n * (self.n - 1) // 2
        self.m_near = min(_NEAR, self.n - 1)
        self.refresh_near()
        self._rebuild()

    def refresh_near(self) -> None:
        # near-neighbour lists only feed a rejection pre-check, so stale
        # entries cost speed, never correctness
        self.near = np.argpartition(self.d2, self.m_near - 1, axis=1)[:, : self.m_near]

    def _full_matrix(self) -> np.ndarray:
        d2 = np.zeros((self.n, self.n))
        for k in range(self.d):
            if self.cat[k]:
                col = self.lv[:, k]
                d2 += self.weight * (col[:, None] != col[None, :])
            else:
                diff = self.x[:, k][:, None] - self.x[:, k][None, :]
                d2 += diff * diff
        np.fill_diagonal(d2, np.inf)
        return d2

    def _row(self, i: int) -> np.ndarray:
        row = np.zeros(self.n)
        for k in range(self.d):
            if self.cat[k]:
                row += self.weight * (self.lv[:, k] != self.lv[i, k])
            else:
                diff = self.x[:, k] - self.x[i, k]
                row += diff * diff
        row[i] = np.inf
        return row

    # The pairs closer than a cutoff are kept as a short list (pa, pb, pv);
    # a swap only changes pairs touching the two swapped points, so the list
    # is patched in O(n) and rebuilt only when too few levels remain below
    # the cutoff.

    def _rebuild(self) -> None:
        # each point's nearest distances are real pair values, so their
        # m-th distinct level bounds the m smallest levels overall
        m = 4 * _N_LEVELS
        near = np.partition(self.d2, min(2, self.n - 2), axis=1)[:, : min(3, self.n - 1)]
        _, starts = _group_levels(np.sort(near.ravel()))
        self.cutoff = float(starts[m]) if starts.size > m else np.inf
        a, b = np.nonzero(self.d2 < self.cutoff)
        self.pa, self.pb = a[a < b], b[a < b]
        self.pv = self.d2[self.pa, self.pb]
        self._levels()

    def _patch(self, i: int, j: int) -> None:
        keep = (self.pa != i) & (self.pa != j) & (self.pb != i) & (self.pb != j)
        pa, pb = [self.pa[keep]], [self.pb[keep]]
        for p in (i, j):
            q = np.flatnonzero(self.d2[p] < self.cutoff)
            q = q[(q != i) & (q != j)]
            pa.append(np.minimum(p, q))
            pb.append(np.maximum(p, q))
        if self.d2[i, j] < self.cutoff:
            pa.append(np.array([min(i, j)]))
            pb.append(np.array([max(i, j)]))
        self.pa, self.pb = np.concatenate(pa), np.concatenate(pb)
        self.pv = self.d2[self.pa, self.pb]
        self._levels()

    def _levels(self) -> None:
        order = np.argsort(self.pv, kind="stable")
        a, b, vals = self.pa[order], self.pb[order], self.pv[order]
        group, starts = _group_levels(vals)
        if starts.size <= _N_LEVELS and math.isfinite(self.cutoff):
            self._rebuild()
            return
        keep = group < _N_LEVELS
        a, b, group = a[keep], b[keep], group[keep]
        L = min(_N_LEVELS, starts.size)
        self.levels = np.full(_N_LEVELS, np.inf)
        self.levels[:L] = starts[:L]
        self.level_counts = np.bincount(group, minlength=_N_LEVELS)[:_N_LEVELS]
        self.row_counts = np.zeros((self.n, _N_LEVELS), dtype=np.int64)
        np.add.at(self.row_counts, (a, group), 1)
        np.add.at(self.row_counts, (b, group), 1)
        self.complete = int(self.level_counts.sum()) == self.n_pairs
        ends = np.zeros(self.n, dtype=bool)
        ends[a[group < 2]] = True
        ends[b[group < 2]] = True
        self.endpoints = ends

    @property
    def d2_min(self) -> float:
        return float(self.levels[0])

    @property
    def criterion(self) -> tuple:
        c2 = int(self.level_counts[1]) if math.isfinite(self.levels[1]) else 0
        return (float(self.levels[0]), int(self.level_counts[0]), float(self.levels[1]), c2)

    def evaluate(self, I: np.ndarray, J: np.ndarray, K: np.ndarray) -> tuple[np.ndarray, ...]:
        """``(d1, J1, d2, J2)`` after each swap of coordinate K between points I and J."""
        out = (np.full(I.size, -np.inf), np.zeros(I.size, dtype=np.int64),
               np.full(I.size, -np.inf), np.zeros(I.size, dtype=np.int64))
        floor = self.levels[0] * (1 - _REL_TOL)
        pre = np.flatnonzero(self._near_viable(I, J, K, floor))
        if pre.size == 0:
            return out
        res = self._evaluate(I[pre], J[pre], K[pre], floor)
        for arr, v in zip(out, res):
            arr[pre] = v
        return out

    def _near_viable(self, I, J, K, floor) -> np.ndarray:
        """False where some near-neighbour pair of I or J would drop below
        ``floor`` after the swap; such swaps can never be accepted."""
        ok = np.ones(I.size, dtype=bool)
        a, b = self.x[I, K][:, None], self.x[J, K][:, None]
        for P, Q, sign in ((I, J, 1.0), (J, I, -1.0)):
            nb = self.near[P]
            xp = self.x[nb, K[:, None]]
            delta = (xp - b) ** 2 - (xp - a) ** 2
            if self.cat.any():
                cat = self.cat[K][:, None]
                lp = self.lv[nb, K[:, None]]
                la, lb = self.lv[I, K][:, None], self.lv[J, K][:, None]
                dcat = self.weight * ((lp != lb).astype(float) - (lp != la))
                delta = np.where(cat, dcat, delta)
            v = self.d2[P[:, None], nb] + sign * delta
            v[nb == Q[:, None]] = np.inf
            ok &= v.min(axis=1) >= floor
        return ok

    def _evaluate(self, I, J, K, floor) -> tuple[np.ndarray, ...]:
        C = I.size
        cat = self.cat[K]
        xk = self.x[:, K].T
        lk = self.lv[:, K].T
        a = self.x[I, K][:, None]
        b = self.x[J, K][:, None]
        delta = (xk - b) ** 2 - (xk - a) ** 2
        if cat.any():
            la, lb = self.lv[I, K][:, None], self.lv[J, K][:, None]
            dcat = self.weight * ((lk != lb).astype(float) - (lk != la))
            delta = np.where(cat[:, None], dcat, delta)
        rows = np.arange(C)
        Ri = self.d2[I] + delta
        Rj = self.d2[J] - delta
        Ri[rows, I] = Ri[rows, J] = np.inf
        Rj[rows, I] = Rj[rows, J] = np.inf
        # a swap that brings any pair below d_min can never win; only the
        # survivors get the full level computation
        live = np.flatnonzero((Ri.min(axis=1) >= floor) & (Rj.min(axis=1) >= floor))
        out = (np.full(C, -np.inf), np.zeros(C, dtype=np.int64), np.full(C, -np.inf), np.zeros(C, dtype=np.int64))
        if live.size == 0:
            return out
        I, J, K = I[live], J[live], K[live]
        dij = self.d2[I, J]
        new = np.concatenate([Ri[live], Rj[live], dij[:, None]], axis=1)
        n1, nc1, n2, nc2 = _first_two_levels(new)

        # pairs touching neither endpoint keep their levels
        at = np.abs(dij[:, None] - self.levels[None, :]) <= self.levels[None, :] * _REL_TOL
        others = self.level_counts[None, :] - self.row_counts[I] - self.row_counts[J] + at
        lv = np.where(others > 0, self.levels[None, :], np.inf)
        o1, oc1, o2, oc2 = _first_two_levels(lv, others)
        merged = _first_two_levels(
            np.stack([o1, o2, n1, n2], axis=1), np.stack([oc1, oc2, nc1, nc2], axis=1)
        )
        if not self.complete:
            # beyond the tracked levels the remaining pairs are unknown
            for c in np.flatnonzero(~np.isfinite(o2)):
                exact = self._exact(int(I[c]), int(J[c]), int(K[c]))
                for arr, v in zip(merged, exact):
                    arr[c] = v
        for arr, v in zip(out, merged):
            arr[live] = v
        return out

    def _exact(self, i: int, j: int, k: int) -> tuple:
        self._swap(i, j, k)
        d2 = self.d2.copy()
        for p in (i, j):
            row = self._row(p)
            d2[p] = row
            d2[:, p] = row
        self._swap(i, j, k)
        vals = np.sort(d2[np.triu_indices(self.n, 1)])
        group, starts = _group_levels(vals)
        counts = np.bincount(group)
        if starts.size == 1:
            return starts[0], counts[0], np.inf, 0
        return starts[0], counts[0], starts[1], counts[1]

    def _swap(self, i: int, j: int, k: int) -> None:
        self.x[i, k], self.x[j, k] = self.x[j, k], self.x[i, k]
        self.lv[i, k], self.lv[j, k] = self.lv[j, k], self.lv[i, k]

    def apply(self, i: int, j: int, k: int) -> None:
        self._swap(i, j, k)
        for p in (i, j):
            row = self._row(p)
            self.d2[p] = row
            self.d2[:, p] = row
        for p in (i, j):
            self.near[p] = np.argpartition(self.d2[p], self.m_near - 1)[: self.m_near]
        self._patch(i, j)


def maxmin_optimize(
    init: SampleSet,
    config: SamplerConfig | None = None,
    space: DesignSpace | None = None,
    callback: Callable[[float], None] | None = None,
) -> SampleSet:
    """Coordinate-swap hill climbing on the MaxMin criterion.

    Each sweep visits every (point pair, dimension) swap in seeded random
    order and accepts a swap iff it strictly improves ``(d_min, -J1, d2,
    -J2)`` lexicographically, where J1 counts pairs at d_min and d2, J2 are
    the next distance level and its count. d_min therefore never decreases;
    the tie levels let the search leave plateaus where no single swap can
    raise d_min. Swaps touching no pair at the two smallest levels cannot
    improve the criterion and are skipped without evaluation, which leaves
    the accepted sequence unchanged. ``callback`` receives d_min after
    every accepted swap.
    """
    config = config or SamplerConfig()
    x = np.array(init.points, dtype=float)
    n, d = x.shape
    if n < 3:
        # With two points every swap preserves the single pairwise distance.
        return SampleSet(points=x, d_min=init.d_min, seed=config.seed)
    cat, shape = _dim_info(d, space)
    weight = config.categorical_mismatch_weight
    state = _SwapState(x, cat, shape, weight)
    rng = np.random.default_rng(config.seed)
    pair_i, pair_j = np.triu_indices(n, k=1)
    total = pair_i.size * d

    history = [math.sqrt(state.d2_min)]
    stale = 0
    sweeps = 0
    while sweeps < config.max_sweeps and stale < config.patience:
        sweeps += 1
        improved = False
        state.refresh_near()
        pairs, dims_all = np.divmod(rng.permutation(total), d)
        I_all, J_all = pair_i[pairs], pair_j[pairs]
        same = state.x[I_all, dims_all] == state.x[J_all, dims_all] if cat.any() else None
        pos = 0
        while pos < total:
            I, J = I_all[pos : pos + _CHUNK], J_all[pos : pos + _CHUNK]
            dims = dims_all[pos : pos + _CHUNK]
            ends = state.endpoints
            mask = ends[I] | ends[J]
            if same is not None:
                # only categorical swaps can be no-ops; recheck the few flagged
                s_ = same[pos : pos + _CHUNK] & mask
                if s_.any():
                    f = np.flatnonzero(s_)
                    mask[f] = state.x[I[f], dims[f]] != state.x[J[f], dims[f]]
            hits = np.flatnonzero(mask)
            advanced = False
            start, size = 0, 32
            while start < hits.size:
                h = hits[start : start + size]
                start += size
                size = min(2 * size, _BATCH)
                cur = state.criterion
                ok = np.flatnonzero(_better(state.evaluate(I[h], J[h], dims[h]), cur))
                if ok.size:
                    hit = int(h[ok[0]])
                    state.apply(int(I[hit]), int(J[hit]), int(dims[hit]))
                    if state.d2_min < cur[0] * (1 - _REL_TOL):
                        raise AssertionError("accepted swap decreased d_min")
                    improved = True
                    if callback is not None:
                        callback(math.sqrt(state.d2_min))
                    pos += hit + 1
                    advanced = True
                    break
            if not advanced:
                pos += I.size
        history.append(math.sqrt(state.d2_min))
        stale = 0 if improved else stale + 1

    return SampleSet(
        points=state.x,
        d_min=min_pairwise_distance(state.x, space, weight),
        seed=config.seed,
        sweeps=sweeps,
        history=history,
    )


# --- grid ------------------------------------------------------------------

def snap_to_grid(samples: SampleSet, space: DesignSpace, weight: float = 1.0) -> SampleSet:
    """Snap each sample to its nearest grid stratum centers.

    The first sample landing on a grid point keeps it; later collisions are
    reassigned, in sample order, to the unused grid point farthest (by min
    distance) from everything kept so far, ties going to the lowest point_id.
    """
    x = np.atleast_2d(samples.points)
    n, d = x.shape
    if d != space.dim:
        raise SamplingError(f"samples have {d} dims but space has {space.dim} parameters")
    if n > space.size:
        raise SamplingError(f"cannot place {n} distinct samples in a {space.size}-point space")
    ids = encode_indices(space, snap_coordinates(space, x))
    kept: list[int] = []
    seen: set[int] = set()
    dupes = 0
    for pid in ids.tolist():
        if pid in seen:
            dupes += 1
        else:
            seen.add(pid)
            kept.append(pid)

    if dupes:
        grid = grid_coordinates(space)
        cat = space.categorical_mask()
        glv = level_indices(space, np.arange(space.size))

        def dist_to(pid: int) -> np.ndarray:
            out = np.zeros(space.size)
            for k in range(d):
                if cat[k]:
                    out += weight * (glv[:, k] != glv[pid, k])
                else:
                    diff = grid[:, k] - grid[pid, k]
                    out += diff * diff
            return out

        nearest = np.full(space.size, np.inf)
        for pid in kept:
            np.minimum(nearest, dist_to(pid), out=nearest)
        nearest[kept] = -np.inf
        for _ in range(dupes):
            pid = int(np.argmax(nearest))  # first maximum == lowest point_id
            kept.append(pid)
            np.minimum(nearest, dist_to(pid), out=nearest)
            nearest[pid] = -np.inf

    grid_ids = np.array(sorted(kept), dtype=np.int64)
    pts = grid_coordinates(space, grid_ids)
    return SampleSet(
        points=pts,
        d_min=_d_min_or_inf(pts, space, weight),
        seed=samples.seed,
        grid_ids=grid_ids,
        sweeps=samples.sweeps,
        history=list(samples.history),
    )


class _GridNeighbours:
    """Three nearest selected slots for every grid point."""

    def __init__(self, space: DesignSpace, ids: np.ndarray, weight: float):
        self.grid = grid_coordinates(space)
        self.glv = level_indices(space, np.arange(space.size))
        self.cat = space.categorical_mask()
        self.weight = weight
        self.ids = ids.copy()
        self.selected = np.zeros(space.size, dtype=bool)
        self.selected[ids] = True
        self.kn = min(3, ids.size)
        self.idx = np.zeros((space.size, self.kn), dtype=np.int64)
        self.val = np.zeros((space.size, self.kn))
        self._refresh(np.arange(space.size))

    def _dist(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        out = np.zeros((rows.size, cols.size))
        for k in range(self.grid.shape[1]):
            if self.cat[k]:
                out += self.weight * (self.glv[rows, k][:, None] != self.glv[cols, k][None, :])
            else:
                diff = self.grid[rows, k][:, None] - self.grid[cols, k][None, :]
                out += diff * diff
        return out

    def _refresh(self, rows: np.ndarray) -> None:
        for start in range(0, rows.size, 2048):
            r = rows[start : start + 2048]
            sub = self._dist(r, self.ids)
            if self.kn < self.ids.size:
                part = np.argpartition(sub, self.kn - 1, axis=1)[:, : self.kn]
            else:
                part = np.tile(np.arange(self.ids.size), (r.size, 1))
            vals = np.take_along_axis(sub, part, axis=1)
            order = np.argsort(vals, axis=1, kind="stable")
            self.idx[r] = np.take_along_axis(part, order, axis=1)
            self.val[r] = np.take_along_axis(vals, order, axis=1)

    def nearest_other(self) -> np.ndarray:
        """Squared distance from each selected slot to its nearest other slot."""
        return self.val[self.ids, 1]

    def score_without(self, slot: int) -> np.ndarray:
        """Distance from every unselected grid point to the selection minus ``slot``."""
        score = np.where(self.idx[:, 0] == slot, self.val[:, 1], self.val[:, 0])
        score[self.selected] = -np.inf
        return score

    def move(self, slot: int, new_id: int) -> None:
        self.selected[self.ids[slot]] = False
        self.selected[new_id] = True
        self.ids[slot] = new_id
        col = self._dist(np.arange(self.grid.shape[0]), np.array([new_id]))[:, 0]
        stale = (self.idx == slot).any(axis=1)
        self._refresh(np.flatnonzero(stale))
        fresh = ~stale & (col < self.val[:, -1])
        for g in np.flatnonzero(fresh):
            vals = np.append(self.val[g, :-1], col[g])
            idx = np.append(self.idx[g, :-1], slot)
            order = np.argsort(vals, kind="stable")
            self.val[g], self.idx[g] = vals[order], idx[order]


def refine_on_grid(samples: SampleSet, space: DesignSpace, weight: float = 1.0, max_moves: int | None = None) -> SampleSet:
    """Exchange refinement of a snapped sample on the discrete grid.

    Repeatedly replaces an endpoint of a minimum-distance pair by the unused
    grid point farthest from the rest of the selection, but only when that
    point is strictly farther than the current d_min. Each accepted move
    removes at least one minimum pair without creating one, so d_min never
    decreases and the loop terminates.
    """
    ids = np.asarray(samples.grid_ids, dtype=np.int64)
    n = ids.size
    if n < 2 or n >= space.size:
        return samples
    nb = _GridNeighbours(space, ids, weight)
    max_moves = 10 * n if max_moves is None else max_moves
    moves = 0
    while moves < max_moves:
        near = nb.nearest_other()
        cur = near.min()
        thr = cur * (1 + _REL_TOL)
        slots = np.flatnonzero(near <= thr)
        slots = slots[np.argsort(nb.ids[slots], kind="stable")]
        moved = False
        for slot in slots:
            score = nb.score_without(int(slot))
            g = int(np.argmax(score))
            if score[g] > thr:
                nb.move(int(slot), g)
                moves += 1
                moved = True
                break
        if not moved:
            break
    grid_ids = np.sort(nb.ids)
    pts = grid_coordinates(space, grid_ids)
    return SampleSet(
        points=pts,
        d_min=_d_min_or_inf(pts, space, weight),
        seed=samples.seed,
        grid_ids=grid_ids,
        sweeps=samples.sweeps,
        history=list(samples.history),
    )


def random_sample(space: DesignSpace, n: int, seed: int | None = 0, weight: float = 1.0) -> SampleSet:
    """``n`` distinct grid points drawn uniformly without replacement."""
    if n > space.size:
        raise SamplingError(f"cannot draw {n} distinct points from a {space.size}-point space")
    if n < 1:
        raise SamplingError("n must be >= 1")
    rng = np.random.default_rng(seed)
    ids = np.sort(rng.choice(space.size, size=n, replace=False)).astype(np.int64)
    pts = grid_coordinates(space, ids)
    return SampleSet(points=pts, d_min=_d_min_or_inf(pts, space, weight), seed=seed, grid_ids=ids)


def maxmin_sample(space: DesignSpace, n: int, config: SamplerConfig | None = None) -> SampleSet:
    """Full MaxMin LHS route: Latin init, swap optimization, grid snapping
    and (unless disabled) exchange refinement on the grid."""
    config = config or SamplerConfig()
    init = lhs_initial(n, space.dim, config.seed)
    opt = maxmin_optimize(init, config, space)
    snapped = snap_to_grid(opt, space, config.categorical_mismatch_weight)
    if config.grid_refine:
        snapped = refine_on_grid(snapped, space, config.categorical_mismatch_weight)
    return snapped


def draw_samples(space: DesignSpace, n: int, sampler: str, config: SamplerConfig) -> SampleSet:
    if sampler == "maxmin":
        return maxmin_sample(space, n, config)
    if sampler == "random":
        return random_sample(space, n, config.seed, config.categorical_mismatch_weight)
    raise ValueError(f"unknown sampler {sampler!r}")


# --- CSV -------------------------------------------------------------------

def samples_to_csv(space: DesignSpace, grid_ids) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["point_id", *space.names])
    for pt in space.points(sorted(int(i) for i in grid_ids)):
        w.writerow([pt.point_id, *(format_level(p, v) for p, v in zip(space.parameters, pt.values))])
    return buf.getvalue()


def samples_from_csv(space: DesignSpace, text: str) -> np.ndarray:
    """Read a sample CSV back to grid ids, checking values against each id."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0][:1] != ["point_id"]:
        raise SamplingError("sample CSV must start with a 'point_id' header")
    header = rows[0][1:]
    if header != space.names:
        raise SamplingError(f"sample CSV columns {header} do not match space parameters {space.names}")
    ids = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            pid = int(row[0])
            if encode(space, row[1:]) != pid:
                raise SamplingError(f"line {lineno}: values do not match point_id {pid}")
        except (ValueError, DesignSpaceError) as exc:
            raise SamplingError(f"line {lineno}: {exc}") from None
        ids.append(pid)
    if len(set(ids)) != len(ids):
        raise SamplingError("sample CSV contains duplicate point_ids")
    return np.array(sorted(ids), dtype=np.int64)
