"""
Region analysis
Lattice grids over probability simplices, rasterized deviation regions C(i, s_i, d_i),
their intersections, connected components, lifts to joint distributions and the
l-coordinate transform under which similarly ranked regions become linear.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import bisect

from equilibria.cpt_core import (
    CptPreferences,
    ValueFunction,
    WeightingFunction,
    regret,
    regret_many,
    similarly_ranked,
)
from equilibria.game_model import (
    DEFAULT_TOL,
    Game,
    GamePreferences,
    JointDistribution,
    is_cpt_correlated_equilibrium,
)


FUZZY_BAND = 1e-4
CHAIN_TOL = 1e-12
CHUNK = 4096


class GridMismatch(ValueError):
    pass


class NonMonotoneChain(ValueError):
    pass


@lru_cache(maxsize=32)
def _compositions(n: int, t: int) -> np.ndarray:
    if t == 1:
        out = np.array([[n]], dtype=np.int64)
    else:
        blocks = []
        for first in range(n, -1, -1):
            rest = _compositions(n - first, t - 1)
            blocks.append(np.column_stack([np.full(len(rest), first, dtype=np.int64), rest]))
        out = np.vstack(blocks)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SimplexGrid:
    dimension: int
    resolution: int

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("grid dimension must be at least 1")
        if self.resolution < 1:
            raise ValueError("grid resolution must be positive")

    @property
    def point_count(self) -> int:
        return math.comb(self.resolution + self.dimension - 1, self.dimension - 1)

    @property
    def lattice(self) -> np.ndarray:
        """Integer points k with sum n, first coordinate descending."""
        return _compositions(self.resolution, self.dimension)

    @property
    def points(self) -> np.ndarray:
        return self.lattice / float(self.resolution)

    def _keys(self, lattice: np.ndarray) -> np.ndarray:
        radix = (self.resolution + 1) ** np.arange(self.dimension, dtype=np.int64)
        return lattice @ radix

    def neighbour_pairs(self) -> np.ndarray:
        """Index pairs (u, v), u < v, one unit of mass apart."""
        lattice = self.lattice
        keys = self._keys(lattice)
        order = np.argsort(keys)
        sorted_keys = keys[order]
        pairs = []
        for a, b in itertools.permutations(range(self.dimension), 2):
            src = np.nonzero(lattice[:, a] > 0)[0]
            moved = lattice[src].copy()
            moved[:, a] -= 1
            moved[:, b] += 1
            pos = np.searchsorted(sorted_keys, self._keys(moved))
            dst = order[pos]
            keep = src < dst
            pairs.append(np.column_stack([src[keep], dst[keep]]))
        if not pairs:
            return np.zeros((0, 2), dtype=np.int64)
        return np.vstack(pairs)


class UnionFind:
    """Disjoint sets over 0..size-1 with path compression."""

    def __init__(self, size: int):
        self.parents = list(range(size))

    def find(self, elem: int) -> int:
        root = elem
        while root != self.parents[root]:
            root = self.parents[root]
        while elem != root:
            nxt = self.parents[elem]
            self.parents[elem] = root
            elem = nxt
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parents[rb] = ra


def label_components(grid: SimplexGrid, bits: np.ndarray) -> np.ndarray:
    """Component id per member point (ids in order of first lattice appearance), -1 elsewhere."""
    bits = np.asarray(bits, dtype=bool)
    uf = UnionFind(len(bits))
    pairs = grid.neighbour_pairs()
    pairs = pairs[bits[pairs[:, 0]] & bits[pairs[:, 1]]]
    for u, v in pairs:
        uf.union(int(u), int(v))

    labels = np.full(len(bits), -1, dtype=np.int64)
    ids: dict[int, int] = {}
    for k in np.nonzero(bits)[0]:
        root = uf.find(int(k))
        if root not in ids:
            ids[root] = len(ids)
        labels[k] = ids[root]
    return labels


@dataclass(frozen=True, eq=False)
class RegionMask:
    grid: SimplexGrid
    bits: np.ndarray
    labels: np.ndarray
    # regret (or the smallest regret over intersected regions) at every grid point
    values: np.ndarray
    fuzzy_count: int = 0

    @classmethod
    def from_values(cls, grid: SimplexGrid, values: np.ndarray, *, tolerance: float = DEFAULT_TOL, fuzzy_band: float = FUZZY_BAND) -> "RegionMask":
        values = np.asarray(values, dtype=float)
        bits = values >= -tolerance
        return cls(
            grid=grid,
            bits=bits,
            labels=label_components(grid, bits),
            values=values,
            fuzzy_count=int(np.count_nonzero(np.abs(values) < fuzzy_band)),
        )

    @property
    def member_count(self) -> int:
        return int(np.count_nonzero(self.bits))

    def label_at(self, p: Sequence[float]) -> int:
        """Component id of the grid point nearest to p (-1 when that point is not a member)."""
        dist = np.abs(self.grid.points - np.asarray(p, dtype=float)).sum(axis=1)
        return int(self.labels[int(np.argmin(dist))])


def _check_grid(game: Game, i: int, grid: SimplexGrid) -> None:
    t = game.profile_count // game.strategy_counts[i]
    if grid.dimension != t:
        raise GridMismatch(f"grid over {grid.dimension} points, but player {i + 1} faces {t} opponent profiles")


def _chunked_regret(probs: np.ndarray, x, y, prefs: CptPreferences, threads: Optional[int]) -> np.ndarray:
    chunks = [probs[k : k + CHUNK] for k in range(0, len(probs), CHUNK)]
    if threads is None or threads <= 1 or len(chunks) == 1:
        return np.concatenate([regret_many(c, x, y, prefs) for c in chunks])
    with ThreadPoolExecutor(max_workers=threads) as pool:
        # map keeps chunk order, so output follows lattice order
        return np.concatenate(list(pool.map(lambda c: regret_many(c, x, y, prefs), chunks)))


def rasterize_deviation_region(
    game: Game,
    prefs: GamePreferences,
    i: int,
    s_i: int,
    d_i: int,
    grid: SimplexGrid,
    *,
    tolerance: float = DEFAULT_TOL,
    fuzzy_band: float = FUZZY_BAND,
    threads: Optional[int] = None,
) -> RegionMask:
    _check_grid(game, i, grid)
    values = _chunked_regret(grid.points, game.outcomes(i, s_i), game.outcomes(i, d_i), prefs[i], threads)
    return RegionMask.from_values(grid, values, tolerance=tolerance, fuzzy_band=fuzzy_band)


def intersect_regions(masks: Sequence[RegionMask], *, fuzzy_band: float = FUZZY_BAND) -> RegionMask:
    if not masks:
        raise GridMismatch("nothing to intersect")
    grid = masks[0].grid
    if any(m.grid != grid for m in masks):
        raise GridMismatch("regions are rasterized on different grids")
    bits = np.logical_and.reduce([m.bits for m in masks])
    values = np.minimum.reduce([m.values for m in masks])
    return RegionMask(
        grid=grid,
        bits=bits,
        labels=label_components(grid, bits),
        values=values,
        fuzzy_count=int(np.count_nonzero(np.abs(values) < fuzzy_band)),
    )


def signal_region(
    game: Game,
    prefs: GamePreferences,
    i: int,
    s_i: int,
    grid: SimplexGrid,
    *,
    tolerance: float = DEFAULT_TOL,
    threads: Optional[int] = None,
) -> RegionMask:
    """C(i, s_i): the intersection over every deviation d_i != s_i."""
    masks = [
        rasterize_deviation_region(game, prefs, i, s_i, d, grid, tolerance=tolerance, threads=threads)
        for d in range(game.strategy_counts[i])
        if d != s_i
    ]
    return intersect_regions(masks)


def component_count(mask: RegionMask) -> int:
    members = mask.labels[mask.labels >= 0]
    return int(np.unique(members).size)


@dataclass(frozen=True)
class ResolutionCheck:
    counts: dict
    consistent: bool


def component_counts_at(
    game: Game,
    prefs: GamePreferences,
    i: int,
    s_i: int,
    resolutions: Sequence[int] = (100, 200),
    *,
    d_i: Optional[int] = None,
    tolerance: float = DEFAULT_TOL,
    threads: Optional[int] = None,
) -> ResolutionCheck:
    """Component counts of C(i, s_i) (or C(i, s_i, d_i)) at several resolutions."""
    t = game.profile_count // game.strategy_counts[i]
    counts = {}
    for n in resolutions:
        grid = SimplexGrid(t, n)
        if d_i is None:
            mask = signal_region(game, prefs, i, s_i, grid, tolerance=tolerance, threads=threads)
        else:
            mask = rasterize_deviation_region(game, prefs, i, s_i, d_i, grid, tolerance=tolerance, threads=threads)
        counts[n] = component_count(mask)
    return ResolutionCheck(counts=counts, consistent=len(set(counts.values())) <= 1)


def lift_to_joint(
    game: Game,
    i: int,
    per_signal_points: Mapping[int, Sequence[float]],
    signal_mix: Sequence[float],
) -> JointDistribution:
    q = np.asarray(signal_mix, dtype=float)
    if q.size != game.strategy_counts[i]:
        raise GridMismatch("signal mix does not match the player's strategy count")
    others = tuple(k for j, k in enumerate(game.strategy_counts) if j != i)
    arr = np.zeros((game.strategy_counts[i],) + others)
    for s, weight in enumerate(q):
        if weight <= 0.0:
            continue
        p = np.asarray(per_signal_points[s], dtype=float)
        if p.size != math.prod(others):
            raise GridMismatch(f"conditional for signal {s} has {p.size} entries, expected {math.prod(others)}")
        arr[s] = weight * p.reshape(others)
    return JointDistribution(np.moveaxis(arr, 0, i))


def check_joint_in_C_i(
    game: Game,
    prefs: GamePreferences,
    i: int,
    mu: JointDistribution,
    tolerance: float = DEFAULT_TOL,
) -> bool:
    marg = mu.marginal(i)
    for s_i in range(game.strategy_counts[i]):
        if marg[s_i] <= tolerance:
            continue
        p = mu.conditional(i, s_i)
        x = game.outcomes(i, s_i)
        for d_i in range(game.strategy_counts[i]):
            if d_i != s_i and regret(p, x, game.outcomes(i, d_i), prefs[i]) < -tolerance:
                return False
    return True


@dataclass(frozen=True)
class LiftScan:
    checked: int
    members: tuple[JointDistribution, ...]


def scan_lifted_cce(
    game: Game,
    prefs: GamePreferences,
    i: int,
    signals: Sequence[int],
    *,
    resolution: int = 6,
    tolerance: float = DEFAULT_TOL,
) -> LiftScan:
    """
    CPT correlated equilibria among lifts whose signal mix is supported on `signals`:
    every lattice signal mix combined with every lattice conditional per signal.
    """
    t = game.profile_count // game.strategy_counts[i]
    cond_points = SimplexGrid(t, resolution).points
    mix_points = SimplexGrid(len(signals), resolution).points
    members = []
    checked = 0
    for mix in mix_points:
        q = np.zeros(game.strategy_counts[i])
        q[list(signals)] = mix
        active = [s for s in signals if q[s] > 0.0]
        for combo in itertools.product(range(len(cond_points)), repeat=len(active)):
            mu = lift_to_joint(game, i, {s: cond_points[k] for s, k in zip(active, combo)}, q)
            checked += 1
            if is_cpt_correlated_equilibrium(game, prefs, mu, tolerance).is_member:
                members.append(mu)
    return LiftScan(checked=checked, members=tuple(members))


@dataclass(frozen=True)
class LCoordinates:
    values: tuple[float, ...]
    ordering: tuple[int, ...]

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        ordering = tuple(int(a) for a in self.ordering)
        if len(values) != len(ordering) or sorted(ordering) != list(range(len(ordering))):
            raise NonMonotoneChain("ordering must be a permutation matching the chain length")
        if not values or values[0] < -CHAIN_TOL or abs(values[-1] - 1.0) > CHAIN_TOL:
            raise NonMonotoneChain("chain must start at or above 0 and end at 1")
        if any(b < a - CHAIN_TOL for a, b in zip(values, values[1:])):
            raise NonMonotoneChain("chain must be non-decreasing")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "ordering", ordering)


def to_l_coordinates(p: Sequence[float], ordering: Sequence[int], w: WeightingFunction) -> LCoordinates:
    probs = [float(v) for v in p]
    values = [w(math.fsum(probs[a] for a in ordering[: j + 1])) for j in range(len(ordering))]
    values[-1] = 1.0
    return LCoordinates(tuple(values), tuple(ordering))


def _w_inverse(w: WeightingFunction, level: float) -> float:
    if level <= 0.0:
        return 0.0
    if level >= 1.0:
        return 1.0
    return float(bisect(lambda c: w(c) - level, 0.0, 1.0, xtol=1e-14, maxiter=200))


def from_l_coordinates(l: LCoordinates, w: WeightingFunction) -> tuple[float, ...]:
    cumulative = [_w_inverse(w, v) for v in l.values]
    probs = [0.0] * len(cumulative)
    prev = 0.0
    for a, c in zip(l.ordering, cumulative):
        probs[a] = max(0.0, c - prev)
        prev = max(prev, c)
    return tuple(probs)


def l_linear_regret(l: LCoordinates, x: Sequence[float], y: Sequence[float], value: ValueFunction = ValueFunction()) -> float:
    """
    Left minus right side of the deviation inequality written in l-coordinates
    (one-sided, gains only, common ordering for x and y).
    """
    def side(z: Sequence[float]) -> float:
        vz = [value(z[a]) for a in l.ordering] + [0.0]
        return math.fsum(lj * (vz[j] - vz[j + 1]) for j, lj in enumerate(l.values))

    return side(x) - side(y)


def support_reduction_depth(x: Sequence[float], y: Sequence[float]) -> int:
    """How many indices must be dropped before x and y become similarly ranked."""
    support = list(range(len(x)))
    depth = 0
    while True:
        p = [1.0 if j in support else 0.0 for j in range(len(x))]
        if similarly_ranked(p, x, y) is not None:
            return depth
        drop = next(
            j2
            for j1, j2 in itertools.permutations(support, 2)
            if x[j1] > x[j2] and y[j1] <= y[j2]
        )
        support.remove(drop)
        depth += 1


@dataclass(frozen=True)
class ConvexityReport:
    components: int
    similarly_ranked: bool
    l_convex: Optional[bool]
    midpoints_checked: int
    midpoint_failures: int
    reduction_depth: int

    def to_dict(self) -> dict:
        return {
            "components": self.components,
            "similarly_ranked": self.similarly_ranked,
            "l_convex": self.l_convex,
            "midpoints_checked": self.midpoints_checked,
            "midpoint_failures": self.midpoint_failures,
            "reduction_depth": self.reduction_depth,
        }


def convexity_check(
    mask: RegionMask,
    game: Game,
    prefs: GamePreferences,
    i: int,
    s_i: int,
    d_i: int,
    *,
    samples: int = 200,
    seed: int = 0,
    tolerance: float = DEFAULT_TOL,
) -> ConvexityReport:
    x = game.outcomes(i, s_i)
    y = game.outcomes(i, d_i)
    ordering = similarly_ranked([1.0] * len(x), x, y)
    depth = support_reduction_depth(x, y)

    members = np.nonzero(mask.bits)[0]
    if ordering is None or len(members) < 2:
        return ConvexityReport(component_count(mask), ordering is not None, None, 0, 0, depth)

    w = prefs[i].weight_gain
    rng = np.random.default_rng(seed)
    points = mask.grid.points
    failures = 0
    for _ in range(samples):
        u, v = rng.choice(members, size=2, replace=False)
        lu = to_l_coordinates(points[u], ordering, w).values
        lv = to_l_coordinates(points[v], ordering, w).values
        mid = LCoordinates(tuple(0.5 * (a + b) for a, b in zip(lu, lv)), ordering)
        p_mid = from_l_coordinates(mid, w)
        total = math.fsum(p_mid)
        p_mid = tuple(pj / total for pj in p_mid)
        if regret(p_mid, x, y, prefs[i]) < -max(tolerance, 1e-9):
            failures += 1
    return ConvexityReport(component_count(mask), True, failures == 0, samples, failures, depth)
