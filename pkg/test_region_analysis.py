from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from equilibria import presets
from equilibria.cpt_core import CptPreferences, ValueFunction, WeightingFunction, regret
from equilibria.game_model import Game, GamePreferences, JointDistribution, is_cpt_correlated_equilibrium
from equilibria.region_analysis import (
    GridMismatch,
    LCoordinates,
    NonMonotoneChain,
    SimplexGrid,
    UnionFind,
    check_joint_in_C_i,
    component_count,
    component_counts_at,
    convexity_check,
    from_l_coordinates,
    intersect_regions,
    l_linear_regret,
    label_components,
    lift_to_joint,
    rasterize_deviation_region,
    scan_lifted_cce,
    signal_region,
    support_reduction_depth,
    to_l_coordinates,
)

TOP, CENTER, BOTTOM = 0, 1, 2
RED, YELLOW, GREEN = 0, 1, 2


def _dominance_game() -> Game:
    # strategy 0 beats strategy 1 against every column
    return Game.bimatrix([[2, 2, 2], [1, 1, 1]], np.zeros((2, 3)))


def test_grid_sizes_and_order() -> None:
    grid = SimplexGrid(3, 10)
    assert grid.point_count == 66
    assert grid.lattice.shape == (66, 3)
    assert np.all(grid.lattice.sum(axis=1) == 10)
    assert list(grid.lattice[0]) == [10, 0, 0]
    assert np.all(np.diff(grid.lattice[:, 0]) <= 0)
    assert grid.points == pytest.approx(grid.lattice / 10.0)
    assert SimplexGrid(4, 5).point_count == math.comb(8, 3)
    with pytest.raises(ValueError):
        SimplexGrid(3, 0)


@pytest.mark.parametrize("dimension,resolution", [(2, 7), (3, 6), (4, 4)])
def test_neighbour_pairs_match_brute_force(dimension: int, resolution: int) -> None:
    grid = SimplexGrid(dimension, resolution)
    lattice = grid.lattice
    expected = set()
    for u in range(len(lattice)):
        for v in range(u + 1, len(lattice)):
            diff = lattice[v] - lattice[u]
            if np.abs(diff).sum() == 2:
                expected.add((u, v))
    assert {tuple(int(k) for k in pair) for pair in grid.neighbour_pairs()} == expected


def test_union_find() -> None:
    uf = UnionFind(6)
    uf.union(0, 1)
    uf.union(4, 5)
    uf.union(1, 5)
    assert uf.find(0) == uf.find(4)
    assert uf.find(2) != uf.find(0)
    assert len({uf.find(k) for k in range(6)}) == 3


def test_labels_agree_with_scipy_components(rng: np.random.Generator) -> None:
    grid = SimplexGrid(3, 30)
    pairs = grid.neighbour_pairs()
    for density in (0.3, 0.55, 0.8):
        bits = rng.random(grid.point_count) < density
        labels = label_components(grid, bits)
        assert np.all((labels >= 0) == bits)

        members = np.nonzero(bits)[0]
        remap = -np.ones(grid.point_count, dtype=np.int64)
        remap[members] = np.arange(len(members))
        kept = pairs[bits[pairs[:, 0]] & bits[pairs[:, 1]]]
        adjacency = coo_matrix(
            (np.ones(len(kept)), (remap[kept[:, 0]], remap[kept[:, 1]])),
            shape=(len(members), len(members)),
        )
        n_components, scipy_labels = connected_components(adjacency, directed=False)

        ours = labels[members]
        assert len(set(ours)) == n_components
        assert len(set(zip(ours, scipy_labels))) == n_components

        _, first_seen = np.unique(ours, return_index=True)
        assert np.all(np.diff(first_seen) > 0)


def test_full_and_empty_regions() -> None:
    game = _dominance_game()
    prefs = GamePreferences.eut(2)
    grid = SimplexGrid(3, 20)
    full = rasterize_deviation_region(game, prefs, 0, 0, 1, grid)
    empty = rasterize_deviation_region(game, prefs, 0, 1, 0, grid)
    assert full.member_count == grid.point_count
    assert component_count(full) == 1
    assert empty.member_count == 0
    assert component_count(empty) == 0
    assert np.all(empty.labels == -1)

    # player 2 is indifferent everywhere
    flat = rasterize_deviation_region(game, prefs, 1, 0, 1, SimplexGrid(2, 20))
    assert flat.member_count == 21
    assert flat.fuzzy_count == 21


def test_intersections() -> None:
    game = _dominance_game()
    prefs = GamePreferences.eut(2)
    grid = SimplexGrid(3, 20)
    full = rasterize_deviation_region(game, prefs, 0, 0, 1, grid)
    empty = rasterize_deviation_region(game, prefs, 0, 1, 0, grid)
    assert intersect_regions([full, full]).member_count == grid.point_count
    assert intersect_regions([full, empty]).member_count == 0
    assert np.array_equal(intersect_regions([full, empty]).values, np.minimum(full.values, empty.values))

    other = rasterize_deviation_region(game, prefs, 0, 0, 1, SimplexGrid(3, 21))
    with pytest.raises(GridMismatch):
        intersect_regions([full, other])
    with pytest.raises(GridMismatch):
        intersect_regions([])
    with pytest.raises(GridMismatch):
        rasterize_deviation_region(game, prefs, 0, 0, 1, SimplexGrid(2, 20))


def test_top_versus_bottom_depends_on_red_only(example_game: Game, example_prefs: GamePreferences) -> None:
    mask = rasterize_deviation_region(example_game, example_prefs, 0, TOP, BOTTOM, SimplexGrid(3, 200))
    p_red = mask.grid.points[:, 0]
    assert np.all(mask.bits[p_red <= 0.39])
    assert not np.any(mask.bits[p_red >= 0.41])
    assert component_count(mask) == 1


@pytest.mark.parametrize("signal,keep", [(RED, "high"), (GREEN, "high"), (YELLOW, "low")])
def test_column_player_half_planes(example_game: Game, example_prefs: GamePreferences, signal: int, keep: str) -> None:
    n = 100
    mask = signal_region(example_game, example_prefs, 1, signal, SimplexGrid(3, n))
    k_top = mask.grid.lattice[:, 0]
    expected = 2 * k_top >= n if keep == "high" else 2 * k_top <= n
    assert np.array_equal(mask.bits, expected)


def test_top_signal_region_is_disconnected(example_game: Game, example_prefs: GamePreferences) -> None:
    check = component_counts_at(example_game, example_prefs, 0, TOP, (100, 200))
    assert check.counts == {100: 2, 200: 2}
    assert check.consistent

    mask = signal_region(example_game, example_prefs, 0, TOP, SimplexGrid(3, 200))
    with_yellow = mask.label_at((0.4, 0.1, 0.5))
    without_yellow = mask.label_at((0.4, 0.0, 0.6))
    assert with_yellow >= 0 and without_yellow >= 0
    assert with_yellow != without_yellow


def test_lift_reproduces_the_joint_distribution() -> None:
    game = presets.example_disconnected_game()
    mu = presets.mu_bar()
    q = mu.marginal(0)
    assert q == pytest.approx([0.5, 0.275, 0.225])
    slices = {s: mu.conditional(0, s) for s in range(3)}
    assert slices[TOP] == pytest.approx([0.4, 0.1, 0.5])
    assert np.allclose(lift_to_joint(game, 0, slices, q).mu, mu.mu, atol=1e-15)

    col_q = mu.marginal(1)
    col_slices = {s: mu.conditional(1, s) for s in range(3)}
    assert np.allclose(lift_to_joint(game, 1, col_slices, col_q).mu, mu.mu, atol=1e-15)

    with pytest.raises(GridMismatch):
        lift_to_joint(game, 0, slices, (0.5, 0.5))


def test_per_player_regions_combine_to_equilibrium(
    example_game: Game, example_prefs: GamePreferences, rng: np.random.Generator
) -> None:
    for mu in (presets.mu_bar(), presets.mu_tilde()):
        assert check_joint_in_C_i(example_game, example_prefs, 0, mu)
        assert check_joint_in_C_i(example_game, example_prefs, 1, mu)
    assert not check_joint_in_C_i(example_game, example_prefs, 0, presets.yellow_column())

    samples = [presets.mu_bar(), presets.mu_tilde(), presets.yellow_column()]
    for _ in range(200):
        flat = rng.dirichlet(np.ones(9))
        flat[-1] = 1.0 - math.fsum(flat[:-1])
        samples.append(JointDistribution.from_flat(flat, (3, 3)))
    for mu in samples:
        both = all(check_joint_in_C_i(example_game, example_prefs, i, mu) for i in range(2))
        assert both == is_cpt_correlated_equilibrium(example_game, example_prefs, mu).is_member


def test_no_equilibrium_avoids_top(example_game: Game, example_prefs: GamePreferences) -> None:
    scan = scan_lifted_cce(example_game, example_prefs, 0, (CENTER, BOTTOM), resolution=6)
    assert scan.checked == 3976
    assert scan.members == ()


def test_l_coordinates_for_identity_weights() -> None:
    l = to_l_coordinates((0.2, 0.5, 0.3), (1, 0, 2), WeightingFunction.identity())
    assert l.values == pytest.approx((0.5, 0.7, 1.0))
    assert from_l_coordinates(l, WeightingFunction.identity()) == pytest.approx((0.2, 0.5, 0.3))


def test_l_coordinates_round_trip(rng: np.random.Generator) -> None:
    w = WeightingFunction.prelec(0.6)
    for _ in range(100):
        p = rng.dirichlet(np.ones(4))
        ordering = tuple(int(k) for k in rng.permutation(4))
        back = from_l_coordinates(to_l_coordinates(p, ordering, w), w)
        assert np.max(np.abs(np.asarray(back) - p)) <= 1e-10


def test_regret_is_linear_in_l_coordinates(rng: np.random.Generator) -> None:
    value = ValueFunction.piecewise_power(gain_exp=0.88, loss_exp=0.88, loss_aversion=2.25)
    for _ in range(200):
        alpha = float(rng.uniform(0.3, 1.0))
        prefs = CptPreferences(value=value, weight_gain=WeightingFunction.prelec(alpha), weight_loss=WeightingFunction.prelec(alpha))
        ordering = tuple(int(k) for k in rng.permutation(3))
        x = np.zeros(3)
        y = np.zeros(3)
        x[list(ordering)] = np.sort(rng.uniform(0.0, 10.0, 3))[::-1]
        y[list(ordering)] = np.sort(rng.uniform(0.0, 10.0, 3))[::-1]
        p = rng.dirichlet(np.ones(3))
        p[-1] = 1.0 - math.fsum(p[:-1])
        l = to_l_coordinates(p, ordering, prefs.weight_gain)
        assert l_linear_regret(l, x, y, value) == pytest.approx(regret(p, x, y, prefs), abs=1e-12)


def test_l_chain_validation() -> None:
    with pytest.raises(NonMonotoneChain):
        LCoordinates((0.5, 0.4, 1.0), (0, 1, 2))
    with pytest.raises(NonMonotoneChain):
        LCoordinates((0.2, 0.5, 0.9), (0, 1, 2))
    with pytest.raises(NonMonotoneChain):
        LCoordinates((0.2, 0.5, 1.0), (0, 0, 1))


def test_support_reduction_depth() -> None:
    top = presets.ROW_PAYOFFS[TOP]
    assert support_reduction_depth(top, presets.ROW_PAYOFFS[BOTTOM]) == 0
    assert support_reduction_depth(top, presets.ROW_PAYOFFS[CENTER]) == 1
    assert support_reduction_depth((3, 2, 1), (1, 2, 3)) == 2


def test_convexity_check_on_the_example(example_game: Game, example_prefs: GamePreferences) -> None:
    grid = SimplexGrid(3, 100)
    bottom = rasterize_deviation_region(example_game, example_prefs, 0, TOP, BOTTOM, grid)
    report = convexity_check(bottom, example_game, example_prefs, 0, TOP, BOTTOM)
    assert report.similarly_ranked
    assert report.l_convex is True
    assert report.midpoint_failures == 0
    assert report.midpoints_checked == 200
    assert report.reduction_depth == 0

    center = rasterize_deviation_region(example_game, example_prefs, 0, TOP, CENTER, grid)
    report = convexity_check(center, example_game, example_prefs, 0, TOP, CENTER)
    assert not report.similarly_ranked
    assert report.l_convex is None
    assert report.reduction_depth == 1
    assert report.to_dict()["components"] == component_count(center)


def test_similarly_ranked_region_is_convex_in_l_coordinates() -> None:
    game = Game.bimatrix([[2, 1, 0], [1.5, 1.5, 0]], np.zeros((2, 3)))
    prefs = GamePreferences((CptPreferences.prelec(0.5), CptPreferences.eut()))
    mask = rasterize_deviation_region(game, prefs, 0, 0, 1, SimplexGrid(3, 60))
    assert 1 < mask.member_count < mask.grid.point_count
    report = convexity_check(mask, game, prefs, 0, 0, 1, samples=300, seed=7)
    assert report.similarly_ranked
    assert report.l_convex is True
    assert report.components == 1
    assert report.reduction_depth == 0


def test_similarly_ranked_regions_stay_connected(rng: np.random.Generator) -> None:
    grid = SimplexGrid(3, 40)
    checked = 0
    while checked < 25:
        ordering = rng.permutation(3)
        x = np.zeros(3)
        y = np.zeros(3)
        x[ordering] = np.sort(rng.uniform(0.0, 10.0, 3))[::-1]
        y[ordering] = np.sort(rng.uniform(0.0, 10.0, 3))[::-1]
        if np.all(x >= y) or np.all(x <= y):
            continue
        game = Game.bimatrix([x, y], np.zeros((2, 3)))
        prefs = GamePreferences((CptPreferences.prelec(float(rng.uniform(0.4, 1.0))), CptPreferences.eut()))
        mask = rasterize_deviation_region(game, prefs, 0, 0, 1, grid)
        assert component_count(mask) <= 1
        checked += 1


def test_tolerance_only_grows_the_region(example_game: Game, example_prefs: GamePreferences) -> None:
    grid = SimplexGrid(3, 80)
    strict = rasterize_deviation_region(example_game, example_prefs, 0, TOP, CENTER, grid, tolerance=1e-9)
    loose = rasterize_deviation_region(example_game, example_prefs, 0, TOP, CENTER, grid, tolerance=1e-1)
    assert np.all(loose.bits[strict.bits])
    assert loose.member_count >= strict.member_count


def test_threaded_rasterization_is_deterministic(example_game: Game, example_prefs: GamePreferences) -> None:
    grid = SimplexGrid(3, 150)
    serial = rasterize_deviation_region(example_game, example_prefs, 0, TOP, CENTER, grid)
    threaded = rasterize_deviation_region(example_game, example_prefs, 0, TOP, CENTER, grid, threads=4)
    assert np.array_equal(serial.values, threaded.values)
    assert np.array_equal(serial.labels, threaded.labels)
