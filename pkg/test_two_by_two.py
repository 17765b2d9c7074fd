from __future__ import annotations

import math

import numpy as np
import pytest

from equilibria.cpt_core import CptPreferences, regret, regret_many
from equilibria.game_model import (
    Game,
    GamePreferences,
    JointDistribution,
    StrategyRelation,
    is_cpt_correlated_equilibrium,
    is_eut_correlated_equilibrium,
)
from equilibria.region_analysis import SimplexGrid
from equilibria.two_by_two import (
    Degeneracy,
    GameType,
    Limit,
    NotTwoByTwo,
    WrongSignPattern,
    canonical_game,
    characterize,
    classify,
    detect_relations,
    nash_set_2x2,
    outward_step,
    tau,
    threshold,
)


def _has_vertex(vertices, target, tol: float = 1e-8) -> bool:
    return any(np.max(np.abs(np.asarray(v) - np.asarray(target))) <= tol for v in vertices)


def test_threshold_eut_and_sign_pattern() -> None:
    eut = CptPreferences.eut()
    assert threshold((2.0, 0.0), (0.0, 1.0), eut) == pytest.approx(1 / 3, abs=1e-10)
    assert threshold((0.0, 1.0), (2.0, 0.0), eut) == pytest.approx(1 / 3, abs=1e-10)
    with pytest.raises(WrongSignPattern):
        threshold((1.0, 1.0), (0.0, 0.0), eut)
    with pytest.raises(WrongSignPattern):
        threshold((1.0, 0.0), (1.0, 2.0), eut)


def test_threshold_under_probability_weighting() -> None:
    prefs = CptPreferences.prelec(0.5)
    q = threshold((2.0, 0.0), (0.0, 1.0), prefs)
    assert 0.0 < q < 1.0
    assert regret((q, 1.0 - q), (2.0, 0.0), (0.0, 1.0), prefs) == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("alpha", [0.5, 0.7, 1.0])
def test_threshold_is_symmetric_in_the_two_profiles(alpha: float) -> None:
    prefs = CptPreferences.prelec(alpha)
    x, y = (2.0, -1.0), (-3.0, 1.5)
    assert threshold(x, y, prefs) == pytest.approx(threshold(y, x, prefs), abs=1e-9)
    if alpha == 0.5:
        assert threshold(x, y, prefs) == pytest.approx(0.2325914145912975, abs=1e-9)


def test_regret_changes_sign_exactly_at_the_threshold() -> None:
    prefs = CptPreferences.prelec(0.5)
    game = canonical_game("I", 2.0, 3.0)
    a = game.payoffs[0]
    q = threshold(a[0], a[1], prefs)
    c1 = next(c for c in characterize(game, prefs).constraints if c.source == "C1")
    for k in range(1, 6):
        above = q + k * 1e-3
        below = q - k * 1e-3
        assert regret((above, 1.0 - above), a[0], a[1], prefs) > 0.0
        assert regret((below, 1.0 - below), a[0], a[1], prefs) < 0.0
        assert c1.slack((above, 1.0 - above, 0.0, 0.0)) > 0.0
        assert c1.slack((below, 1.0 - below, 0.0, 0.0)) < 0.0

    x, y = (2.0, -1.0), (-3.0, 1.5)
    q = threshold(x, y, prefs)
    for k in range(1, 6):
        assert regret((q + k * 1e-3, 1.0 - q - k * 1e-3), x, y, prefs) > 0.0
        assert regret((q - k * 1e-3, 1.0 - q + k * 1e-3), x, y, prefs) < 0.0


def test_tau_is_an_involution() -> None:
    mu = (0.1, 0.2, 0.3, 0.4)
    assert tau(mu) == (0.3, 0.4, 0.1, 0.2)
    assert tau(tau(mu)) == mu
    with pytest.raises(NotTwoByTwo):
        tau((0.5, 0.5))


def test_canonical_games_classify_to_their_type() -> None:
    for kind in ("I", "II", "III", "IV"):
        cls = classify(canonical_game(kind, 2.0, 3.0))
        assert cls.game_type == GameType(kind)
        assert cls.degeneracy is None
        assert cls.alpha == pytest.approx(2.0, abs=1e-8)
        assert cls.beta == pytest.approx(3.0, abs=1e-8)
        assert cls.label == f"Type{kind}"


def test_type_one_polytope() -> None:
    poly = characterize(canonical_game("I", 2.0, 3.0))
    assert len(poly.constraints) == 4
    assert not poly.equalities
    assert len(poly.vertices) == 5
    assert poly.named_vertices["C"] == pytest.approx((1 / 12, 2 / 12, 3 / 12, 6 / 12))
    for name, v in poly.named_vertices.items():
        assert _has_vertex(poly.vertices, v), name
        assert poly.contains(v)
        assert poly.is_extreme(v)
    assert not poly.contains((0.25, 0.25, 0.25, 0.25))


GRID = (0.5, 1.0, 2.0)


def _eut_slack(game: Game, points: np.ndarray) -> np.ndarray:
    """Smallest of the four linear deviation slacks at each point."""
    mu = points.reshape(-1, 2, 2)
    a, b = game.payoffs
    slacks = []
    for s in (0, 1):
        d = 1 - s
        slacks.append((mu[:, s, :] * (a[s] - a[d])).sum(axis=1))
        slacks.append((mu[:, :, s] * (b[:, s] - b[:, d])).sum(axis=1))
    return np.min(np.column_stack(slacks), axis=1)


def _eut_members(game: Game, points: np.ndarray, tolerance: float = 1e-9) -> np.ndarray:
    return _eut_slack(game, points) >= -tolerance


@pytest.mark.parametrize("kind", ["II", "III"])
@pytest.mark.parametrize("alpha", GRID)
@pytest.mark.parametrize("beta", GRID)
def test_singleton_types(kind: str, alpha: float, beta: float) -> None:
    game = canonical_game(kind, alpha, beta)
    poly = characterize(game)
    c = (1 + alpha) * (1 + beta)
    expected = (1 / c, alpha / c, beta / c, alpha * beta / c)
    assert len(poly.vertices) == 1
    assert poly.vertices[0] == pytest.approx(expected, abs=1e-8)
    assert poly.named_vertices["C"] == pytest.approx(expected)

    lattice = SimplexGrid(4, 40).points
    members = lattice[_eut_members(game, lattice)]
    assert len(members) <= 1
    assert np.all(np.max(np.abs(members - np.asarray(expected)), axis=1) <= 1 / 40)
    if alpha == beta == 1.0:
        assert len(members) == 1

    # the closest lattice cell misses each inequality by at most one grid step
    distance = np.max(np.abs(lattice - np.asarray(expected)), axis=1)
    nearest = lattice[int(np.argmin(distance))]
    assert distance.min() <= 1 / 40
    scale = max(alpha, beta, 1.0) + 1.0
    assert _eut_slack(game, nearest[None, :])[0] >= -scale / 40


@pytest.mark.parametrize("alpha", GRID)
@pytest.mark.parametrize("beta", GRID)
def test_type_one_vertices_are_tight(alpha: float, beta: float) -> None:
    game = canonical_game("I", alpha, beta)
    poly = characterize(game)
    assert len(poly.vertices) == 5
    for name, v in poly.named_vertices.items():
        mu = JointDistribution.from_flat(v, (2, 2))
        assert is_eut_correlated_equilibrium(game, mu).is_member, name
        tight = [c for c in poly.constraints if abs(c.slack(v)) <= 1e-9]
        assert tight, name
        for c in tight:
            stepped = outward_step(v, c, 1e-3)
            assert stepped is not None
            assert not is_eut_correlated_equilibrium(game, JointDistribution.from_flat(stepped, (2, 2))).is_member


def test_type_four_vertices_are_tau_images() -> None:
    alpha, beta = 2.0, 3.0
    poly = characterize(canonical_game("IV", alpha, beta))
    assert set(poly.named_vertices) == {"A", "B", "C", "D", "E"}
    assert len(poly.vertices) == 5
    for v in poly.named_vertices.values():
        assert poly.contains(v)
        assert _has_vertex(poly.vertices, v)
    type_one = characterize(canonical_game("I", alpha, 1.0 / beta))
    for name, v in type_one.named_vertices.items():
        assert poly.named_vertices[name] == pytest.approx(tau(v))


def test_matching_pennies_is_type_three() -> None:
    game = Game.bimatrix([[1, -1], [-1, 1]], [[-1, 1], [1, -1]])
    cls = classify(game)
    assert cls.game_type == GameType.TYPE_III
    poly = characterize(game)
    assert poly.vertices[0] == pytest.approx((0.25, 0.25, 0.25, 0.25), abs=1e-8)
    nash = nash_set_2x2(game)
    assert [c.kind for c in nash] == ["mixed"]
    assert nash[0].factors() == (pytest.approx((0.5, 0.5)), pytest.approx((0.5, 0.5)))


def test_strict_dominance_leaves_one_point() -> None:
    pd_row = [[3, 0], [5, 1]]
    game = Game.bimatrix(pd_row, np.transpose(pd_row))
    cls = classify(game)
    assert cls.degeneracy == Degeneracy.STRICTLY_DOMINATED
    assert cls.label == "Degenerate(strictly_dominated)"
    poly = characterize(game)
    assert len(poly.vertices) == 1
    assert poly.vertices[0] == pytest.approx((0.0, 0.0, 0.0, 1.0))
    assert {c.label for c in poly.equalities} == {"mu00 = 0", "mu01 = 0", "mu10 = 0"}
    assert [c.kind for c in nash_set_2x2(game)] == ["pure"]

    row, col = detect_relations(game)
    assert row.relation == StrategyRelation.STRICTLY_DOMINATED
    assert (row.dominated, row.by) == (0, 1)


def test_equivalent_strategies_give_the_whole_simplex() -> None:
    game = Game.bimatrix([[1, 2], [1, 2]], [[3, 3], [4, 4]])
    cls = classify(game)
    assert cls.degeneracy == Degeneracy.EQUIVALENT
    poly = characterize(game)
    assert poly.constraints == ()
    assert len(poly.vertices) == 4
    nash = nash_set_2x2(game)
    assert len(nash) == 1 and nash[0].kind == "all"


def test_weak_dominance_is_a_type_limit() -> None:
    game = Game.bimatrix([[1, 0], [1, 1]], [[1, 0], [0, 1]])
    cls = classify(game)
    assert cls.degeneracy == Degeneracy.WEAKLY_DOMINATED
    assert cls.game_type == GameType.TYPE_I
    assert cls.alpha_limit == Limit.ZERO
    assert cls.alpha == 0.0
    assert cls.label == "Degenerate(weakly_dominated, TypeI limit)"
    poly = characterize(game)
    assert [c.label for c in poly.equalities] == ["mu01 = 0"]
    _assert_vertex_set(poly.vertices, [(1, 0, 0, 0), (0.5, 0, 0.5, 0), (0, 0, 0, 1)])


def _assert_vertex_set(got, expected) -> None:
    assert len(got) == len(expected), got
    for target in expected:
        assert _has_vertex(got, target), target


DEGENERATE_CASES = [
    pytest.param(
        [[1, 1], [1, 1]], [[2, 2], [0, 1]],
        Degeneracy.EQUIVALENT, ["mu10 = 0"],
        [(1, 0, 0, 0), (0, 1, 0, 0), (0, 0, 0, 1)],
        id="equivalent-row-weak-column-triangle",
    ),
    pytest.param(
        [[1, 1], [1, 1]], [[3, 0], [0, 1]],
        Degeneracy.EQUIVALENT, [],
        [(1, 0, 0, 0), (0.25, 0, 0.75, 0), (0, 0.25, 0, 0.75), (0, 0, 0, 1)],
        id="equivalent-row-tetrahedron",
    ),
    pytest.param(
        [[0, 1], [1, 1]], [[1, 0], [0, 1]],
        Degeneracy.WEAKLY_DOMINATED, ["mu00 = 0"],
        [(0, 0.5, 0, 0.5), (0, 0, 0, 1)],
        id="type-two-limit-segment",
    ),
    pytest.param(
        [[3, 0], [5, 1]], [[3, 5], [0, 1]],
        Degeneracy.STRICTLY_DOMINATED, ["mu00 = 0", "mu01 = 0", "mu10 = 0"],
        [(0, 0, 0, 1)],
        id="strictly-dominated-point",
    ),
    pytest.param(
        [[1, 2], [1, 2]], [[3, 3], [4, 4]],
        Degeneracy.EQUIVALENT, [],
        [(1, 0, 0, 0), (0, 1, 0, 0), (0, 0, 1, 0), (0, 0, 0, 1)],
        id="both-equivalent-simplex",
    ),
]


@pytest.mark.parametrize("a, b, degeneracy, equalities, vertices", DEGENERATE_CASES)
def test_degenerate_case_table(a, b, degeneracy, equalities, vertices) -> None:
    game = Game.bimatrix(a, b)
    poly = characterize(game)
    assert poly.classification.degeneracy == degeneracy
    assert sorted(c.label for c in poly.equalities) == equalities
    _assert_vertex_set(poly.vertices, vertices)
    for v in vertices:
        mu = JointDistribution.from_flat(v, (2, 2))
        assert is_eut_correlated_equilibrium(game, mu).is_member


def test_type_two_limit_has_infinite_alpha() -> None:
    cls = classify(Game.bimatrix([[0, 1], [1, 1]], [[1, 0], [0, 1]]))
    assert cls.game_type == GameType.TYPE_II
    assert cls.alpha_limit == Limit.INFINITE
    assert cls.alpha == math.inf
    assert cls.label == "Degenerate(weakly_dominated, TypeII limit)"


def test_type_two_nash_set_is_the_uniform_point() -> None:
    nash = nash_set_2x2(canonical_game("II", 1.0, 1.0))
    assert [c.kind for c in nash] == ["mixed"]
    assert nash[0].points[0] == pytest.approx((0.25, 0.25, 0.25, 0.25), abs=1e-8)
    assert nash[0].factors() == (pytest.approx((0.5, 0.5)), pytest.approx((0.5, 0.5)))


def test_coordination_nash_set() -> None:
    nash = nash_set_2x2(canonical_game("I", 1.0, 1.0))
    kinds = sorted(c.kind for c in nash)
    assert kinds == ["mixed", "pure", "pure"]
    mixed = next(c for c in nash if c.kind == "mixed")
    assert mixed.points[0] == pytest.approx((0.25, 0.25, 0.25, 0.25))
    assert not any(c.kind == "segment" for c in nash)


def test_outward_step_leaves_the_set() -> None:
    game = canonical_game("I", 1.0, 1.0)
    poly = characterize(game)
    c2 = next(c for c in poly.constraints if c.source == "C2")
    eps = 1e-3
    stepped = outward_step(poly.named_vertices["A"], c2, eps)
    assert stepped == pytest.approx((1 - eps, 0.0, eps, 0.0))
    assert c2.slack(stepped) < 0.0
    assert not is_eut_correlated_equilibrium(game, JointDistribution.from_flat(stepped, (2, 2))).is_member


def test_cpt_thresholds_shift_the_vertices() -> None:
    prefs = CptPreferences.prelec(0.5)
    game = canonical_game("I", 2.0, 3.0)
    poly = characterize(game, prefs)
    alpha = poly.classification.alpha
    q = 1.0 / (1.0 + alpha)
    assert regret((q, 1 - q), (2.0, 0.0), (0.0, 1.0), prefs) == pytest.approx(0.0, abs=1e-8)
    assert not math.isclose(alpha, 2.0)
    assert _has_vertex(poly.vertices, poly.named_vertices["C"])


def _cpt_worst_regret(game: Game, prefs: GamePreferences, points: np.ndarray, tolerance: float) -> np.ndarray:
    """Smallest conditional regret over the four (player, signal) pairs; signals without mass are skipped."""
    worst = np.full(len(points), np.inf)
    for i in (0, 1):
        for s in (0, 1):
            cols = [2 * s, 2 * s + 1] if i == 0 else [s, s + 2]
            mass = points[:, cols].sum(axis=1)
            live = np.nonzero(mass > tolerance)[0]
            cond = points[live][:, cols] / mass[live, None]
            r = regret_many(cond, game.outcomes(i, s), game.outcomes(i, 1 - s), prefs[i])
            worst[live] = np.minimum(worst[live], r)
    return worst


def test_polytope_matches_membership_on_the_lattice(rng: np.random.Generator) -> None:
    tolerance = 1e-7
    lattice = SimplexGrid(4, 40).points
    for _ in range(5):
        game = Game(rng.uniform(-5.0, 5.0, size=(2, 2, 2)))
        prefs = GamePreferences(
            (CptPreferences.prelec(float(rng.uniform(0.4, 1.0))), CptPreferences.prelec(float(rng.uniform(0.4, 1.0))))
        )
        poly = characterize(game, prefs)
        worst = _cpt_worst_regret(game, prefs, lattice, tolerance)
        cpt_member = worst >= -tolerance
        columns = [-np.abs(lattice[:, c.a]) if c.kind == "zero" else lattice @ c.normal() for c in poly.constraints]
        slack = np.min(np.column_stack(columns or [np.zeros(len(lattice))]), axis=1)
        poly_member = np.array([poly.contains(v, tolerance) for v in lattice])

        # both sides measure distance to the same hyperplanes on different scales
        settled = ~(((np.abs(worst) > 0.0) & (np.abs(worst) < 1e-6)) | ((np.abs(slack) > 0.0) & (np.abs(slack) < 1e-6)))
        assert settled.mean() > 0.99
        assert np.array_equal(poly_member[settled], cpt_member[settled])
        assert not cpt_member.all()

        for k in range(0, len(lattice), 97):
            mu = JointDistribution.from_flat(lattice[k], (2, 2))
            assert is_cpt_correlated_equilibrium(game, prefs, mu, tolerance).is_member == bool(cpt_member[k])
        for v in poly.vertices:
            assert poly.contains(v)


def test_non_2x2_games_are_rejected(example_game: Game) -> None:
    with pytest.raises(NotTwoByTwo):
        classify(example_game)
    with pytest.raises(NotTwoByTwo):
        characterize(example_game)
