"""
Game model
Finite normal-form games, joint distributions, deviation lotteries, EUT/CPT correlated
equilibrium checks, CPT Nash checks and boundary witnesses.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import bisect

from equilibria.cpt_core import CptPreferences, Prospect, cpt_value, regret_direction


DEFAULT_TOL = 1e-9
MASS_TOL = 1e-12
PRODUCT_TOL = 1e-9


class InvalidGame(ValueError):
    pass


class InvalidDistribution(ValueError):
    pass


class ZeroMarginal(ValueError):
    pass


class NotProductForm(ValueError):
    pass


class TrivialGame(ValueError):
    pass


class NotCompletelyMixed(ValueError):
    pass


class NotNashEquilibrium(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Game:
    # shape (n, |S_1|, ..., |S_n|); payoffs[i][s] = h_i(s)
    payoffs: np.ndarray
    strategy_names: tuple[tuple[str, ...], ...] = ()
    player_names: tuple[str, ...] = ()

    def __post_init__(self):
        arr = np.array(self.payoffs, dtype=float)
        if arr.ndim < 3:
            raise InvalidGame("payoffs must have shape (n, |S_1|, ..., |S_n|) with n >= 2")
        n = arr.shape[0]
        if arr.ndim != n + 1:
            raise InvalidGame(f"{n} payoff tensors need {n} strategy axes, got {arr.ndim - 1}")
        if any(k < 2 for k in arr.shape[1:]):
            raise InvalidGame("every player needs at least two strategies")
        if not np.all(np.isfinite(arr)):
            raise InvalidGame("payoffs must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "payoffs", arr)

        names = tuple(tuple(str(s) for s in row) for row in self.strategy_names)
        if not names:
            names = tuple(tuple(str(k) for k in range(m)) for m in arr.shape[1:])
        if len(names) != n or any(len(row) != m for row, m in zip(names, arr.shape[1:])):
            raise InvalidGame("strategy names do not match the payoff shape")
        object.__setattr__(self, "strategy_names", names)

        players = tuple(str(p) for p in self.player_names) or tuple(f"player {i + 1}" for i in range(n))
        if len(players) != n:
            raise InvalidGame("player names do not match the player count")
        object.__setattr__(self, "player_names", players)

    @classmethod
    def bimatrix(cls, a, b, **names) -> "Game":
        return cls(np.stack([np.asarray(a, dtype=float), np.asarray(b, dtype=float)]), **names)

    @property
    def n_players(self) -> int:
        return int(self.payoffs.shape[0])

    @property
    def strategy_counts(self) -> tuple[int, ...]:
        return tuple(int(k) for k in self.payoffs.shape[1:])

    @property
    def profile_count(self) -> int:
        return int(math.prod(self.strategy_counts))

    def outcomes(self, i: int, s_i: int) -> np.ndarray:
        """h_i(s_i, .) over S_{-i}, opponents in row-major order."""
        return np.take(self.payoffs[i], s_i, axis=i).ravel()

    def opponent_profiles(self, i: int) -> list[tuple[int, ...]]:
        counts = [k for j, k in enumerate(self.strategy_counts) if j != i]
        return list(itertools.product(*(range(k) for k in counts)))

    def strategy_index(self, i: int, name: str) -> int:
        try:
            return self.strategy_names[i].index(name)
        except ValueError:
            raise InvalidGame(f"{self.player_names[i]} has no strategy {name!r}") from None


@dataclass(frozen=True, eq=False)
class JointDistribution:
    # shape (|S_1|, ..., |S_n|)
    mu: np.ndarray

    def __post_init__(self):
        arr = np.array(self.mu, dtype=float)
        if not np.all(np.isfinite(arr)) or np.any(arr < -MASS_TOL):
            raise InvalidDistribution("joint distribution has negative or non-finite mass")
        arr = np.where(arr < 0.0, 0.0, arr)
        if abs(math.fsum(arr.ravel()) - 1.0) > MASS_TOL:
            raise InvalidDistribution(f"joint distribution sums to {math.fsum(arr.ravel())!r}, expected 1")
        arr.setflags(write=False)
        object.__setattr__(self, "mu", arr)

    @classmethod
    def from_flat(cls, flat: Sequence[float], shape: Sequence[int]) -> "JointDistribution":
        arr = np.asarray(flat, dtype=float)
        if arr.size != math.prod(shape):
            raise InvalidDistribution(f"expected {math.prod(shape)} entries, got {arr.size}")
        return cls(arr.reshape(tuple(shape)))

    @classmethod
    def from_product(cls, factors: Sequence[Sequence[float]]) -> "JointDistribution":
        arr = np.array(1.0)
        for f in factors:
            arr = np.multiply.outer(arr, np.asarray(f, dtype=float))
        return cls(arr)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.mu.shape)

    @property
    def flat(self) -> np.ndarray:
        return self.mu.ravel()

    def marginal(self, i: int) -> np.ndarray:
        axes = tuple(j for j in range(self.mu.ndim) if j != i)
        return self.mu.sum(axis=axes)

    def conditional(self, i: int, s_i: int, tolerance: float = 0.0) -> Optional[np.ndarray]:
        """mu_{-i}^{s_i} flattened over S_{-i}; None when the marginal is not above tolerance."""
        slice_ = np.take(self.mu, s_i, axis=i).ravel()
        mass = math.fsum(slice_)
        if mass <= tolerance:
            return None
        return slice_ / mass

    def product_factors(self, tolerance: float = PRODUCT_TOL) -> Optional[list[np.ndarray]]:
        factors = [self.marginal(i) for i in range(self.mu.ndim)]
        rebuilt = JointDistribution.from_product(factors).mu
        if np.max(np.abs(rebuilt - self.mu)) > tolerance:
            return None
        return factors


@dataclass(frozen=True)
class GamePreferences:
    players: tuple[CptPreferences, ...]
    # Optional mu -> per-player reference points; built-in analyses never call it.
    reference_hook: Optional[Callable[[JointDistribution], Sequence[float]]] = None

    def __post_init__(self):
        object.__setattr__(self, "players", tuple(self.players))

    @classmethod
    def uniform(cls, prefs: CptPreferences, n: int) -> "GamePreferences":
        return cls(tuple(prefs for _ in range(n)))

    @classmethod
    def eut(cls, n: int) -> "GamePreferences":
        return cls.uniform(CptPreferences.eut(), n)

    def __len__(self) -> int:
        return len(self.players)

    def __getitem__(self, i: int) -> CptPreferences:
        return self.players[i]

    def at_distribution(self, mu: JointDistribution) -> "GamePreferences":
        if self.reference_hook is None:
            return self
        refs = list(self.reference_hook(mu))
        if len(refs) != len(self.players):
            raise ValueError("reference hook returned the wrong number of reference points")
        return GamePreferences(tuple(p.with_reference(float(r)) for p, r in zip(self.players, refs)))


@dataclass(frozen=True)
class Deviation:
    player: int
    signal: int
    deviation: int


@dataclass(frozen=True)
class EquilibriumVerdict:
    is_member: bool
    worst_violation: float
    witness: Optional[Deviation] = None
    # (player, strategy) whose marginal lies in (0, tolerance]
    small_marginals: tuple[tuple[int, int], ...] = ()


@dataclass(frozen=True, eq=False)
class BoundaryWitness:
    direction: np.ndarray
    eps_max: float
    witness: Deviation

    def perturb(self, mu: JointDistribution, eps: float) -> JointDistribution:
        return JointDistribution(mu.mu + eps * self.direction)


class StrategyRelation(str, Enum):
    EQUIVALENT = "equivalent"
    WEAKLY_DOMINATED = "weakly_dominated"
    STRICTLY_DOMINATED = "strictly_dominated"
    NEITHER = "neither"


def _check_players(game: Game, prefs: GamePreferences) -> None:
    if len(prefs) != game.n_players:
        raise InvalidGame(f"{len(prefs)} preference entries for a {game.n_players}-player game")


def _check_shape(game: Game, mu: JointDistribution) -> None:
    if mu.shape != game.strategy_counts:
        raise InvalidDistribution(f"distribution shape {mu.shape} does not match game {game.strategy_counts}")


def strategy_relation(game: Game, i: int, s_i: int, d_i: int) -> StrategyRelation:
    """How strategy s_i compares with d_i for player i (is s_i dominated by d_i?)."""
    x = game.outcomes(i, s_i)
    y = game.outcomes(i, d_i)
    if np.array_equal(x, y):
        return StrategyRelation.EQUIVALENT
    if np.all(x < y):
        return StrategyRelation.STRICTLY_DOMINATED
    if np.all(x <= y):
        return StrategyRelation.WEAKLY_DOMINATED
    return StrategyRelation.NEITHER


def first_distinct_deviation(game: Game) -> Optional[Deviation]:
    for i in range(game.n_players):
        for s_i in range(game.strategy_counts[i]):
            for d_i in range(game.strategy_counts[i]):
                if s_i != d_i and not np.array_equal(game.outcomes(i, s_i), game.outcomes(i, d_i)):
                    return Deviation(i, s_i, d_i)
    return None


def is_non_trivial(game: Game) -> bool:
    return first_distinct_deviation(game) is not None


def deviation_lottery(game: Game, mu: JointDistribution, i: int, s_i: int, d_i: int, tolerance: float = 0.0) -> Prospect:
    _check_shape(game, mu)
    cond = mu.conditional(i, s_i, tolerance)
    if cond is None:
        raise ZeroMarginal(f"{game.player_names[i]} never receives signal {game.strategy_names[i][s_i]}")
    return Prospect(tuple(cond), tuple(game.outcomes(i, d_i)))


def is_eut_correlated_equilibrium(game: Game, mu: JointDistribution, tolerance: float = DEFAULT_TOL) -> EquilibriumVerdict:
    _check_shape(game, mu)
    worst = math.inf
    witness = None
    for i in range(game.n_players):
        for s_i in range(game.strategy_counts[i]):
            weights = np.take(mu.mu, s_i, axis=i).ravel()
            x = game.outcomes(i, s_i)
            for d_i in range(game.strategy_counts[i]):
                if d_i == s_i:
                    continue
                slack = math.fsum(weights * (x - game.outcomes(i, d_i)))
                if slack < worst:
                    worst = slack
                    witness = Deviation(i, s_i, d_i)
    member = worst >= -tolerance
    return EquilibriumVerdict(is_member=member, worst_violation=worst, witness=None if member else witness)


def is_cpt_correlated_equilibrium(
    game: Game, prefs: GamePreferences, mu: JointDistribution, tolerance: float = DEFAULT_TOL
) -> EquilibriumVerdict:
    """Slack is measured in CPT value units of the player concerned."""
    _check_shape(game, mu)
    _check_players(game, prefs)
    prefs = prefs.at_distribution(mu)
    worst = math.inf
    witness = None
    small = []
    for i in range(game.n_players):
        marg = mu.marginal(i)
        for s_i in range(game.strategy_counts[i]):
            if marg[s_i] <= tolerance:
                if marg[s_i] > 0.0:
                    small.append((i, s_i))
                continue
            cond = tuple(mu.conditional(i, s_i))
            on_path = cpt_value(Prospect(cond, tuple(game.outcomes(i, s_i))), prefs[i])
            for d_i in range(game.strategy_counts[i]):
                if d_i == s_i:
                    continue
                slack = on_path - cpt_value(Prospect(cond, tuple(game.outcomes(i, d_i))), prefs[i])
                if slack < worst:
                    worst = slack
                    witness = Deviation(i, s_i, d_i)
    if worst == math.inf:
        worst = 0.0
    member = worst >= -tolerance
    return EquilibriumVerdict(
        is_member=member,
        worst_violation=worst,
        witness=None if member else witness,
        small_marginals=tuple(small),
    )


def _factors(mu: JointDistribution, factors: Optional[Sequence[Sequence[float]]]) -> list[np.ndarray]:
    if factors is None:
        inferred = mu.product_factors()
        if inferred is None:
            raise NotProductForm("distribution is not of product form")
        return inferred
    arrs = [np.asarray(f, dtype=float) for f in factors]
    if [a.size for a in arrs] != list(mu.shape):
        raise NotProductForm("factor sizes do not match the distribution shape")
    rebuilt = JointDistribution.from_product(arrs).mu
    if np.max(np.abs(rebuilt - mu.mu)) > PRODUCT_TOL:
        raise NotProductForm("factorization is inconsistent with the distribution")
    return arrs


def _opponent_mix(factors: Sequence[np.ndarray], i: int) -> np.ndarray:
    arr = np.array(1.0)
    for j, f in enumerate(factors):
        if j != i:
            arr = np.multiply.outer(arr, f)
    return arr.ravel()


def pure_strategy_values(
    game: Game,
    prefs: GamePreferences,
    mu_product: JointDistribution,
    i: int,
    *,
    factors: Optional[Sequence[Sequence[float]]] = None,
) -> np.ndarray:
    """V_i(L(mu_{-i}, s_i)) for every s_i."""
    _check_shape(game, mu_product)
    facs = _factors(mu_product, factors)
    p = tuple(_opponent_mix(facs, i))
    return np.array(
        [cpt_value(Prospect(p, tuple(game.outcomes(i, s))), prefs[i]) for s in range(game.strategy_counts[i])]
    )


def average_cpt_value(
    game: Game,
    prefs: GamePreferences,
    mu_product: JointDistribution,
    i: int,
    alt_strategy_mix: Sequence[float],
    *,
    factors: Optional[Sequence[Sequence[float]]] = None,
) -> float:
    alt = np.asarray(alt_strategy_mix, dtype=float)
    if alt.size != game.strategy_counts[i] or np.any(alt < 0.0) or abs(math.fsum(alt) - 1.0) > MASS_TOL:
        raise InvalidDistribution("alternative mix must be a distribution over the player's strategies")
    values = pure_strategy_values(game, prefs, mu_product, i, factors=factors)
    return math.fsum(alt * values)


def best_response_support(
    game: Game,
    prefs: GamePreferences,
    mu_product: JointDistribution,
    i: int,
    *,
    factors: Optional[Sequence[Sequence[float]]] = None,
    tolerance: float = DEFAULT_TOL,
) -> tuple[int, ...]:
    values = pure_strategy_values(game, prefs, mu_product, i, factors=factors)
    best = float(np.max(values))
    return tuple(s for s, v in enumerate(values) if v >= best - tolerance)


def is_cpt_nash(
    game: Game,
    prefs: GamePreferences,
    mu_product: JointDistribution,
    tolerance: float = DEFAULT_TOL,
    *,
    factors: Optional[Sequence[Sequence[float]]] = None,
) -> EquilibriumVerdict:
    _check_players(game, prefs)
    facs = _factors(mu_product, factors)
    worst = 0.0
    witness = None
    for i in range(game.n_players):
        values = pure_strategy_values(game, prefs, mu_product, i, factors=facs)
        best_idx = int(np.argmax(values))
        for s_i, weight in enumerate(facs[i]):
            if weight <= tolerance:
                continue
            gap = float(values[s_i] - values[best_idx])
            if gap < worst:
                worst = gap
                witness = Deviation(i, s_i, best_idx)
    member = worst >= -tolerance
    return EquilibriumVerdict(is_member=member, worst_violation=worst, witness=None if member else witness)


def boundary_witness(
    game: Game,
    prefs: GamePreferences,
    mu_nash: JointDistribution,
    *,
    factors: Optional[Sequence[Sequence[float]]] = None,
    tolerance: float = DEFAULT_TOL,
) -> BoundaryWitness:
    """
    Direction out of the CPT correlated equilibrium set at a completely mixed CPT Nash point.

    Only the signal slice of the first distinct (i, s_i, d_i) is moved, by mu_i(s_i) * delta.
    Raises NotNashEquilibrium when mu_nash is not a CPT Nash point within tolerance.
    """
    _check_shape(game, mu_nash)
    dev = first_distinct_deviation(game)
    if dev is None:
        raise TrivialGame("every player is indifferent between all strategies")
    facs = _factors(mu_nash, factors)
    if any(np.any(f <= tolerance) for f in facs):
        raise NotCompletelyMixed("boundary witness needs every strategy played with positive probability")
    nash = is_cpt_nash(game, prefs, mu_nash, tolerance, factors=facs)
    if not nash.is_member:
        raise NotNashEquilibrium(f"not a CPT Nash point: worst gap {nash.worst_violation!r} for {game.player_names[nash.witness.player]}")

    i, s_i = dev.player, dev.signal
    p = _opponent_mix(facs, i)
    delta = regret_direction(p, game.outcomes(i, s_i), game.outcomes(i, dev.deviation))

    slice_shape = tuple(k for j, k in enumerate(game.strategy_counts) if j != i)
    direction = np.zeros(game.strategy_counts)
    index = [slice(None)] * game.n_players
    index[i] = s_i
    direction[tuple(index)] = facs[i][s_i] * np.asarray(delta.delta).reshape(slice_shape)
    return BoundaryWitness(direction=direction, eps_max=delta.max_step(p), witness=dev)


def pure_nash_points(game: Game) -> list[tuple[int, ...]]:
    """Pure profiles where no player gains by a unilateral switch (same under EUT and CPT)."""
    found = []
    for profile in itertools.product(*(range(k) for k in game.strategy_counts)):
        stable = True
        for i in range(game.n_players):
            own = game.payoffs[i][profile]
            for d in range(game.strategy_counts[i]):
                alt = list(profile)
                alt[i] = d
                if game.payoffs[i][tuple(alt)] > own:
                    stable = False
                    break
            if not stable:
                break
        if stable:
            found.append(profile)
    return found


def _indifference_2x2(game: Game, prefs: GamePreferences, i: int, q0: float) -> float:
    """V_i(strategy 0) - V_i(strategy 1) when the opponent plays strategy 0 w.p. q0."""
    p = (q0, 1.0 - q0)
    return cpt_value(Prospect(p, tuple(game.outcomes(i, 0))), prefs[i]) - cpt_value(
        Prospect(p, tuple(game.outcomes(i, 1))), prefs[i]
    )


def _interior_roots(f: Callable[[float], float], step: float) -> list[float]:
    count = int(round(1.0 / step))
    grid = np.linspace(0.0, 1.0, count + 1)[1:-1]
    vals = [f(float(q)) for q in grid]
    roots = []
    for k, v in enumerate(vals):
        if v == 0.0:
            roots.append(float(grid[k]))
        elif k + 1 < len(vals) and v * vals[k + 1] < 0.0:
            roots.append(float(bisect(f, float(grid[k]), float(grid[k + 1]), xtol=1e-15, maxiter=200)))
    return roots


def search_mixed_nash_2x2(game: Game, prefs: GamePreferences, *, step: float = 1e-3) -> list[JointDistribution]:
    """
    Completely mixed CPT Nash points of a 2x2 game: grid scan of each player's
    indifference condition, refined by bisection.
    """
    if game.strategy_counts != (2, 2):
        raise InvalidGame("mixed Nash search is only available for 2x2 games")
    _check_players(game, prefs)
    col_roots = _interior_roots(lambda q: _indifference_2x2(game, prefs, 0, q), step)
    row_roots = _interior_roots(lambda q: _indifference_2x2(game, prefs, 1, q), step)
    found = []
    for p0 in row_roots:
        for q0 in col_roots:
            found.append(JointDistribution.from_product([(p0, 1.0 - p0), (q0, 1.0 - q0)]))
    return found
