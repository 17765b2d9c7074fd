"""
2x2 games
Strategy relations, type classification, thresholds (alpha, beta) by bisection,
constraint/vertex descriptions of the CPT correlated equilibrium set, tau, and the Nash set.

Coordinates of a joint distribution are always (mu00, mu01, mu10, mu11),
first index = row strategy.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from equilibria.cpt_core import CptPreferences, regret
from equilibria.game_model import (
    Game,
    GamePreferences,
    StrategyRelation,
    strategy_relation,
)


VERTEX_TOL = 1e-9
COORDS = ("mu00", "mu01", "mu10", "mu11")


class NotTwoByTwo(ValueError):
    pass


class WrongSignPattern(ValueError):
    pass


class GameType(str, Enum):
    TYPE_I = "I"
    TYPE_II = "II"
    TYPE_III = "III"
    TYPE_IV = "IV"


class Degeneracy(str, Enum):
    EQUIVALENT = "equivalent"
    WEAKLY_DOMINATED = "weakly_dominated"
    STRICTLY_DOMINATED = "strictly_dominated"


class Limit(str, Enum):
    ZERO = "0"
    FINITE = "finite"
    INFINITE = "inf"


@dataclass(frozen=True)
class PairRelation:
    player: int
    relation: StrategyRelation
    # set for the dominated cases
    dominated: Optional[int] = None
    by: Optional[int] = None


@dataclass(frozen=True)
class Classification:
    game_type: Optional[GameType]
    degeneracy: Optional[Degeneracy] = None
    alpha: Optional[float] = None
    beta: Optional[float] = None
    alpha_limit: Optional[Limit] = None
    beta_limit: Optional[Limit] = None

    @property
    def label(self) -> str:
        if self.degeneracy is None:
            return f"Type{self.game_type.value}"
        if self.degeneracy == Degeneracy.WEAKLY_DOMINATED:
            return f"Degenerate(weakly_dominated, Type{self.game_type.value} limit)"
        return f"Degenerate({self.degeneracy.value})"

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "type": self.game_type.value if self.game_type else None,
            "degeneracy": self.degeneracy.value if self.degeneracy else None,
            "alpha": self.alpha,
            "beta": self.beta,
            "alpha_limit": self.alpha_limit.value if self.alpha_limit else None,
            "beta_limit": self.beta_limit.value if self.beta_limit else None,
        }


@dataclass(frozen=True)
class Constraint:
    # "zero": mu[a] = 0 ; "ge": c*mu[a] >= mu[b] ; "le": c*mu[a] <= mu[b]
    kind: str
    a: int
    b: int = -1
    coefficient: float = 1.0
    symbol: str = ""
    # deviation condition it came from: C1..C4
    source: str = ""

    @property
    def label(self) -> str:
        if self.kind == "zero":
            return f"{COORDS[self.a]} = 0"
        op = ">=" if self.kind == "ge" else "<="
        return f"{self.symbol}*{COORDS[self.a]} {op} {COORDS[self.b]}"

    def normal(self) -> np.ndarray:
        """Row g with the constraint reading g . mu >= 0 (for zero: -mu[a] >= 0)."""
        g = np.zeros(4)
        if self.kind == "zero":
            g[self.a] = -1.0
        elif self.kind == "ge":
            g[self.a] = self.coefficient
            g[self.b] = -1.0
        else:
            g[self.a] = -self.coefficient
            g[self.b] = 1.0
        return g

    def slack(self, mu: Sequence[float]) -> float:
        if self.kind == "zero":
            return -abs(float(mu[self.a]))
        return float(self.normal() @ np.asarray(mu, dtype=float))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "label": self.label,
            "a": COORDS[self.a],
            "b": COORDS[self.b] if self.b >= 0 else None,
            "symbol": self.symbol or None,
            "coefficient": self.coefficient if self.kind != "zero" else None,
            "source": self.source,
        }


@dataclass(frozen=True)
class PolytopeDescription:
    classification: Classification
    constraints: tuple[Constraint, ...]
    vertices: tuple[tuple[float, ...], ...]
    named_vertices: dict = field(default_factory=dict)

    @property
    def equalities(self) -> tuple[Constraint, ...]:
        return tuple(c for c in self.constraints if c.kind == "zero")

    @property
    def inequalities(self) -> tuple[Constraint, ...]:
        return tuple(c for c in self.constraints if c.kind != "zero")

    def contains(self, mu: Sequence[float], tolerance: float = VERTEX_TOL) -> bool:
        mu = np.asarray(mu, dtype=float).ravel()
        if np.any(mu < -tolerance) or abs(mu.sum() - 1.0) > tolerance:
            return False
        return all(c.slack(mu) >= -tolerance for c in self.constraints)

    def is_extreme(self, vertex: Sequence[float]) -> bool:
        return _active_rank(self.constraints, np.asarray(vertex, dtype=float)) == 4

    def to_dict(self) -> dict:
        return {
            "classification": self.classification.to_dict(),
            "constraints": [c.to_dict() for c in self.constraints],
            "vertices": [list(v) for v in self.vertices],
            "named_vertices": {k: list(v) for k, v in self.named_vertices.items()},
        }


@dataclass(frozen=True)
class NashComponent:
    # "pure" | "mixed" | "segment" | "all"
    kind: str
    points: tuple[tuple[float, ...], ...]

    def factors(self) -> Optional[tuple[tuple[float, float], tuple[float, float]]]:
        if self.kind not in ("pure", "mixed"):
            return None
        m = self.points[0]
        return (m[0] + m[1], m[2] + m[3]), (m[0] + m[2], m[1] + m[3])

    def to_dict(self) -> dict:
        return {"kind": self.kind, "points": [list(p) for p in self.points]}


def _require_2x2(game: Game) -> None:
    if game.strategy_counts != (2, 2):
        raise NotTwoByTwo(f"expected a 2x2 game, got strategy counts {game.strategy_counts}")


def _as_prefs(prefs: GamePreferences | CptPreferences | None) -> GamePreferences:
    if prefs is None:
        return GamePreferences.eut(2)
    if isinstance(prefs, CptPreferences):
        return GamePreferences.uniform(prefs, 2)
    return prefs


def canonical_game(kind: GameType | str, alpha: float, beta: float) -> Game:
    kind = GameType(kind)
    sa = -1.0 if kind in (GameType.TYPE_II, GameType.TYPE_IV) else 1.0
    sb = -1.0 if kind in (GameType.TYPE_III, GameType.TYPE_IV) else 1.0
    a = [[sa * alpha, 0.0], [0.0, sa]]
    b = [[sb * beta, 0.0], [0.0, sb]]
    return Game.bimatrix(a, b)


def tau(mu: Sequence[float]) -> tuple[float, ...]:
    m = [float(v) for v in np.asarray(mu, dtype=float).ravel()]
    if len(m) != 4:
        raise NotTwoByTwo("tau acts on 4-vectors")
    return (m[2], m[3], m[0], m[1])


def detect_relations(game: Game) -> tuple[PairRelation, PairRelation]:
    _require_2x2(game)
    found = []
    for i in range(2):
        rel01 = strategy_relation(game, i, 0, 1)
        rel10 = strategy_relation(game, i, 1, 0)
        if rel01 == StrategyRelation.EQUIVALENT:
            found.append(PairRelation(i, StrategyRelation.EQUIVALENT))
        elif rel01 != StrategyRelation.NEITHER:
            found.append(PairRelation(i, rel01, dominated=0, by=1))
        elif rel10 != StrategyRelation.NEITHER:
            found.append(PairRelation(i, rel10, dominated=1, by=0))
        else:
            found.append(PairRelation(i, StrategyRelation.NEITHER))
    return found[0], found[1]


def _bisect_root(f: Callable[[float], float], lo: float, hi: float, *, ftol: float, xtol: float, max_iter: int) -> float:
    f_lo = f(lo)
    mid = 0.5 * (lo + hi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        if f_mid == 0.0 or abs(f_mid) <= ftol or 0.5 * (hi - lo) <= xtol:
            break
        if (f_mid > 0.0) == (f_lo > 0.0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return mid


def threshold(
    x: Sequence[float],
    y: Sequence[float],
    prefs: CptPreferences,
    tol: float = 1e-10,
    *,
    xtol: float = 1e-12,
    max_iter: int = 200,
) -> float:
    """
    Zero of R(p0) = V((p0, 1-p0), x) - V((p0, 1-p0), y) on (0, 1).

    Needs opposite signs in the two coordinates of x - y; R is then strictly monotone.
    """
    if len(x) != 2 or len(y) != 2:
        raise WrongSignPattern("threshold needs two-outcome profiles")
    d0 = float(x[0]) - float(y[0])
    d1 = float(x[1]) - float(y[1])
    if not ((d0 > 0.0 and d1 < 0.0) or (d0 < 0.0 and d1 > 0.0)):
        raise WrongSignPattern(f"payoff differences ({d0}, {d1}) do not cross")

    def r_of(p0: float) -> float:
        return regret((p0, 1.0 - p0), x, y, prefs)

    return _bisect_root(r_of, 0.0, 1.0, ftol=tol, xtol=xtol, max_iter=max_iter)


def _coefficient(q: float) -> float:
    return (1.0 - q) / q


# (name, first coordinate, second coordinate, player, strategy s, deviation d)
_CONDITIONS = (
    ("C1", 0, 1, 0, 0, 1),
    ("C2", 2, 3, 0, 1, 0),
    ("C3", 0, 2, 1, 0, 1),
    ("C4", 1, 3, 1, 1, 0),
)


def _condition_profiles(game: Game, player: int, s: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    return game.outcomes(player, s), game.outcomes(player, d)


def _condition_constraints(name: str, first: int, second: int, x, y, prefs: CptPreferences, symbol: str) -> list[Constraint]:
    """Constraint(s) equivalent to V(p, x) >= V(p, y) for p = (mu_first, mu_second) normalised."""
    d0 = float(x[0] - y[0])
    d1 = float(x[1] - y[1])
    if d0 >= 0.0 and d1 >= 0.0:
        return []
    if d0 <= 0.0 and d1 <= 0.0:
        out = []
        if d0 < 0.0:
            out.append(Constraint("zero", first, source=name))
        if d1 < 0.0:
            out.append(Constraint("zero", second, source=name))
        return out
    c = _coefficient(threshold(x, y, prefs))
    kind = "le" if d0 < 0.0 else "ge"
    return [Constraint(kind, first, second, coefficient=c, symbol=symbol, source=name)]


def _player_limit(diff0: float, diff1: float) -> Optional[Limit]:
    if diff0 == 0.0 and diff1 == 0.0:
        return None
    if diff1 == 0.0:
        return Limit.INFINITE
    if diff0 == 0.0:
        return Limit.ZERO
    if diff0 * diff1 < 0.0:
        return Limit.FINITE
    return None


def classify(game: Game, prefs: GamePreferences | CptPreferences | None = None) -> Classification:
    _require_2x2(game)
    prefs = _as_prefs(prefs)
    a = game.payoffs[0]
    b = game.payoffs[1]
    d0, d1 = a[0, 0] - a[1, 0], a[0, 1] - a[1, 1]
    e0, e1 = b[0, 0] - b[0, 1], b[1, 0] - b[1, 1]

    alpha_limit = _player_limit(d0, d1)
    beta_limit = _player_limit(e0, e1)
    alpha = beta = None
    if alpha_limit == Limit.FINITE:
        alpha = _coefficient(threshold(a[0], a[1], prefs[0]))
    if beta_limit == Limit.FINITE:
        beta = _coefficient(threshold(b[:, 0], b[:, 1], prefs[1]))

    relations = detect_relations(game)
    kinds = {r.relation for r in relations}
    if StrategyRelation.EQUIVALENT in kinds:
        return Classification(None, Degeneracy.EQUIVALENT, alpha, beta, alpha_limit, beta_limit)
    if StrategyRelation.STRICTLY_DOMINATED in kinds:
        return Classification(None, Degeneracy.STRICTLY_DOMINATED, alpha, beta, alpha_limit, beta_limit)

    row_flipped = d0 <= 0.0 and d1 >= 0.0
    col_flipped = e0 <= 0.0 and e1 >= 0.0
    game_type = {
        (False, False): GameType.TYPE_I,
        (True, False): GameType.TYPE_II,
        (False, True): GameType.TYPE_III,
        (True, True): GameType.TYPE_IV,
    }[(row_flipped, col_flipped)]

    if StrategyRelation.WEAKLY_DOMINATED in kinds:
        if alpha_limit == Limit.INFINITE:
            alpha = math.inf
        elif alpha_limit == Limit.ZERO:
            alpha = 0.0
        if beta_limit == Limit.INFINITE:
            beta = math.inf
        elif beta_limit == Limit.ZERO:
            beta = 0.0
        return Classification(game_type, Degeneracy.WEAKLY_DOMINATED, alpha, beta, alpha_limit, beta_limit)
    return Classification(game_type, None, alpha, beta, Limit.FINITE, Limit.FINITE)


def _type_one_vertices(alpha: float, beta: float) -> dict[str, tuple[float, ...]]:
    c = (1.0 + alpha) * (1.0 + beta)
    d = 1.0 + beta + alpha * beta
    e = 1.0 + alpha + alpha * beta
    return {
        "A": (1.0, 0.0, 0.0, 0.0),
        "B": (0.0, 0.0, 0.0, 1.0),
        "C": (1.0 / c, alpha / c, beta / c, alpha * beta / c),
        "D": (1.0 / d, 0.0, beta / d, alpha * beta / d),
        "E": (1.0 / e, alpha / e, 0.0, alpha * beta / e),
    }


def _named_vertices(cls: Classification) -> dict[str, tuple[float, ...]]:
    if cls.degeneracy is not None:
        return {}
    if cls.game_type == GameType.TYPE_I:
        return _type_one_vertices(cls.alpha, cls.beta)
    if cls.game_type == GameType.TYPE_IV:
        return {k: tau(v) for k, v in _type_one_vertices(cls.alpha, 1.0 / cls.beta).items()}
    return {"C": _type_one_vertices(cls.alpha, cls.beta)["C"]}


def _active_rank(constraints: Sequence[Constraint], v: np.ndarray) -> int:
    rows = [np.ones(4)]
    for k in range(4):
        if abs(v[k]) <= VERTEX_TOL:
            unit = np.zeros(4)
            unit[k] = 1.0
            rows.append(unit)
    for c in constraints:
        if abs(c.normal() @ v) <= VERTEX_TOL:
            rows.append(c.normal())
    return int(np.linalg.matrix_rank(np.vstack(rows), tol=VERTEX_TOL))


def enumerate_vertices(constraints: Sequence[Constraint]) -> list[tuple[float, ...]]:
    """Vertices of {mu in simplex} cut by the constraints: active-set enumeration with rank tests."""
    eq_rows = [np.ones(4)] + [c.normal() for c in constraints if c.kind == "zero"]
    eq_rhs = [1.0] + [0.0] * (len(eq_rows) - 1)
    ineq_rows = [np.eye(4)[k] for k in range(4)] + [c.normal() for c in constraints if c.kind != "zero"]

    base = np.vstack(eq_rows)
    need = 4 - int(np.linalg.matrix_rank(base, tol=VERTEX_TOL))
    found: list[np.ndarray] = []
    for combo in itertools.combinations(range(len(ineq_rows)), need):
        A = np.vstack([base] + [ineq_rows[k] for k in combo]) if combo else base
        if np.linalg.matrix_rank(A, tol=VERTEX_TOL) < 4:
            continue
        rhs = np.array(eq_rhs + [0.0] * len(combo))
        v, *_ = np.linalg.lstsq(A, rhs, rcond=None)
        if np.max(np.abs(A @ v - rhs)) > VERTEX_TOL:
            continue
        if any(row @ v < -VERTEX_TOL for row in ineq_rows):
            continue
        v = np.where(np.abs(v) <= VERTEX_TOL, 0.0, v)
        if not any(np.max(np.abs(v - u)) <= VERTEX_TOL for u in found):
            found.append(v)
    return sorted((tuple(float(x) for x in v) for v in found), reverse=True)


def characterize(game: Game, prefs: GamePreferences | CptPreferences | None = None) -> PolytopeDescription:
    _require_2x2(game)
    prefs = _as_prefs(prefs)
    cls = classify(game, prefs)

    constraints: list[Constraint] = []
    for name, first, second, player, s, d in _CONDITIONS:
        x, y = _condition_profiles(game, player, s, d)
        symbol = "alpha" if player == 0 else "beta"
        constraints.extend(_condition_constraints(name, first, second, x, y, prefs[player], symbol))

    # zero constraints may be repeated by different conditions
    unique: list[Constraint] = []
    seen_zero = set()
    for c in constraints:
        if c.kind == "zero":
            if c.a in seen_zero:
                continue
            seen_zero.add(c.a)
        unique.append(c)

    vertices = enumerate_vertices(unique)
    return PolytopeDescription(
        classification=cls,
        constraints=tuple(unique),
        vertices=tuple(vertices),
        named_vertices=_named_vertices(cls),
    )


def outward_step(vertex: Sequence[float], constraint: Constraint, eps: float = 1e-3) -> Optional[tuple[float, ...]]:
    """
    Point eps away from vertex (inside the simplex) on the violating side of constraint,
    moving toward the simplex corner that violates it most. None when no corner violates it.
    """
    g = constraint.normal()
    k = int(np.argmin(g))
    if g[k] >= 0.0:
        return None
    v = np.asarray(vertex, dtype=float)
    corner = np.zeros(4)
    corner[k] = 1.0
    return tuple(float(x) for x in (1.0 - eps) * v + eps * corner)


def _is_product(mu: Sequence[float], tolerance: float = VERTEX_TOL) -> bool:
    return abs(mu[0] * mu[3] - mu[1] * mu[2]) <= tolerance


def nash_set_2x2(game: Game, prefs: GamePreferences | CptPreferences | None = None) -> list[NashComponent]:
    """
    Product-form part of the CPT correlated equilibrium set, as points and segments.
    """
    poly = characterize(game, prefs)
    if not poly.constraints:
        return [NashComponent("all", poly.vertices)]

    product = [v for v in poly.vertices if _is_product(v)]
    segments = []
    covered = set()
    for u, v in itertools.combinations(range(len(product)), 2):
        mid = tuple(0.5 * (p + q) for p, q in zip(product[u], product[v]))
        if poly.contains(mid) and _is_product(mid):
            segments.append(NashComponent("segment", (product[u], product[v])))
            covered.update((u, v))

    points = []
    for k, v in enumerate(product):
        if k in covered:
            continue
        pure = all(abs(x) <= VERTEX_TOL or abs(x - 1.0) <= VERTEX_TOL for x in v)
        points.append(NashComponent("pure" if pure else "mixed", (v,)))
    return points + segments
