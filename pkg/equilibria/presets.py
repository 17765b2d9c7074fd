"""
Built-in games.

The 3x3 game with a disconnected CPT correlated equilibrium set: player 1
(TOP/CENTER/BOTTOM) weighs probabilities with a Prelec curve, player 2
(RED/YELLOW/GREEN) is an expected-value maximiser.
"""
from __future__ import annotations

from equilibria.cpt_core import CptPreferences
from equilibria.game_model import Game, GamePreferences, JointDistribution


ROW_NAMES = ("TOP", "CENTER", "BOTTOM")
COLUMN_NAMES = ("RED", "YELLOW", "GREEN")

ROW_PAYOFFS = (
    (69.0, 61.0, 20.0),
    (50.0, 60.0, 30.0),
    (101.0, 41.0, 0.0),
)
COLUMN_PAYOFFS = (
    (10.0, 0.0, 10.0),
    (0.0, 10.0, 0.0),
    (0.0, 10.0, 0.0),
)

ALPHA_ROW = 0.5
ALPHA_COLUMN = 1.0

# Where player 1 is indifferent between TOP and BOTTOM along p_G = 0
THRESHOLD_RED = 0.40


def example_disconnected_game() -> Game:
    return Game.bimatrix(
        ROW_PAYOFFS,
        COLUMN_PAYOFFS,
        strategy_names=(ROW_NAMES, COLUMN_NAMES),
        player_names=("player 1", "player 2"),
    )


def example_preferences(alpha1: float = ALPHA_ROW, alpha2: float = ALPHA_COLUMN) -> GamePreferences:
    return GamePreferences((CptPreferences.prelec(alpha1), CptPreferences.prelec(alpha2)))


def mu_bar() -> JointDistribution:
    # slices (0.4, 0.1, 0.5), (0, 0.05, 0.5), (0.4, 0.05, 0) scaled to total mass 1
    return JointDistribution(
        [
            [0.2, 0.05, 0.25],
            [0.0, 0.025, 0.25],
            [0.2, 0.025, 0.0],
        ]
    )


def mu_tilde() -> JointDistribution:
    return JointDistribution(
        [
            [0.2, 0.0, 0.3],
            [0.0, 0.0, 0.3],
            [0.2, 0.0, 0.0],
        ]
    )


def yellow_column() -> JointDistribution:
    """Player 2 always told YELLOW, player 1 split between CENTER and BOTTOM."""
    return JointDistribution(
        [
            [0.0, 0.0, 0.0],
            [0.0, 0.5, 0.0],
            [0.0, 0.5, 0.0],
        ]
    )
