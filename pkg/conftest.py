from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

_root = Path(__file__).resolve().parent
if str(_root) not in sys.path:
    sys.path.insert(0, str(_root))

from equilibria import presets
from equilibria.game_model import Game, GamePreferences


@pytest.fixture
def example_game() -> Game:
    return presets.example_disconnected_game()


@pytest.fixture
def example_prefs() -> GamePreferences:
    return presets.example_preferences()


@pytest.fixture
def eut2() -> GamePreferences:
    return GamePreferences.eut(2)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)
