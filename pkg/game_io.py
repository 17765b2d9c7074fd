"""
Game files, distribution files and prospect flags.

A game file is JSON:

    {
      "players": 2,
      "strategies": [["TOP", "BOTTOM"], ["LEFT", "RIGHT"]],
      "payoffs": [[[3, 0], [0, 1]], [[1, 0], [0, 3]]],
      "preferences": [
        {"reference": 0, "value": {"kind": "identity"},
         "weight_gain": {"kind": "prelec", "alpha": 0.5},
         "weight_loss": {"kind": "prelec", "alpha": 0.5}},
        {}
      ]
    }

payoffs[i] is player i's tensor indexed [s_1][s_2]...; omitted preference
fields default to r = 0, identity value and identity weights.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
import pandas as pd

from equilibria.cpt_core import CptPreferences, InvalidProspect, Prospect, ValueFunction, WeightingFunction
from equilibria.game_model import Game, GamePreferences, InvalidDistribution, InvalidGame, JointDistribution


# Inputs summing to 1 within this are rescaled silently (rounded decimals in files).
RESCALE_TOL = 1e-6


class GameFileError(ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)


@dataclass(frozen=True)
class GameFile:
    game: Game
    preferences: GamePreferences

    def to_document(self) -> dict:
        game = self.game
        return {
            "players": game.n_players,
            "player_names": list(game.player_names),
            "strategies": [list(row) for row in game.strategy_names],
            "payoffs": game.payoffs.tolist(),
            "preferences": [_prefs_document(p) for p in self.preferences.players],
        }


def _prefs_document(prefs: CptPreferences) -> dict:
    return {
        "reference": prefs.reference,
        "value": prefs.value.describe(),
        "weight_gain": prefs.weight_gain.describe(),
        "weight_loss": prefs.weight_loss.describe(),
    }


def _require(doc: dict, key: str, where: str) -> Any:
    if key not in doc:
        raise GameFileError(f"{where}{key}" if where else key, "missing field")
    return doc[key]


def _number(raw: Any, path: str) -> float:
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise GameFileError(path, f"expected a number, got {raw!r}")
    x = float(raw)
    if not math.isfinite(x):
        raise GameFileError(path, "expected a finite number")
    return x


def _kind(raw: Any, path: str) -> tuple[str, dict]:
    if raw is None:
        return "identity", {}
    if isinstance(raw, str):
        return raw.lower(), {}
    if isinstance(raw, dict):
        return str(raw.get("kind", "identity")).lower(), raw
    raise GameFileError(path, f"expected a kind name or object, got {raw!r}")


def parse_weighting(raw: Any, path: str) -> WeightingFunction:
    kind, spec = _kind(raw, path)
    if kind == "identity":
        return WeightingFunction.identity()
    if kind == "prelec":
        alpha = _number(spec.get("alpha", 1.0), f"{path}.alpha")
        if not 0.0 < alpha <= 1.0:
            raise GameFileError(f"{path}.alpha", f"prelec alpha must lie in (0, 1], got {alpha}")
        return WeightingFunction.prelec(alpha)
    if kind == "dual":
        return WeightingFunction.dual(parse_weighting(spec.get("base"), f"{path}.base"))
    raise GameFileError(f"{path}.kind", f"unknown weighting {kind!r}")


def parse_value(raw: Any, reference: float, path: str) -> ValueFunction:
    kind, spec = _kind(raw, path)
    if kind == "identity":
        return ValueFunction(reference=reference)
    if kind == "piecewise_power":
        a = _number(_require(spec, "a", f"{path}."), f"{path}.a")
        b = _number(_require(spec, "b", f"{path}."), f"{path}.b")
        lam = _number(_require(spec, "lambda", f"{path}."), f"{path}.lambda")
        if not (0.0 < a <= 1.0 and 0.0 < b <= 1.0):
            raise GameFileError(path, "exponents a and b must lie in (0, 1]")
        if lam <= 0.0:
            raise GameFileError(f"{path}.lambda", "loss aversion must be positive")
        return ValueFunction.piecewise_power(reference=reference, gain_exp=a, loss_exp=b, loss_aversion=lam)
    raise GameFileError(f"{path}.kind", f"unknown value function {kind!r}")


def parse_preferences(raw: Any, path: str) -> CptPreferences:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise GameFileError(path, "expected an object")
    reference = _number(raw.get("reference", 0.0), f"{path}.reference")
    return CptPreferences(
        value=parse_value(raw.get("value"), reference, f"{path}.value"),
        weight_gain=parse_weighting(raw.get("weight_gain"), f"{path}.weight_gain"),
        weight_loss=parse_weighting(raw.get("weight_loss"), f"{path}.weight_loss"),
    )


def _payoff_tensor(raw: Any, shape: Sequence[int], path: str) -> list:
    if not shape:
        return _number(raw, path)
    if not isinstance(raw, list) or len(raw) != shape[0]:
        got = len(raw) if isinstance(raw, list) else type(raw).__name__
        raise GameFileError(path, f"expected {shape[0]} entries, got {got}")
    return [_payoff_tensor(v, shape[1:], f"{path}[{k}]") for k, v in enumerate(raw)]


def parse_game_document(doc: Any) -> GameFile:
    if not isinstance(doc, dict):
        raise GameFileError("", "game file must hold a JSON object")
    strategies = _require(doc, "strategies", "")
    if not isinstance(strategies, list) or len(strategies) < 2:
        raise GameFileError("strategies", "expected one list of names per player (at least two players)")
    n = len(strategies)
    players = doc.get("players", n)
    if players != n:
        raise GameFileError("players", f"says {players} but strategies lists {n} players")
    for i, row in enumerate(strategies):
        if not isinstance(row, list) or len(row) < 2:
            raise GameFileError(f"strategies[{i}]", "each player needs at least two named strategies")
        if len(set(map(str, row))) != len(row):
            raise GameFileError(f"strategies[{i}]", "strategy names must be distinct")
    shape = [len(row) for row in strategies]

    payoffs = _require(doc, "payoffs", "")
    if not isinstance(payoffs, list) or len(payoffs) != n:
        raise GameFileError("payoffs", f"expected {n} payoff tensors")
    tensors = [_payoff_tensor(p, shape, f"payoffs[{i}]") for i, p in enumerate(payoffs)]

    raw_prefs = doc.get("preferences", [{}] * n)
    if not isinstance(raw_prefs, list) or len(raw_prefs) != n:
        raise GameFileError("preferences", f"expected {n} entries")
    prefs = GamePreferences(tuple(parse_preferences(p, f"preferences[{i}]") for i, p in enumerate(raw_prefs)))

    names = doc.get("player_names") or ()
    try:
        game = Game(np.array(tensors, dtype=float), strategy_names=tuple(tuple(r) for r in strategies), player_names=tuple(names))
    except InvalidGame as exc:
        raise GameFileError("payoffs", str(exc)) from None
    return GameFile(game=game, preferences=prefs)


def load_game(path: Path) -> GameFile:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise GameFileError(f"{path}:{exc.lineno}:{exc.colno}", exc.msg) from None
    try:
        return parse_game_document(doc)
    except GameFileError as exc:
        raise GameFileError(f"{path}:{exc.path}" if exc.path else str(path), exc.message) from None


def dump_game(game_file: GameFile, path: Path) -> None:
    Path(path).write_text(json.dumps(game_file.to_document(), indent=2) + "\n", encoding="utf-8")


def _read_mass(path: Path) -> np.ndarray:
    if path.suffix.lower() == ".csv":
        try:
            frame = pd.read_csv(path, header=None, comment="#")
        except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
            raise GameFileError(str(path), f"unreadable CSV: {exc}") from None
        try:
            return frame.to_numpy(dtype=float)
        except ValueError:
            raise GameFileError(str(path), "CSV must contain numbers only") from None
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise GameFileError(f"{path}:{exc.lineno}:{exc.colno}", exc.msg) from None
    try:
        return np.array(raw, dtype=float)
    except (TypeError, ValueError):
        raise GameFileError(str(path), "expected a (nested) JSON array of numbers") from None


def load_distribution(path: Path, game: Game, *, normalize: bool = False) -> JointDistribution:
    """
    Read mu as a JSON array (flat or nested [s_1][s_2]...) or a CSV matrix (2-player games).

    With normalize=True any positive total is rescaled to 1.
    """
    path = Path(path)
    mass = _read_mass(path).ravel()
    if mass.size != game.profile_count:
        raise GameFileError(str(path), f"expected {game.profile_count} entries for shape {game.strategy_counts}, got {mass.size}")
    if np.any(mass < 0.0) or not np.all(np.isfinite(mass)):
        raise GameFileError(str(path), "probabilities must be finite and non-negative")
    total = math.fsum(mass)
    if total <= 0.0:
        raise GameFileError(str(path), "distribution has no mass")
    if normalize or abs(total - 1.0) <= RESCALE_TOL:
        mass = mass / total
    try:
        return JointDistribution.from_flat(mass, game.strategy_counts)
    except InvalidDistribution as exc:
        raise GameFileError(str(path), f"{exc} (pass --normalize to rescale)") from None


def parse_prospect(pairs: Sequence[str]) -> Prospect:
    """Prospect from "p:z" tokens, e.g. ["0.6:40", "0.4:20"]."""
    probs = []
    outcomes = []
    for k, token in enumerate(pairs):
        left, sep, right = token.partition(":")
        if not sep:
            raise GameFileError(f"--prospect[{k}]", f"expected p:z, got {token!r}")
        try:
            probs.append(float(left))
            outcomes.append(float(right))
        except ValueError:
            raise GameFileError(f"--prospect[{k}]", f"not a number pair: {token!r}") from None
    if not probs:
        raise GameFileError("--prospect", "no outcomes given")
    total = math.fsum(probs)
    if total > 0.0 and abs(total - 1.0) <= RESCALE_TOL:
        probs = [p / total for p in probs]
    try:
        return Prospect(tuple(probs), tuple(outcomes))
    except InvalidProspect as exc:
        raise GameFileError("--prospect", str(exc)) from None


def preferences_for(game_file: Optional[GameFile], player: int) -> CptPreferences:
    if game_file is None:
        return CptPreferences.eut()
    if not 0 <= player < len(game_file.preferences):
        raise GameFileError("--player", f"game has {len(game_file.preferences)} players, got {player + 1}")
    return game_file.preferences[player]
