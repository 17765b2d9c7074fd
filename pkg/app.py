from __future__ import annotations

import argparse
import re
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

# Ensure the equilibria package is importable when run as a script from elsewhere
try:
    import equilibria.cpt_core
except ModuleNotFoundError:
    _root = Path(__file__).resolve().parent
    if str(_root) not in sys.path:
        sys.path.insert(0, str(_root))

from config import CONFIG, RunConfig
from storage import RunStore, dumps, format_float
from game_io import GameFile, GameFileError, load_distribution, load_game, parse_prospect, preferences_for
from render import write_mask_csv, write_simplex_svg
from equilibria.cpt_core import cpt_value, regret
from equilibria.game_model import (
    Deviation,
    EquilibriumVerdict,
    Game,
    is_cpt_correlated_equilibrium,
    is_cpt_nash,
    is_eut_correlated_equilibrium,
)
from equilibria.two_by_two import characterize, nash_set_2x2, threshold
from equilibria.region_analysis import (
    RegionMask,
    SimplexGrid,
    component_count,
    convexity_check,
    intersect_regions,
    rasterize_deviation_region,
    scan_lifted_cce,
    signal_region,
)
from equilibria import presets


EXIT_OK = 0
EXIT_NEGATIVE = 1
EXIT_ERROR = 2

# Below this the example's two-decimal thresholds are not resolved by the grid.
COARSE_RESOLUTION = 100


class UsageError(ValueError):
    pass


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", text).strip("_")


def _player_index(game: Game, token: str) -> int:
    if token.isdigit():
        k = int(token) - 1
        if 0 <= k < game.n_players:
            return k
    elif token in game.player_names:
        return game.player_names.index(token)
    raise UsageError(f"--player: no player {token!r} (use 1..{game.n_players} or a player name)")


def _strategy_index(game: Game, i: int, token: str, flag: str) -> int:
    names = game.strategy_names[i]
    if token in names:
        return names.index(token)
    if token.isdigit() and 1 <= int(token) <= len(names):
        return int(token) - 1
    raise UsageError(f"{flag}: {game.player_names[i]} has no strategy {token!r} (choices: {', '.join(names)})")


def _witness_dict(game: Game, w: Optional[Deviation]) -> Optional[dict]:
    if w is None:
        return None
    return {
        "player": game.player_names[w.player],
        "player_index": w.player + 1,
        "signal": game.strategy_names[w.player][w.signal],
        "deviation": game.strategy_names[w.player][w.deviation],
    }


def _verdict_dict(game: Game, mode: str, verdict: EquilibriumVerdict) -> dict:
    return {
        "mode": mode,
        "member": verdict.is_member,
        "worst_violation": verdict.worst_violation,
        "witness": _witness_dict(game, verdict.witness),
        "small_marginals": [
            {"player": game.player_names[i], "strategy": game.strategy_names[i][s]} for i, s in verdict.small_marginals
        ],
    }


def _load(args: argparse.Namespace) -> GameFile:
    if getattr(args, "example", False):
        game = presets.example_disconnected_game()
        return GameFile(game=game, preferences=presets.example_preferences())
    if not args.game:
        raise UsageError("a game file (or --example) is required")
    return load_game(Path(args.game))


def cmd_value(args: argparse.Namespace, cfg: RunConfig, store: RunStore) -> int:
    game_file = _load(args) if (args.game or args.example) else None
    player = 0
    if game_file is not None:
        player = _player_index(game_file.game, args.player)
    prefs = preferences_for(game_file, player)

    if args.regret:
        if game_file is None:
            raise UsageError("--regret needs a game file")
        game = game_file.game
        s = _strategy_index(game, player, args.regret[0], "--regret")
        d = _strategy_index(game, player, args.regret[1], "--regret")
        p = tuple(args.probs or ())
        if len(p) != len(game.outcomes(player, s)):
            raise UsageError(f"--probs: expected {len(game.outcomes(player, s))} probabilities over opponent profiles")
        value = regret(p, game.outcomes(player, s), game.outcomes(player, d), prefs)
        store.log_event("value", {"kind": "regret", "player": player + 1, "strategies": list(args.regret), "value": value})
        print(format_float(value))
        return EXIT_OK

    if not args.prospect:
        raise UsageError("give --prospect p:z pairs or --regret S D --probs ...")
    value = cpt_value(parse_prospect(args.prospect), prefs)
    store.log_event("value", {"kind": "prospect", "player": player + 1, "value": value})
    print(format_float(value))
    return EXIT_OK


def cmd_check(args: argparse.Namespace, cfg: RunConfig, store: RunStore) -> int:
    game_file = _load(args)
    game = game_file.game
    mu = load_distribution(Path(args.mu), game, normalize=args.normalize)
    store.log_event("game_loaded", {"shape": list(game.strategy_counts), "mu": args.mu})

    if args.mode == "eut-ce":
        verdict = is_eut_correlated_equilibrium(game, mu, cfg.tolerance)
    elif args.mode == "cpt-ce":
        verdict = is_cpt_correlated_equilibrium(game, game_file.preferences, mu, cfg.tolerance)
    else:
        verdict = is_cpt_nash(game, game_file.preferences, mu, cfg.tolerance)

    report = _verdict_dict(game, args.mode, verdict)
    for item in report["small_marginals"]:
        store.log_event("small_marginal", item)
        print(f"warning: marginal of {item['player']} {item['strategy']} is below tolerance; its constraints were skipped", file=sys.stderr)
    store.log_event("verdict", report)
    if "json" in cfg.formats:
        store.write_json("verdict.json", report)
    print(dumps(report))
    return EXIT_OK if verdict.is_member else EXIT_NEGATIVE


def cmd_classify(args: argparse.Namespace, cfg: RunConfig, store: RunStore) -> int:
    game_file = _load(args)
    poly = characterize(game_file.game, game_file.preferences)
    report = poly.to_dict()
    report["nash_set"] = [c.to_dict() for c in nash_set_2x2(game_file.game, game_file.preferences)]
    store.log_event("classified", {"label": poly.classification.label, "vertices": len(poly.vertices)})
    if "json" in cfg.formats:
        store.write_json("classification.json", report)
    print(dumps(report))
    return EXIT_OK


def _export_region(mask: RegionMask, name: str, game: Game, i: int, cfg: RunConfig, store: RunStore) -> dict:
    files = {}
    if "csv" in cfg.formats:
        files["csv"] = write_mask_csv(mask, store.path(f"{name}.csv")).name
    if "svg" in cfg.formats and mask.grid.dimension == 3:
        labels = [n for j, row in enumerate(game.strategy_names) if j != i for n in row]
        files["svg"] = write_simplex_svg(mask, store.path(f"{name}.svg"), vertex_labels=labels, title=name).name
    return files


def cmd_regions(args: argparse.Namespace, cfg: RunConfig, store: RunStore) -> int:
    game_file = _load(args)
    game = game_file.game
    prefs = game_file.preferences
    i = _player_index(game, args.player)
    s = _strategy_index(game, i, args.signal, "--signal")
    deviations = [d for d in range(game.strategy_counts[i]) if d != s]
    if args.deviation is not None:
        d = _strategy_index(game, i, args.deviation, "--deviation")
        if d == s:
            raise UsageError("--deviation must differ from --signal")
        deviations = [d]

    t = game.profile_count // game.strategy_counts[i]
    n = cfg.grid_resolution
    grid = SimplexGrid(t, n)
    if grid.point_count > cfg.max_grid_points and not args.force:
        raise UsageError(f"grid has {grid.point_count} points (limit {cfg.max_grid_points}); lower -n or pass --force")
    coarse = SimplexGrid(t, max(10, n // 2))

    player_name = game.player_names[i]
    signal_name = game.strategy_names[i][s]
    masks = {}
    regions = []
    for d in deviations:
        dev_name = game.strategy_names[i][d]
        mask = rasterize_deviation_region(game, prefs, i, s, d, grid, tolerance=cfg.tolerance, fuzzy_band=cfg.fuzzy_band, threads=cfg.threads)
        masks[d] = mask
        label = f"C({i + 1},{signal_name},{dev_name})"
        convexity = convexity_check(mask, game, prefs, i, s, d, tolerance=cfg.tolerance)
        regions.append((label, dev_name, mask, convexity.to_dict()))
    if len(deviations) > 1:
        regions.append((f"C({i + 1},{signal_name})", None, intersect_regions(list(masks.values()), fuzzy_band=cfg.fuzzy_band), None))

    summary = {"player": player_name, "signal": signal_name, "resolution": n, "points": grid.point_count, "regions": []}
    for label, dev_name, mask, convexity in regions:
        if dev_name is None:
            coarse_mask = signal_region(game, prefs, i, s, coarse, tolerance=cfg.tolerance, threads=cfg.threads)
        else:
            d = game.strategy_index(i, dev_name)
            coarse_mask = rasterize_deviation_region(game, prefs, i, s, d, coarse, tolerance=cfg.tolerance, threads=cfg.threads)
        counts = {coarse.resolution: component_count(coarse_mask), n: component_count(mask)}
        entry = {
            "region": label,
            "deviation": dev_name,
            "members": mask.member_count,
            "components": counts[n],
            "components_by_resolution": {str(k): v for k, v in sorted(counts.items())},
            "fuzzy_points": mask.fuzzy_count,
            "files": _export_region(mask, _slug(label), game, i, cfg, store),
        }
        if convexity is not None:
            entry["convexity"] = convexity
        summary["regions"].append(entry)
        store.log_event("region_rasterized", {k: entry[k] for k in ("region", "members", "components", "fuzzy_points")})
        print(f"{label}: {entry['members']} of {grid.point_count} points, {entry['components']} component(s)")
        if len(set(counts.values())) > 1:
            store.log_event("resolution_mismatch", {"region": label, "counts": entry["components_by_resolution"]})
            print(f"warning: {label} has {counts[coarse.resolution]} component(s) at n={coarse.resolution} but {counts[n]} at n={n}", file=sys.stderr)
        if mask.fuzzy_count:
            store.log_event("fuzzy_band", {"region": label, "points": mask.fuzzy_count, "band": cfg.fuzzy_band})

    if "json" in cfg.formats:
        store.write_json("regions.json", summary)
    return EXIT_OK


def _check(rows: list, store: RunStore, name: str, passed: bool, expected: str, observed: str) -> None:
    rows.append({"check": name, "status": "PASS" if passed else "FAIL", "expected": expected, "observed": observed})
    store.log_event("checklist_item", rows[-1])


def run_example_checklist(cfg: RunConfig, store: RunStore, *, alpha1: float = presets.ALPHA_ROW) -> list[dict]:
    game = presets.example_disconnected_game()
    prefs = presets.example_preferences(alpha1=alpha1)
    n = cfg.grid_resolution
    top = game.strategy_index(0, "TOP")
    bottom = game.strategy_index(0, "BOTTOM")
    rows: list[dict] = []

    # TOP vs BOTTOM along p_G = 0
    x = game.outcomes(0, top)[:2]
    y = game.outcomes(0, bottom)[:2]
    q = threshold(x, y, prefs[0])
    _check(rows, store, "threshold TOP/BOTTOM", abs(q - presets.THRESHOLD_RED) <= 0.01, "p_R = 0.40 +- 0.01", f"p_R = {q:.4f}")

    grid = SimplexGrid(3, n)
    p_top_twice = 2 * grid.lattice[:, 0]
    exact = True
    for s, name in enumerate(game.strategy_names[1]):
        mask = signal_region(game, prefs, 1, s, grid, tolerance=cfg.tolerance, threads=cfg.threads)
        expected = p_top_twice <= n if name == "YELLOW" else p_top_twice >= n
        exact = exact and bool(np.array_equal(mask.bits, expected))
    _check(rows, store, "player 2 half-planes", exact, "RED, GREEN: p_T >= 0.5; YELLOW: p_T <= 0.5", "exact" if exact else "differs")

    coarse_n = max(10, n // 2)
    region = signal_region(game, prefs, 0, top, grid, tolerance=cfg.tolerance, threads=cfg.threads)
    coarse = signal_region(game, prefs, 0, top, SimplexGrid(3, coarse_n), tolerance=cfg.tolerance, threads=cfg.threads)
    count, coarse_count = component_count(region), component_count(coarse)
    if count != coarse_count:
        store.log_event("resolution_mismatch", {"region": "C(1,TOP)", "counts": {str(coarse_n): coarse_count, str(n): count}})
        print(f"warning: C(1,TOP) has {coarse_count} component(s) at n={coarse_n} but {count} at n={n}", file=sys.stderr)
    _check(rows, store, "C(1,TOP) components", count == 2, "2", f"{count} (n={n}), {coarse_count} (n={coarse_n})")
    if "csv" in cfg.formats or "svg" in cfg.formats:
        _export_region(region, "C_1_TOP", game, 0, cfg, store)

    labels = []
    for name, mu in (("mu_bar", presets.mu_bar()), ("mu_tilde", presets.mu_tilde())):
        verdict = is_cpt_correlated_equilibrium(game, prefs, mu, cfg.tolerance)
        _check(rows, store, f"{name} in C_CPT", verdict.is_member, "member", f"worst slack {format_float(verdict.worst_violation)}")
        labels.append(region.label_at(mu.conditional(0, top)))
    distinct = labels[0] >= 0 and labels[1] >= 0 and labels[0] != labels[1]
    _check(rows, store, "TOP slices in distinct components", distinct, "two different labels", f"labels {labels[0]}, {labels[1]}")

    scan = scan_lifted_cce(game, prefs, 0, (game.strategy_index(0, "CENTER"), bottom), tolerance=cfg.tolerance)
    _check(rows, store, "no C_CPT member with mu_1(TOP) = 0", not scan.members, "0 members", f"{len(scan.members)} of {scan.checked} lifts")
    return rows


def cmd_example(args: argparse.Namespace, cfg: RunConfig, store: RunStore) -> int:
    if cfg.grid_resolution < COARSE_RESOLUTION:
        store.log_event("coarse_grid", {"resolution": cfg.grid_resolution})
        print(
            f"warning: resolution n={cfg.grid_resolution} is below {COARSE_RESOLUTION}; "
            f"regions are only resolved to 1/{cfg.grid_resolution}",
            file=sys.stderr,
        )
    rows = run_example_checklist(cfg, store, alpha1=args.alpha1)
    print(pd.DataFrame(rows).to_string(index=False))
    if "json" in cfg.formats:
        store.write_json("checklist.json", {"alpha1": args.alpha1, "resolution": cfg.grid_resolution, "checks": rows})
    failed = [r for r in rows if r["status"] == "FAIL"]
    if failed:
        print(f"FAILED: {failed[0]['check']}")
        return EXIT_NEGATIVE
    print("all checks passed")
    return EXIT_OK


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, help="output directory (events.jsonl and artifacts)")
    common.add_argument("--tolerance", type=float, help="membership tolerance")
    common.add_argument("-n", "--resolution", type=int, help="grid resolution n")
    common.add_argument("--formats", help="comma-separated subset of csv,json,svg")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = argparse.ArgumentParser(prog="cpt-eq", description="CPT values and correlated equilibrium geometry of finite games")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("value", parents=[common], help="CPT value of a prospect, or a regret on a game")
    p.add_argument("game", nargs="?", help="game file (supplies the player's preferences)")
    p.add_argument("--example", action="store_true", help="use the built-in 3x3 example game")
    p.add_argument("--player", default="1")
    p.add_argument("--prospect", nargs="+", metavar="P:Z")
    p.add_argument("--regret", nargs=2, metavar=("S", "D"), help="regret of playing S over D")
    p.add_argument("--probs", nargs="+", type=float, help="distribution over opponent profiles for --regret")
    p.set_defaults(handler=cmd_value)

    p = sub.add_parser("check", parents=[common], help="test a joint distribution for equilibrium membership")
    p.add_argument("game", nargs="?")
    p.add_argument("mu", help="distribution as JSON array or CSV")
    p.add_argument("--example", action="store_true")
    p.add_argument("--mode", choices=("eut-ce", "cpt-ce", "cpt-nash"), default="cpt-ce")
    p.add_argument("--normalize", action="store_true", help="rescale the distribution to total mass 1")
    p.set_defaults(handler=cmd_check)

    p = sub.add_parser("classify", parents=[common], help="classify a 2x2 game and describe its equilibrium polytope")
    p.add_argument("game")
    p.set_defaults(handler=cmd_classify, example=False)

    p = sub.add_parser("regions", parents=[common], help="rasterize deviation regions over the opponents' simplex")
    p.add_argument("game", nargs="?")
    p.add_argument("--example", action="store_true")
    p.add_argument("--player", required=True)
    p.add_argument("--signal", required=True)
    p.add_argument("--deviation")
    p.add_argument("--force", action="store_true", help="allow grids above the configured point limit")
    p.set_defaults(handler=cmd_regions)

    p = sub.add_parser("example-disconnected", parents=[common], help="run the 3x3 disconnected-region checklist")
    p.add_argument("--alpha1", type=float, default=presets.ALPHA_ROW, help="Prelec parameter of player 1")
    p.set_defaults(handler=cmd_example)
    return parser


def _config_from(args: argparse.Namespace) -> RunConfig:
    overrides = {}
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.tolerance is not None:
        overrides["tolerance"] = args.tolerance
    if args.resolution is not None:
        overrides["grid_resolution"] = args.resolution
    if args.formats is not None:
        overrides["formats"] = tuple(f.strip() for f in args.formats.split(",") if f.strip())
    return replace(CONFIG, **overrides)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config_from(args)
    except ValueError as exc:
        print(f"config: {exc}", file=sys.stderr)
        return EXIT_ERROR

    store = RunStore(cfg.output_dir)
    store.log_event("startup", {"command": args.command, "config": cfg.as_dict()})
    try:
        return args.handler(args, cfg, store)
    except GameFileError as exc:
        print(str(exc), file=sys.stderr)
        store.log_event("error", {"path": exc.path, "message": exc.message})
        return EXIT_ERROR
    except (ValueError, OSError) as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        store.log_event("error", {"message": str(exc)})
        return EXIT_ERROR
    finally:
        store.log_event("shutdown")


if __name__ == "__main__":
    sys.exit(main())
