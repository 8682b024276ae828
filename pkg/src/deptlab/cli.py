"""Operator entry point: config parsing and subcommand dispatch.

Subcommands: ``train``, ``eval``, ``verify``, ``ablate``, ``sweep``. All take
``--config PATH`` (a JSON file, nested or flat dotted keys), repeatable
``--set key=value`` overrides, ``--out DIR`` and ``--seeds LIST``. An empty
or missing config file means full defaults. Unknown keys are rejected by
name; so is a fast decay rate that is not below the slow one.

Run directories are named ``{env}_{estimator}_{seed}`` and hold
``metrics.csv``, ``manifest.txt`` and ``snapshots/``.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .advantage import ESTIMATORS
from .core import SeededRng, hash64
from .envs import GAME_NAMES, GameSpec, make_env
from .oracle import run_verification_suite
from .policy import PolicyParams, load_snapshot
from .telemetry import final_metric
from .trainer import TrainConfig, evaluate, scripted_opponent, train

DEFAULT_SEEDS = (42, 100, 200)

ABLATION_MODES = ("dept", "no_sigma", "no_entropy_gate", "no_asym", "fast_only", "slow_only")

SWEEP_ALPHAS = (0.4, 0.5, 0.6)

# key -> (expected type(s), validator or None)
_SCHEMA: dict = {
    "env.name": (str, lambda v: v in GAME_NAMES),
    "env.pot_size": (int, lambda v: v >= 1),
    "env.vocab_size": (int, lambda v: v >= 2),
    "env.max_turns": ((int, type(None)), lambda v: v is None or v >= 1),
    "env.payoff_matrix": ((list, type(None)), None),
    "env.outcome_table": ((list, type(None)), None),
    "steps": (int, lambda v: v >= 1),
    "batch_size": (int, lambda v: v >= 2),
    "learning_rate": ((int, float), lambda v: v > 0),
    "clip_norm": ((int, float), lambda v: v > 0),
    "ppo_clip": ((int, float, type(None)), lambda v: v is None or v > 0),
    "optimizer": (str, lambda v: v in ("sgd", "adaptive_moments")),
    "eval_every": (int, lambda v: v >= 1),
    "eval_episodes": (int, lambda v: v >= 2 and v % 2 == 0),
    "seed": (int, lambda v: 0 <= v < 2 ** 64),
    "seeds": (list, lambda v: len(v) >= 1 and all(isinstance(s, int) for s in v)),
    "advantage.estimator": (str, lambda v: v in ESTIMATORS),
    "alpha_fast": ((int, float), lambda v: 0 < v < 1),
    "alpha_slow": ((int, float), lambda v: 0 < v < 1),
    "baseline_update": (str, lambda v: v in ("per_trajectory", "per_batch_mean")),
    "bounds_scope": (str, lambda v: v in ("per_role", "global")),
    "discount.gamma": ((int, float), lambda v: 0 < v <= 1),
    "policy.masked": (bool, None),
    "out": (str, None),
}


@dataclass
class CliConfig:
    """Validated union of environment spec, training config and run plan."""

    spec: GameSpec
    train: TrainConfig
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    out: Path = Path("runs")


def _flatten(data: dict, prefix: str = "") -> dict:
    flat = {}
    for key, value in data.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, f"{name}."))
        else:
            flat[name] = value
    return flat


def _parse_override(item: str) -> tuple[str, object]:
    key, sep, raw = item.partition("=")
    if not sep:
        raise ValueError(f"--set expects key=value, got {item!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw  # bare strings like estimator names
    return key, value


def parse_config(
    path: Optional[Path | str] = None, overrides: Sequence[str] = ()
) -> CliConfig:
    """Load, merge and validate the run configuration.

    ``path`` may be None or an empty file (full defaults). Overrides are
    ``key=value`` strings applied after the file. Every key is validated
    against the schema; violations name the offending key.
    """
    flat: dict = {}
    if path is not None:
        text = Path(path).read_text().strip()
        if text:
            data = json.loads(text)
            if not isinstance(data, dict):
                raise ValueError(f"config root must be an object, got {type(data).__name__}")
            flat.update(_flatten(data))
    for item in overrides:
        key, value = _parse_override(item)
        flat[key] = value

    for key, value in flat.items():
        if key not in _SCHEMA:
            raise ValueError(f"unknown config key {key!r}")
        expected, check = _SCHEMA[key]
        allowed = expected if isinstance(expected, tuple) else (expected,)
        if isinstance(value, bool) and bool not in allowed:
            raise ValueError(f"config key {key!r}: expected {allowed}, got bool")
        if not isinstance(value, allowed):
            raise ValueError(
                f"config key {key!r}: expected {allowed}, got {type(value).__name__}"
            )
        if check is not None and not check(value):
            raise ValueError(f"config key {key!r}: invalid value {value!r}")

    alpha_fast = flat.get("alpha_fast", 0.5)
    alpha_slow = flat.get("alpha_slow", 0.95)
    if not alpha_fast < alpha_slow:
        raise ValueError(
            f"alpha_fast ({alpha_fast}) must be strictly below alpha_slow "
            f"({alpha_slow}): the fast baseline must decay faster"
        )

    spec = GameSpec(
        name=flat.get("env.name", "SplitPot"),
        pot_size=flat.get("env.pot_size", 4),
        vocab_size=flat.get("env.vocab_size", 6),
        max_turns=flat.get("env.max_turns", None),
        payoff_matrix=flat.get("env.payoff_matrix", None),
        outcome_table=flat.get("env.outcome_table", None),
    )
    spec.validate()
    train_cfg = TrainConfig(
        steps=flat.get("steps", 400),
        batch_size=flat.get("batch_size", 128),
        learning_rate=float(flat.get("learning_rate", 0.05)),
        clip_norm=float(flat.get("clip_norm", 1.0)),
        ppo_clip=None if flat.get("ppo_clip") is None else float(flat["ppo_clip"]),
        optimizer=flat.get("optimizer", "adaptive_moments"),
        eval_every=flat.get("eval_every", 50),
        eval_episodes=flat.get("eval_episodes", 256),
        seed=flat.get("seed", DEFAULT_SEEDS[0]),
        estimator=flat.get("advantage.estimator", "dept"),
        alpha_fast=float(alpha_fast),
        alpha_slow=float(alpha_slow),
        baseline_update=flat.get("baseline_update", "per_trajectory"),
        bounds_scope=flat.get("bounds_scope", "per_role"),
        gamma=float(flat.get("discount.gamma", 1.0)),
        masked=flat.get("policy.masked", True),
    )
    train_cfg.validate()
    seeds = tuple(flat.get("seeds", DEFAULT_SEEDS))
    if "seed" in flat and "seeds" not in flat:
        seeds = (flat["seed"],)
    return CliConfig(spec=spec, train=train_cfg, seeds=seeds, out=Path(flat.get("out", "runs")))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_train(cfg: CliConfig) -> int:
    for seed in cfg.seeds:
        config = replace(cfg.train, seed=seed)
        result = train(config, cfg.spec, out_dir=cfg.out)
        final_eval = result.eval_history[-1][1].win_rate if result.eval_history else float("nan")
        print(f"run {result.run_dir}: final eval win rate {final_eval:.4f}")
    return 0


def cmd_eval(cfg: CliConfig, checkpoint: str, opponent: str, episodes: Optional[int]) -> int:
    env = make_env(cfg.spec)
    snap = load_snapshot(checkpoint)
    params = PolicyParams(snap.theta.copy())
    if opponent.endswith(".txt") or "/" in opponent:
        opp = load_snapshot(opponent)
    else:
        opp = scripted_opponent(opponent, env)
    n = episodes if episodes is not None else cfg.train.eval_episodes
    report = evaluate(params, opp, env, n, SeededRng(hash64(cfg.train.seed, 1)))
    print(f"episodes {report.episodes}")
    print(f"win_rate {report.win_rate:.4f}")
    print(f"draw_rate {report.draw_rate:.4f}")
    print(f"loss_rate {report.loss_rate:.4f}")
    print(f"as_first_player win/draw/loss {report.first_player}")
    print(f"as_second_player win/draw/loss {report.second_player}")
    return 0


def cmd_verify(quick: bool = False) -> int:
    results = run_verification_suite(quick=quick)
    failed = 0
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        failed += not res.passed
        print(f"{status} {res.name}: {res.detail}")
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 1


def cmd_ablate(cfg: CliConfig) -> int:
    """Full estimator plus the five ablations, across the seed list."""
    table: dict[str, dict[int, float]] = {}
    for mode in ABLATION_MODES:
        table[mode] = {}
        for seed in cfg.seeds:
            config = replace(cfg.train, estimator=mode, seed=seed)
            result = train(config, cfg.spec, out_dir=cfg.out)
            table[mode][seed] = final_metric(result.rows, "eval_win_rate")
    out_csv = cfg.out / "ablation_table.csv"
    cfg.out.mkdir(parents=True, exist_ok=True)
    header = "estimator," + ",".join(f"seed_{s}" for s in cfg.seeds) + ",mean"
    lines = [header]
    for mode in ABLATION_MODES:
        vals = [table[mode][s] for s in cfg.seeds]
        lines.append(
            f"{mode}," + ",".join(f"{v:.6f}" for v in vals) + f",{np.mean(vals):.6f}"
        )
    out_csv.write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    print(f"wrote {out_csv}")
    return 0


def cmd_sweep(cfg: CliConfig) -> int:
    """Vary the fast decay rate over its sensitivity range."""
    for alpha in SWEEP_ALPHAS:
        sub = cfg.out / f"alpha_fast_{alpha}"
        for seed in cfg.seeds:
            config = replace(cfg.train, alpha_fast=alpha, seed=seed)
            result = train(config, cfg.spec, out_dir=sub)
            final_eval = final_metric(result.rows, "eval_win_rate")
            print(f"alpha_fast={alpha} seed={seed}: final eval win rate {final_eval:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deptlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=str, default=None, help="JSON config file")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override one config key")
        p.add_argument("--out", type=str, default=None, help="output directory")
        p.add_argument("--seeds", type=str, default=None,
                       help="comma-separated seed list, e.g. 42,100,200")

    for name in ("train", "ablate", "sweep"):
        common(sub.add_parser(name))
    p_eval = sub.add_parser("eval")
    common(p_eval)
    p_eval.add_argument("--checkpoint", required=True, help="snapshot file to score")
    p_eval.add_argument("--opponent", default="heuristic",
                        help="snapshot path or scripted name (heuristic, uniform, ...)")
    p_eval.add_argument("--episodes", type=int, default=None)
    p_verify = sub.add_parser("verify")
    p_verify.add_argument("--quick", action="store_true", help="smaller randomized audits")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "verify":
        return cmd_verify(quick=args.quick)
    cfg = parse_config(args.config, args.overrides)
    if args.out is not None:
        cfg.out = Path(args.out)
    if args.seeds is not None:
        cfg.seeds = tuple(int(s) for s in args.seeds.split(","))
    if args.command == "train":
        return cmd_train(cfg)
    if args.command == "eval":
        return cmd_eval(cfg, args.checkpoint, args.opponent, args.episodes)
    if args.command == "ablate":
        return cmd_ablate(cfg)
    if args.command == "sweep":
        return cmd_sweep(cfg)
    raise ValueError(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
