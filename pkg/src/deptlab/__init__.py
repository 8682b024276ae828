"""deptlab: a self-play policy-gradient laboratory on small zero-sum games.

Dual-timescale EMA baselines detect training stagnation, batch outcome
entropy detects collapse, and an asymmetric advantage reshaping intervenes
to restore gradient signal. Comparator estimators, exactly enumerable
environments, and a brute-force oracle suite make every claim checkable.
"""

__version__ = "0.1.0"

from .core import Outcome, RewardSpec, SeededRng, Trajectory, classify_outcome, hash64, make_rng
from .envs import GameSpec, make_env
from .policy import PolicyParams, PolicySnapshot, action_probs, init_params, sample_action
from .advantage import (
    DualBaselineState,
    EmaBaselineState,
    dept_advantages,
    group_advantages,
    match_entropy,
    rae_advantages,
)
from .trainer import EvalReport, TrainConfig, collect_batch, evaluate, train

__all__ = [
    "__version__",
    "Outcome",
    "RewardSpec",
    "SeededRng",
    "Trajectory",
    "classify_outcome",
    "hash64",
    "make_rng",
    "GameSpec",
    "make_env",
    "PolicyParams",
    "PolicySnapshot",
    "action_probs",
    "init_params",
    "sample_action",
    "DualBaselineState",
    "EmaBaselineState",
    "dept_advantages",
    "group_advantages",
    "match_entropy",
    "rae_advantages",
    "EvalReport",
    "TrainConfig",
    "collect_batch",
    "evaluate",
    "train",
]
