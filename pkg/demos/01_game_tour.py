"""Tour of the four built-in games: play one seeded random episode in each.

Shows the shared environment protocol (reset / observe / legal_actions / step)
and the terminal reward conventions (+1/-1 win-loss, 0/0 draw, -1.5 format
penalty for an illegal action).
"""

from deptlab.core import make_rng
from deptlab.envs import GameSpec, make_env

ACTION_LABELS = {
    "SplitPot": lambda env, a: (
        f"propose(own={a})" if a <= env.pot else ("accept" if a == env.pot + 1 else "reject")
    ),
    "TrapWord": lambda env, a: f"say token {a}",
    "MatrixGame": lambda env, a: f"move {a}",
    "RiggedBandit": lambda env, a: f"arm {a}",
}


def play(name, seed=42):
    env = make_env(GameSpec(name=name))
    rng = make_rng(seed)
    state, (obs0, obs1) = env.reset(rng)
    print(f"\n=== {name}  (obs space {env.observation_count}, "
          f"action space {env.action_count}, max {env.max_turns} turns)")
    if name == "TrapWord":
        print(f"    secrets: player 0 holds {state.secrets[0]}, player 1 holds {state.secrets[1]}")
    t = 0
    while True:
        role = t % 2
        obs = env.observe(state, role)
        legal = env.legal_actions(state, role)
        action = legal[rng.integers(0, len(legal))]
        label = ACTION_LABELS[name](env, action)
        print(f"    turn {t} | player {role} sees obs {obs:4d} | {label}")
        state, done, rewards = env.step(state, role, action, rng)
        if done:
            print(f"    rewards: {rewards}")
            return
        t += 1


if __name__ == "__main__":
    for name in ("SplitPot", "TrapWord", "MatrixGame", "RiggedBandit"):
        play(name)
