"""Smoke test for the Python extension.

Build first with `cargo build --release -p gerl-py`, then run
`python3 python/smoke_test.py [path/to/libgerl.so]`.
"""

import importlib.machinery
import importlib.util
import json
import pathlib
import sys


def load(path):
    loader = importlib.machinery.ExtensionFileLoader("gerl", str(path))
    spec = importlib.util.spec_from_loader("gerl", loader)
    module = importlib.util.module_from_spec(spec)
    loader.exec_module(module)
    return module


def main():
    root = pathlib.Path(__file__).resolve().parent.parent
    default = root / "target" / "release" / "libgerl.so"
    gerl = load(pathlib.Path(sys.argv[1]) if len(sys.argv) > 1 else default)

    env = gerl.Env.generate(horizon=3, obs_mode="hadamard", zero_sum=True, seed=101)
    assert (env.horizon, env.players, env.joint_actions) == (3, 2, 9)

    text = env.to_json()
    assert json.loads(text)["format"] == "gerl-env"
    assert gerl.Env.from_json(text).to_json() == text

    uniform = gerl.Policy.uniform(env.horizon, env.joint_actions)
    base = env.exploitability(uniform)
    assert base > 0.0

    result = gerl.run(env, episodes=60, seed=0)
    assert len(result.deltas) == 60
    assert result.sandwich_violations == 0
    learned = env.exploitability(result.policy)
    print(f"uniform exploitability {base:.4f}, learned {learned:.4f}")
    assert learned < base

    again = gerl.Policy.from_json(result.policy.to_json())
    assert env.exploitability(again) == learned
    dist = again.distribution(0, [0.0] * 8)
    assert abs(sum(dist) - 1.0) < 1e-9

    # Matching pennies: uniform play is the unique equilibrium.
    dist, gap = gerl.solve_stage([2, 2], [[1, -1, -1, 1], [-1, 1, 1, -1]], "ne")
    assert gap <= 1e-3 and all(abs(p - 0.25) < 0.05 for p in dist)

    print("python smoke test passed")


if __name__ == "__main__":
    main()
