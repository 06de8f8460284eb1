"""Model-free SI-CPO on a sewage instance, next to the fixed-grid variant.

Each iteration estimates the cost values of the current softmax policy by
Monte-Carlo, searches ``Y`` for the most violated constraint, and takes a
natural-gradient step on the reward (good iterate) or on that cost (bad
iterate).  The fixed-grid variant only looks for violations on ``N``
lattice points.

The SGD step inside the natural-gradient estimate is 0.25: with a step of 1
the regression diverges as soon as the policy leaves the uniform one.

    python demos/policy_optimization.py [seed] [T]
"""
import sys

import numpy as np

from sicmdp.bench import SewageSpec, generate_sewage_env, solve_reference
from sicmdp.constraint import InnerSolverConfig
from sicmdp.core import policy_value, sup_violation
from sicmdp.sicpo import (EvalConfig, NPGConfig, SICPOConfig, TabularSampler,
                          run_fixed_grid_baseline, run_sicpo)


def summarize(name, model, ref, state, eta):
    gaps = [ref.value - policy_value(model, state.policy_at(t).probs, model.reward)
            for t in state.good]
    worst = max(sup_violation(model, state.policy_at(t).probs, ref.grid)[1] for t in state.good[-20:])
    print(f"{name:>12}: |B|={len(state.good):>4} |N|={len(state.bad):>4} "
          f"mean gap over B {np.mean(gaps):.4f}, "
          f"worst violation of the last 20 good iterates {worst:.4f} (eta {eta})")


def main(seed=0, T=300):
    model = generate_sewage_env(SewageSpec(seed=seed))
    ref = solve_reference(model, grid_size=10_000)
    config = SICPOConfig(alpha=1.0, eta=0.013, T=T, seed=seed,
                         npg=NPGConfig(K_sgd=1000, H=100, step=0.25),
                         eval=EvalConfig(K_eval=10_000, H=100),
                         inner=InnerSolverConfig("random", samples=100, seed=seed))
    sampler = TabularSampler(model)
    _, state = run_sicpo(sampler, config=config)
    summarize("SI-CPO", model, ref, state, config.eta)
    _, grid_state = run_fixed_grid_baseline(sampler, n_baseline=4, config=config)
    summarize("4-pt grid", model, ref, grid_state, config.eta)


if __name__ == "__main__":
    args = [int(a) for a in sys.argv[1:]]
    main(*args)
