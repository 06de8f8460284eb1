"""Optimistic planning from an offline dataset.

Draws ``n0`` next states per state-action pair, builds the empirical model
with its confidence box, and runs the exchange loop on the optimistic LP.
More data shrinks the box, so the optimistic value falls towards the true
optimum and the returned policy's error term drops.

    python demos/offline_data.py [seed]
"""
import sys

from sicmdp.bench import (DatasetSpec, GenerativeModel, SewageSpec, generate_sewage_env,
                          sample_dataset, solve_reference)
from sicmdp.constraint import InnerSolverConfig
from sicmdp.core import error_term
from sicmdp.errors import InfeasibleOptimisticSet
from sicmdp.sicrl import SICRLConfig, estimate_model, run_sicrl


def main(seed=0):
    model = generate_sewage_env(SewageSpec(seed=seed))
    S, A = model.num_states, model.num_actions
    delta = 0.005 / (S ** 2 * A)
    ref = solve_reference(model, grid_size=100_000)
    print(f"reference value {ref.value:.4f}, delta {delta:.2e}")
    print(f"{'n0':>7} {'max width':>10} {'covers P':>9} {'optimistic':>11} {'error':>10}")
    for n0 in (100, 1_000, 10_000, 100_000):
        data = sample_dataset(model, DatasetSpec(GenerativeModel(n0), seed=seed))
        est = estimate_model(data, S, A, delta)
        config = SICRLConfig(delta=delta, inner=InnerSolverConfig("random", samples=10_000))
        try:
            policy, state = run_sicrl(est, model, config=config)
        except InfeasibleOptimisticSet as exc:
            print(f"{n0:>7} {est.widths.max():>10.4f} {str(est.covers(model.transition)):>9}  {exc}")
            continue
        optimistic = state.history[-1].lp_objective / (1 - model.discount)
        print(f"{n0:>7} {est.widths.max():>10.4f} {str(est.covers(model.transition)):>9} "
              f"{optimistic:>11.4f} {error_term(model, policy, ref.value, ref.grid):>10.3e}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 0)
