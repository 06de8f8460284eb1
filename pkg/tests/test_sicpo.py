import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_model, random_policy, seeds
from sicmdp.bench.sewage import SewageSpec, generate_sewage_env
from sicmdp.constraint import ConstraintFamily, InnerSolverConfig, grid_points
from sicmdp.core import TabularSICMDP, exact_value, policy_to_occupancy, policy_value, sup_violation
from sicmdp.errors import EmptyGoodSet
from sicmdp.sicpo import (EvalConfig, NPGConfig, SICPOConfig, SoftmaxPolicy, TabularSampler,
                          averaging_weights, mc_evaluate, run_fixed_grid_baseline, run_sicpo,
                          sample_npg_direction, softmax, theory_step_schedule)


def truncated_value(model, probs, cost, H):
    """``E sum_{k<H} gamma^k c(s_k, a_k)`` by propagating the state distribution."""
    Ppi = np.einsum("sax,sa->sx", model.transition, probs)
    c_pi = np.sum(probs * cost, axis=1)
    d, total = np.array(model.initial_dist, float), 0.0
    for k in range(H):
        total += model.discount ** k * d @ c_pi
        d = d @ Ppi
    return total


def exact_advantage(model, probs):
    V = exact_value(model, probs, model.reward)
    Q = model.reward + model.discount * model.transition @ V
    return Q - V[:, None]


def family_const(S, A, cost, threshold, lipschitz=1.0):
    return ConstraintFamily([[0.0, 1.0]], lambda ys: np.full((len(ys), S, A), cost),
                            lambda ys: np.full(len(ys), threshold), lipschitz)


# step 1.0 makes the SGD oscillate once the policy is non-uniform; see the ledger
FAST = dict(npg=NPGConfig(K_sgd=50, H=30, step=0.25), eval=EvalConfig(K_eval=200, H=30),
            inner=InnerSolverConfig("random", samples=20))


# -- softmax -----------------------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(seeds)
def test_softmax_rows_and_gradient_identity(seed):
    rng = np.random.default_rng(seed)
    theta = rng.normal(scale=3, size=(3, 4))
    pol = SoftmaxPolicy(theta)
    assert np.allclose(pol.probs.sum(axis=1), 1.0, atol=1e-12)
    s, a = rng.integers(3), rng.integers(4)
    h = 1e-6
    fd = np.zeros_like(theta)
    for idx in np.ndindex(theta.shape):
        e = np.zeros_like(theta)
        e[idx] = h
        fd[idx] = (np.log(softmax(theta + e)[s, a]) - np.log(softmax(theta - e)[s, a])) / (2 * h)
    assert np.allclose(pol.grad_log_prob(s, a), fd, atol=1e-6)


def test_softmax_is_overflow_safe():
    assert np.allclose(softmax(np.array([[1000.0, 0.0]])), [[1.0, 0.0]])
    with pytest.raises(ValueError):
        SoftmaxPolicy(np.zeros(3))


# -- Monte-Carlo evaluation ----------------------------------------------------

def test_self_loop_return():
    m = TabularSICMDP(np.ones((1, 1, 1)), [[0.0]], [1.0], 0.9)
    sampler = TabularSampler(m)
    assert mc_evaluate(sampler, [[1.0]], [[1.0]], EvalConfig(K_eval=10, H=3)) == pytest.approx(2.71, abs=1e-12)
    assert mc_evaluate(sampler, [[1.0]], [[0.0]], EvalConfig(K_eval=10, H=3)) == 0.0


def test_mc_evaluate_is_deterministic_given_seed(rng):
    m = random_model(rng)
    sampler = TabularSampler(m)
    pi = random_policy(rng, 4, 3)
    cfg = EvalConfig(K_eval=500, H=20)
    assert mc_evaluate(sampler, pi, m.reward, cfg, 7) == mc_evaluate(sampler, pi, m.reward, cfg, 7)
    assert mc_evaluate(sampler, pi, m.reward, cfg, 7) != mc_evaluate(sampler, pi, m.reward, cfg, 8)


def test_mc_evaluate_unbiased_for_truncated_return():
    rng = np.random.default_rng(1)
    m = random_model(rng, 5, 3)
    pi = random_policy(rng, 5, 3)
    sampler = TabularSampler(m)
    cfg = EvalConfig(K_eval=100, H=15)
    reps = np.array([mc_evaluate(sampler, pi, m.reward, cfg, seed) for seed in range(10_000)])
    se = reps.std(ddof=1) / np.sqrt(len(reps))
    assert abs(reps.mean() - truncated_value(m, pi, m.reward, cfg.H)) <= 3 * se


def test_mc_envelope_on_random_envs():
    cfg = EvalConfig(K_eval=10 ** 5, H=100)
    hits = 0
    for seed in range(40):
        rng = np.random.default_rng(seed)
        m = random_model(rng, 8, 4)
        pi = random_policy(rng, 8, 4)
        gamma = m.discount
        bound = 3 / ((1 - gamma) * np.sqrt(2 * cfg.K_eval)) + gamma ** cfg.H / (1 - gamma)
        est = mc_evaluate(TabularSampler(m), pi, m.reward, cfg, seed)
        hits += abs(est - policy_value(m, pi, m.reward)) <= bound
    assert hits >= 39


def test_occupancy_sampler_total_variation():
    rng = np.random.default_rng(2)
    m = random_model(rng, 4, 3)
    pi = random_policy(rng, 4, 3)
    draws = TabularSampler(m).occupancy_samples(pi, 10 ** 5, 200, 0)
    emp = np.zeros((4, 3))
    np.add.at(emp, (draws[:, 0], draws[:, 1]), 1.0)
    emp /= len(draws)
    assert 0.5 * np.abs(emp - policy_to_occupancy(m, pi)).sum() <= 0.02


# -- NPG direction ---------------------------------------------------------------

def test_averaging_weights_and_schedules():
    w = averaging_weights(10)
    assert w.sum() == pytest.approx(1.0) and np.all(np.diff(w) > 0)
    sched = theory_step_schedule(0.9, 2.0)
    assert sched(0) == pytest.approx(2 / (0.01 * 2.0))
    cfg = NPGConfig(K_sgd=4, step=sched)
    assert np.allclose(cfg.steps(), [sched(k) for k in range(4)])
    with pytest.raises(ValueError):
        NPGConfig(K_sgd=0)
    with pytest.raises(ValueError):
        NPGConfig(K_sgd=3, weights=[0.5, 0.5, 0.5])
    with pytest.raises(ValueError):
        NPGConfig(step=-1.0)


def test_zero_signal_gives_zero_direction(rng):
    m = random_model(rng)
    w = sample_npg_direction(TabularSampler(m), random_policy(rng, 4, 3), np.zeros((4, 3)),
                             NPGConfig(K_sgd=100, H=20))
    assert np.all(w == 0.0)


def test_two_action_least_squares_example():
    m = TabularSICMDP(np.ones((1, 2, 1)), [[0.0, 1.0]], [1.0], 0.9)
    pol = SoftmaxPolicy.zeros(1, 2)
    adv = np.array([[0.5, -0.5]])
    w = sample_npg_direction(TabularSampler(m), pol, m.reward, NPGConfig(K_sgd=200, H=20),
                             advantage_fn=lambda probs: adv)
    # normal equations over nu = pi, features phi(a) = e_a - pi; minimum-norm solution
    phi = np.eye(2) - pol.probs[0]
    sqrt_nu = np.sqrt(pol.probs[0])[:, None]
    oracle = np.linalg.lstsq(sqrt_nu * phi, sqrt_nu[:, 0] * adv[0], rcond=None)[0]
    assert np.linalg.norm(w[0] - oracle) <= 1e-2
    assert w[0] @ phi[0] == pytest.approx(0.5, abs=1e-2)


def test_direction_respects_projection_radius(rng):
    m = random_model(rng)
    w = sample_npg_direction(TabularSampler(m), random_policy(rng, 4, 3), m.reward * 50,
                             NPGConfig(K_sgd=100, H=20, W=0.1, step=0.1))
    assert np.linalg.norm(w) <= 0.1 + 1e-12


@settings(max_examples=10, deadline=None)
@given(seeds)
def test_exact_advantage_step_is_ascent(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng, 4, 3)
    theta = rng.normal(size=(4, 3))
    pol = SoftmaxPolicy(theta)
    w = sample_npg_direction(TabularSampler(m), pol, m.reward,
                             NPGConfig(K_sgd=2000, H=50, step=0.1), seed,
                             advantage_fn=lambda probs: exact_advantage(m, probs))
    before = policy_value(m, pol.probs, m.reward)
    after = policy_value(m, SoftmaxPolicy(theta + 0.05 * w).probs, m.reward)
    assert after > before


# -- SI-CPO loop -----------------------------------------------------------------

def test_vacuous_constraints_give_plain_ascent(rng):
    m = random_model(rng)
    fam = family_const(4, 3, 0.5, np.inf)
    pi, state = run_sicpo(TabularSampler(m), fam, SICPOConfig(T=8, **FAST))
    assert state.good == list(range(8)) and state.bad == []
    assert state.chosen in state.good


def test_always_violated_raises_empty_good_set(rng):
    m = random_model(rng)
    with pytest.raises(EmptyGoodSet):
        run_sicpo(TabularSampler(m), family_const(4, 3, 1.0, 0.0), SICPOConfig(T=5, **FAST))


def test_partition_branches_determinism_and_csv():
    m = generate_sewage_env(SewageSpec(seed=3))
    cfg = SICPOConfig(T=30, seed=5, audit_model=m, **FAST)
    pi, state = run_sicpo(TabularSampler(m), config=cfg)
    assert sorted(state.good + state.bad) == list(range(30))
    assert not set(state.good) & set(state.bad)
    for r in state.records:
        assert (r.branch == "B") == (r.est_violation <= cfg.eta)
        assert r.reward_value_exact == pytest.approx(
            policy_value(m, state.policy_at(r.iter).probs, m.reward))
    pi2, state2 = run_sicpo(TabularSampler(m), config=cfg)
    assert np.array_equal(state.thetas, state2.thetas) and state.chosen == state2.chosen
    assert state.to_csv() == state2.to_csv()
    lines = state.to_csv().splitlines()
    assert lines[0] == "iter,branch,est_violation,y_coords,reward_value_exact,elapsed_ms"
    assert len(lines) == 31 and lines[1].endswith(",")
    last = run_sicpo(TabularSampler(m), config=SICPOConfig(T=30, seed=5, return_last_good=True,
                                                             **FAST))[1]
    assert last.chosen == last.good[-1]


def test_config_validation():
    with pytest.raises(ValueError):
        SICPOConfig(T=0)
    with pytest.raises(ValueError):
        EvalConfig(K_eval=0)


# -- fixed-grid baseline ---------------------------------------------------------

def single_state_tail_family(threshold=1.0):
    """Cost of the rewarding action is positive only for ``y > 0.8``."""

    def cost(ys):
        c = np.zeros((len(ys), 1, 2))
        c[:, 0, 1] = np.clip((ys[:, 0] - 0.8) / 0.2, 0.0, 1.0)
        return c

    return ConstraintFamily([[0.0, 1.0]], cost, lambda ys: np.full(len(ys), threshold), 5.0)


def test_grid_missing_the_violated_region_goes_undetected():
    fam = single_state_tail_family()
    m = TabularSICMDP(np.ones((1, 2, 1)), [[0.0, 1.0]], [1.0], 0.9, fam)
    cfg = SICPOConfig(T=20, **FAST)
    pi, state = run_fixed_grid_baseline(TabularSampler(m), fam, config=cfg,
                                        grid=grid_points([[0.0, 0.5]], 5))
    assert state.bad == []
    _, worst = sup_violation(m, pi, grid_points(fam.box, 1000), fam)
    assert worst > cfg.eta
    # the random search over all of Y does see the violation
    _, full = run_sicpo(TabularSampler(m), fam, cfg)
    assert full.bad


def test_single_grid_point_at_worst_case_matches_random_search():
    fam = single_state_tail_family(threshold=6.0)
    m = TabularSICMDP(np.ones((1, 2, 1)), [[0.0, 1.0]], [1.0], 0.9, fam)
    cfg = SICPOConfig(T=1, inner=InnerSolverConfig("random", samples=1000),
                      npg=FAST["npg"], eval=FAST["eval"])
    _, grid = run_fixed_grid_baseline(TabularSampler(m), fam, 1, cfg, grid=[[1.0]])
    _, rand = run_sicpo(TabularSampler(m), fam, cfg)
    assert grid.records[0].branch == rand.records[0].branch
    assert grid.records[0].est_violation == pytest.approx(rand.records[0].est_violation, abs=0.05)


def test_baseline_defaults_to_lattice():
    m = generate_sewage_env(SewageSpec(seed=1))
    _, state = run_fixed_grid_baseline(TabularSampler(m), n_baseline=4, config=SICPOConfig(T=3, **FAST))
    lattice = {tuple(p) for p in grid_points(m.constraints.box, 4)}
    assert all(tuple(r.y) in lattice for r in state.records)
