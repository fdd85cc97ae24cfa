import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import FS22, ORACLE_MODELS, random_model, random_table, tiger
from missmdp.belief import successor_observations, update
from missmdp.evaluation import rollout_value
from missmdp.model import FeatureSpace, MissingnessTable, MissMdp, ModelError
from missmdp.plan import (
    AlphaPolicy,
    OracleExplosion,
    SolveConfig,
    exact_finite_horizon_value,
    format_policy,
    mdp_values,
    parse_policy,
    policy_action,
    policy_value_at,
    solve_point_based,
)
from missmdp.simulate import horizon_for

FS1 = FeatureSpace((1,))
FS2 = FeatureSpace((2,))


def _one_state(reward=1.0, gamma=0.5):
    m = MissMdp(FS1, 1, (np.eye(1),), np.full((1, 1), reward), np.ones(1), gamma)
    return m, MissingnessTable.from_function(FS1, lambda s: {(1,): 1.0})


def _tail(m, H):
    return m.gamma**H * m.rho_max / (1 - m.gamma)


# -- point-based solver ---------------------------------------------------------


def test_single_state_value():
    m, M = _one_state()
    assert policy_value_at(solve_point_based(m, M, SolveConfig(epsilon_target=1e-9)), m.initial) == pytest.approx(2.0, abs=1e-6)


def test_fully_observed_mdp_matches_value_iteration():
    rng = np.random.default_rng(3)
    T = tuple(rng.dirichlet(np.ones(2), size=2) for _ in range(2))
    R = rng.uniform(-1, 1, (2, 2))
    m = MissMdp(FS2, 2, T, R, np.array([0.4, 0.6]), 0.9)
    M = MissingnessTable.from_function(FS2, lambda s: {(1,): 1.0})
    V = mdp_values(m)
    pol = solve_point_based(m, M, SolveConfig(epsilon_target=1e-9, max_sweeps=1000))
    # the first action is chosen before the initial state is revealed
    q0 = max(m.initial @ (R[:, a] + m.gamma * (T[a] @ V)) for a in range(2))
    assert policy_value_at(pol, m.initial) == pytest.approx(q0, abs=1e-6)
    for s in range(2):
        assert policy_value_at(pol, np.eye(2)[s]) == pytest.approx(V[s], abs=1e-6)


def test_tiger_matches_exact_value():
    m, M = tiger()
    eps = 0.005
    H = horizon_for(m.gamma, m.rho_max, 1e-3)
    gap = exact_finite_horizon_value(m, M, m.initial, H) - policy_value_at(
        solve_point_based(m, M, SolveConfig(epsilon_target=eps)), m.initial
    )
    assert 0 <= gap <= eps + _tail(m, H)


@pytest.mark.parametrize("name", sorted(ORACLE_MODELS))
def test_oracle_models_within_target(name):
    m, M = ORACLE_MODELS[name]()
    H = horizon_for(m.gamma, m.rho_max, 1e-3)
    eps = 0.01 * m.rho_max / (1 - m.gamma)
    pol = solve_point_based(m, M, SolveConfig(epsilon_target=eps))
    gap = exact_finite_horizon_value(m, M, m.initial, H) - policy_value_at(pol, m.initial)
    assert 0 <= gap <= eps + _tail(m, H)


@pytest.mark.parametrize("seed", range(4))
def test_lower_bound_on_mixed_reward_models(seed):
    # with positive rewards the H-step optimum may sit below V* by up to the tail
    m = random_model(FS2, 2, seed, gamma=0.5)
    M = random_table(FS2, seed)
    H = horizon_for(m.gamma, m.rho_max, 1e-3)
    pol = solve_point_based(m, M, SolveConfig(epsilon_target=1e-4))
    beliefs = [m.initial]
    for a in range(2):
        beliefs += [update(m, M, m.initial, a, z) for z in successor_observations(m, M, m.initial, a)]
    for b in beliefs:
        assert policy_value_at(pol, b) <= exact_finite_horizon_value(m, M, b, H) + _tail(m, H) + 1e-12


def test_sweeps_never_decrease_the_value():
    m, M = ORACLE_MODELS["ring"]()
    vals = [
        policy_value_at(solve_point_based(m, M, SolveConfig(epsilon_target=1e-9, max_expansions=0, max_sweeps=k)), m.initial)
        for k in range(1, 12)
    ]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


def test_solver_is_deterministic():
    m, M = random_model(FS22, 2, 5), random_table(FS22, 5)
    p1 = solve_point_based(m, M, SolveConfig(seed=3))
    p2 = solve_point_based(m, M, SolveConfig(seed=3))
    assert np.array_equal(p1.vectors, p2.vectors) and np.array_equal(p1.actions, p2.actions)


def test_solve_config_validation():
    with pytest.raises(ValueError):
        SolveConfig(epsilon_target=0)
    with pytest.raises(ValueError):
        SolveConfig(breadth=0)


def test_greedy_rollout_matches_policy_value():
    m, M = tiger()
    pol = solve_point_based(m, M, SolveConfig(epsilon_target=0.005))
    H = horizon_for(m.gamma, m.rho_max, 1e-3)
    exact = exact_finite_horizon_value(m, M, m.initial, H)
    r = rollout_value(m, M, pol, 20_000, 0)
    # rollout estimates the policy's true value: between its lower bound and the optimum
    assert policy_value_at(pol, m.initial) - r.ci95 - 1e-3 <= r.mean <= exact + r.ci95 + 1e-3


# -- exact oracle ------------------------------------------------------------------


def test_exact_oracle_examples():
    m, M = _one_state()
    assert exact_finite_horizon_value(m, M, m.initial, 0) == 0.0
    assert exact_finite_horizon_value(m, M, m.initial, 3) == pytest.approx(1.75)


def test_exact_oracle_on_deterministic_chain():
    T = (np.array([[0.0, 1.0], [1.0, 0.0]]), np.eye(2))
    R = np.array([[0.0, 0.5], [1.0, 0.2]])
    m = MissMdp(FS2, 2, T, R, np.array([1.0, 0.0]), 0.9)
    M = MissingnessTable.from_function(FS2, lambda s: {(1,): 1.0})
    H = 8
    v = np.zeros(2)
    for _ in range(H):
        v = np.max(np.column_stack([R[:, a] + 0.9 * T[a] @ v for a in range(2)]), axis=1)
    assert exact_finite_horizon_value(m, M, m.initial, H) == pytest.approx(v[0], abs=1e-12)


def test_exact_oracle_explosion_guard():
    m, M = random_model(FS22, 2, 0), random_table(FS22, 0)
    with pytest.raises(OracleExplosion):
        exact_finite_horizon_value(m, M, m.initial, 30, node_cap=100)


# -- policy readout -----------------------------------------------------------------


def test_policy_action_examples():
    single = AlphaPolicy(np.array([[1.0, -3.0]]), np.array([2]), 0.9)
    assert policy_action(single, np.array([0.3, 0.7])) == 2
    dom = AlphaPolicy(np.array([[0.0, 0.0], [1.0, 1.0]]), np.array([0, 1]), 0.9)
    assert policy_action(dom, np.array([0.9, 0.1])) == 1
    cross = AlphaPolicy(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([0, 1]), 0.9)
    assert policy_action(cross, np.array([0.6, 0.4])) == 0
    assert policy_action(cross, np.array([0.4, 0.6])) == 1
    assert policy_action(cross, np.array([0.5, 0.5])) == 0  # tie -> lowest vector index


def test_zero_vector_value():
    assert policy_value_at(AlphaPolicy(np.zeros((1, 3)), np.array([0]), 0.5), np.full(3, 1 / 3)) == 0.0


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_value_is_convex(seed):
    rng = np.random.default_rng(seed)
    pol = AlphaPolicy(rng.normal(size=(5, 4)), rng.integers(0, 3, 5), 0.9)
    b1, b2 = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(4))
    mid = policy_value_at(pol, (b1 + b2) / 2)
    assert mid <= (policy_value_at(pol, b1) + policy_value_at(pol, b2)) / 2 + 1e-12
    assert mid >= np.max(pol.vectors @ ((b1 + b2) / 2)) - 1e-12


def test_alpha_policy_validation():
    with pytest.raises(ModelError):
        AlphaPolicy(np.zeros((2, 3)), np.array([0]), 0.9)
    with pytest.raises(ModelError):
        AlphaPolicy(np.zeros((1, 3)), np.array([-1]), 0.9)


def test_policy_file_roundtrip():
    m, M = tiger()
    pol = solve_point_based(m, M)
    text = format_policy(pol)
    assert text.startswith(f"actions={int(pol.actions.max()) + 1} states=2 gamma=0.8\n")
    back = parse_policy(text)
    assert np.array_equal(back.vectors, pol.vectors) and np.array_equal(back.actions, pol.actions)
    with pytest.raises(ModelError):
        parse_policy("actions=1 states=3 gamma=0.5\n0 1 2\n")
    with pytest.raises(ModelError):
        parse_policy("")
