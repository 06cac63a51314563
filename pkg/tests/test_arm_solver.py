import csv

import numpy as np
from hypothesis import given, settings, strategies as st

from crb.arm_solver import (
    QTable,
    ValueTable,
    _sweep,
    bellman_residual,
    greedy_policy,
    q_from_values,
    solve_arm_values,
    solve_arm_values_batch,
)
from crb.model import ArmModel, ContextChain, MultiplierVector

from .conftest import random_arm, random_instance, random_stochastic
from .oracles import lp_arm_values, truncated_vi_values


def single_cell_arm(r_active=1.0, r_passive=0.0):
    # |G| = |S| = 1: the only transition is the self-loop
    return ArmModel(
        transition=np.ones((1, 1, 2, 1)),
        reward=np.array([[[r_passive, r_active]]]),
    )


def trivial_chain():
    return ContextChain(transition=[[1.0]], budgets=[1])


def two_state_arm():
    # s0 --activate (reward 1)--> s1; every other move returns to s0 with reward 0
    P = np.zeros((1, 2, 2, 2))
    P[0, 0, 1, 1] = 1.0  # activate in s0 -> s1
    P[0, 0, 0, 0] = 1.0  # rest in s0 -> s0
    P[0, 1, :, 0] = 1.0  # s1 -> s0 regardless
    R = np.zeros((1, 2, 2))
    R[0, 0, 1] = 1.0
    return ArmModel(transition=P, reward=R)


def test_self_loop_always_active_value():
    table = solve_arm_values(
        single_cell_arm(), trivial_chain(), MultiplierVector.zeros(1), beta=0.9
    )
    assert abs(table.values[0, 0] - 10.0) <= 1e-7


def test_self_loop_priced_out():
    lam = MultiplierVector(np.array([2.0]))
    table = solve_arm_values(single_cell_arm(), trivial_chain(), lam, beta=0.9)
    # net active reward 1 - 2 < 0, so the arm rests forever
    assert abs(table.values[0, 0]) <= 1e-9


def test_two_state_cycle_against_vi_oracle():
    arm, chain = two_state_arm(), trivial_chain()
    lam = MultiplierVector.zeros(1)
    table = solve_arm_values(arm, chain, lam, beta=0.5, tol=1e-10)
    oracle = truncated_vi_values(arm, chain, lam.values, beta=0.5, sweeps=200)
    assert np.allclose(table.values, oracle, atol=1e-10)
    assert abs(table.values[0, 0] - 4.0 / 3.0) <= 1e-9
    assert abs(table.values[0, 1] - 2.0 / 3.0) <= 1e-9


def test_q_self_loop_values():
    arm, chain = single_cell_arm(), trivial_chain()
    lam = MultiplierVector.zeros(1)
    table = solve_arm_values(arm, chain, lam, beta=0.9, tol=1e-10)
    q = q_from_values(arm, chain, lam, 0.9, table)
    assert abs(q.values[0, 0, 1] - 10.0) <= 1e-7
    assert abs(q.values[0, 0, 0] - 9.0) <= 1e-7

    lam2 = MultiplierVector(np.array([2.0]))
    table2 = solve_arm_values(arm, chain, lam2, beta=0.9, tol=1e-10)
    q2 = q_from_values(arm, chain, lam2, 0.9, table2)
    assert abs(q2.values[0, 0, 1] - (-1.0)) <= 1e-8
    assert abs(q2.values[0, 0, 0] - 0.0) <= 1e-8


def test_q_two_state_cycle_from_oracle():
    arm, chain = two_state_arm(), trivial_chain()
    lam = MultiplierVector.zeros(1)
    table = solve_arm_values(arm, chain, lam, beta=0.5, tol=1e-11)
    q = q_from_values(arm, chain, lam, 0.5, table)
    # hand values off the oracle fixed point V = (4/3, 2/3)
    assert abs(q.values[0, 0, 1] - 4.0 / 3.0) <= 1e-9
    assert abs(q.values[0, 0, 0] - 2.0 / 3.0) <= 1e-9
    assert abs(q.values[0, 1, 0] - 2.0 / 3.0) <= 1e-9
    assert abs(q.values[0, 1, 1] - 2.0 / 3.0) <= 1e-9


def test_greedy_policy_strict_inequality_and_ties():
    q = QTable(values=np.array([[[3.0, 5.0], [4.0, 4.0], [0.0, -1.0]]]))
    pol = greedy_policy(q)
    assert pol.action.tolist() == [[1, 0, 0]]


def test_bellman_residual_exact_and_shifted():
    arm, chain = single_cell_arm(), trivial_chain()
    lam = MultiplierVector.zeros(1)
    exact = ValueTable(values=np.array([[10.0]]), lambda_snapshot=lam)
    assert bellman_residual(arm, chain, lam, 0.9, exact) <= 1e-12
    # constant shift c leaves the max untouched except the beta*c passthrough:
    # residual = c * (1 - beta)
    shifted = ValueTable(values=np.array([[10.5]]), lambda_snapshot=lam)
    assert abs(bellman_residual(arm, chain, lam, 0.9, shifted) - 0.05) <= 1e-12


def test_fresh_solve_meets_tolerance():
    inst = random_instance(seed=11, num_contexts=3, num_states=4)
    lam = MultiplierVector(np.array([0.3, 0.0, 1.2]))
    table = solve_arm_values(inst.arms[0], inst.chain, lam, inst.discount, tol=1e-8)
    assert bellman_residual(inst.arms[0], inst.chain, lam, inst.discount, table) <= 1e-8


def test_batch_matches_individual_solves():
    inst = random_instance(seed=12, num_arms=4, num_contexts=2, num_states=3)
    lam = MultiplierVector(np.array([0.5, 0.1]))
    batch = solve_arm_values_batch(inst.arms, inst.chain, lam, inst.discount, tol=1e-10)
    for i, arm in enumerate(inst.arms):
        solo = solve_arm_values(arm, inst.chain, lam, inst.discount, tol=1e-10)
        assert np.allclose(batch[i], solo.values, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_contraction_between_sweeps(seed):
    rng = np.random.default_rng(seed)
    chain = ContextChain(transition=random_stochastic(rng, (2, 2)), budgets=[1, 1])
    arm = random_arm(rng, 2, 3)
    beta = 0.9
    P = arm.transition[None]
    R_eff = arm.reward[None].copy()
    V_prev = np.zeros((1, 2, 3))
    V, _ = _sweep(P, R_eff, chain.transition, beta, V_prev)
    for _ in range(5):
        V_next, _ = _sweep(P, R_eff, chain.transition, beta, V)
        d_now = np.max(np.abs(V_next - V))
        d_before = np.max(np.abs(V - V_prev))
        assert d_now <= beta * d_before + 1e-12
        V_prev, V = V, V_next


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), bump=st.floats(0.1, 3.0))
def test_value_monotone_nonincreasing_in_lambda(seed, bump):
    rng = np.random.default_rng(seed)
    chain = ContextChain(transition=random_stochastic(rng, (2, 2)), budgets=[1, 1])
    arm = random_arm(rng, 2, 2)
    base = rng.uniform(0.0, 1.0, size=2)
    g_hit = int(rng.integers(2))
    raised = base.copy()
    raised[g_hit] += bump
    v_lo = solve_arm_values(arm, chain, MultiplierVector(base), 0.9, tol=1e-10)
    v_hi = solve_arm_values(arm, chain, MultiplierVector(raised), 0.9, tol=1e-10)
    assert np.all(v_hi.values <= v_lo.values + 1e-8)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_qv_consistency_property(seed):
    rng = np.random.default_rng(seed)
    chain = ContextChain(transition=random_stochastic(rng, (2, 2)), budgets=[1, 1])
    arm = random_arm(rng, 2, 3)
    lam = MultiplierVector(rng.uniform(0.0, 1.0, size=2))
    table = solve_arm_values(arm, chain, lam, 0.95, tol=1e-10)
    q = q_from_values(arm, chain, lam, 0.95, table)
    assert np.max(np.abs(q.values.max(axis=-1) - table.values)) <= 1e-9


def test_lp_oracle_agreement_small_grid():
    for seed in range(5):
        rng = np.random.default_rng(200 + seed)
        chain = ContextChain(transition=random_stochastic(rng, (3, 3)), budgets=[1] * 3)
        arm = random_arm(rng, 3, 4)
        lam_vals = rng.uniform(0.0, 0.8, size=3)
        table = solve_arm_values(
            arm, chain, MultiplierVector(lam_vals), 0.9, tol=1e-10
        )
        lp = lp_arm_values(arm, chain, lam_vals, 0.9)
        assert np.max(np.abs(table.values - lp)) <= 1e-6


def test_value_table_csv_round_trip(tmp_path):
    from crb.arm_solver import value_table_to_csv

    arm, chain = single_cell_arm(), trivial_chain()
    lam = MultiplierVector.zeros(1)
    table = solve_arm_values(arm, chain, lam, 0.9, tol=1e-10)
    q = q_from_values(arm, chain, lam, 0.9, table)
    path = tmp_path / "values.csv"
    value_table_to_csv(path, table, q)
    with open(path) as f:
        rows = list(csv.DictReader(f))
    state_rows = [r for r in rows if r["a"] == "-1"]
    assert len(state_rows) == 1
    assert abs(float(state_rows[0]["value"]) - 10.0) <= 1e-6
