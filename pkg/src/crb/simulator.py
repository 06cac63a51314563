"""Stochastic environment, Monte Carlo evaluation, and small exact oracles.

Randomness is organized as named substreams of one master seed: context
draws, initial conditions, arm transitions, and policy tie-breaks each get
their own counter-based generator derived from (master_seed, run_index,
stream tag). Because the context stream never sees policy decisions, two
policies evaluated under the same master seed face the identical context
trajectory, which sharpens paired comparisons.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import csv
import json

import numpy as np

from .model import CrbInstance, InitialCondition

# Substream tags; the spawn key (run_index, tag) fixes each stream.
STREAM_CONTEXT = 0
STREAM_INIT = 1
STREAM_ARMS = 2
STREAM_POLICY = 3


def substream(master_seed: int, run_index: int, tag: int) -> np.random.Generator:
    """Independent generator for one named stream of one run."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(run_index, tag))
    return np.random.Generator(np.random.Philox(ss))


def _sample_row(row: np.ndarray, u: float) -> int:
    """Inverse-CDF draw from a probability row using one uniform."""
    return int(min(np.searchsorted(np.cumsum(row), u, side="right"), len(row) - 1))


@dataclass
class EnvState:
    """Mutable simulation state owned by exactly one rollout."""

    t: int
    g: int
    states: np.ndarray
    rng_context: np.random.Generator
    rng_arms: np.random.Generator


@dataclass
class TrajectoryLog:
    """Per-step records plus the discounted total and truncation bound."""

    t: np.ndarray
    g: np.ndarray
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    discounted_total: float
    truncation_bound: float

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["t", "g", "arm", "s", "a", "r"])
            for k in range(len(self.t)):
                for i in range(self.states.shape[1]):
                    w.writerow(
                        [
                            int(self.t[k]),
                            int(self.g[k]),
                            i,
                            int(self.states[k, i]),
                            int(self.actions[k, i]),
                            repr(float(self.rewards[k, i])),
                        ]
                    )


class InfeasibleActionError(RuntimeError):
    pass


def reward_bound(instance: CrbInstance) -> float:
    return max(float(np.max(np.abs(arm.reward))) for arm in instance.arms)


def truncation_bound(instance: CrbInstance, horizon: int) -> float:
    """Analytic cap on the discounted reward ignored beyond the horizon."""
    beta = instance.discount
    return beta**horizon * instance.num_arms * reward_bound(instance) / (1.0 - beta)


def sample_initial(
    instance: CrbInstance,
    rng: np.random.Generator,
    initial: InitialCondition | None = None,
) -> tuple[int, np.ndarray]:
    init = instance.initial if initial is None else initial
    g0 = _sample_row(init.context, rng.random())
    row = init.states[g0]
    cum = np.cumsum(row)
    u = rng.random(instance.num_arms)
    s0 = np.minimum(np.searchsorted(cum, u, side="right"), len(row) - 1)
    return g0, s0.astype(np.int64)


@dataclass(frozen=True)
class _SimTensors:
    """Stacked arm tensors with shared ArmModel objects deduplicated."""

    owner: np.ndarray  # (N,) index into the unique-arm axis
    cum_transition: np.ndarray  # (U, G, S, 2, S) cumulative probability rows
    reward: np.ndarray  # (U, G, S, 2)


def _sim_tensors(instance: CrbInstance) -> _SimTensors:
    uniq, index_of = [], {}
    owner = np.empty(instance.num_arms, dtype=np.int64)
    for i, arm in enumerate(instance.arms):
        key = id(arm)
        if key not in index_of:
            index_of[key] = len(uniq)
            uniq.append(arm)
        owner[i] = index_of[key]
    P = np.stack([a.transition for a in uniq])
    R = np.stack([a.reward for a in uniq])
    return _SimTensors(owner=owner, cum_transition=np.cumsum(P, axis=-1), reward=R)


def step(
    instance: CrbInstance,
    env: EnvState,
    actions: np.ndarray,
    tensors: _SimTensors | None = None,
):
    """Advance one step; returns (per-arm rewards, mutated env).

    Arm states are sampled with one uniform each regardless of the action
    taken, and the context from its own stream, so realized randomness is
    identical across policies under a shared master seed. Callers in a loop
    should build `tensors` once via ``_sim_tensors`` and pass it in.
    """
    g = env.g
    budget = int(instance.chain.budgets[g])
    used = int(np.sum(actions))
    if used > budget:
        raise InfeasibleActionError(
            f"t={env.t}: {used} activations exceed budget {budget} in context {g}"
        )

    if tensors is None:
        tensors = _sim_tensors(instance)
    n = instance.num_arms
    S = instance.num_states
    acts = np.asarray(actions, dtype=np.int64)
    rewards = tensors.reward[tensors.owner, g, env.states, acts]
    cum_rows = tensors.cum_transition[tensors.owner, g, env.states, acts]  # (N, S)
    u = env.rng_arms.random(n)
    next_states = np.minimum((cum_rows < u[:, None]).sum(axis=1), S - 1)

    env.g = _sample_row(instance.chain.transition[g], env.rng_context.random())
    env.states = next_states
    env.t += 1
    return rewards, env


def rollout(
    instance: CrbInstance,
    policy,
    horizon: int,
    master_seed: int,
    run_index: int = 0,
    initial: InitialCondition | None = None,
    keep_log: bool = True,
) -> TrajectoryLog:
    """Simulate `horizon` steps of `policy` from a sampled initial condition.

    policy is any callable (g, states) -> feasible action vector. The
    returned discounted total uses the instance discount; the log carries
    the analytic bound on what truncation at `horizon` can hide.
    """
    rng_init = substream(master_seed, run_index, STREAM_INIT)
    env = EnvState(
        t=0,
        g=0,
        states=np.zeros(instance.num_arms, dtype=np.int64),
        rng_context=substream(master_seed, run_index, STREAM_CONTEXT),
        rng_arms=substream(master_seed, run_index, STREAM_ARMS),
    )
    env.g, env.states = sample_initial(instance, rng_init, initial)
    tensors = _sim_tensors(instance)

    n = instance.num_arms
    if keep_log:
        log_g = np.empty(horizon, dtype=np.int64)
        log_states = np.empty((horizon, n), dtype=np.int64)
        log_actions = np.empty((horizon, n), dtype=np.int8)
        log_rewards = np.empty((horizon, n))
    else:
        log_g = log_states = log_actions = log_rewards = None

    beta = instance.discount
    total = 0.0
    disc = 1.0
    for t in range(horizon):
        actions = np.asarray(policy(env.g, env.states))
        if keep_log:
            log_g[t] = env.g
            log_states[t] = env.states
            log_actions[t] = actions
        rewards, env = step(instance, env, actions, tensors=tensors)
        if keep_log:
            log_rewards[t] = rewards
        total += disc * float(rewards.sum())
        disc *= beta

    if not keep_log:
        empty = np.empty((0, n))
        return TrajectoryLog(
            t=np.arange(0),
            g=np.arange(0),
            states=empty.astype(np.int64),
            actions=empty.astype(np.int8),
            rewards=empty,
            discounted_total=total,
            truncation_bound=truncation_bound(instance, horizon),
        )
    return TrajectoryLog(
        t=np.arange(horizon),
        g=log_g,
        states=log_states,
        actions=log_actions,
        rewards=log_rewards,
        discounted_total=total,
        truncation_bound=truncation_bound(instance, horizon),
    )


def monte_carlo_value(
    instance: CrbInstance,
    policy,
    horizon: int,
    runs: int,
    master_seed: int,
    initial: InitialCondition | None = None,
) -> tuple[float, float]:
    """Mean and standard error of the discounted total over i.i.d. rollouts."""
    if runs < 2:
        raise ValueError("runs must be >= 2 for a standard error")
    totals = np.empty(runs)
    for r in range(runs):
        log = rollout(
            instance, policy, horizon, master_seed, run_index=r,
            initial=initial, keep_log=False,
        )
        totals[r] = log.discounted_total
    return float(totals.mean()), float(totals.std(ddof=1) / np.sqrt(runs))


def monte_carlo_summary_json(path, label: str, mean: float, stderr: float, **extra):
    payload = {"label": label, "mean": mean, "stderr": stderr}
    payload.update(extra)
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


class SteadyStateError(RuntimeError):
    def __init__(self, starved):
        self.starved = starved
        super().__init__(
            "contexts with too few post-burn-in visits for a stable estimate: "
            + ", ".join(str(g) for g in starved)
        )


def estimate_steady_state(
    instance: CrbInstance,
    arm_policy,
    burn_in: int = 2_000,
    samples: int = 100_000,
    seed: int = 0,
    min_per_context: int = 200,
) -> np.ndarray:
    """Empirical long-run law m_g(s) of one arm's state conditional on g.

    Simulates a single arm jointly with the context chain under the fixed
    per-arm policy and counts (g, s) visits after burn-in. Requires a
    homogeneous instance so "one arm" is representative.
    """
    if not instance.homogeneous:
        raise ValueError("steady-state estimation assumes a homogeneous instance")
    arm = instance.arms[0]
    act = arm_policy.action
    G, S = act.shape

    rng = substream(seed, 0, STREAM_ARMS)
    rng_ctx = substream(seed, 0, STREAM_CONTEXT)
    g, s = sample_initial(instance, substream(seed, 0, STREAM_INIT))
    s = int(s[0])

    cum_ctx = np.cumsum(instance.chain.transition, axis=1)
    cum_arm = np.cumsum(arm.transition, axis=-1)
    counts = np.zeros((G, S))
    for t in range(burn_in + samples):
        if t >= burn_in:
            counts[g, s] += 1
        a = int(act[g, s])
        s = int(min(np.searchsorted(cum_arm[g, s, a], rng.random(), side="right"), S - 1))
        g = int(min(np.searchsorted(cum_ctx[g], rng_ctx.random(), side="right"), G - 1))

    per_context = counts.sum(axis=1)
    starved = [g for g in range(G) if per_context[g] < min_per_context]
    if starved:
        raise SteadyStateError(starved)
    return counts / per_context[:, None]


@dataclass(frozen=True)
class Lemma1Result:
    context: int
    expected_activations: float
    stderr: float
    budget: int
    passed: bool


def check_lemma1(
    instance: CrbInstance,
    m_star: np.ndarray,
    arm_policy,
    samples: int = 10_000,
    seed: int = 0,
) -> list:
    """Budget feasibility of the relaxed policy started from steady state.

    For each context g, draws all N arm states i.i.d. from m_g, applies the
    per-arm policy once, and checks the Monte Carlo mean activation count
    against C_g with a 3-sigma allowance.
    """
    act = arm_policy.action
    G, S = act.shape
    N = instance.num_arms
    results = []
    for g in range(G):
        rng = substream(seed, g, STREAM_INIT)
        draws = rng.choice(S, size=(samples, N), p=m_star[g])
        activations = act[g][draws].sum(axis=1)
        mean = float(activations.mean())
        stderr = float(activations.std(ddof=1) / np.sqrt(samples))
        budget = int(instance.chain.budgets[g])
        results.append(
            Lemma1Result(
                context=g,
                expected_activations=mean,
                stderr=stderr,
                budget=budget,
                passed=mean <= budget + 3.0 * stderr,
            )
        )
    return results


class OracleSizeError(RuntimeError):
    pass


def _feasible_action_vectors(n: int, budget: int):
    out = []
    for combo in itertools.product((0, 1), repeat=n):
        if sum(combo) <= budget:
            out.append(np.array(combo, dtype=np.int8))
    return out


def brute_force_primal(instance: CrbInstance, horizon: int) -> float:
    """Exact optimal finite-horizon value by joint-state backward induction.

    Enumerates the full (g, s_1..s_N) product space and every action subset
    within budget, so it only runs on tiny instances; DP caps are enforced.
    Used as the ground-truth middle term of the relaxation sandwich.
    """
    N = instance.num_arms
    G = instance.num_contexts
    S = instance.num_states
    joint = S**N
    if G * joint > 100_000:
        raise OracleSizeError(f"joint space {G}*{S}^{N} = {G * joint} exceeds 1e5")
    if horizon > 6:
        raise OracleSizeError(f"horizon {horizon} exceeds oracle cap 6")
    if horizon == 0:
        return 0.0

    beta = instance.discount
    digits = np.stack(
        [idx.ravel() for idx in np.indices((S,) * N)]
    )  # (N, joint): digits[i, j] = s_i of joint state j

    # Per (g, action-vector): joint reward vector and joint transition matrix.
    rewards_ga: list[list[np.ndarray]] = []
    trans_ga: list[list[np.ndarray]] = []
    actions_g: list[list[np.ndarray]] = []
    for g in range(G):
        budget = int(instance.chain.budgets[g])
        vecs = _feasible_action_vectors(N, budget)
        actions_g.append(vecs)
        r_list, t_list = [], []
        for avec in vecs:
            r = np.zeros(joint)
            T = np.ones((1, 1))
            for i, arm in enumerate(instance.arms):
                a = int(avec[i])
                r += arm.reward[g, :, a][digits[i]]
                T = np.kron(T, arm.transition[g, :, a, :])
            r_list.append(r)
            t_list.append(T)
        rewards_ga.append(r_list)
        trans_ga.append(t_list)

    V = np.zeros((G, joint))
    for _ in range(horizon):
        W = instance.chain.transition @ V  # (G, joint): E over g' at fixed s'
        V_new = np.empty_like(V)
        for g in range(G):
            best = None
            for r, T in zip(rewards_ga[g], trans_ga[g]):
                q = r + beta * (T @ W[g])
                best = q if best is None else np.maximum(best, q)
            V_new[g] = best
        V = V_new

    # Expectation over the product-form initial condition.
    init = instance.initial
    total = 0.0
    for g in range(G):
        w = np.ones(1)
        for _ in range(N):
            w = np.kron(w, init.states[g])
        total += float(init.context[g] * np.dot(w, V[g]))
    return total
