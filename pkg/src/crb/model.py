"""Problem description types for contextual restless bandits.

A decision-maker controls N arms. Each arm is a small MDP whose rewards and
transitions also depend on a shared global context that evolves as an
exogenous Markov chain. At every step the context g prescribes a budget C_g
limiting how many arms may be activated.

All types here are immutable after construction and safe to share across
threads. Validation is data, not control flow: `validate_instance` returns a
list of human-readable violations instead of raising.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Probability rows must sum to 1 within this absolute tolerance. Builders may
# renormalize at construction time; solvers never renormalize silently.
PROB_TOL = 1e-12

NUM_ACTIONS = 2


def _as_readonly(arr, dtype=float) -> np.ndarray:
    out = np.asarray(arr, dtype=dtype)
    out = np.array(out, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ContextChain:
    """Exogenous global-context Markov chain with per-context budgets.

    transition[g, g'] is the probability of moving from context g to g'.
    budgets[g] is the maximum number of arms activatable while in context g.
    """

    transition: np.ndarray
    budgets: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "transition", _as_readonly(self.transition))
        object.__setattr__(self, "budgets", _as_readonly(self.budgets, dtype=int))

    @property
    def num_contexts(self) -> int:
        return self.transition.shape[0]


@dataclass(frozen=True)
class ArmModel:
    """Context-augmented MDP for a single arm with binary actions.

    transition[g, s, a, s'] is the next-state distribution, reward[g, s, a]
    the immediate reward. Context evolution lives in ContextChain, not here.
    """

    transition: np.ndarray
    reward: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "transition", _as_readonly(self.transition))
        object.__setattr__(self, "reward", _as_readonly(self.reward))

    @property
    def num_states(self) -> int:
        return self.transition.shape[1]


@dataclass(frozen=True)
class InitialCondition:
    """Product-form initial distribution over (g0, per-arm s0).

    context[g] is the distribution of the initial context; states[g, s] is
    the distribution of each arm's initial state conditional on g0 = g (arms
    draw independently). A point condition is a pair of one-hot rows.
    """

    context: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "context", _as_readonly(self.context))
        object.__setattr__(self, "states", _as_readonly(self.states))

    @classmethod
    def uniform(cls, num_contexts: int, num_states: int) -> "InitialCondition":
        return cls(
            np.full(num_contexts, 1.0 / num_contexts),
            np.full((num_contexts, num_states), 1.0 / num_states),
        )

    @classmethod
    def point(cls, g0: int, s0: int, num_contexts: int, num_states: int) -> "InitialCondition":
        ctx = np.zeros(num_contexts)
        ctx[g0] = 1.0
        states = np.zeros((num_contexts, num_states))
        states[:, s0] = 1.0
        return cls(ctx, states)

    @classmethod
    def from_state_dists(cls, context, states_by_context) -> "InitialCondition":
        """Context distribution plus a per-context state row (e.g. steady-state m*_g)."""
        return cls(np.asarray(context, float), np.asarray(states_by_context, float))


@dataclass(frozen=True)
class CrbInstance:
    """Complete problem description shared by solver, simulator and learner."""

    chain: ContextChain
    arms: tuple
    discount: float
    initial: InitialCondition
    homogeneous: bool = False

    def __post_init__(self):
        object.__setattr__(self, "arms", tuple(self.arms))

    @property
    def num_arms(self) -> int:
        return len(self.arms)

    @property
    def num_contexts(self) -> int:
        return self.chain.num_contexts

    @property
    def num_states(self) -> int:
        return self.arms[0].num_states


@dataclass(frozen=True)
class MultiplierVector:
    """Per-context activation prices lambda_g >= 0 coupling arms in the dual."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _as_readonly(self.values))

    @classmethod
    def zeros(cls, num_contexts: int) -> "MultiplierVector":
        return cls(np.zeros(num_contexts))

    def __len__(self) -> int:
        return len(self.values)


class StationaryDistributionError(RuntimeError):
    """Power iteration failed to reach the requested fixed-point residual."""

    def __init__(self, residual: float, iterations: int):
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"stationary distribution did not converge: residual {residual:.3e} "
            f"after {iterations} iterations (chain may be periodic or reducible)"
        )


def _check_prob_rows(rows: np.ndarray, label: str, index_names, violations: list):
    """Append a violation per row that is not a probability distribution."""
    sums = rows.sum(axis=-1)
    bad_sum = np.argwhere(np.abs(sums - 1.0) > PROB_TOL)
    for idx in bad_sum:
        loc = ",".join(f"{n}={i}" for n, i in zip(index_names, idx))
        violations.append(f"{label}[{loc}]: row sums to {sums[tuple(idx)]:.12g}, expected 1")
    bad_range = np.argwhere((rows < 0.0) | (rows > 1.0))
    seen = set()
    for idx in bad_range:
        key = tuple(idx[:-1])
        if key in seen:
            continue
        seen.add(key)
        loc = ",".join(f"{n}={i}" for n, i in zip(index_names, key))
        violations.append(f"{label}[{loc}]: entries outside [0, 1]")


def validate_instance(instance: CrbInstance) -> list:
    """Collect every invariant violation in the instance.

    Returns an empty list iff the instance is well formed. Each violation is
    a string with a path-like locator such as ``arms[2].transition[g=0,s=1,a=0]``.
    """
    v: list = []
    chain = instance.chain
    G = chain.num_contexts

    if chain.transition.shape != (G, G):
        v.append(f"chain.transition: expected shape ({G}, {G}), got {chain.transition.shape}")
        return v
    _check_prob_rows(chain.transition, "chain.transition", ("g",), v)

    if chain.budgets.shape != (G,):
        v.append(f"chain.budgets: expected length {G}, got {chain.budgets.shape}")
    else:
        N = instance.num_arms
        for g, c in enumerate(chain.budgets):
            if c < 0 or c > N:
                v.append(f"chain.budgets[g={g}]: {c} outside [0, {N}]")

    if not 0.0 < instance.discount < 1.0:
        v.append(f"discount: {instance.discount} not strictly inside (0, 1)")

    if not instance.arms:
        v.append("arms: empty")
        return v

    S = instance.arms[0].num_states
    for i, arm in enumerate(instance.arms):
        if arm.transition.shape != (G, S, NUM_ACTIONS, S):
            v.append(
                f"arms[{i}].transition: expected shape ({G}, {S}, {NUM_ACTIONS}, {S}), "
                f"got {arm.transition.shape}"
            )
            continue
        if arm.reward.shape != (G, S, NUM_ACTIONS):
            v.append(
                f"arms[{i}].reward: expected shape ({G}, {S}, {NUM_ACTIONS}), "
                f"got {arm.reward.shape}"
            )
            continue
        _check_prob_rows(arm.transition, f"arms[{i}].transition", ("g", "s", "a"), v)
        if not np.all(np.isfinite(arm.reward)):
            v.append(f"arms[{i}].reward: non-finite entries")

    init = instance.initial
    if init.context.shape != (G,):
        v.append(f"initial.context: expected length {G}, got {init.context.shape}")
    else:
        _check_prob_rows(init.context[None, :], "initial.context", (), v)
    if init.states.shape != (G, S):
        v.append(f"initial.states: expected shape ({G}, {S}), got {init.states.shape}")
    else:
        _check_prob_rows(init.states, "initial.states", ("g",), v)

    if instance.homogeneous:
        ref = instance.arms[0]
        for i, arm in enumerate(instance.arms[1:], start=1):
            if not (
                np.array_equal(arm.transition, ref.transition)
                and np.array_equal(arm.reward, ref.reward)
            ):
                v.append(f"arms[{i}]: homogeneous flag set but model differs from arms[0]")
                break

    return v


def stationary_context_distribution(
    chain: ContextChain, tol: float = 1e-10, max_iters: int = 200_000
) -> np.ndarray:
    """Stationary distribution h of the context chain, h @ G = h.

    Power iteration from the uniform start, returning either the raw iterate
    or its Cesaro (running) average, whichever first reaches the residual
    ``tol`` in sup norm. The average makes deterministic cycles land on the
    uniform cycle distribution instead of oscillating forever.
    """
    P = chain.transition
    G = chain.num_contexts
    v = np.full(G, 1.0 / G)
    vP = v @ P
    # Running means of the iterates and of their images track avg @ P exactly,
    # so both residual checks cost O(G) on top of one matvec per iteration.
    avg = v.copy()
    avgP = vP.copy()
    for k in range(1, max_iters + 1):
        if np.max(np.abs(vP - v)) <= tol:
            return v / v.sum()
        if np.max(np.abs(avgP - avg)) <= tol:
            return avg / avg.sum()
        v = vP
        vP = v @ P
        avg += (v - avg) / (k + 1)
        avgP += (vP - avgP) / (k + 1)
    residual = min(float(np.max(np.abs(vP - v))), float(np.max(np.abs(avgP - avg))))
    raise StationaryDistributionError(residual, max_iters)
