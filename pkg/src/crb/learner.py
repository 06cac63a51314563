"""Epoch-based online learning when arm transition kernels are unknown.

Rewards and budgets are known; transitions are estimated from counts. Each
epoch freezes the current estimates, re-solves the dual to get fresh price
and Q tables, then acts epsilon-greedily for a window of T steps while
recording every observed transition of every arm (all arms move and are
observed whether activated or not). Estimates refresh at the epoch boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dual import StepSchedule, solve_dual
from .index_policy import select_arms
from .model import ArmModel, ContextChain, CrbInstance, InitialCondition


@dataclass(frozen=True)
class InstanceSkeleton:
    """Everything the learner is allowed to know: the instance minus kernels."""

    chain: ContextChain
    rewards: tuple  # per-arm (G, S, 2) tensors
    discount: float
    initial: InitialCondition
    num_states: int

    @classmethod
    def from_instance(cls, instance: CrbInstance) -> "InstanceSkeleton":
        return cls(
            chain=instance.chain,
            rewards=tuple(arm.reward for arm in instance.arms),
            discount=instance.discount,
            initial=instance.initial,
            num_states=instance.num_states,
        )

    @property
    def num_arms(self) -> int:
        return len(self.rewards)


@dataclass
class EmpiricalModel:
    """Per-arm transition counts and the smoothed estimate built from them."""

    visit_counts: np.ndarray  # (G, S, 2) int
    transition_counts: np.ndarray  # (G, S, 2, S) int

    @classmethod
    def empty(cls, G: int, S: int) -> "EmpiricalModel":
        return cls(
            visit_counts=np.zeros((G, S, 2), dtype=np.int64),
            transition_counts=np.zeros((G, S, 2, S), dtype=np.int64),
        )

    def estimate(self, smoothing: str = "laplace") -> np.ndarray:
        """Estimated kernel rows.

        'laplace': (M_{s'} + 1) / (M + S), always a proper distribution.
        'ratio': the plain ratio M_{s'} / M on visited tuples, uniform on
        unvisited ones; matches the count formula exactly where defined.
        """
        S = self.transition_counts.shape[-1]
        M = self.visit_counts[..., None].astype(float)
        if smoothing == "laplace":
            return (self.transition_counts + 1.0) / (M + S)
        if smoothing == "ratio":
            visited = self.visit_counts > 0
            out = np.full(self.transition_counts.shape, 1.0 / S)
            safe = np.maximum(M, 1.0)
            ratio = self.transition_counts / safe
            out[visited] = ratio[visited]
            return out
        raise ValueError(f"unknown smoothing mode: {smoothing!r}")


@dataclass
class LearnerState:
    """Single-writer state of the online loop."""

    skeleton: InstanceSkeleton
    models: list  # per-arm EmpiricalModel
    epoch: int
    epoch_length: int
    epsilon0: float
    smoothing: str
    rng: np.random.Generator
    lambda_n: np.ndarray | None = None
    q_tables: list | None = None
    dual_converged: bool = True
    dual_failures: list = field(default_factory=list)
    dual_kwargs: dict = field(default_factory=dict)
    _gap: np.ndarray | None = None

    @property
    def epsilon(self) -> float:
        return min(1.0, self.epsilon0 / (self.epoch + 1))


def init_learner(
    skeleton: InstanceSkeleton,
    epoch_length: int,
    epsilon0: float = 1.0,
    seed: int = 0,
    smoothing: str = "laplace",
    dual_kwargs: dict | None = None,
) -> LearnerState:
    """Fresh learner: zero counts, uniform kernel prior, epoch 0."""
    if epoch_length < 1:
        raise ValueError("epoch_length must be >= 1")
    G = skeleton.chain.num_contexts
    S = skeleton.num_states
    models = [EmpiricalModel.empty(G, S) for _ in range(skeleton.num_arms)]
    return LearnerState(
        skeleton=skeleton,
        models=models,
        epoch=0,
        epoch_length=epoch_length,
        epsilon0=epsilon0,
        smoothing=smoothing,
        rng=np.random.default_rng(seed),
        dual_kwargs=dict(dual_kwargs or {}),
    )


def estimated_instance(state: LearnerState) -> CrbInstance:
    """Current belief as a solvable instance: known rewards, estimated kernels."""
    sk = state.skeleton
    arms = tuple(
        ArmModel(transition=m.estimate(state.smoothing), reward=r)
        for m, r in zip(state.models, sk.rewards)
    )
    return CrbInstance(
        chain=sk.chain, arms=arms, discount=sk.discount, initial=sk.initial
    )


def plan_epoch(state: LearnerState) -> LearnerState:
    """Re-solve the dual on the frozen estimates; store this epoch's tables.

    A non-converged dual on noisy early estimates is recorded, and its last
    iterate is used anyway; stalling the online loop would cost more than
    acting on a slightly unconverged price vector.
    """
    believed = estimated_instance(state)
    report = solve_dual(believed, **state.dual_kwargs)
    state.lambda_n = report.lambda_star.values.copy()
    state.q_tables = [q for (_, q, _) in report.per_arm]
    state.dual_converged = report.converged
    if not report.converged:
        state.dual_failures.append(state.epoch)
    state._gap = np.stack(
        [q.values[..., 1] - q.values[..., 0] for q in state.q_tables]
    )
    return state


def act(state: LearnerState, g: int, states: np.ndarray) -> tuple[np.ndarray, bool]:
    """Epsilon-greedy decision; returns (actions, explored?).

    With probability epsilon_n a uniformly random subset of exactly
    min(C_g, N) arms is activated; otherwise the stored index tables decide.
    """
    if state._gap is None:
        raise RuntimeError("act() before plan_epoch(): no Q tables for this epoch")
    n = state.skeleton.num_arms
    budget = int(state.skeleton.chain.budgets[g])
    if state.rng.random() < state.epsilon:
        actions = np.zeros(n, dtype=np.int8)
        k = min(budget, n)
        if k > 0:
            actions[state.rng.choice(n, size=k, replace=False)] = 1
        return actions, True
    idx = state._gap[np.arange(n), g, states]
    return select_arms(idx, budget), False


def observe(
    state: LearnerState,
    g: int,
    states: np.ndarray,
    actions: np.ndarray,
    next_states: np.ndarray,
) -> LearnerState:
    """Record (g, s, a) -> s' for every arm, activated or not."""
    for i, m in enumerate(state.models):
        s, a, s2 = int(states[i]), int(actions[i]), int(next_states[i])
        m.visit_counts[g, s, a] += 1
        m.transition_counts[g, s, a, s2] += 1
    return state


def end_epoch(state: LearnerState) -> LearnerState:
    """Advance the epoch counter; estimates are views of counts, so the next
    plan_epoch sees everything recorded so far."""
    state.epoch += 1
    return state


def default_learner_dual_kwargs() -> dict:
    """Dual settings tuned for repeated solves on noisy estimates."""
    return {
        "schedule": StepSchedule(kind="geometric", delta0=0.5, decay=0.93),
        "epsilon": 1e-3,
        "max_iters": 150,
        "arm_tol": 1e-6,
        # Polish tightens slack for reporting the relaxed value; the learner
        # only consumes Q-tables for acting, and skipping it cuts the per-epoch
        # planning cost roughly in half on estimates that are still noisy.
        "polish": False,
    }
