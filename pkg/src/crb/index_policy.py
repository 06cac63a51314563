"""Index heuristics built from the dual solution, plus the context-blind baseline.

The index of an arm is its penalized activation advantage Q(g, s, 1) -
Q(g, s, 0) at the converged multipliers. Selection activates the top C_g
arms by index. The baseline solves the same problem with the context
marginalized out under its stationary law, which is what a restless-bandit
solver that never observes g would do.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arm_solver import greedy_policy, q_from_values, solve_arm_values
from .dual import DualSolveReport, solve_dual
from .model import (
    ArmModel,
    ContextChain,
    CrbInstance,
    InitialCondition,
    MultiplierVector,
    stationary_context_distribution,
)


def compute_indices(q_tables, context: int, states: np.ndarray) -> np.ndarray:
    """Activation advantage per arm at the current joint observation."""
    return np.array(
        [
            float(q.values[context, s, 1] - q.values[context, s, 0])
            for q, s in zip(q_tables, states)
        ]
    )


def select_arms(
    indices: np.ndarray,
    budget: int,
    mode: str = "literal",
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Pick which arms to activate given their indices and the current budget.

    'literal' activates exactly min(budget, N) arms, the top ones by index,
    regardless of sign. 'thresholded' additionally drops arms whose index is
    not strictly positive, so fewer than budget arms may run. Ties break by
    ascending arm id unless an rng is given, in which case tied groups are
    permuted uniformly.
    """
    n = len(indices)
    k = min(int(budget), n)
    actions = np.zeros(n, dtype=np.int8)
    if k <= 0:
        return actions
    if rng is None:
        order = np.argsort(-indices, kind="stable")
    else:
        # Random tiebreak: jitter by a uniform key with stable sort on index.
        jitter = rng.permutation(n)
        order = np.lexsort((jitter, -indices))
    chosen = order[:k]
    if mode == "thresholded":
        chosen = chosen[indices[chosen] > 0.0]
    elif mode != "literal":
        raise ValueError(f"unknown selection mode: {mode!r}")
    actions[chosen] = 1
    return actions


@dataclass
class IndexPolicy:
    """Callable (context, states) -> actions using the converged dual tables."""

    q_tables: list
    budgets: np.ndarray
    mode: str = "literal"
    rng: np.random.Generator | None = None

    def __post_init__(self):
        # Gap tables gathered per step beat per-arm Q lookups in rollouts.
        self._gap = np.stack(
            [q.values[..., 1] - q.values[..., 0] for q in self.q_tables]
        )
        self._arm_ids = np.arange(len(self.q_tables))

    def __call__(self, context: int, states: np.ndarray) -> np.ndarray:
        idx = self._gap[self._arm_ids, context, states]
        return select_arms(idx, self.budgets[context], mode=self.mode, rng=self.rng)


def index_policy_from_report(
    instance: CrbInstance, report: DualSolveReport, mode: str = "literal"
) -> IndexPolicy:
    qs = [q for (_, q, _) in report.per_arm]
    return IndexPolicy(q_tables=qs, budgets=instance.chain.budgets, mode=mode)


def build_index_policy(
    instance: CrbInstance, mode: str = "literal", **dual_kwargs
) -> tuple[IndexPolicy, DualSolveReport]:
    """Convenience: run the dual solve and wrap its tables as a policy."""
    report = solve_dual(instance, **dual_kwargs)
    return index_policy_from_report(instance, report, mode=mode), report


def restless_baseline_model(arm: ArmModel, chain: ContextChain) -> ArmModel:
    """Marginalize the context out of one arm's dynamics and rewards.

    P_bar(s'|s,a) = sum_g h(g) P(s'|g,s,a) and likewise for rewards, with h
    the stationary context law. The result is a single-context arm whose
    index policy ignores g entirely.
    """
    h = stationary_context_distribution(chain)
    P_bar = np.einsum("g,gsap->sap", h, arm.transition)[None]
    R_bar = np.einsum("g,gsa->sa", h, arm.reward)[None]
    return ArmModel(transition=P_bar, reward=R_bar)


@dataclass
class BaselinePolicy:
    """Context-blind index policy; one shared budget, one set of tables.

    Ranking ignores the observed context entirely. The activation count is
    the averaged budget, capped at the realized C_{g_t} when true_budgets is
    given so the policy stays primal-feasible on instances whose budgets
    vary across contexts.
    """

    q_tables: list
    budget: int
    mode: str = "literal"
    rng: np.random.Generator | None = None
    true_budgets: np.ndarray | None = None

    def __post_init__(self):
        self._gap = np.stack(
            [q.values[0, :, 1] - q.values[0, :, 0] for q in self.q_tables]
        )
        self._arm_ids = np.arange(len(self.q_tables))

    def __call__(self, context: int, states: np.ndarray) -> np.ndarray:
        idx = self._gap[self._arm_ids, states]
        budget = self.budget
        if self.true_budgets is not None:
            budget = min(budget, int(self.true_budgets[context]))
        return select_arms(idx, budget, mode=self.mode, rng=self.rng)


def baseline_policy(
    instance: CrbInstance,
    mode: str = "literal",
    epsilon: float = 1e-4,
    max_iters: int = 500,
    schedule=None,
    arm_tol: float = 1e-8,
) -> BaselinePolicy:
    """Context-blind comparator: same dual machinery on the averaged model.

    The marginalized arms live on a trivial one-state context chain whose
    budget is the stationary average of the true budgets, rounded to the
    nearest integer. This is the strongest policy available to a solver that
    cannot see g; any gap against the context-aware index policy is
    attributable to the context information itself.
    """
    h = stationary_context_distribution(instance.chain)
    budget = int(round(float(np.dot(h, instance.chain.budgets))))
    trivial = ContextChain(
        transition=np.ones((1, 1)), budgets=np.array([budget], dtype=float)
    )

    cache: dict[int, ArmModel] = {}
    flat_arms = []
    for arm in instance.arms:
        key = id(arm)
        if key not in cache:
            cache[key] = restless_baseline_model(arm, instance.chain)
        flat_arms.append(cache[key])

    flat_initial = InitialCondition(
        context=np.ones(1),
        states=(instance.initial.context @ instance.initial.states)[None],
    )
    flat = CrbInstance(
        chain=trivial,
        arms=tuple(flat_arms),
        discount=instance.discount,
        initial=flat_initial,
        homogeneous=instance.homogeneous,
    )
    report = solve_dual(
        flat, schedule=schedule, epsilon=epsilon, max_iters=max_iters, arm_tol=arm_tol
    )
    qs = [q for (_, q, _) in report.per_arm]
    return BaselinePolicy(
        q_tables=qs, budget=budget, mode=mode, true_budgets=instance.chain.budgets
    )
