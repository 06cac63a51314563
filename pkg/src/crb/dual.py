"""Projected-subgradient solver for the per-context activation prices.

The budget constraint is relaxed to hold in discounted expectation per
context, priced by multipliers lambda_g. Each iteration solves every arm's
penalized MDP, evaluates the constraint slack in closed form through
discounted occupancy tables (one dense linear solve each), and takes a
projected subgradient step. The dual objective at any feasible lambda upper
bounds the primal value, so the final report doubles as the relaxed-optimum
certificate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import csv
import json

import numpy as np

from .arm_solver import (
    ArmPolicy,
    QTable,
    ValueTable,
    greedy_policy,
    q_from_values,
    solve_arm_values_batch,
)
from .model import ContextChain, CrbInstance, InitialCondition, MultiplierVector


@dataclass(frozen=True)
class OccupancyTables:
    """Discounted visit/activation expectations as functions of the start point.

    B[g, g0] is the expected discounted time spent in context g from start
    context g0. A[i, g, g0, s0] is arm i's expected discounted activation
    count while in context g, from start (g0, s0), under its current policy.
    """

    B: np.ndarray
    A: np.ndarray


@dataclass(frozen=True)
class StepSchedule:
    """Subgradient step sizes.

    'harmonic' gives delta0 / (1 + k / kappa); 'geometric' gives
    delta0 * decay**k. Harmonic steps are the textbook non-summable choice
    but damp too slowly to push ||lambda_k - lambda_{k-1}|| below a tight
    stopping epsilon within a small iteration budget, so configs that need
    fast termination use the geometric schedule.
    """

    kind: str = "harmonic"
    delta0: float = 1.0
    kappa: float = 10.0
    decay: float = 0.95

    def delta(self, k: int) -> float:
        if self.kind == "harmonic":
            return self.delta0 / (1.0 + k / self.kappa)
        if self.kind == "geometric":
            return self.delta0 * self.decay**k
        raise ValueError(f"unknown schedule kind: {self.kind!r}")


@dataclass
class DualIterate:
    lam: np.ndarray
    slack: np.ndarray
    step: float


@dataclass
class DualSolveReport:
    """Everything produced by the multiplier iteration, history included."""

    lambda_star: MultiplierVector
    per_arm: list
    history: list
    iterations: int
    converged: bool
    b_table: np.ndarray = field(repr=False, default=None)
    final_slack: np.ndarray = None
    polish_rounds: int = 0
    polish_failed: tuple = ()

    def write_csv(self, path) -> None:
        """Iteration log: iteration, lambda_g..., slack_g..., delta."""
        G = len(self.lambda_star.values)
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            header = (
                ["iteration"]
                + [f"lambda_{g}" for g in range(G)]
                + [f"slack_{g}" for g in range(G)]
                + ["delta"]
            )
            w.writerow(header)
            for k, it in enumerate(self.history):
                row = (
                    [k]
                    + [repr(float(x)) for x in it.lam]
                    + [repr(float(x)) for x in it.slack]
                    + [repr(float(it.step))]
                )
                w.writerow(row)

    def summary(self) -> dict:
        return {
            "lambda_star": [float(x) for x in self.lambda_star.values],
            "iterations": self.iterations,
            "converged": self.converged,
        }

    def write_summary_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.summary(), f, indent=2, sort_keys=True)
            f.write("\n")


def occupancy_B(chain: ContextChain, beta: float) -> np.ndarray:
    """Expected discounted context-visit counts B[g, g0], by direct solve.

    Solves B_g(g0) = I(g0 = g) + beta * sum_g' G(g'|g0) B_g(g') for all g at
    once; the system matrix I - beta*G is strictly diagonally dominant for
    beta < 1, so the dense solve is safe.
    """
    G = chain.num_contexts
    M = np.eye(G) - beta * chain.transition
    # Columns are the e_g right-hand sides; transpose puts target g first.
    return np.linalg.solve(M, np.eye(G)).T


def occupancy_A(
    arm, chain: ContextChain, policy: ArmPolicy, beta: float
) -> np.ndarray:
    """Discounted activation counts A[g, g0, s0] for one arm under `policy`.

    Same recursion as occupancy_B but over the (context, state) product chain
    induced by the policy, with the activation indicator as source term.
    """
    G = chain.num_contexts
    S = arm.num_states
    act = policy.action
    if act.shape != (G, S):
        raise ValueError(f"policy shape {act.shape} does not match ({G}, {S})")
    # Policy-induced joint kernel K[(g0,s0),(g',s')] = G(g'|g0) P(s'|g0,s0,a*).
    P_pol = np.take_along_axis(
        arm.transition, act[:, :, None, None].astype(int), axis=2
    ).squeeze(2)  # (G, S, S')
    K = np.einsum("gh,gsp->gshp", chain.transition, P_pol).reshape(G * S, G * S)
    M = np.eye(G * S) - beta * K
    # Source for target context g is the activation indicator on rows with g0=g.
    src = np.zeros((G * S, G))
    for g in range(G):
        src[g * S : (g + 1) * S, g] = act[g]
    sol = np.linalg.solve(M, src)  # (G0*S0, G_target)
    return sol.T.reshape(G, G, S)


def constraint_slack(
    instance: CrbInstance, occ: OccupancyTables, initial: InitialCondition | None = None
) -> np.ndarray:
    """Per-context relaxed-budget slack, in expectation over the start point.

    slack_g = sum_i E[A_i,g(g0, s0)] - C_g * E[B_g(g0)]. Positive slack means
    the current policies over-activate in context g.
    """
    if initial is None:
        initial = instance.initial
    w = initial.context[:, None] * initial.states  # (G0, S0)
    exp_A = np.einsum("igps,ps->ig", occ.A, w)  # (N, G_target)
    exp_B = occ.B @ initial.context
    return exp_A.sum(axis=0) - instance.chain.budgets * exp_B


def update_multipliers(
    lam: MultiplierVector, slack: np.ndarray, delta_k: float
) -> MultiplierVector:
    """One projected step: lambda_g <- max(0, lambda_g + delta_k * slack_g)."""
    return MultiplierVector(np.maximum(0.0, lam.values + delta_k * slack))


def _unique_arms(instance: CrbInstance):
    """Deduplicate shared ArmModel objects so identical arms solve once."""
    uniq, index_of = [], {}
    owner = np.empty(instance.num_arms, dtype=int)
    for i, arm in enumerate(instance.arms):
        key = id(arm)
        if key not in index_of:
            index_of[key] = len(uniq)
            uniq.append(arm)
        owner[i] = index_of[key]
    return uniq, owner


def _solve_arms_at(instance, lam, arm_tol, v_warm):
    """Solve unique arms at lambda; returns (V, Q list, policy list, owner map)."""
    uniq, owner = _unique_arms(instance)
    V = solve_arm_values_batch(
        uniq, instance.chain, lam, instance.discount, tol=arm_tol, v_init=v_warm
    )
    tables = [ValueTable(values=V[j], lambda_snapshot=lam) for j in range(len(uniq))]
    qs = [
        q_from_values(arm, instance.chain, lam, instance.discount, tables[j])
        for j, arm in enumerate(uniq)
    ]
    pols = [greedy_policy(q) for q in qs]
    return V, uniq, owner, tables, qs, pols


def _slack_at(instance, lam, arm_tol, v_warm, B, a_cache=None):
    """Slack vector at lambda under the greedy policies solved there.

    a_cache maps (arm identity, policy bytes) to that arm's occupancy slice;
    policies change rarely between nearby lambdas, so cached slices turn most
    evaluations into pure gathers.
    """
    V, uniq, owner, tables, qs, pols = _solve_arms_at(instance, lam, arm_tol, v_warm)
    slices = []
    for j, arm in enumerate(uniq):
        if a_cache is None:
            slices.append(occupancy_A(arm, instance.chain, pols[j], instance.discount))
            continue
        key = (id(arm), pols[j].action.tobytes())
        hit = a_cache.get(key)
        if hit is None:
            hit = occupancy_A(arm, instance.chain, pols[j], instance.discount)
            a_cache[key] = hit
        slices.append(hit)
    occ = OccupancyTables(B=B, A=np.stack(slices)[owner])
    return constraint_slack(instance, occ), V


# Slack entries above this are treated as genuine over-activation during the
# complementary-slackness polish; anything below counts as feasible.
SLACK_TOL = 1e-9

_POLISH_ROUNDS = 60
_BISECT_TOL = 1e-9


def _polish_multipliers(instance, lam, arm_tol, v_warm, B, r_max, a_cache):
    """Raise offending multipliers to the feasible side of their breakpoints.

    The greedy policy (ties stay passive) is piecewise constant in lambda,
    so each slack component is a step function of its own coordinate and the
    exact crossing is reachable by bisection. Subgradient iterates with
    decaying steps can freeze on the over-activating side of a breakpoint;
    this pass restores slack_g <= SLACK_TOL for every context.

    Coordinates couple through the value tables, and on heterogeneous
    instances fixing one context can re-offend another indefinitely (a
    discrete limit cycle; an exactly slack-free deterministic-policy lambda
    need not exist). Every re-offense therefore adds a geometrically growing
    overshoot margin past the breakpoint. Weak duality keeps any lambda >= 0
    a valid upper bound, so margins trade a sliver of bound tightness for
    guaranteed termination.
    """
    lam_cap = 2.0 * r_max / (1.0 - instance.discount) + 1.0
    G = len(lam.values)
    margins = np.zeros(G)
    offenses = np.zeros(G, dtype=int)
    rounds = 0
    slack, v_warm = _slack_at(instance, lam, arm_tol, v_warm, B, a_cache)
    for _ in range(_POLISH_ROUNDS):
        offenders = [g for g in range(G) if slack[g] > SLACK_TOL]
        if not offenders:
            break
        rounds += 1
        for g in offenders:
            if offenses[g] > 0:
                margins[g] = max(2.0 * margins[g], 1e-7 * (1.0 + lam.values[g]))
            offenses[g] += 1
            lo = lam.values[g]
            width = max(1e-3, 1e-3 * lo)
            hi = None
            while lo + width <= lam_cap:
                probe = lam.values.copy()
                probe[g] = lo + width
                s, v_warm = _slack_at(
                    instance, MultiplierVector(probe), arm_tol, v_warm, B, a_cache
                )
                if s[g] <= SLACK_TOL:
                    hi = lo + width
                    break
                width *= 2.0
            if hi is None:
                continue
            while hi - lo > _BISECT_TOL:
                mid = 0.5 * (lo + hi)
                probe = lam.values.copy()
                probe[g] = mid
                s, v_warm = _slack_at(
                    instance, MultiplierVector(probe), arm_tol, v_warm, B, a_cache
                )
                if s[g] <= SLACK_TOL:
                    hi = mid
                else:
                    lo = mid
            final = lam.values.copy()
            final[g] = min(hi + margins[g], lam_cap)
            lam = MultiplierVector(final)
        slack, v_warm = _slack_at(instance, lam, arm_tol, v_warm, B, a_cache)
    failed = tuple(g for g in range(G) if slack[g] > SLACK_TOL)
    return lam, slack, v_warm, rounds, failed


def solve_dual(
    instance: CrbInstance,
    schedule: StepSchedule | None = None,
    epsilon: float = 1e-4,
    max_iters: int = 500,
    arm_tol: float = 1e-8,
    polish: bool = True,
) -> DualSolveReport:
    """Iterate multiplier updates from lambda = 0 until the step norm drops.

    Per iteration: solve all arm subproblems at the current lambda (value
    tables are warm-started from the previous iterate, which changes speed
    but not the fixed point), evaluate occupancies under the greedy arm
    policies, form the slack subgradient, and take a projected step.
    Convergence means ||lambda_k - lambda_{k-1}||_inf <= epsilon; hitting
    max_iters returns converged=False with the full history for diagnosis.

    With polish=True (default) a bisection pass then nudges any multiplier
    whose context still over-activates up to its nearest policy breakpoint,
    so the reported lambda* satisfies slack_g <= SLACK_TOL everywhere; the
    history records only the subgradient phase.
    """
    if schedule is None:
        schedule = StepSchedule()
    G = instance.num_contexts
    beta = instance.discount
    lam = MultiplierVector.zeros(G)
    B = occupancy_B(instance.chain, beta)

    history: list = []
    v_warm = None
    converged = False
    iterations = 0
    a_cache: dict = {}
    for k in range(max_iters):
        slack, v_warm = _slack_at(instance, lam, arm_tol, v_warm, B, a_cache)
        delta_k = schedule.delta(k)
        lam_next = update_multipliers(lam, slack, delta_k)
        history.append(DualIterate(lam=lam.values.copy(), slack=slack, step=delta_k))
        diff = float(np.max(np.abs(lam_next.values - lam.values)))
        lam = lam_next
        iterations = k + 1
        if diff <= epsilon:
            converged = True
            break

    polish_rounds = 0
    polish_failed: tuple = ()
    final_slack, v_warm = _slack_at(instance, lam, arm_tol, v_warm, B, a_cache)
    if polish:
        r_max = max(float(np.max(np.abs(arm.reward))) for arm in instance.arms)
        lam, final_slack, v_warm, polish_rounds, polish_failed = _polish_multipliers(
            instance, lam, arm_tol, v_warm, B, r_max, a_cache
        )

    # Final tables correspond to lambda*, not the iterate that produced it.
    _, uniq, owner, tables, qs, pols = _solve_arms_at(instance, lam, arm_tol, v_warm)
    per_arm = [(tables[j], qs[j], pols[j]) for j in owner]
    return DualSolveReport(
        lambda_star=lam,
        per_arm=per_arm,
        history=history,
        iterations=iterations,
        converged=converged,
        b_table=B,
        final_slack=final_slack,
        polish_rounds=polish_rounds,
        polish_failed=polish_failed,
    )


def relaxed_value(
    instance: CrbInstance,
    lam: MultiplierVector,
    value_tables,
    b_table: np.ndarray,
    initial: InitialCondition | None = None,
) -> float:
    """Dual objective at lambda: upper bound on the budget-constrained optimum.

    sum_i E[V_i(g0, s0)] + sum_g lambda_g C_g E[B_g(g0)], expectations under
    the declared initial distribution. Equals the relaxed optimum when lambda
    is the dual minimizer (strong duality holds for finite state/action).
    """
    if initial is None:
        initial = instance.initial
    w = initial.context[:, None] * initial.states
    total = sum(float(np.sum(table.values * w)) for table in value_tables)
    exp_B = b_table @ initial.context
    total += float(np.dot(lam.values * instance.chain.budgets, exp_B))
    return total
