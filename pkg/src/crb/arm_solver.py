"""Single-arm solver for the price-penalized subproblem.

Given per-context activation prices lambda, each arm faces an isolated MDP on
(context, state) pairs whose activation reward is discounted by lambda_g. We
solve it by value iteration: for discounted finite MDPs this reaches the same
optimum as an LP formulation, needs no external solver, and vectorizes across
arms. The stopping rule ``||dV||_inf <= tol * (1 - beta) / (2 * beta)``
guarantees a true Bellman residual below ``tol``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .model import ArmModel, ContextChain, MultiplierVector

DEFAULT_TOL = 1e-8
MAX_SWEEPS = 1_000_000


class ArmSolveError(RuntimeError):
    pass


@dataclass(frozen=True)
class ValueTable:
    """Optimal values V(g, s) of the penalized arm MDP at a fixed price vector."""

    values: np.ndarray
    lambda_snapshot: MultiplierVector


@dataclass(frozen=True)
class QTable:
    """Action values Q(g, s, a); satisfies V = max_a Q for the paired ValueTable."""

    values: np.ndarray


@dataclass(frozen=True)
class ArmPolicy:
    """Deterministic activation rule a(g, s) in {0, 1}."""

    action: np.ndarray


def _stack_models(arms) -> tuple[np.ndarray, np.ndarray]:
    P = np.stack([arm.transition for arm in arms])  # (n, G, S, 2, S)
    R = np.stack([arm.reward for arm in arms])  # (n, G, S, 2)
    return P, R


def _sweep(P, R_eff, G_mat, beta, V):
    """One synchronous Bellman sweep for a batch of arms.

    V has shape (n, G, S). Context mixing happens once per sweep via
    W[n, g, s'] = sum_g' G(g'|g) V[n, g', s'].
    """
    W = np.einsum("gh,nhs->ngs", G_mat, V)
    EV = np.einsum("ngsap,ngp->ngsa", P, W)
    Q = R_eff + beta * EV
    return Q.max(axis=-1), Q


def solve_arm_values_batch(
    arms,
    chain: ContextChain,
    lam: MultiplierVector,
    beta: float,
    tol: float = DEFAULT_TOL,
    v_init: np.ndarray | None = None,
) -> np.ndarray:
    """Value-iterate all arms at once; returns V of shape (n_arms, G, S)."""
    P, R = _stack_models(arms)
    G_mat = chain.transition
    # Activation price enters only the a=1 slice.
    R_eff = R.copy()
    R_eff[..., 1] -= lam.values[None, :, None]

    if v_init is None:
        V = np.zeros(R.shape[:3])
    else:
        V = np.array(v_init, dtype=float, copy=True)
    stop = tol * (1.0 - beta) / (2.0 * beta) if beta > 0 else tol
    for _ in range(MAX_SWEEPS):
        V_next, _ = _sweep(P, R_eff, G_mat, beta, V)
        delta = np.max(np.abs(V_next - V))
        V = V_next
        if delta <= stop:
            return V
    raise ArmSolveError(
        f"value iteration exceeded {MAX_SWEEPS} sweeps (last delta {delta:.3e})"
    )


def solve_arm_values(
    arm: ArmModel,
    chain: ContextChain,
    lam: MultiplierVector,
    beta: float,
    tol: float = DEFAULT_TOL,
    v_init: np.ndarray | None = None,
) -> ValueTable:
    """Solve one arm's penalized Bellman equation to sup-norm residual <= tol."""
    v0 = None if v_init is None else v_init[None]
    V = solve_arm_values_batch([arm], chain, lam, beta, tol=tol, v_init=v0)
    return ValueTable(values=V[0], lambda_snapshot=lam)


def q_from_values(
    arm: ArmModel,
    chain: ContextChain,
    lam: MultiplierVector,
    beta: float,
    table: ValueTable,
) -> QTable:
    """One-step lookahead Q(g,s,a) = R - lambda_g*a + beta * E[V(g', s')]."""
    V = table.values
    G, S = V.shape
    if arm.transition.shape != (G, S, 2, S):
        raise ValueError(
            f"arm/table dimension mismatch: transition {arm.transition.shape} vs V {V.shape}"
        )
    W = chain.transition @ V  # (G, S'): E over g' of V(g', s')
    EV = np.einsum("gsap,gp->gsa", arm.transition, W)
    Q = arm.reward + beta * EV
    Q[..., 1] -= lam.values[:, None]
    return QTable(values=Q)


def greedy_policy(q: QTable) -> ArmPolicy:
    """Activate iff activation strictly beats passivity; ties stay passive."""
    act = (q.values[..., 1] > q.values[..., 0]).astype(np.int8)
    return ArmPolicy(action=act)


def bellman_residual(
    arm: ArmModel,
    chain: ContextChain,
    lam: MultiplierVector,
    beta: float,
    table: ValueTable,
) -> float:
    """Sup-norm distance between V and one application of the Bellman operator."""
    q = q_from_values(arm, chain, lam, beta, table)
    tv = q.values.max(axis=-1)
    return float(np.max(np.abs(table.values - tv)))


def value_table_to_csv(path, table: ValueTable, q: QTable | None = None) -> None:
    """Debug dump with columns g, s, a, value; a = -1 marks state values."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["g", "s", "a", "value"])
        G, S = table.values.shape
        for g in range(G):
            for s in range(S):
                w.writerow([g, s, -1, repr(float(table.values[g, s]))])
                if q is not None:
                    for a in range(2):
                        w.writerow([g, s, a, repr(float(q.values[g, s, a]))])
