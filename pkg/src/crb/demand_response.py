"""Demand-response instance builder.

Each arm is a flexible-load user with state (z, x): z is a binary
responsiveness flag, x a fatigue level in {1..fatigue_levels}. Activating a
responsive user reduces load by l_i kWh scaled by how well the context suits
them, 1 / ((g - x)^2 + 1). Fatigue rises with participation and recovers
during rest; responsiveness falls with fatigue. The dynamics kernel is a
construction (the reward and constants are given, the kernel is not), so
every parameter sits in DrConfig.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ArmModel, ContextChain, CrbInstance, InitialCondition


@dataclass(frozen=True)
class DrConfig:
    num_users: int = 50
    num_contexts: int = 6
    fatigue_levels: int = 4
    selection_ratio: float = 0.2
    discount: float = 0.97
    load_low: float = 8.0
    load_high: float = 12.0
    p_up: float = 0.7
    p_down: float = 0.4
    # Responsiveness curve sigma(g, x') = clamp(s0 - s1*(x'-1) + s2*(g - gbar)).
    sigma_base: float = 0.9
    sigma_fatigue: float = 0.2
    sigma_context: float = 0.02
    sigma_floor: float = 0.05
    sigma_cap: float = 0.95
    seed: int = 0

    def validate(self) -> list:
        problems = []
        if self.num_users < 1:
            problems.append("num_users must be >= 1")
        if self.num_contexts < 1:
            problems.append("num_contexts must be >= 1")
        if self.fatigue_levels < 1:
            problems.append("fatigue_levels must be >= 1")
        if not 0.0 < self.selection_ratio <= 1.0:
            problems.append(f"selection_ratio {self.selection_ratio} outside (0, 1]")
        if not 0.0 < self.discount < 1.0:
            problems.append(f"discount {self.discount} outside (0, 1)")
        if self.load_low > self.load_high:
            problems.append("load_low exceeds load_high")
        for name in ("p_up", "p_down", "sigma_floor", "sigma_cap"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                problems.append(f"{name} {v} outside [0, 1]")
        return problems


def encode_state(z: int, x: int) -> int:
    """(z, x) -> StateId with x 1-based; inverse of decode_state."""
    return (x - 1) * 2 + z


def decode_state(sid: int) -> tuple[int, int]:
    return sid % 2, sid // 2 + 1


def dr_reward(g: int, z: int, x: int, a: int, load: float) -> float:
    """Load reduction in kWh: a * z * l / ((g - x)^2 + 1). Contexts and
    fatigue levels are 1-based labels, as in the model description."""
    return a * z * load / ((g - x) ** 2 + 1.0)


def _sigma(cfg: DrConfig, g: int, x_next: int) -> float:
    gbar = (1 + cfg.num_contexts) / 2.0
    raw = (
        cfg.sigma_base
        - cfg.sigma_fatigue * (x_next - 1)
        + cfg.sigma_context * (g - gbar)
    )
    return float(np.clip(raw, cfg.sigma_floor, cfg.sigma_cap))


def dr_transition_row(cfg: DrConfig, g: int, z: int, x: int, a: int) -> np.ndarray:
    """Distribution over next StateId from (g, (z, x), a).

    Fatigue moves first: participation (a=1 and z=1) pushes x up w.p. p_up,
    rest (a=0) pulls it down w.p. p_down; a called-but-unresponsive user
    (a=1, z=0) neither fatigues nor recovers. The next responsiveness flag is
    then drawn with probability sigma(g, x'), so deeper fatigue makes the
    user less likely to be available next step.
    """
    x_max = cfg.fatigue_levels
    moves: list[tuple[int, float]] = []
    if a == 1 and z == 1:
        up = min(x + 1, x_max)
        moves.append((up, cfg.p_up))
        if up != x:
            moves.append((x, 1.0 - cfg.p_up))
        else:
            moves[-1] = (x, 1.0)
    elif a == 0:
        down = max(x - 1, 1)
        moves.append((down, cfg.p_down))
        if down != x:
            moves.append((x, 1.0 - cfg.p_down))
        else:
            moves[-1] = (x, 1.0)
    else:
        moves.append((x, 1.0))

    row = np.zeros(2 * x_max)
    for x_next, p in moves:
        if p == 0.0:
            continue
        sig = _sigma(cfg, g, x_next)
        row[encode_state(1, x_next)] += p * sig
        row[encode_state(0, x_next)] += p * (1.0 - sig)
    return row


def dr_transition_tensor(cfg: DrConfig) -> np.ndarray:
    """Full (G, S, 2, S) kernel shared by every user."""
    G, x_max = cfg.num_contexts, cfg.fatigue_levels
    S = 2 * x_max
    P = np.zeros((G, S, 2, S))
    for g in range(1, G + 1):
        for sid in range(S):
            z, x = decode_state(sid)
            for a in (0, 1):
                P[g - 1, sid, a] = dr_transition_row(cfg, g, z, x, a)
    return P


def dr_reward_tensor(cfg: DrConfig, load: float) -> np.ndarray:
    G, x_max = cfg.num_contexts, cfg.fatigue_levels
    S = 2 * x_max
    R = np.zeros((G, S, 2))
    for g in range(1, G + 1):
        for sid in range(S):
            z, x = decode_state(sid)
            R[g - 1, sid, 1] = dr_reward(g, z, x, 1, load)
    return R


def build_dr_instance(cfg: DrConfig) -> CrbInstance:
    """Assemble the CRB instance: uniform context chain, floor(alpha*N)
    budgets, per-user loads drawn once from Unif[load_low, load_high].

    All arms share one transition tensor. When load_low == load_high the
    arms are byte-identical, so a single ArmModel object is shared across
    users and the instance is flagged homogeneous; solvers deduplicate by
    object identity and do the per-arm work once.
    """
    problems = cfg.validate()
    if problems:
        raise ValueError("invalid DrConfig: " + "; ".join(problems))

    G, N = cfg.num_contexts, cfg.num_users
    chain = ContextChain(
        transition=np.full((G, G), 1.0 / G),
        budgets=np.floor(cfg.selection_ratio * N) * np.ones(G),
    )

    rng = np.random.default_rng(cfg.seed)
    loads = rng.uniform(cfg.load_low, cfg.load_high, size=N)

    P_shared = dr_transition_tensor(cfg)
    homogeneous = cfg.load_low == cfg.load_high
    if homogeneous:
        one = ArmModel(transition=P_shared, reward=dr_reward_tensor(cfg, cfg.load_low))
        arms = (one,) * N
    else:
        arms = tuple(
            ArmModel(transition=P_shared, reward=dr_reward_tensor(cfg, l))
            for l in loads
        )

    S = 2 * cfg.fatigue_levels
    initial = InitialCondition.uniform(G, S)
    return CrbInstance(
        chain=chain,
        arms=arms,
        discount=cfg.discount,
        initial=initial,
        homogeneous=homogeneous,
    )
