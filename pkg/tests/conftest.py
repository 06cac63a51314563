from __future__ import annotations

import numpy as np
import pytest

from crb.model import ArmModel, ContextChain, CrbInstance, InitialCondition
from crb.demand_response import DrConfig, build_dr_instance


def random_stochastic(rng, shape):
    # last axis sums to one
    m = rng.uniform(0.05, 1.0, size=shape)
    return m / m.sum(axis=-1, keepdims=True)


def random_arm(rng, num_contexts, num_states, reward_low=0.0, reward_high=1.0):
    transition = random_stochastic(rng, (num_contexts, num_states, 2, num_states))
    reward = rng.uniform(reward_low, reward_high, size=(num_contexts, num_states, 2))
    return ArmModel(transition=transition, reward=reward)


def random_instance(
    seed: int,
    num_arms: int = 2,
    num_contexts: int = 2,
    num_states: int = 2,
    discount: float = 0.9,
    budget: int | None = None,
    reward_low: float = 0.0,
    reward_high: float = 1.0,
) -> CrbInstance:
    rng = np.random.default_rng(seed)
    chain = ContextChain(
        transition=random_stochastic(rng, (num_contexts, num_contexts)),
        budgets=np.full(
            num_contexts, budget if budget is not None else max(1, num_arms // 2)
        ),
    )
    arms = tuple(
        random_arm(rng, num_contexts, num_states, reward_low, reward_high)
        for _ in range(num_arms)
    )
    return CrbInstance(
        chain=chain,
        arms=arms,
        discount=discount,
        initial=InitialCondition.uniform(num_contexts, num_states),
    )


@pytest.fixture(scope="session")
def desk_config() -> DrConfig:
    return DrConfig(num_users=50, seed=7)


@pytest.fixture(scope="session")
def desk_instance(desk_config):
    return build_dr_instance(desk_config)


@pytest.fixture(scope="session")
def homogeneous_desk_config() -> DrConfig:
    return DrConfig(num_users=50, load_low=10.0, load_high=10.0, seed=7)


@pytest.fixture(scope="session")
def homogeneous_desk_instance(homogeneous_desk_config):
    return build_dr_instance(homogeneous_desk_config)
