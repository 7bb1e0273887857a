"""Scripted example agents driving a remote environment."""

from __future__ import annotations

import random
from dataclasses import dataclass

import numpy as np

from .env import OrderingObservation, RemoteEnv


@dataclass
class EpisodeSummary:
    total_reward: float
    total_reward_half: int
    steps: int
    metrics: dict


def run_random_agent(env: RemoteEnv, seed: int = 0) -> EpisodeSummary:
    """One full episode picking uniformly random legal actions."""
    rng = random.Random(seed)
    observation = env.reset()
    steps = 0
    done = observation.done
    while not done:
        if env.kind == "ordering":
            action = rng.choice(observation.action_set)
        else:
            action = {"d": rng.randrange(6), "s": 1}
        observation, _, done = env.step(action)
        steps += 1
    return EpisodeSummary(env.total_reward, env.total_reward_half, steps, env.metrics())


def _lattice_hpwl(observation: OrderingObservation, net_id: int) -> int:
    """Half-perimeter of a net's access points, from its indicator channel."""
    coords = np.argwhere(observation.nets[net_id][0] > 0)
    xs = coords[:, 0] * observation.pitch[0]
    ys = coords[:, 1] * observation.pitch[1]
    return int(xs.max() - xs.min() + ys.max() - ys.min())


def run_greedy_agent(env: RemoteEnv) -> EpisodeSummary:
    """Ordering baseline: always route the smallest-HPWL remaining net."""
    if env.kind != "ordering":
        raise ValueError("the greedy agent drives ordering episodes only")
    observation = env.reset()
    steps = 0
    done = observation.done
    while not done:
        action = min(
            observation.action_set,
            key=lambda net_id: (_lattice_hpwl(observation, net_id), net_id),
        )
        observation, _, done = env.step(action)
        steps += 1
    return EpisodeSummary(env.total_reward, env.total_reward_half, steps, env.metrics())
