"""Deterministic continuous mountain car and policy training with a finite-difference oracle.

The dynamics follow the usual continuous mountain-car conventions: power
0.0015, gravity term 0.0025 cos(3p), velocity bound 0.07, positions in
``[-1.2, 0.6]``, start at rest at -0.5, goal at 0.45, 999 steps, reward 100
at the goal minus ``0.1 sum a^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .algorithms import AlgoConfig, constrained_covering, covering_method
from .core import BoxDomain, FiniteDifferenceOracle, ProblemSpec, RunOutcome

__all__ = [
    "CarState",
    "EpisodeResult",
    "height",
    "step",
    "policy",
    "run_episode",
    "reward_objective",
    "energy_constraint",
    "total_energy",
    "EpisodeSimulator",
    "THETA_MAX",
    "GOAL_POSITION",
    "GRAVITY",
    "GOAL_ENERGY",
    "TrainConfig",
    "TrainResult",
    "train",
]

MIN_POSITION, MAX_POSITION = -1.2, 0.6
MAX_SPEED = 0.07
POWER = 0.0015
GRAVITY_STEP = 0.0025
GOAL_POSITION = 0.45
GRAVITY = 9.8
MAX_STEPS = 999
THETA_MAX = 5.0 * np.array([1 / 1.2, 1 / 0.07, 1.0, 1.0, 1.0])


@dataclass(frozen=True)
class CarState:
    position: float
    velocity: float


START = CarState(-0.5, 0.0)


@dataclass(frozen=True)
class EpisodeResult:
    cumulative_reward: float
    terminal_state: CarState
    steps_taken: int
    reached_goal: bool


def height(x: float) -> float:
    return 0.45 * math.sin(3 * x) + 0.55


def step(state: CarState, action: float) -> CarState:
    a = min(max(float(action), -1.0), 1.0)
    v = state.velocity + POWER * a - GRAVITY_STEP * math.cos(3 * state.position)
    v = min(max(v, -MAX_SPEED), MAX_SPEED)
    p = min(max(state.position + v, MIN_POSITION), MAX_POSITION)
    if p == MIN_POSITION and v < 0:
        v = 0.0
    return CarState(p, v)


def policy(theta, state: CarState) -> float:
    t1, t2, t3, t4, t5 = (float(v) for v in theta)
    y1 = math.tanh(t1 * state.position)
    y2 = math.tanh(t2 * state.velocity)
    return math.tanh(t3 * y1 + t4 * y2 + t5)


def run_episode(theta, max_steps: int = MAX_STEPS, start_state: CarState = START
                ) -> EpisodeResult:
    state = start_state
    cost = 0.0
    for k in range(max_steps):
        a = policy(theta, state)
        cost += 0.1 * a * a
        state = step(state, a)
        if state.position >= GOAL_POSITION:
            return EpisodeResult(100.0 - cost, state, k + 1, True)
    return EpisodeResult(-cost, state, max_steps, False)


def total_energy(state: CarState) -> float:
    """Energy per unit mass: ``g height(p) + v^2 / 2``."""
    return GRAVITY * height(state.position) + 0.5 * state.velocity ** 2


GOAL_ENERGY = GRAVITY * height(GOAL_POSITION)


def reward_objective(theta, max_steps: int = MAX_STEPS) -> float:
    return -run_episode(theta, max_steps).cumulative_reward


def energy_constraint(theta, max_steps: int = MAX_STEPS) -> float:
    return GOAL_ENERGY - total_energy(run_episode(theta, max_steps).terminal_state)


class EpisodeSimulator:
    """Counts rollouts; the last episode is cached so J and H at one θ share it."""

    def __init__(self, max_steps: int = MAX_STEPS, cache: bool = True):
        self.max_steps = max_steps
        self.cache = cache
        self.episodes = 0
        self._last_key: Optional[bytes] = None
        self._last: Optional[EpisodeResult] = None

    def rollout(self, theta) -> EpisodeResult:
        theta = np.asarray(theta, dtype=np.float64)
        key = theta.tobytes()
        if self.cache and key == self._last_key:
            return self._last
        self.episodes += 1
        res = run_episode(theta, self.max_steps)
        self._last_key, self._last = key, res
        return res

    def objective(self, theta) -> float:
        return -self.rollout(theta).cumulative_reward

    def constraint(self, theta) -> float:
        return GOAL_ENERGY - total_energy(self.rollout(theta).terminal_state)


@dataclass(frozen=True)
class TrainConfig:
    """Defaults: ``L_J = L_H = 100``, ``T = 10``, forward differences of step 0.01."""

    constrained: bool = True
    budget: int = 10
    lip_j: float = 100.0
    lip_h: float = 100.0
    fd_step: float = 0.01
    eta: float = 1.0
    delta: float = 1e-3
    q1: Optional[tuple] = None
    max_steps: int = MAX_STEPS
    success_threshold: float = 90.0


@dataclass
class TrainResult:
    outcome: RunOutcome
    episodes: int
    episodes_unshared: int
    episodes_fully_shared: int
    best_reward: float
    best_theta: np.ndarray
    success: bool
    rewards: list = field(default_factory=list)
    energies: list = field(default_factory=list)


def train(config: Optional[TrainConfig] = None, algo: Optional[AlgoConfig] = None) -> TrainResult:
    """Train the policy parameters over ``[-THETA_MAX, THETA_MAX]`` from finite differences.

    ``best_reward`` is the largest episode reward among the queried θ.
    """
    config = config or TrainConfig()
    sim = EpisodeSimulator(config.max_steps)
    oracle = FiniteDifferenceOracle(sim.objective, sim.constraint, config.fd_step)
    q1 = np.zeros(5) if config.q1 is None else np.asarray(config.q1, dtype=np.float64)
    spec = ProblemSpec(
        domain=BoxDomain(-THETA_MAX, THETA_MAX),
        oracle=oracle, q1=q1, lip_j=config.lip_j, lip_h=config.lip_h,
        eta=config.eta, delta=config.delta, budget=config.budget,
        name="mountaincar" + ("" if config.constrained else "-unconstrained"),
    )
    algo = algo or AlgoConfig()
    outcome = constrained_covering(spec, algo) if config.constrained else covering_method(spec, algo)
    rewards = [-r.j_value for r in outcome.queries]
    energies = [GOAL_ENERGY - r.h_value for r in outcome.queries]
    k = int(np.argmax(rewards))
    n = len(outcome.queries)
    return TrainResult(
        outcome=outcome,
        episodes=sim.episodes,
        episodes_unshared=n * 2 * (1 + spec.d),
        episodes_fully_shared=n * (1 + spec.d),
        best_reward=float(rewards[k]),
        best_theta=np.array(outcome.queries[k].point),
        success=bool(rewards[k] > config.success_threshold),
        rewards=rewards,
        energies=energies,
    )
