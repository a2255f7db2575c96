"""Optimal BFS planner and the oracle feasibility/payoff scorers built on it."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import ActionInstance, GoalSpec, History, UnsolvableError
from .envs import Environment, EpisodeSpec, breadth_first_plan
from .envs.base import SymbolicState

DELTA = 0.6


@dataclass(frozen=True)
class Trajectory:
    """Expert episode: the minimal plan ending in the done action."""

    episode: EpisodeSpec
    actions: tuple[ActionInstance, ...]
    reward: int = 1


def bfs_plan(env: Environment, spec: EpisodeSpec) -> Trajectory:
    """Minimal-length expert trajectory, deterministic via lexicographic expansion."""
    plan = breadth_first_plan(env, spec)
    if plan is None:
        raise UnsolvableError(f"{spec.episode_id}: no plan within {spec.max_steps} steps")
    return Trajectory(episode=spec, actions=tuple(plan))


def optimal_remaining(
    env: Environment, spec: EpisodeSpec, state: SymbolicState
) -> float:
    """BFS distance to the goal in actions, including the final done action."""
    plan = breadth_first_plan(env, spec, start_state=state)
    return math.inf if plan is None else len(plan)


class ReplayCache:
    """Maps histories to symbolic states by replaying actions from the start.

    A history that contains an infeasible action maps to None; everything
    downstream of it is treated as broken.
    """

    def __init__(self, env: Environment, spec: EpisodeSpec):
        self.env = env
        self.spec = spec
        self._states: dict[tuple[str, ...], SymbolicState | None] = {
            (): spec.init_state
        }

    def state_for(self, history: History) -> SymbolicState | None:
        key = tuple(a.text for a in history.actions)
        if key in self._states:
            return self._states[key]
        state = self._states[()]
        for i, action in enumerate(history.actions):
            prefix = key[: i + 1]
            if prefix in self._states:
                state = self._states[prefix]
                if state is None:
                    return None
                continue
            if state is None or not self.env.precondition_holds(
                state, self.spec.goal, action
            ):
                state = None
            else:
                state = self.env.step(state, self.spec.goal, action)
            self._states[prefix] = state
        return state


class OracleCan:
    """Exact feasibility: 1.0 iff the action's precondition holds."""

    def __init__(self, env: Environment, spec: EpisodeSpec):
        self.replay = ReplayCache(env, spec)
        self.env = env
        self.goal = spec.goal

    def __call__(self, history: History, action: ActionInstance) -> float:
        state = self.replay.state_for(history)
        if state is None:
            return 0.0
        return 1.0 if self.env.precondition_holds(state, self.goal, action) else 0.0


class OraclePay:
    """Discounted distance-to-goal payoff: delta ** (remaining actions after a)."""

    def __init__(self, env: Environment, spec: EpisodeSpec, delta: float = DELTA):
        self.replay = ReplayCache(env, spec)
        self.env = env
        self.spec = spec
        self.delta = delta
        self._remaining: dict[SymbolicState, float] = {}

    def _remaining_from(self, state: SymbolicState) -> float:
        if state not in self._remaining:
            self._remaining[state] = optimal_remaining(self.env, self.spec, state)
        return self._remaining[state]

    def __call__(self, history: History, action: ActionInstance) -> float:
        state = self.replay.state_for(history)
        if state is None:
            return 0.0
        if not self.env.precondition_holds(state, self.spec.goal, action):
            return 0.0
        if action.is_done:
            return 1.0
        nxt = self.env.step(state, self.spec.goal, action)
        remaining = self._remaining_from(nxt)
        if math.isinf(remaining):
            return 0.0
        return self.delta**remaining


def oracle_pay(
    env: Environment,
    spec: EpisodeSpec,
    history: History,
    action: ActionInstance,
    delta: float = DELTA,
) -> float:
    """One-shot convenience wrapper around OraclePay."""
    return OraclePay(env, spec, delta)(history, action)
