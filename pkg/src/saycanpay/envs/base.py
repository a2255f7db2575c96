"""Environment interface: symbolic states, episodes, and a generic BFS."""

from __future__ import annotations

from abc import ABC, abstractmethod
from collections import deque
from dataclasses import dataclass

from ..core import ActionInstance, ContractError, GoalSpec

DEFAULT_MAX_STEPS = 20
SPLITS = ("train", "test", "test-generalize")


class SymbolicState:
    """Base class for immutable per-environment symbolic states."""

    env_id: str = ""

    @property
    def entities(self) -> tuple:
        raise NotImplementedError

    @property
    def relations(self) -> tuple:
        raise NotImplementedError


@dataclass(frozen=True)
class EpisodeSpec:
    """One planning problem: goal, initial observation, hidden start state."""

    env_id: str
    goal: GoalSpec
    init_obs: str
    init_state: SymbolicState
    split: str
    seed: int
    max_steps: int = DEFAULT_MAX_STEPS

    @property
    def episode_id(self) -> str:
        return f"{self.env_id}-{self.split}-{self.seed:08d}"


class Environment(ABC):
    """Deterministic text-world with symbolic transitions.

    All methods are pure; one shared instance per environment id is safe to
    use from concurrent workers.
    """

    env_id: str = ""

    def __init__(self):
        self._vocab_cache: dict = {}

    @abstractmethod
    def sample_episode(self, seed: int, split: str) -> EpisodeSpec: ...

    @abstractmethod
    def _vocabulary(self, spec: EpisodeSpec) -> list[ActionInstance]: ...

    @abstractmethod
    def precondition_holds(
        self, state: SymbolicState, goal: GoalSpec, action: ActionInstance
    ) -> bool: ...

    @abstractmethod
    def step(
        self, state: SymbolicState, goal: GoalSpec, action: ActionInstance
    ) -> SymbolicState: ...

    @abstractmethod
    def is_goal(self, state: SymbolicState, goal: GoalSpec) -> bool: ...

    @abstractmethod
    def render_observation(self, state: SymbolicState) -> str: ...

    @abstractmethod
    def parse_observation(self, text: str) -> SymbolicState: ...

    @abstractmethod
    def state_to_json(self, state: SymbolicState) -> dict: ...

    @abstractmethod
    def state_from_json(self, payload: dict) -> SymbolicState: ...

    def admissible_actions(self, spec: EpisodeSpec) -> list[ActionInstance]:
        """Episode-level action vocabulary (feasible and otherwise), sorted."""
        key = (spec.goal, spec.init_state)
        cached = self._vocab_cache.get(key)
        if cached is None:
            cached = sorted(self._vocabulary(spec), key=lambda a: a.text)
            self._vocab_cache[key] = cached
        return list(cached)

    def action_from_text(self, spec: EpisodeSpec, text: str) -> ActionInstance:
        for action in self.admissible_actions(spec):
            if action.text == text:
                return action
        raise ContractError(f"{text!r} is not in the episode vocabulary")

    def render_action(self, action: ActionInstance) -> str:
        return action.text

    def check_seed_split(self, seed: int, split: str) -> None:
        if seed < 0:
            raise ContractError("seed must be >= 0")
        if split not in SPLITS:
            raise ContractError(f"unknown split {split!r}")


def breadth_first_plan(
    env: Environment, spec: EpisodeSpec, start_state: SymbolicState | None = None
) -> list[ActionInstance] | None:
    """Minimal action sequence (including the done action) to the goal.

    Expansion follows lexicographic action order, so the result is
    deterministic. Returns None when no plan of length <= max_steps exists.
    """
    vocab = env.admissible_actions(spec)
    done = next(a for a in vocab if a.is_done)
    moves = [a for a in vocab if not a.is_done]
    goal = spec.goal
    state = spec.init_state if start_state is None else start_state
    if env.is_goal(state, goal):
        return [done]
    frontier = deque([state])
    parents: dict = {state: None}
    depth = {state: 0}
    max_moves = spec.max_steps - 1
    while frontier:
        current = frontier.popleft()
        if depth[current] >= max_moves:
            continue
        for action in moves:
            if not env.precondition_holds(current, goal, action):
                continue
            nxt = env.step(current, goal, action)
            if nxt in parents:
                continue
            parents[nxt] = (current, action)
            depth[nxt] = depth[current] + 1
            if env.is_goal(nxt, goal):
                path = [done]
                node = nxt
                while parents[node] is not None:
                    prev, act = parents[node]
                    path.append(act)
                    node = prev
                path.reverse()
                return path
            frontier.append(nxt)
    return None
