"""Text-world environments with symbolic state and NL rendering."""

from __future__ import annotations

from ..core import ContractError
from .base import (
    DEFAULT_MAX_STEPS,
    SPLITS,
    Environment,
    EpisodeSpec,
    SymbolicState,
    breadth_first_plan,
)
from .blocks import BlocksEnv
from .gridworld import GridworldEnv
from .hanoi import HanoiEnv

ENV_IDS = ("hanoi", "blocks", "gridworld")

_ENVS: dict[str, Environment] = {}


def get_env(env_id: str) -> Environment:
    """Shared singleton environment for the given id."""
    if env_id not in ENV_IDS:
        raise ContractError(f"unknown env {env_id!r}")
    if env_id not in _ENVS:
        _ENVS[env_id] = {
            "hanoi": HanoiEnv,
            "blocks": BlocksEnv,
            "gridworld": GridworldEnv,
        }[env_id]()
    return _ENVS[env_id]


def reset(env_id: str, seed: int, split: str) -> EpisodeSpec:
    """Deterministically sample one episode for (env_id, seed, split)."""
    return get_env(env_id).sample_episode(seed, split)


__all__ = [
    "DEFAULT_MAX_STEPS",
    "ENV_IDS",
    "SPLITS",
    "Environment",
    "EpisodeSpec",
    "SymbolicState",
    "breadth_first_plan",
    "get_env",
    "reset",
]
