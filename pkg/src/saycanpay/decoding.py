"""Search over actions: greedy-token, greedy-action, and beam-action decoding."""

from __future__ import annotations

from dataclasses import dataclass

from .core import (
    ActionInstance,
    ContractError,
    History,
    ScoredCandidate,
    accumulate,
    clamp,
    decode_score,
    length_normalize,
)
import math

from .envs import Environment, EpisodeSpec
from .trie import TokenTrie

STRATEGIES = ("greedy-token", "greedy-action", "beam-action")


@dataclass(frozen=True)
class DecodingConfig:
    strategy: str = "beam-action"
    score_mode: str = "saycanpay"
    m: int = 6
    k: int = 3
    max_steps: int = 20

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ContractError(f"unknown strategy {self.strategy!r}")
        if not 1 <= self.k <= self.m:
            raise ContractError("beam count k must satisfy 1 <= k <= m")
        if self.max_steps < 1:
            raise ContractError("max_steps must be >= 1")


@dataclass(frozen=True)
class PlanResult:
    plan: tuple[ActionInstance, ...]
    per_step: tuple[ScoredCandidate, ...]
    final_score: float
    terminated_by: str  # "done" or "step-limit"


def word_edit_distance(a: list[str], b: list[str]) -> int:
    """Levenshtein distance over word sequences."""
    prev = list(range(len(b) + 1))
    for i, wa in enumerate(a, start=1):
        cur = [i]
        for j, wb in enumerate(b, start=1):
            cost = 0 if wa == wb else 1
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost))
        prev = cur
    return prev[-1]


def map_to_admissible(text: str, vocab: list[ActionInstance]) -> ActionInstance:
    """Closest vocabulary action by word-level edit distance; ties lexicographic."""
    if not vocab:
        raise ContractError("vocab must be non-empty")
    words = text.lower().split()
    return min(vocab, key=lambda a: (word_edit_distance(words, list(a.tokens)), a.text))


def is_terminal(action: ActionInstance) -> bool:
    return action.is_done


def expand_candidates(
    say, can, pay, history: History, config: DecodingConfig
) -> list[ScoredCandidate]:
    """Propose, merge duplicates (max p_say), and score the m candidates."""
    merged: dict[str, tuple[ActionInstance, float]] = {}
    for action, p_say in say.propose(history, config.m):
        p_say = min(max(p_say, 0.0), 1.0)
        kept = merged.get(action.text)
        if kept is None or p_say > kept[1]:
            merged[action.text] = (action, p_say)
    candidates = []
    for text in sorted(merged):
        action, p_say = merged[text]
        p_can = can(history, action) if config.score_mode != "say" else 1.0
        f_pay = pay(history, action) if config.score_mode == "saycanpay" else 1.0
        candidates.append(
            ScoredCandidate(
                action=action,
                p_say=p_say,
                p_can=p_can,
                f_pay=f_pay,
                step_log_score=decode_score(p_say, p_can, f_pay, config.score_mode),
            )
        )
    return candidates


def greedy_action(
    say, can, pay, episode: EpisodeSpec, config: DecodingConfig
) -> PlanResult:
    """Pick the argmax-scored candidate at every step (beam search with k=1)."""
    history = History(episode.init_obs)
    per_step: list[ScoredCandidate] = []
    f_acc = 0.0
    terminated_by = "step-limit"
    for _ in range(config.max_steps):
        candidates = expand_candidates(say, can, pay, history, config)
        if not candidates:
            break
        best = min(candidates, key=lambda c: (-c.step_log_score, c.action.text))
        per_step.append(best)
        f_acc = accumulate(f_acc, best.step_log_score)
        history = history.extended(best.action)
        if best.action.is_done:
            terminated_by = "done"
            break
    plan = tuple(c.action for c in per_step)
    final = length_normalize(f_acc, len(plan)) if plan else -math.inf
    return PlanResult(
        plan=plan,
        per_step=tuple(per_step),
        final_score=final,
        terminated_by=terminated_by,
    )


@dataclass(frozen=True)
class _BeamState:
    history: History
    f_acc: float
    per_step: tuple[ScoredCandidate, ...]
    terminated: bool
    terminated_by: str = "step-limit"

    def norm_score(self) -> float:
        n = len(self.history.actions)
        return length_normalize(self.f_acc, n) if n else 0.0

    def sort_key(self):
        return (-self.norm_score(), tuple(a.text for a in self.history.actions))

    def final_key(self):
        # Highest length-normalized score; ties broken lexicographically.
        return (-self.norm_score(), tuple(a.text for a in self.history.actions))


def beam_action(
    say, can, pay, episode: EpisodeSpec, config: DecodingConfig
) -> PlanResult:
    """Maintain k beams ranked by length-normalized accumulated log-score.

    Terminated beams are not expanded but keep competing at their frozen
    normalized score.  A terminated beam that makes the top-k also enters a
    finished pool that later pruning cannot touch; the winner is the pool beam
    with the highest normalized score.

    A beam whose best-scored candidate is the done action takes it without
    branching into siblings -- exactly the choice greedy would make.  This
    keeps k=1 identical to greedy_action and stops finished plans from being
    diluted by padded copies, whose extra cheap steps would raise the mean.
    """
    beams = [
        _BeamState(
            history=History(episode.init_obs), f_acc=0.0, per_step=(), terminated=False
        )
    ]
    finished: list[_BeamState] = []
    for step in range(config.max_steps):
        if all(b.terminated for b in beams):
            break
        extensions: list[_BeamState] = []
        for beam in beams:
            if beam.terminated:
                extensions.append(beam)
                continue
            candidates = expand_candidates(say, can, pay, beam.history, config)
            if not candidates:
                extensions.append(
                    _BeamState(
                        history=beam.history,
                        f_acc=beam.f_acc,
                        per_step=beam.per_step,
                        terminated=True,
                        terminated_by="step-limit",
                    )
                )
                continue
            best_cand = min(candidates, key=lambda c: (-c.step_log_score, c.action.text))
            if best_cand.action.is_done:
                candidates = [best_cand]
            for cand in candidates:
                done = cand.action.is_done
                at_limit = step + 1 >= config.max_steps
                extensions.append(
                    _BeamState(
                        history=beam.history.extended(cand.action),
                        f_acc=accumulate(beam.f_acc, cand.step_log_score),
                        per_step=beam.per_step + (cand,),
                        terminated=done or at_limit,
                        terminated_by="done" if done else "step-limit",
                    )
                )
        beams = sorted(extensions, key=_BeamState.sort_key)[: config.k]
        seen = {id(b) for b in finished}
        finished.extend(b for b in beams if b.terminated and id(b) not in seen)
    best = min(finished or beams, key=_BeamState.final_key)
    plan = tuple(c.action for c in best.per_step)
    final = length_normalize(best.f_acc, len(plan)) if plan else -math.inf
    return PlanResult(
        plan=plan,
        per_step=best.per_step,
        final_score=final,
        terminated_by=best.terminated_by if plan else "step-limit",
    )


def greedy_token(policy_backend, episode: EpisodeSpec, config: DecodingConfig,
                 vocab: list[ActionInstance]) -> PlanResult:
    """Token-level argmax decoding over the vocabulary trie."""
    trie = TokenTrie(vocab)
    history = History(episode.init_obs)
    per_step: list[ScoredCandidate] = []
    f_acc = 0.0
    terminated_by = "step-limit"
    for _ in range(config.max_steps):
        probs = policy_backend.action_probs(history)
        action = trie.greedy_action(probs)
        p_say = float(probs[vocab.index(action)])
        step = math.log(clamp(p_say))
        per_step.append(
            ScoredCandidate(
                action=action, p_say=p_say, p_can=1.0, f_pay=1.0, step_log_score=step
            )
        )
        f_acc = accumulate(f_acc, step)
        history = history.extended(action)
        if action.is_done:
            terminated_by = "done"
            break
    plan = tuple(c.action for c in per_step)
    final = length_normalize(f_acc, len(plan)) if plan else -math.inf
    return PlanResult(
        plan=plan,
        per_step=tuple(per_step),
        final_score=final,
        terminated_by=terminated_by,
    )


def run_strategy(
    episode: EpisodeSpec,
    config: DecodingConfig,
    say,
    can=None,
    pay=None,
    vocab: list[ActionInstance] | None = None,
) -> PlanResult:
    """Dispatch on config.strategy."""
    noop = lambda history, action: 1.0  # noqa: E731
    can = can or noop
    pay = pay or noop
    if config.strategy == "greedy-token":
        if vocab is None:
            raise ContractError("greedy-token needs the episode vocabulary")
        return greedy_token(say, episode, config, vocab)
    if config.strategy == "greedy-action":
        return greedy_action(say, can, pay, episode, config)
    return beam_action(say, can, pay, episode, config)
