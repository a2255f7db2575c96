"""Trainable scorers over hashed features: losses, AdamW, persistence, adapters."""

from __future__ import annotations

import json
import math
import socket
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    ActionInstance,
    AdapterError,
    ContractError,
    GoalSpec,
    History,
    TrainingDivergedError,
)
from .features import DIM, HASH_SEED, FeatureVector, featurize
from .oracle import Trajectory

MODEL_KINDS = ("can", "pay", "say")
CAN_CALIBRATION_RAW = 2.197  # sigmoid(2.197) ~= 0.9


@dataclass
class TrainConfig:
    lr: float = 1e-4
    weight_decay: float = 1e-5
    batch_size: int = 50
    epochs: int = 20
    val_fraction: float = 0.2
    seed: int = 0

    def to_json(self) -> dict:
        return {
            "lr": self.lr,
            "weight_decay": self.weight_decay,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "val_fraction": self.val_fraction,
            "seed": self.seed,
        }


def sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max()
    e = np.exp(shifted)
    return e / e.sum()


def infonce_loss(
    pos_score: float, neg_scores: list[float]
) -> tuple[float, tuple[float, list[float]]]:
    """Contrastive loss -ln(pos / (pos + sum(negs))) and its score gradients."""
    if pos_score <= 0 or any(s <= 0 for s in neg_scores):
        raise ContractError("infonce_loss requires strictly positive scores")
    total = pos_score + sum(neg_scores)
    loss = math.log(total) - math.log(pos_score)
    d_pos = 1.0 / total - 1.0 / pos_score
    d_negs = [1.0 / total for _ in neg_scores]
    return loss, (d_pos, d_negs)


def mse_loss(pred: float, target: float) -> tuple[float, float]:
    """Squared error and its gradient with respect to the prediction."""
    diff = pred - target
    return diff * diff, 2.0 * diff


class AdamW:
    """Decoupled weight decay Adam over a flat parameter vector."""

    def __init__(self, n_params: int, lr: float, weight_decay: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 decay_mask: np.ndarray | None = None):
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0
        self.decay_mask = (
            np.ones(n_params) if decay_mask is None else decay_mask.astype(float)
        )

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        params -= self.lr * (
            m_hat / (np.sqrt(v_hat) + self.eps)
            + self.weight_decay * self.decay_mask * params
        )


class LinearScorer:
    """Linear model over hashed features with a sigmoid or softmax head."""

    def __init__(self, kind: str, env: str, head: str,
                 dim: int = DIM, hash_seed: int = HASH_SEED,
                 config: dict | None = None, profile: str | None = None):
        if kind not in MODEL_KINDS:
            raise ContractError(f"unknown model kind {kind!r}")
        self.kind = kind
        self.env = env
        self.head = head
        self.dim = dim
        self.hash_seed = hash_seed
        # The policy keeps the lighter feature profile so its softmax stays
        # soft enough to surface several plausible candidates; the feasibility
        # and payoff scorers use the full crosses.
        self.profile = profile or ("plain" if kind == "say" else "full")
        self.config = config or {}
        self.weights = np.zeros(dim)
        self.bias = 0.0
        self.val_metric: float | None = None
        self.epoch_losses: list[float] = []

    def raw(self, fv: FeatureVector) -> float:
        idx = np.asarray(fv.indices, dtype=np.intp)
        vals = np.asarray(fv.values)
        return float(self.weights[idx] @ vals) + self.bias

    def prob(self, fv: FeatureVector) -> float:
        return sigmoid(self.raw(fv))

    def score(self, goal: GoalSpec, history: History, action: ActionInstance) -> float:
        return self.prob(
            featurize(goal, history, action, self.hash_seed, self.profile)
        )

    def check_env(self, env_id: str) -> None:
        if env_id != self.env:
            raise ContractError(
                f"model trained for {self.env!r} applied to {env_id!r}"
            )

    def save(self, path: Path) -> None:
        payload = {
            "kind": self.kind,
            "env": self.env,
            "dim": self.dim,
            "hash_seed": self.hash_seed,
            "profile": self.profile,
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "config": dict(self.config, head=self.head),
            "val_metric": self.val_metric,
        }
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)

    @classmethod
    def load(cls, path: Path) -> "LinearScorer":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        config = dict(payload["config"])
        head = config.pop("head")
        scorer = cls(
            kind=payload["kind"],
            env=payload["env"],
            head=head,
            dim=payload["dim"],
            hash_seed=payload["hash_seed"],
            config=config,
            profile=payload.get("profile"),
        )
        scorer.weights = np.array(payload["weights"])
        scorer.bias = payload["bias"]
        scorer.val_metric = payload["val_metric"]
        return scorer


def can_score(
    model: LinearScorer, history: History, goal: GoalSpec, action: ActionInstance,
    env_id: str | None = None,
) -> float:
    if env_id is not None:
        model.check_env(env_id)
    return model.score(goal, history, action)


def pay_score(
    model: LinearScorer, history: History, goal: GoalSpec, action: ActionInstance,
    env_id: str | None = None,
) -> float:
    if env_id is not None:
        model.check_env(env_id)
    return model.score(goal, history, action)


class SayPolicy:
    """Softmax policy over an episode's action vocabulary."""

    def __init__(self, scorer: LinearScorer):
        if scorer.head != "softmax":
            raise ContractError("SayPolicy needs a softmax-head scorer")
        self.scorer = scorer

    def action_probs(
        self, history: History, goal: GoalSpec, vocab: list[ActionInstance]
    ) -> np.ndarray:
        z = np.array(
            [
                self.scorer.raw(
                    featurize(goal, history, a, self.scorer.hash_seed,
                              self.scorer.profile)
                )
                for a in vocab
            ]
        )
        return softmax(z)

    def top_m(
        self, history: History, goal: GoalSpec, vocab: list[ActionInstance], m: int
    ) -> list[tuple[ActionInstance, float]]:
        return say_top_m(self, history, goal, vocab, m)


def say_top_m(
    policy: SayPolicy,
    history: History,
    goal: GoalSpec,
    vocab: list[ActionInstance],
    m: int,
) -> list[tuple[ActionInstance, float]]:
    """The m most probable vocabulary actions with exact softmax masses."""
    if m < 1:
        raise ContractError("m must be >= 1")
    if not vocab:
        raise ContractError("vocab must be non-empty")
    if m > len(vocab):
        warnings.warn("m exceeds vocabulary size; clamping", RuntimeWarning)
        m = len(vocab)
    probs = policy.action_probs(history, goal, vocab)
    order = sorted(range(len(vocab)), key=lambda i: (-probs[i], vocab[i].text))
    return [(vocab[i], float(probs[i])) for i in order[:m]]


def perfect_say(
    expert_action: ActionInstance,
    vocab: list[ActionInstance],
    m: int,
    seed: int,
) -> list[tuple[ActionInstance, float]]:
    """The expert action plus m-1 uniformly chosen distinct distractors."""
    import random

    if m < 1:
        raise ContractError("m must be >= 1")
    if m > len(vocab):
        m = len(vocab)
    rng = random.Random(seed)
    pool = sorted((a for a in vocab if a.text != expert_action.text),
                  key=lambda a: a.text)
    distractors = rng.sample(pool, m - 1) if m > 1 else []
    candidates = sorted([expert_action] + distractors, key=lambda a: a.text)
    p = 1.0 / m
    return [(a, p) for a in candidates]


# ---------------------------------------------------------------------------
# training


def _to_arrays(fv: FeatureVector) -> tuple[np.ndarray, np.ndarray]:
    return np.asarray(fv.indices, dtype=np.intp), np.asarray(fv.values)


def _raw(params: np.ndarray, feat: tuple[np.ndarray, np.ndarray]) -> float:
    idx, vals = feat
    return float(params[idx] @ vals) + params[-1]


def _scatter(grad: np.ndarray, feat: tuple[np.ndarray, np.ndarray], dz: float):
    idx, vals = feat
    np.add.at(grad, idx, dz * vals)
    grad[-1] += dz


def _split_train_val(n: int, val_fraction: float, rng: np.random.Generator):
    order = rng.permutation(n)
    n_val = max(1, int(round(n * val_fraction))) if n > 1 else 0
    return order[n_val:], order[:n_val]


def _finish_epoch(losses: list[float], epoch_losses: list[float]) -> None:
    avg = float(np.mean(losses))
    if not math.isfinite(avg):
        raise TrainingDivergedError(f"epoch loss {avg}")
    epoch_losses.append(avg)


def _make_optimizer(config: TrainConfig) -> AdamW:
    mask = np.ones(DIM + 1)
    mask[-1] = 0.0  # no decay on the bias
    return AdamW(DIM + 1, config.lr, config.weight_decay, decay_mask=mask)


def train_can(samples, config: TrainConfig, env_id: str) -> LinearScorer:
    """InfoNCE training of the feasibility scorer on (pos, neg, neg) triples."""
    if not samples:
        raise ContractError("empty dataset")
    feats = [
        tuple(
            _to_arrays(featurize(s.goal, s.history, a))
            for a in (s.positive, s.neg_same, s.neg_cross)
        )
        for s in samples
    ]
    rng = np.random.default_rng(config.seed)
    train_idx, val_idx = _split_train_val(len(samples), config.val_fraction, rng)
    params = np.zeros(DIM + 1)
    opt = _make_optimizer(config)
    scorer = LinearScorer("can", env_id, head="sigmoid", config=config.to_json())
    for _ in range(config.epochs):
        order = rng.permutation(train_idx)
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            grad = np.zeros(DIM + 1)
            for i in batch:
                scores = [sigmoid(_raw(params, f)) for f in feats[i]]
                loss, (d_pos, d_negs) = infonce_loss(scores[0], scores[1:])
                losses.append(loss)
                for f, s, ds in zip(feats[i], scores, [d_pos] + d_negs):
                    _scatter(grad, f, ds * s * (1.0 - s))
            grad /= len(batch)
            opt.step(params, grad)
        _finish_epoch(losses, scorer.epoch_losses)
    scorer.val_metric = _can_f1(params, feats, val_idx)
    # InfoNCE only constrains the ranking, so the sigmoid outputs drift toward
    # zero for every candidate.  Shift the bias (ranking-preserving, hence
    # after the validation metric) so the 20th-percentile training positive
    # lands at ~0.9; nearly all feasible actions then contribute ln p_can near
    # zero while vetoed actions stay strongly negative.
    pos_raws = sorted(_raw(params, feats[i][0]) for i in train_idx)
    if pos_raws:
        anchor = pos_raws[len(pos_raws) // 5]
        params[-1] += CAN_CALIBRATION_RAW - anchor
    scorer.weights = params[:-1].copy()
    scorer.bias = float(params[-1])
    return scorer


def _can_f1(params, feats, val_idx) -> float:
    """F1 where a candidate is predicted positive when it holds at least half
    of its triple's score mass (only the max-scoring candidate can)."""
    tp = fp = fn = 0
    for i in val_idx:
        scores = [sigmoid(_raw(params, f)) for f in feats[i]]
        total = sum(scores)
        best = max(range(len(scores)), key=lambda j: scores[j])
        if scores[best] / total < 0.5:
            fn += 1
        elif best == 0:
            tp += 1
        else:
            fp += 1
            fn += 1
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def train_pay(samples, config: TrainConfig, env_id: str) -> LinearScorer:
    """MSE training of the sigmoid-bounded payoff regressor."""
    if not samples:
        raise ContractError("empty dataset")
    feats = [_to_arrays(featurize(s.goal, s.history, s.action)) for s in samples]
    targets = np.array([s.target for s in samples])
    rng = np.random.default_rng(config.seed)
    train_idx, val_idx = _split_train_val(len(samples), config.val_fraction, rng)
    params = np.zeros(DIM + 1)
    opt = _make_optimizer(config)
    scorer = LinearScorer("pay", env_id, head="sigmoid", config=config.to_json())
    for _ in range(config.epochs):
        order = rng.permutation(train_idx)
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            grad = np.zeros(DIM + 1)
            for i in batch:
                s = sigmoid(_raw(params, feats[i]))
                loss, d_pred = mse_loss(s, targets[i])
                losses.append(loss)
                _scatter(grad, feats[i], d_pred * s * (1.0 - s))
            grad /= len(batch)
            opt.step(params, grad)
        _finish_epoch(losses, scorer.epoch_losses)
    scorer.weights = params[:-1].copy()
    scorer.bias = float(params[-1])
    val_losses = [
        mse_loss(sigmoid(_raw(params, feats[i])), targets[i])[0] for i in val_idx
    ]
    scorer.val_metric = float(np.mean(val_losses)) if len(val_idx) else 0.0
    return scorer


def train_say(
    trajectories: list[Trajectory], config: TrainConfig, env_id: str, env
) -> SayPolicy:
    """Full-softmax cross-entropy over each episode's vocabulary."""
    if not trajectories:
        raise ContractError("empty dataset")
    samples = []  # (candidate feature list, target index)
    for traj in trajectories:
        vocab = env.admissible_actions(traj.episode)
        text_to_idx = {a.text: i for i, a in enumerate(vocab)}
        history = History(traj.episode.init_obs)
        for action in traj.actions:
            feats = [
                _to_arrays(featurize(traj.episode.goal, history, a, profile="plain"))
                for a in vocab
            ]
            samples.append((feats, text_to_idx[action.text]))
            history = history.extended(action)
    rng = np.random.default_rng(config.seed)
    train_idx, val_idx = _split_train_val(len(samples), config.val_fraction, rng)
    params = np.zeros(DIM + 1)
    opt = _make_optimizer(config)
    scorer = LinearScorer("say", env_id, head="softmax", config=config.to_json())
    for _ in range(config.epochs):
        order = rng.permutation(train_idx)
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            grad = np.zeros(DIM + 1)
            for i in batch:
                feats, target = samples[i]
                z = np.array([_raw(params, f) for f in feats])
                p = softmax(z)
                losses.append(-math.log(max(p[target], 1e-300)))
                dz = p.copy()
                dz[target] -= 1.0
                for f, d in zip(feats, dz):
                    _scatter(grad, f, d)
            grad /= len(batch)
            opt.step(params, grad)
        _finish_epoch(losses, scorer.epoch_losses)
    scorer.weights = params[:-1].copy()
    scorer.bias = float(params[-1])
    nlls = []
    for i in val_idx:
        feats, target = samples[i]
        z = np.array([_raw(params, f) for f in feats])
        nlls.append(-math.log(max(softmax(z)[target], 1e-300)))
    scorer.val_metric = float(np.mean(nlls)) if len(val_idx) else 0.0
    return SayPolicy(scorer)


def train(model_kind: str, dataset, config: TrainConfig, env_id: str, env=None):
    """Train one scorer; dataset type depends on the kind (samples or trajectories)."""
    if model_kind == "can":
        return train_can(dataset, config, env_id)
    if model_kind == "pay":
        return train_pay(dataset, config, env_id)
    if model_kind == "say":
        return train_say(dataset, config, env_id, env)
    raise ContractError(f"unknown model kind {model_kind!r}")


# ---------------------------------------------------------------------------
# external proposer adapter


def external_say(
    endpoint: str, history: History, goal: GoalSpec, m: int, timeout: float = 10.0
) -> list[tuple[str, float, list[float]]]:
    """Query a proposer over newline-delimited JSON; returns (text, prob, token_probs)."""
    host, _, port = endpoint.rpartition(":")
    request = {
        "goal": goal.text,
        "init_obs": history.init_obs,
        "history": [a.text for a in history.actions],
        "m": m,
    }
    try:
        with socket.create_connection((host, int(port)), timeout=timeout) as conn:
            conn.sendall((json.dumps(request) + "\n").encode("utf-8"))
            chunks = []
            while True:
                chunk = conn.recv(65536)
                if not chunk:
                    break
                chunks.append(chunk)
                if b"\n" in chunk:
                    break
        line = b"".join(chunks).split(b"\n", 1)[0]
        payload = json.loads(line)
        out = []
        for cand in payload["candidates"][:m]:
            prob = math.exp(cand["logprob"])
            token_probs = [math.exp(lp) for lp in cand["token_logprobs"]]
            out.append((cand["text"], prob, token_probs))
        return out
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise AdapterError(f"adapter at {endpoint!r} failed: {exc}") from exc
