"""Prefix tree over action token sequences for token-level decoding."""

from __future__ import annotations

from .core import ActionInstance, ContractError


class _Node:
    __slots__ = ("children", "action_indices", "complete")

    def __init__(self):
        self.children: dict[str, _Node] = {}
        self.action_indices: list[int] = []
        self.complete: int | None = None  # action index ending exactly here


class TokenTrie:
    """Trie over a fixed vocabulary; probabilities are supplied per query."""

    def __init__(self, vocab: list[ActionInstance]):
        if not vocab:
            raise ContractError("vocab must be non-empty")
        self.vocab = list(vocab)
        self.root = _Node()
        for i, action in enumerate(self.vocab):
            node = self.root
            node.action_indices.append(i)
            for token in action.tokens:
                node = node.children.setdefault(token, _Node())
                node.action_indices.append(i)
            node.complete = i

    def _node(self, prefix: list[str]) -> _Node:
        node = self.root
        for token in prefix:
            if token not in node.children:
                raise ContractError(f"prefix {prefix!r} is not in the trie")
            node = node.children[token]
        return node

    def token_distribution(self, probs, prefix: list[str]) -> dict[str, float]:
        """p(next token | prefix) by marginalizing action probabilities."""
        node = self._node(list(prefix))
        mass = sum(probs[i] for i in node.action_indices)
        if mass <= 0:
            raise ContractError("no probability mass under prefix")
        dist = {}
        for token, child in node.children.items():
            dist[token] = sum(probs[i] for i in child.action_indices) / mass
        return dist

    def greedy_action(self, probs) -> ActionInstance:
        """Follow argmax tokens (ties lexicographic) until an action completes."""
        node = self.root
        prefix: list[str] = []
        while node.children:
            dist = self.token_distribution(probs, prefix)
            token = min(dist, key=lambda t: (-dist[t], t))
            prefix.append(token)
            node = node.children[token]
        if node.complete is None:
            raise ContractError("trie path did not end at an action")
        return self.vocab[node.complete]
