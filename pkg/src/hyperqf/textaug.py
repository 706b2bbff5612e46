"""Whitespace tokenization and Random Text Pruning (RTP)."""

from __future__ import annotations

from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

UNK = "<unk>"


class Vocab:
    """Token string <-> integer id mapping; id 0 is reserved for unknown tokens."""

    def __init__(self, tokens: Iterable[str]):
        self.itos: List[str] = [UNK]
        self.stoi: Dict[str, int] = {UNK: 0}
        for tok in tokens:
            if tok not in self.stoi:
                self.stoi[tok] = len(self.itos)
                self.itos.append(tok)

    @property
    def unk_id(self) -> int:
        return 0

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, tok: str) -> bool:
        return tok in self.stoi

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.itos == other.itos

    def __repr__(self) -> str:
        return f"Vocab(size={len(self)})"

    def id(self, tok: str) -> int:
        return self.stoi.get(tok, 0)

    @classmethod
    def from_list(cls, itos: Sequence[str]) -> "Vocab":
        if not itos or itos[0] != UNK:
            raise ValueError(f"vocabulary list must start with {UNK!r}")
        return cls(itos[1:])


def tokenize(text: str, vocab: Vocab) -> List[int]:
    """Split on whitespace and map each token to its id (unknown -> UNK)."""
    toks = text.split()
    if not toks:
        raise ValueError("cannot tokenize an empty caption")
    return [vocab.id(t) for t in toks]


def random_text_prune(tokens: Sequence, max_window: int = 7,
                      rng: np.random.Generator | None = None) -> Tuple[list, int]:
    """Delete a random window of consecutive tokens.

    The window length is drawn uniformly from ``{0, ..., max_window}`` and
    capped at ``len(tokens) - 1`` so that at least one token survives; the
    start is then uniform over all valid positions. Returns the pruned
    sequence and the number of tokens removed.
    """
    if max_window < 0:
        raise ValueError("max_window must be >= 0")
    tokens = list(tokens)
    if max_window == 0 or not tokens:
        return tokens, 0
    if rng is None:
        raise ValueError("random_text_prune needs a random generator")
    w = int(rng.integers(0, max_window + 1))
    w = min(w, len(tokens) - 1)
    start = int(rng.integers(0, len(tokens) - w + 1))
    return tokens[:start] + tokens[start + w:], w
