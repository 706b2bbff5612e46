"""Synthetic hierarchical image/caption pairs.

A full ``branching``-ary tree of depth ``depth`` is drawn once from the seed.
Every node owns a random unit direction; a leaf's prototype is the
normalised sum of the directions along its root-to-leaf path, so leaves that
share ancestors have similar prototypes. A record picks a leaf, emits noisy
copies of the prototype as image patches, and a caption made of the path
labels with optional filler words.
"""

from __future__ import annotations

import itertools
import json
import os
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from .textaug import Vocab

FIELDS = ("id", "patches", "tokens", "class_path", "depth")


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True)
class HierarchySpec:
    depth: int = 3
    branching: int = 4
    patches: int = 4
    patch_dim: int = 32
    noise: float = 0.1
    filler_rate: float = 0.2
    n_fillers: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.branching < 2:
            raise ValueError("branching must be >= 2")
        if self.patches < 1 or self.patch_dim < 1:
            raise ValueError("patches and patch_dim must be >= 1")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")
        if not 0 <= self.filler_rate < 1:
            raise ValueError("filler_rate must be in [0, 1)")
        if self.n_fillers < 1:
            raise ValueError("n_fillers must be >= 1")

    @property
    def n_leaves(self) -> int:
        return self.branching ** self.depth


@dataclass
class PairRecord:
    id: int
    patches: np.ndarray
    tokens: List[str]
    class_path: List[str]
    depth: int

    @property
    def leaf(self) -> str:
        return self.class_path[-1]

    @property
    def caption(self) -> str:
        return " ".join(self.tokens)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "patches": self.patches.tolist(),
            "tokens": list(self.tokens),
            "class_path": list(self.class_path),
            "depth": self.depth,
        }

    def __eq__(self, other) -> bool:
        if not isinstance(other, PairRecord):
            return NotImplemented
        return (self.id == other.id and self.tokens == other.tokens
                and self.class_path == other.class_path and self.depth == other.depth
                and self.patches.shape == other.patches.shape
                and bool(np.array_equal(self.patches, other.patches)))


def node_label(path: Sequence[int]) -> str:
    return "n" + "_".join(str(i) for i in path)


def filler_tokens(spec: HierarchySpec) -> List[str]:
    return [f"w{i}" for i in range(spec.n_fillers)]


def build_vocab(spec: HierarchySpec) -> Vocab:
    """Node labels in breadth-first order, then filler words."""
    labels = []
    for level in range(1, spec.depth + 1):
        for path in itertools.product(range(spec.branching), repeat=level):
            labels.append(node_label(path))
    return Vocab(labels + filler_tokens(spec))


@dataclass
class Hierarchy:
    spec: HierarchySpec
    directions: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def build(cls, spec: HierarchySpec) -> "Hierarchy":
        rng = np.random.default_rng([spec.seed, 0])
        tree = cls(spec)
        for level in range(1, spec.depth + 1):
            for path in itertools.product(range(spec.branching), repeat=level):
                v = rng.standard_normal(spec.patch_dim)
                tree.directions[node_label(path)] = v / np.linalg.norm(v)
        return tree

    def leaves(self) -> List[tuple]:
        return list(itertools.product(range(self.spec.branching), repeat=self.spec.depth))

    def class_path(self, leaf: Sequence[int]) -> List[str]:
        return [node_label(leaf[: k + 1]) for k in range(len(leaf))]

    def prototype(self, leaf: Sequence[int]) -> np.ndarray:
        v = np.sum([self.directions[lab] for lab in self.class_path(leaf)], axis=0)
        return v / np.linalg.norm(v)


def _record(tree: Hierarchy, rid: int) -> PairRecord:
    spec = tree.spec
    rng = np.random.default_rng([spec.seed, 1, rid])
    leaves = tree.leaves()
    leaf = leaves[int(rng.integers(len(leaves)))]
    proto = tree.prototype(leaf)
    patches = proto[None, :] + spec.noise * rng.standard_normal((spec.patches, spec.patch_dim))
    path = tree.class_path(leaf)
    fillers = filler_tokens(spec)
    tokens: List[str] = []
    # one insertion slot before each label and one at the end
    for slot in range(len(path) + 1):
        if rng.random() < spec.filler_rate:
            tokens.append(fillers[int(rng.integers(len(fillers)))])
        if slot < len(path):
            tokens.append(path[slot])
    return PairRecord(rid, patches, tokens, path, len(path))


def generate(spec: HierarchySpec, count: int, start_id: int = 0) -> List[PairRecord]:
    """Records ``start_id .. start_id + count - 1``; each depends only on (seed, id)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    tree = Hierarchy.build(spec)
    return [_record(tree, start_id + i) for i in range(count)]


def generate_splits(spec: HierarchySpec, n_train: int, n_test: int):
    """Disjoint train/test splits drawn from the same hierarchy."""
    return generate(spec, n_train), generate(spec, n_test, start_id=n_train)


def write_jsonl(records: Sequence[PairRecord], path) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json(), separators=(",", ":")))
            fh.write("\n")


def _parse_record(obj, lineno: int) -> PairRecord:
    if not isinstance(obj, dict) or set(obj) != set(FIELDS):
        got = sorted(obj) if isinstance(obj, dict) else type(obj).__name__
        raise DatasetFormatError(f"line {lineno}: expected fields {list(FIELDS)}, got {got}")
    patches = np.asarray(obj["patches"], dtype=np.float64)
    if patches.ndim != 2 or patches.shape[0] < 1:
        raise DatasetFormatError(f"line {lineno}: patches must be a non-empty matrix")
    tokens = obj["tokens"]
    if not tokens or not all(isinstance(t, str) for t in tokens):
        raise DatasetFormatError(f"line {lineno}: tokens must be a non-empty list of strings")
    return PairRecord(int(obj["id"]), patches, list(tokens), list(obj["class_path"]), int(obj["depth"]))


def read_jsonl(path) -> List[PairRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(f"line {lineno}: malformed JSON ({exc.msg})") from exc
            records.append(_parse_record(obj, lineno))
    return records


def stack_patches(records: Sequence[PairRecord]) -> np.ndarray:
    """(M, P, d_in) array of record patches."""
    return np.stack([r.patches for r in records])
