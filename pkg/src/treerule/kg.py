"""Knowledge graph loading and per-relation adjacency matrices."""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from treerule.sparse import SparseBinaryMatrix

SPLITS = ("train", "valid", "test")


class KGLoadError(ValueError):
    pass


class Vocabulary:
    """Bijective label <-> dense id table."""

    def __init__(self, labels=()):
        self._labels: list[str] = []
        self._ids: dict[str, int] = {}
        for label in labels:
            self.add(label)

    def add(self, label: str) -> int:
        idx = self._ids.get(label)
        if idx is None:
            idx = len(self._labels)
            self._ids[label] = idx
            self._labels.append(label)
        return idx

    def id(self, label: str) -> int:
        return self._ids[label]

    def get(self, label: str, default=None):
        return self._ids.get(label, default)

    def label(self, idx: int) -> str:
        return self._labels[idx]

    def __contains__(self, label) -> bool:
        return label in self._ids

    def __len__(self) -> int:
        return len(self._labels)

    def __iter__(self):
        return iter(self._labels)


@dataclass(eq=False)
class KnowledgeGraph:
    entities: Vocabulary
    relations: Vocabulary
    train: np.ndarray
    valid: np.ndarray = field(default_factory=lambda: np.empty((0, 3), dtype=np.int64))
    test: np.ndarray = field(default_factory=lambda: np.empty((0, 3), dtype=np.int64))
    name: str = ""

    def __post_init__(self):
        n = len(self.entities)
        self.adjacency: list[SparseBinaryMatrix] = []
        self.adjacency_t: list[SparseBinaryMatrix] = []
        for r in range(len(self.relations)):
            sel = self.train[self.train[:, 1] == r]
            m = SparseBinaryMatrix.from_pairs(sel[:, 0], sel[:, 2], (n, n))
            self.adjacency.append(m)
            self.adjacency_t.append(m.transpose())
        self._train_set = None
        self._cache: dict = {}  # derived lookup tables, see treerule.reasoning

    @classmethod
    def from_triples(cls, train, valid=(), test=(), name: str = "") -> "KnowledgeGraph":
        """Build from labeled ``(head, relation, tail)`` triples."""
        entities, relations = Vocabulary(), Vocabulary()

        def encode(triples):
            rows = []
            for h, r, t in triples:
                rows.append((entities.add(h), relations.add(r), entities.add(t)))
            return _dedup(rows)

        tr, va, te = encode(train), encode(valid), encode(test)
        return cls(entities, relations, tr, va, te, name=name)

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    def relation_matrix(self, r: int, inverse: bool = False) -> SparseBinaryMatrix:
        """``M_r``, or its transpose when ``inverse`` is set."""
        if not 0 <= r < len(self.adjacency):
            raise IndexError(f"relation id {r} out of range")
        return self.adjacency_t[r] if inverse else self.adjacency[r]

    def train_set(self) -> set[tuple[int, int, int]]:
        if self._train_set is None:
            self._train_set = set(map(tuple, self.train.tolist()))
        return self._train_set

    def all_triples(self) -> np.ndarray:
        return _dedup(np.concatenate([self.train, self.valid, self.test]).tolist())


def _dedup(rows) -> np.ndarray:
    if len(rows) == 0:
        return np.empty((0, 3), dtype=np.int64)
    arr = np.unique(np.asarray(rows, dtype=np.int64).reshape(-1, 3), axis=0)
    return arr


def _read_split(path: Path):
    if not path.is_file():
        raise KGLoadError(f"missing split file: {path}")
    triples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise KGLoadError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
            parts = [p.strip() for p in parts]
            if not all(parts):
                raise KGLoadError(f"{path}:{lineno}: empty field")
            triples.append(tuple(parts))
    return triples


def load_split(directory) -> KnowledgeGraph:
    """Load ``train.txt``, ``valid.txt`` and ``test.txt`` from a directory.

    Only train facts populate the adjacency matrices; entities and relations
    from all three splits are interned so held-out queries stay encodable.
    """
    directory = Path(directory)
    splits = {s: _read_split(directory / f"{s}.txt") for s in SPLITS}
    if not splits["train"]:
        raise KGLoadError(f"{directory / 'train.txt'}: train split is empty")
    return KnowledgeGraph.from_triples(
        splits["train"], splits["valid"], splits["test"], name=directory.name
    )


def resolve_kg_dir(path) -> Path:
    """Resolve a dataset path, falling back to ``$TREERULE_DATA/<path>``."""
    p = Path(path)
    if p.is_dir():
        return p
    root = os.environ.get("TREERULE_DATA")
    if root and (Path(root) / p).is_dir():
        return Path(root) / p
    return p
