"""Embedding pairs and batch index containers."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

NORM_TOL = 1e-9


def normalize_columns(x: np.ndarray) -> np.ndarray:
    """Return a copy of ``x`` with every column scaled to unit Euclidean norm."""
    x = np.asarray(x, dtype=float)
    return x / np.linalg.norm(x, axis=0, keepdims=True)


@dataclass(frozen=True)
class EmbeddingPair:
    """Two d x N matrices whose columns are the paired unit embeddings.

    Column ``i`` of ``u`` and column ``i`` of ``v`` form the i-th positive pair.
    The stored arrays are read-only copies, so a pair can be shared freely.
    """

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.array(self.u, dtype=float, ndmin=2)
        v = np.array(self.v, dtype=float, ndmin=2)
        if u.ndim != 2 or u.shape != v.shape:
            raise ValueError(f"u and v must be 2-D with equal shape, got {u.shape} and {v.shape}")
        if u.shape[1] == 0:
            raise ValueError("an embedding pair needs at least one column")
        if not (np.isfinite(u).all() and np.isfinite(v).all()):
            raise ValueError("embeddings contain non-finite entries")
        for name, m in (("u", u), ("v", v)):
            err = np.abs(np.linalg.norm(m, axis=0) - 1.0).max()
            if err > NORM_TOL:
                raise ValueError(f"columns of {name} are not unit norm (max deviation {err:.3g})")
        u.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def d(self) -> int:
        return self.u.shape[0]

    @property
    def n(self) -> int:
        return self.u.shape[1]

    @classmethod
    def from_unnormalized(cls, u, v) -> "EmbeddingPair":
        return cls(normalize_columns(u), normalize_columns(v))

    @classmethod
    def symmetric(cls, u) -> "EmbeddingPair":
        """Pair with ``v = u``."""
        return cls(u, u)

    @classmethod
    def random(cls, n: int, d: int, seed: int | np.random.Generator) -> "EmbeddingPair":
        """Standard-normal columns projected to the sphere; ``u`` is drawn before ``v``."""
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        u = rng.standard_normal((d, n))
        v = rng.standard_normal((d, n))
        return cls.from_unnormalized(u, v)


@dataclass(frozen=True)
class Batch:
    """An ordered set of distinct, 0-based sample indices."""

    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if not idx:
            raise ValueError("a batch must contain at least one index")
        if min(idx) < 0:
            raise ValueError(f"negative index in batch {idx}")
        if len(set(idx)) != len(idx):
            raise ValueError(f"duplicate indices in batch {idx}")
        object.__setattr__(self, "indices", idx)

    @property
    def b(self) -> int:
        return len(self.indices)

    def check_against(self, n: int) -> None:
        if max(self.indices) >= n:
            raise ValueError(f"batch {self.indices} has an index outside [0, {n})")

    def __iter__(self):
        return iter(self.indices)

    def __len__(self):
        return len(self.indices)

    @classmethod
    def full(cls, n: int) -> "Batch":
        return cls(tuple(range(n)))


class CollectionKind(enum.Enum):
    PARTITION = "partition"
    GENERAL = "general"


@dataclass(frozen=True)
class BatchCollection:
    """Equal-size batches; ``PARTITION`` collections tile ``range(N)`` exactly."""

    batches: tuple[Batch, ...]
    kind: CollectionKind = CollectionKind.GENERAL

    def __post_init__(self):
        batches = tuple(b if isinstance(b, Batch) else Batch(tuple(b)) for b in self.batches)
        if not batches:
            raise ValueError("a batch collection must not be empty")
        sizes = {b.b for b in batches}
        if len(sizes) != 1:
            raise ValueError(f"all batches must share one size, got sizes {sorted(sizes)}")
        if self.kind is CollectionKind.PARTITION:
            seen = sorted(i for b in batches for i in b)
            if seen != list(range(len(seen))):
                raise ValueError("partition batches must be disjoint and cover range(N)")
        object.__setattr__(self, "batches", batches)

    @property
    def b(self) -> int:
        return self.batches[0].b

    def __len__(self):
        return len(self.batches)

    def __iter__(self):
        return iter(self.batches)

    def __getitem__(self, i):
        return self.batches[i]

    def index_array(self) -> np.ndarray:
        """Indices as an ``(len, b)`` integer array."""
        return np.array([b.indices for b in self.batches], dtype=np.intp)

    def check_against(self, n: int) -> None:
        for b in self.batches:
            b.check_against(n)

    @classmethod
    def of(cls, batches: Iterable[Sequence[int]], partition: bool = False) -> "BatchCollection":
        kind = CollectionKind.PARTITION if partition else CollectionKind.GENERAL
        return cls(tuple(Batch(tuple(b)) for b in batches), kind)


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    per_batch: list[tuple[int, float]] = field(default_factory=list)
