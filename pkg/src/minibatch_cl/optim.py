"""Projected gradient descent over embedding pairs, SGD and Ordered SGD.

Randomness
----------
Every run draws from NumPy's PCG64 generator. With-replacement variants use
one stream, ``default_rng(seed)``, for the whole run. Without-replacement
variants reshuffle once per epoch and draw epoch ``e`` (0-based) from its own
stream ``default_rng([seed, e])``, so an epoch's partition does not depend on
how many draws earlier epochs made.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .embedding import Batch, BatchCollection, CollectionKind, EmbeddingPair, normalize_columns
from .geometry import default_oracle_gram
from .loss import batch_losses, full_loss, scatter_gradient, stacked_batch_gradients

ENUMERATION_CAP = 10**6


class Variant(enum.Enum):
    FULL_BATCH_GD = "full_batch_gd"
    ALL_NCB_GD = "all_ncb_gd"
    SUBSET_GD = "subset_gd"
    SGD_WITH_REPLACEMENT = "sgd_with_replacement"
    SGD_WITHOUT_REPLACEMENT = "sgd_without_replacement"
    OSGD = "osgd"
    OSGD_WITHOUT_REPLACEMENT = "osgd_without_replacement"


_SAMPLED = {
    Variant.SGD_WITH_REPLACEMENT,
    Variant.SGD_WITHOUT_REPLACEMENT,
    Variant.OSGD,
    Variant.OSGD_WITHOUT_REPLACEMENT,
}
_ORDERED = {Variant.OSGD, Variant.OSGD_WITHOUT_REPLACEMENT}
_EPOCH = {Variant.SGD_WITHOUT_REPLACEMENT, Variant.OSGD_WITHOUT_REPLACEMENT}


@dataclass
class OptimizerConfig:
    """Settings for :func:`run_optimizer`.

    ``eta`` is either a constant step size or one value per step. ``b`` is the
    mini-batch size used by every variant except full-batch GD and subset GD.
    ``k`` batches are drawn per step by the sampled variants; the ordered
    variants keep the ``q`` with the largest losses.
    """

    variant: Variant = Variant.FULL_BATCH_GD
    eta: float | Sequence[float] = 0.5
    steps: int = 500
    seed: int = 0
    b: int = 2
    k: int = 1
    q: int = 1

    def __post_init__(self):
        self.variant = Variant(self.variant)
        if self.steps < 1:
            raise ValueError("steps must be positive")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must be an unsigned 64-bit integer")
        if isinstance(self.eta, (int, float)):
            if not self.eta > 0:
                raise ValueError("eta must be positive")
        else:
            self.eta = [float(e) for e in self.eta]
            if len(self.eta) != self.steps:
                raise ValueError(f"eta schedule has {len(self.eta)} entries for {self.steps} steps")
            if any(not e > 0 for e in self.eta):
                raise ValueError("every scheduled eta must be positive")
        if self.b < 2:
            raise ValueError("batch size b must be >= 2")
        if self.k < 1 or self.q < 1:
            raise ValueError("k and q must be positive")
        if self.q > self.k:
            raise ValueError(f"q={self.q} exceeds k={self.k}")

    def eta_at(self, step: int) -> float:
        return self.eta if isinstance(self.eta, (int, float)) else self.eta[step]


@dataclass(frozen=True)
class TraceRecord:
    step: int
    full_loss: float
    oracle_dist: float | None
    batches: tuple[tuple[int, ...], ...]


@dataclass
class RunTrace:
    records: list[TraceRecord] = field(default_factory=list)
    final: EmbeddingPair | None = None

    def append(self, record: TraceRecord) -> None:
        if self.records and record.step <= self.records[-1].step:
            raise ValueError("trace steps must be strictly increasing")
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    @property
    def losses(self) -> np.ndarray:
        return np.array([r.full_loss for r in self.records])

    @property
    def oracle_dists(self) -> np.ndarray:
        return np.array([np.nan if r.oracle_dist is None else r.oracle_dist for r in self.records])


def enumerate_batches(n: int, b: int, cap: int = ENUMERATION_CAP) -> BatchCollection:
    """All ``C(n, b)`` size-b subsets in lexicographic order."""
    if not 2 <= b <= n:
        raise ValueError(f"need 2 <= b <= n, got b={b}, n={n}")
    count = math.comb(n, b)
    if count > cap:
        raise ValueError(f"refusing to enumerate C({n},{b}) = {count} batches (cap {cap})")
    return BatchCollection(tuple(Batch(c) for c in itertools.combinations(range(n), b)))


def _descend(emb: EmbeddingPair, idx: np.ndarray, eta: float, divisor: int) -> EmbeddingPair:
    _, gu, gv = stacked_batch_gradients(emb, idx)
    full_u, full_v = scatter_gradient(emb, idx, gu, gv)
    u = emb.u - eta * (full_u / divisor)
    v = emb.v - eta * (full_v / divisor)
    return EmbeddingPair(normalize_columns(u), normalize_columns(v))


def gd_step(emb: EmbeddingPair, coll: BatchCollection, eta: float) -> EmbeddingPair:
    """One projected step on the mean loss of ``coll``; ``emb`` is left untouched."""
    coll.check_against(emb.n)
    if eta == 0:
        return emb
    idx = coll.index_array()
    return _descend(emb, idx, eta, len(idx))


def random_partition(n: int, b: int, rng: np.random.Generator) -> BatchCollection:
    if n % b:
        raise ValueError(f"N={n} is not divisible by b={b}")
    perm = rng.permutation(n)
    groups = [tuple(sorted(int(i) for i in perm[j : j + b])) for j in range(0, n, b)]
    return BatchCollection(tuple(Batch(g) for g in groups), CollectionKind.PARTITION)


def top_q(losses: np.ndarray, ids: Sequence, q: int) -> list[int]:
    """Positions of the ``q`` largest losses; ties go to the smaller id."""
    order = sorted(range(len(losses)), key=lambda i: (-losses[i], ids[i]))
    return order[:q]


def _validate(init: EmbeddingPair, cfg: OptimizerConfig, subset: BatchCollection | None) -> None:
    n = init.n
    if cfg.variant is Variant.SUBSET_GD:
        if subset is None:
            raise ValueError("SubsetGD needs a subset collection")
        subset.check_against(n)
    elif subset is not None:
        raise ValueError(f"{cfg.variant.value} does not take a subset")
    if cfg.variant in (Variant.FULL_BATCH_GD, Variant.SUBSET_GD):
        return
    if cfg.b > n:
        raise ValueError(f"b={cfg.b} exceeds N={n}")
    if cfg.variant in _EPOCH:
        if n % cfg.b:
            raise ValueError(f"N={n} is not divisible by b={cfg.b}")
        if (n // cfg.b) % cfg.k:
            raise ValueError(f"N/b={n // cfg.b} batches per epoch is not divisible by k={cfg.k}")
    elif cfg.variant in _SAMPLED:
        m = math.comb(n, cfg.b)
        if cfg.k > m:
            raise ValueError(f"k={cfg.k} exceeds the C(N,b)={m} available batches")


def run_optimizer(
    init: EmbeddingPair,
    cfg: OptimizerConfig,
    subset: BatchCollection | None = None,
    oracle=None,
) -> RunTrace:
    """Run ``cfg.steps`` projected updates and record one trace entry per step.

    ``oracle`` overrides the Gram matrix used for the ``oracle_dist`` column;
    by default it is chosen by :func:`default_oracle_gram`.
    """
    _validate(init, cfg, subset)
    n, v = init.n, cfg.variant
    if v is Variant.FULL_BATCH_GD:
        fixed = np.arange(n)[None, :]
    elif v is Variant.SUBSET_GD:
        fixed = subset.index_array()
    elif v in (Variant.ALL_NCB_GD, Variant.SGD_WITH_REPLACEMENT, Variant.OSGD):
        fixed = enumerate_batches(n, cfg.b).index_array()
    else:
        fixed = None

    rng = np.random.default_rng(cfg.seed)
    per_epoch = n // cfg.b
    epoch_batches = None
    trace = RunTrace()
    emb = init
    for t in range(cfg.steps):
        eta = cfg.eta_at(t)
        if v in (Variant.FULL_BATCH_GD, Variant.SUBSET_GD, Variant.ALL_NCB_GD):
            chosen = fixed
        elif v in (Variant.SGD_WITH_REPLACEMENT, Variant.OSGD):
            pick = np.sort(rng.choice(len(fixed), size=cfg.k, replace=False))
            chosen = fixed[pick]
        else:
            slot = t % (per_epoch // cfg.k)
            if slot == 0:
                epoch = t // (per_epoch // cfg.k)
                part = random_partition(n, cfg.b, np.random.default_rng([cfg.seed, epoch]))
                epoch_batches = part.index_array()
            chosen = epoch_batches[slot * cfg.k : (slot + 1) * cfg.k]

        if v in _ORDERED:
            probe = BatchCollection.of(chosen.tolist())
            losses = batch_losses(emb, probe)
            keep = top_q(losses, [tuple(r) for r in chosen.tolist()], cfg.q)
            chosen = chosen[sorted(keep)]

        emb = _descend(emb, chosen, eta, len(chosen))
        target = oracle if oracle is not None else default_oracle_gram(emb)
        dist = None
        if target is not None:
            target = np.asarray(target.u.T @ target.v if isinstance(target, EmbeddingPair) else target)
            dist = float(np.linalg.norm(emb.u.T @ emb.v - target))
        trace.append(
            TraceRecord(t + 1, full_loss(emb), dist, tuple(tuple(int(i) for i in r) for r in chosen))
        )
    trace.final = emb
    return trace


def gamma_weights_exact(m: int, k: int, q: int) -> list[Fraction]:
    """Rank weights of Ordered SGD as exact fractions (``j = 1..m``)."""
    if not 1 <= q <= k <= m:
        raise ValueError(f"need 1 <= q <= k <= m, got m={m}, k={k}, q={q}")
    denom = math.comb(m, k)
    return [
        Fraction(sum(math.comb(j - 1, l) * math.comb(m - j, k - l - 1) for l in range(q)), denom)
        for j in range(1, m + 1)
    ]


def gamma_weights(m: int, k: int, q: int) -> list[float]:
    """Probability-weighted rank weights; ``sum == q``.

    Weight ``j`` is the chance that the j-th largest of ``m`` losses lands
    among the top ``q`` of ``k`` uniformly drawn batches.
    """
    return [float(g) for g in gamma_weights_exact(m, k, q)]


def weighted_osgd_loss(emb: EmbeddingPair, b: int, k: int, q: int, cap: int = ENUMERATION_CAP) -> float:
    """Expected mean top-q loss among ``k`` uniformly drawn batches of size ``b``."""
    coll = enumerate_batches(emb.n, b, cap)
    losses = batch_losses(emb, coll)
    order = top_q(losses, list(range(len(losses))), len(losses))
    gamma = gamma_weights(len(losses), k, q)
    return float(sum(g * losses[i] for g, i in zip(gamma, order)) / q)
