"""Spectral-clustering batch selection and its brute-force min-cut oracle.

Pipeline (:func:`sc_select`): pairwise weights from the Jensen bound ->
unnormalised Laplacian ``L = D - A`` -> the ``N/b`` eigenvectors with the
smallest eigenvalues -> row normalisation -> k-means -> balanced assignment
of rows to ``b`` copies of each centre via the Hungarian algorithm.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .embedding import Batch, BatchCollection, CollectionKind, EmbeddingPair
from .loss import batch_losses, pair_weights

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
KMEANS_MAX_ITER = 300
MIN_CUT_CAP = 10**5


@dataclass(frozen=True)
class AffinityGraph:
    a: np.ndarray

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"affinity matrix must be square, got {a.shape}")
        if not np.array_equal(a, a.T):
            raise ValueError("affinity matrix must be exactly symmetric")
        if np.any(np.diag(a) != 0):
            raise ValueError("affinity matrix must have a zero diagonal")
        if np.any(a < 0):
            raise ValueError("affinity weights must be nonnegative")
        a.flags.writeable = False
        object.__setattr__(self, "a", a)

    @property
    def n(self) -> int:
        return self.a.shape[0]


@dataclass(frozen=True)
class SpectralEmbedding:
    rows: np.ndarray  # N x k
    eigenvalues: np.ndarray  # ascending


def build_affinity(emb: EmbeddingPair, b: int) -> AffinityGraph:
    if emb.n < 2:
        raise ValueError("need at least two nodes")
    return AffinityGraph(pair_weights(emb, b))


def laplacian(graph: AffinityGraph) -> np.ndarray:
    a = graph.a
    return np.diag(a.sum(axis=1)) - a


def jacobi_eigh(m: np.ndarray, tol: float = JACOBI_TOL, max_sweeps: int = JACOBI_MAX_SWEEPS):
    """All eigenpairs of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps visit ``(p, q)`` pairs in row-major order and stop once the
    off-diagonal Frobenius norm drops below ``tol * max(1, ||m||_F)``.
    Returns ``(eigenvalues, eigenvectors)`` unsorted, eigenvectors as columns.
    """
    a = np.array(m, dtype=float)
    n = a.shape[0]
    vecs = np.eye(n)
    threshold = tol * max(1.0, float(np.linalg.norm(a)))
    off_mask = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        if np.linalg.norm(a[off_mask]) < threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(tau) > 1e150:
                    t = 0.5 / tau
                else:
                    t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q]
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :]
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
                vp = vecs[:, p].copy()
                vq = vecs[:, q]
                vecs[:, p] = c * vp - s * vq
                vecs[:, q] = s * vp + c * vq
    else:
        raise RuntimeError(f"Jacobi did not converge in {max_sweeps} sweeps")
    return np.diag(a).copy(), vecs


def symmetric_eigs(m: np.ndarray, k: int) -> SpectralEmbedding:
    """The ``k`` eigenpairs with the smallest eigenvalues (ascending, stable on ties)."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got {m.shape}")
    if np.abs(m - m.T).max() > 1e-9:
        raise ValueError("matrix is not symmetric")
    if not 1 <= k <= m.shape[0]:
        raise ValueError(f"k={k} out of range for N={m.shape[0]}")
    vals, vecs = jacobi_eigh(m)
    order = np.argsort(vals, kind="stable")[:k]
    return SpectralEmbedding(vecs[:, order], vals[order])


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def kmeans_objective(points: np.ndarray, labels, centers: np.ndarray) -> float:
    points = np.asarray(points, dtype=float)
    return float(((points - centers[np.asarray(labels)]) ** 2).sum())


def kmeans(points: np.ndarray, k: int, seed: int, max_iter: int = KMEANS_MAX_ITER):
    """Lloyd's algorithm from a k-means++ start.

    An emptied cluster is reseeded at the point farthest from its current
    centre. Returns ``(labels, centers)``.
    """
    x = np.asarray(points, dtype=float)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} out of range for {n} points")
    rng = np.random.default_rng(seed)

    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    closest = _sq_dists(x, centers[:1]).ravel()
    for c in range(1, k):
        total = closest.sum()
        if total <= 0:
            # every point already coincides with a centre
            pick = int(rng.integers(n))
        else:
            pick = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            pick = min(pick, n - 1)
        centers[c] = x[pick]
        closest = np.minimum(closest, _sq_dists(x, centers[c : c + 1]).ravel())

    labels = np.argmin(_sq_dists(x, centers), axis=1)
    for _ in range(max_iter):
        for c in range(k):
            members = labels == c
            if members.any():
                centers[c] = x[members].mean(axis=0)
            else:
                far = int(np.argmax(((x - centers[labels]) ** 2).sum(axis=1)))
                centers[c] = x[far]
                labels[far] = c
        new = np.argmin(_sq_dists(x, centers), axis=1)
        if np.array_equal(new, labels):
            break
        labels = new
    return labels.tolist(), centers


def hungarian(cost: np.ndarray) -> np.ndarray:
    """Minimum-cost perfect matching of a square cost matrix.

    Shortest augmenting paths with row/column potentials, O(n^3). Returns
    ``col`` with ``col[i]`` the column assigned to row ``i``.
    """
    c = np.asarray(cost, dtype=float)
    n = c.shape[0]
    if c.ndim != 2 or c.shape[1] != n:
        raise ValueError(f"cost matrix must be square, got {c.shape}")
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    row_of = np.zeros(n + 1, dtype=np.intp)  # row_of[j]: 1-based row matched to column j
    way = np.zeros(n + 1, dtype=np.intp)
    for i in range(1, n + 1):
        row_of[0] = i
        j0 = 0
        minv = np.full(n + 1, inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = row_of[j0]
            free = ~used[1:]
            cur = c[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[row_of[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if row_of[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            row_of[j0] = row_of[j1]
            j0 = j1
    col = np.empty(n, dtype=np.intp)
    col[row_of[1:] - 1] = np.arange(n)
    return col


def balanced_assign(points: np.ndarray, centers: np.ndarray, b: int) -> BatchCollection:
    """Assign exactly ``b`` points to each centre, minimising total Euclidean distance."""
    x = np.asarray(points, dtype=float)
    z = np.asarray(centers, dtype=float)
    n, k = x.shape[0], z.shape[0]
    if n % b or n // b != k:
        raise ValueError(f"{n} points cannot fill {k} centres with exactly b={b} each")
    dist = np.sqrt(_sq_dists(x, z))
    slots = np.repeat(dist, b, axis=1)  # slot s belongs to centre s // b
    col = hungarian(slots)
    groups = [[] for _ in range(k)]
    for i, s in enumerate(col):
        groups[s // b].append(i)
    return BatchCollection(tuple(Batch(tuple(g)) for g in groups), CollectionKind.PARTITION)


def assignment_cost(points: np.ndarray, centers: np.ndarray, coll: BatchCollection) -> float:
    """Total point-to-centre distance when batch ``j`` is served by centre ``j``."""
    x = np.asarray(points, dtype=float)
    z = np.asarray(centers, dtype=float)
    return float(sum(np.linalg.norm(x[list(bt)] - z[j], axis=1).sum() for j, bt in enumerate(coll)))


def _sc_on_affinity(graph: AffinityGraph, b: int, seed: int) -> BatchCollection:
    n = graph.n
    if n % b:
        raise ValueError(f"N={n} is not divisible by b={b}")
    k = n // b
    spec = symmetric_eigs(laplacian(graph), k)
    rows = spec.rows
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    rows = rows / np.where(norms > 0, norms, 1.0)
    _, centers = kmeans(rows, k, seed)
    return balanced_assign(rows, centers, b)


def sc_select(emb: EmbeddingPair, b: int, seed: int) -> BatchCollection:
    """Partition ``range(N)`` into ``N/b`` batches that favour high mutual loss."""
    if emb.n % b:
        raise ValueError(f"N={emb.n} is not divisible by b={b}")
    return _sc_on_affinity(build_affinity(emb, b), b, seed)


def chunked_sc_select(emb: EmbeddingPair, b: int, chunk_k: int, seed: int) -> BatchCollection:
    """:func:`sc_select` run independently on random chunks of ``chunk_k * b`` pairs.

    Chunk membership comes from ``default_rng(seed)``; chunk ``c`` is clustered
    with seed ``seed + c`` on its members in ascending index order.
    """
    size = chunk_k * b
    if chunk_k < 1 or emb.n % size:
        raise ValueError(f"N={emb.n} is not divisible by chunk size {chunk_k}*{b}")
    perm = np.random.default_rng(seed).permutation(emb.n)
    batches = []
    for c, start in enumerate(range(0, emb.n, size)):
        members = np.sort(perm[start : start + size])
        sub = EmbeddingPair(emb.u[:, members], emb.v[:, members])
        for bt in sc_select(sub, b, seed + c):
            batches.append(Batch(tuple(int(members[i]) for i in bt)))
    return BatchCollection(tuple(batches), CollectionKind.PARTITION)


def within_batch_weight(graph: AffinityGraph, coll: BatchCollection) -> float:
    a = graph.a
    return float(sum(a[np.ix_(bt.indices, bt.indices)].sum() / 2.0 for bt in coll))


def cut_weight(graph: AffinityGraph, coll: BatchCollection) -> float:
    label = np.empty(graph.n, dtype=np.intp)
    for j, bt in enumerate(coll):
        label[list(bt)] = j
    crossing = label[:, None] != label[None, :]
    return float(graph.a[crossing].sum() / 2.0)


def count_balanced_partitions(n: int, b: int) -> int:
    k = n // b
    return math.factorial(n) // (math.factorial(b) ** k * math.factorial(k))


def iter_balanced_partitions(n: int, b: int):
    """Unordered partitions of ``range(n)`` into groups of ``b``, in lexicographic order.

    Each group is sorted and groups are ordered by their smallest element.
    """

    def rec(remaining):
        if not remaining:
            yield ()
            return
        first, rest = remaining[0], remaining[1:]
        for others in itertools.combinations(rest, b - 1):
            group = (first,) + others
            left = tuple(i for i in rest if i not in others)
            for tail in rec(left):
                yield (group,) + tail

    yield from rec(tuple(range(n)))


def brute_force_min_cut(graph: AffinityGraph, b: int, cap: int = MIN_CUT_CAP) -> BatchCollection:
    """Exhaustive balanced partition with the largest within-batch weight.

    Maximising within-batch weight is the same as minimising the cut, since
    the two add up to the total edge weight. Ties keep the first partition in
    lexicographic order.
    """
    n = graph.n
    if n % b:
        raise ValueError(f"N={n} is not divisible by b={b}")
    count = count_balanced_partitions(n, b)
    if count > cap:
        raise ValueError(f"{count} balanced partitions exceed the cap of {cap}")
    a = graph.a
    best, best_w = None, -np.inf
    for part in iter_balanced_partitions(n, b):
        w = sum(a[i, j] for g in part for i, j in itertools.combinations(g, 2))
        if w > best_w:
            best, best_w = part, w
    return BatchCollection(tuple(Batch(g) for g in best), CollectionKind.PARTITION)


def batch_loss_histogram(emb: EmbeddingPair, coll: BatchCollection, bins: int) -> list[tuple[float, int]]:
    """Counts of per-batch losses in ``bins`` equal-width bins over [min, max].

    When every loss is identical all batches land in the first bin.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    losses = batch_losses(emb, coll)
    lo, hi = float(losses.min()), float(losses.max())
    counts = [0] * bins
    if hi == lo:
        counts[0] = len(losses)
        width = 0.0
    else:
        width = (hi - lo) / bins
        for x in losses:
            counts[min(int((x - lo) / width), bins - 1)] += 1
    return [(lo + j * width, counts[j]) for j in range(bins)]
