"""Contrastive losses, the Jensen lower bound and closed-form gradients.

All losses use the natural logarithm and no temperature. For a batch of size
``b`` the two-sided loss is a function of the b x b matrix ``X = U_B^T V_B``::

    L(X) = (1/b) * (-2 tr X + sum_i logsumexp(X[i, :]) + sum_j logsumexp(X[:, j]))

and its gradient is ``(1/b) * (-2 I + P + Q)`` with ``P`` the row softmax and
``Q`` the column softmax of ``X``.
"""

from __future__ import annotations

import numpy as np

from .embedding import Batch, BatchCollection, EmbeddingPair, LossBreakdown


def _logsumexp(x: np.ndarray, axis: int) -> np.ndarray:
    m = x.max(axis=axis, keepdims=True)
    return np.squeeze(m, axis=axis) + np.log(np.exp(x - m).sum(axis=axis))


def _softmax(x: np.ndarray, axis: int) -> np.ndarray:
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def _as_batch(emb: EmbeddingPair, batch) -> Batch:
    batch = batch if isinstance(batch, Batch) else Batch(tuple(batch))
    batch.check_against(emb.n)
    return batch


def _stacked_gram(emb: EmbeddingPair, idx: np.ndarray) -> np.ndarray:
    """``(m, b, b)`` stack of ``U_B^T V_B`` for every row of ``idx``."""
    return np.einsum("dmi,dmj->mij", emb.u[:, idx], emb.v[:, idx])


def lm_loss(x: np.ndarray) -> np.ndarray:
    """Two-sided batch loss of one ``(b, b)`` matrix or a ``(m, b, b)`` stack."""
    x = np.asarray(x, dtype=float)
    b = x.shape[-1]
    diag = np.trace(x, axis1=-2, axis2=-1)
    rows = _logsumexp(x, axis=-1).sum(axis=-1)
    cols = _logsumexp(x, axis=-2).sum(axis=-1)
    return (-2.0 * diag + rows + cols) / b


def lm_gradient(x) -> np.ndarray:
    """Gradient of :func:`lm_loss` with respect to the inner-product matrix.

    Accepts a square matrix or a stack of square matrices.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim < 2 or x.shape[-1] != x.shape[-2]:
        raise ValueError(f"expected a square matrix, got shape {x.shape}")
    b = x.shape[-1]
    p = _softmax(x, axis=-1)
    q = _softmax(x, axis=-2)
    return (p + q - 2.0 * np.eye(b)) / b


def one_sided_loss(emb: EmbeddingPair, batch) -> float:
    """Mean over ``i`` in the batch of ``-log softmax_j(u_i^T v_j)[i]``."""
    batch = _as_batch(emb, batch)
    idx = np.array(batch.indices)
    x = emb.u[:, idx].T @ emb.v[:, idx]
    return float((_logsumexp(x, axis=1) - np.diag(x)).mean())


def contrastive_loss(emb: EmbeddingPair, batch=None) -> float:
    """Symmetric InfoNCE loss restricted to ``batch`` (the full batch if omitted)."""
    batch = Batch.full(emb.n) if batch is None else _as_batch(emb, batch)
    idx = np.array(batch.indices)
    return float(lm_loss(emb.u[:, idx].T @ emb.v[:, idx]))


def full_loss(emb: EmbeddingPair) -> float:
    return float(lm_loss(emb.u.T @ emb.v))


def batch_losses(emb: EmbeddingPair, coll: BatchCollection) -> np.ndarray:
    """Loss of every batch in ``coll``, in collection order."""
    coll.check_against(emb.n)
    return lm_loss(_stacked_gram(emb, coll.index_array()))


def avg_minibatch_loss(emb: EmbeddingPair, coll: BatchCollection) -> LossBreakdown:
    if len(coll) == 0:
        raise ValueError("empty batch collection")
    losses = batch_losses(emb, coll)
    return LossBreakdown(float(losses.mean()), [(i, float(l)) for i, l in enumerate(losses)])


def stacked_batch_gradients(emb: EmbeddingPair, idx: np.ndarray):
    """Per-batch gradients for an ``(m, b)`` index array.

    Returns ``(losses, grad_u, grad_v)`` where the gradients have shape
    ``(m, d, b)``; slice ``k`` holds the gradient with respect to the columns
    ``idx[k]``.
    """
    ub = emb.u[:, idx]
    vb = emb.v[:, idx]
    x = np.einsum("dmi,dmj->mij", ub, vb)
    g = lm_gradient(x)
    # dL/du_i = sum_j G_ij v_j ; dL/dv_j = sum_i G_ij u_i
    grad_u = np.einsum("dmj,mij->mdi", vb, g)
    grad_v = np.einsum("dmi,mij->mdj", ub, g)
    return lm_loss(x), grad_u, grad_v


def batch_gradient(emb: EmbeddingPair, batch) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the batch loss with respect to ``U_B`` and ``V_B`` (each d x b).

    Columns outside the batch have zero gradient; see :func:`scatter_gradient`.
    """
    batch = _as_batch(emb, batch)
    idx = np.array([batch.indices])
    _, gu, gv = stacked_batch_gradients(emb, idx)
    return gu[0], gv[0]


def scatter_gradient(emb: EmbeddingPair, idx: np.ndarray, grad_u, grad_v):
    """Sum per-batch gradients into full d x N buffers, batch by batch in order."""
    full_u = np.zeros_like(emb.u)
    full_v = np.zeros_like(emb.v)
    for k in range(idx.shape[0]):
        full_u[:, idx[k]] += grad_u[k]
        full_v[:, idx[k]] += grad_v[k]
    return full_u, full_v


def _jensen_terms(emb: EmbeddingPair, b: int) -> np.ndarray:
    """``T[i, j] = log(1 + (b-1) e^{u_i.(v_j - v_i)}) + log(1 + (b-1) e^{v_i.(u_j - u_i)})``."""
    g = emb.u.T @ emb.v  # g[i, j] = u_i . v_j
    own = np.diag(g)[:, None]
    return np.log1p((b - 1) * np.exp(g - own)) + np.log1p((b - 1) * np.exp(g.T - own))


def jensen_lower_bound(emb: EmbeddingPair, batch) -> float:
    """Pairwise lower bound on :func:`contrastive_loss` for the batch."""
    batch = _as_batch(emb, batch)
    b = batch.b
    if b < 2:
        raise ValueError("the Jensen bound needs a batch of size >= 2")
    idx = np.array(batch.indices)
    sub = EmbeddingPair(emb.u[:, idx], emb.v[:, idx])
    t = _jensen_terms(sub, b)
    np.fill_diagonal(t, 0.0)
    return float(t.sum() / (b * (b - 1)))


def pair_weights(emb: EmbeddingPair, b: int) -> np.ndarray:
    """Matrix of all edge weights ``w(k, l)``; the diagonal is zero."""
    if b < 2:
        raise ValueError("batch size must be >= 2")
    t = _jensen_terms(emb, b)
    w = t + t.T
    np.fill_diagonal(w, 0.0)
    return w


def pair_weight(emb: EmbeddingPair, k: int, l: int, b: int) -> float:
    if k == l:
        raise ValueError("pair_weight needs two distinct nodes")
    if not (0 <= k < emb.n and 0 <= l < emb.n):
        raise ValueError(f"node index out of range for N={emb.n}")
    sub = EmbeddingPair(emb.u[:, [k, l]], emb.v[:, [k, l]])
    t = _jensen_terms(sub, b)
    return float(t[0, 1] + t[1, 0])
