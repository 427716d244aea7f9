"""Closed-form optimal configurations and distances to them."""

from __future__ import annotations

import enum

import numpy as np

from .embedding import EmbeddingPair

DEFAULT_CLASSIFY_TOL = 0.05


class OracleKind(enum.Enum):
    SIMPLEX_ETF = "simplex_etf"
    CROSS_POLYTOPE = "cross_polytope"


def _helmert_basis(n: int) -> np.ndarray:
    """Orthonormal basis (n x (n-1)) of the vectors in R^n summing to zero."""
    basis = np.zeros((n, n - 1))
    for k in range(1, n):
        basis[:k, k - 1] = 1.0
        basis[k, k - 1] = -k
        basis[:, k - 1] /= np.sqrt(k * (k + 1))
    return basis


def make_simplex_etf(n: int, d: int) -> EmbeddingPair:
    """``U = V`` with unit columns and pairwise inner products ``-1/(n-1)``.

    The n standard basis vectors of R^n are centred, written in an orthonormal
    basis of their (n-1)-dimensional span, rescaled to unit length and padded
    with zero rows up to dimension d.
    """
    if n < 2:
        raise ValueError("a simplex ETF needs n >= 2")
    if n > d + 1:
        raise ValueError(f"simplex ETF with n={n} does not fit in d={d} (needs n <= d + 1)")
    centred = np.eye(n) - 1.0 / n
    coords = _helmert_basis(n).T @ centred  # (n-1) x n
    coords /= np.sqrt(1.0 - 1.0 / n)
    u = np.zeros((d, n))
    u[: n - 1] = coords
    # re-normalise to absorb the last ulp of rounding
    u /= np.linalg.norm(u, axis=0)
    return EmbeddingPair(u, u)


def make_cross_polytope(d: int) -> EmbeddingPair:
    """``U = V = [e_1 .. e_d, -e_1 .. -e_d]`` (N = 2d)."""
    if d < 1:
        raise ValueError("d must be >= 1")
    u = np.hstack([np.eye(d), -np.eye(d)])
    return EmbeddingPair(u, u)


def gram(emb: EmbeddingPair) -> np.ndarray:
    """``g[i, j] = u_i . v_j``."""
    return emb.u.T @ emb.v


def oracle_distance(emb: EmbeddingPair, oracle) -> float:
    """Frobenius distance between the two Gram matrices.

    ``oracle`` may be an :class:`EmbeddingPair` or a precomputed Gram matrix.
    """
    target = gram(oracle) if isinstance(oracle, EmbeddingPair) else np.asarray(oracle)
    g = gram(emb)
    if g.shape != target.shape:
        raise ValueError(f"gram shapes differ: {g.shape} vs {target.shape}")
    return float(np.linalg.norm(g - target))


def etf_gram(n: int) -> np.ndarray:
    g = np.full((n, n), -1.0 / (n - 1))
    np.fill_diagonal(g, 1.0)
    return g


def antipode_pairing(g: np.ndarray) -> np.ndarray | None:
    """Partner of each row: its most negative off-diagonal entry (lowest index on ties).

    Returns ``None`` unless the partner map is an involution without fixed points.
    """
    n = g.shape[0]
    masked = np.array(g, dtype=float)
    np.fill_diagonal(masked, np.inf)
    partner = np.argmin(masked, axis=1)
    if np.any(partner[partner] != np.arange(n)):
        return None
    return partner


def cross_polytope_gram(partner: np.ndarray) -> np.ndarray:
    n = len(partner)
    g = np.eye(n)
    g[np.arange(n), partner] = -1.0
    return g


def aligned_cross_polytope_gram(g: np.ndarray) -> np.ndarray:
    """Cross-polytope Gram matrix whose antipodes follow the pairing read off ``g``.

    If ``g`` does not define a consistent pairing, columns are paired as
    ``(0, 1), (2, 3), ...`` so the distance stays finite and large.
    """
    partner = antipode_pairing(g)
    if partner is None:
        partner = np.arange(g.shape[0]) ^ 1
    return cross_polytope_gram(partner)


def default_oracle_gram(emb: EmbeddingPair) -> np.ndarray | None:
    """Target Gram matrix for the current state, when the optimum is known.

    Simplex ETF when ``N <= d + 1``; the cross-polytope aligned to the current
    antipode pairing when ``N = 2d``; otherwise ``None``.
    """
    n, d = emb.n, emb.d
    if 2 <= n <= d + 1:
        return etf_gram(n)
    if n == 2 * d:
        return aligned_cross_polytope_gram(gram(emb))
    return None


def classify_configuration(emb: EmbeddingPair, tol: float = DEFAULT_CLASSIFY_TOL) -> OracleKind | None:
    if tol <= 0:
        raise ValueError("tol must be positive")
    g = gram(emb)
    n = emb.n
    if n >= 2:
        if np.abs(g - etf_gram(n)).max() <= tol and np.abs(emb.u - emb.v).max() <= tol:
            return OracleKind.SIMPLEX_ETF
    if n >= 2 and n % 2 == 0:
        partner = antipode_pairing(g)
        if partner is not None and np.abs(g - cross_polytope_gram(partner)).max() <= tol:
            return OracleKind.CROSS_POLYTOPE
    return None
