import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minibatch_cl.embedding import EmbeddingPair
from minibatch_cl.geometry import (
    OracleKind,
    aligned_cross_polytope_gram,
    antipode_pairing,
    classify_configuration,
    default_oracle_gram,
    etf_gram,
    gram,
    make_cross_polytope,
    make_simplex_etf,
    oracle_distance,
)
from minibatch_cl.loss import full_loss


@pytest.mark.parametrize("n,d", [(2, 1), (3, 2), (4, 3), (4, 8), (8, 16), (9, 8)])
def test_simplex_etf_gram(n, d):
    emb = make_simplex_etf(n, d)
    assert emb.u.shape == (d, n)
    np.testing.assert_allclose(gram(emb), etf_gram(n), atol=1e-14)
    np.testing.assert_allclose(emb.u.sum(axis=1), 0, atol=1e-13)
    # the Gram matrix of a simplex has rank n - 1
    assert np.linalg.matrix_rank(gram(emb), tol=1e-10) == n - 1


def test_simplex_etf_rejects_too_many_points():
    with pytest.raises(ValueError):
        make_simplex_etf(5, 3)
    with pytest.raises(ValueError):
        make_simplex_etf(1, 3)


def test_etf_gram_eigenvalues():
    # spectrum of n/(n-1) (I - 11^T / n): one zero and n-1 copies of n/(n-1)
    n = 6
    vals = np.linalg.eigvalsh(etf_gram(n))
    np.testing.assert_allclose(vals, [0] + [n / (n - 1)] * (n - 1), atol=1e-12)


def test_etf_loss_beats_random_configurations():
    etf = full_loss(make_simplex_etf(6, 8))
    rng = np.random.default_rng(0)
    assert all(full_loss(EmbeddingPair.random(6, 8, rng)) > etf for _ in range(200))


def test_etf_is_a_local_minimum_of_the_full_loss():
    # small random perturbations on the sphere never decrease the loss
    etf = make_simplex_etf(5, 6)
    base = full_loss(etf)
    rng = np.random.default_rng(1)
    for _ in range(100):
        pert = EmbeddingPair.from_unnormalized(etf.u + 1e-3 * rng.standard_normal(etf.u.shape),
                                               etf.v + 1e-3 * rng.standard_normal(etf.v.shape))
        assert full_loss(pert) >= base - 1e-12


def test_cross_polytope_structure():
    emb = make_cross_polytope(3)
    g = gram(emb)
    assert np.array_equal(np.diag(g), np.ones(6))
    assert np.array_equal(np.sort(g, axis=1)[:, 0], -np.ones(6))
    assert np.count_nonzero(g) == 12


def test_cross_polytope_loss_values():
    # direct python evaluation of the two-sided loss for +-e_i: every row has e, e^{-1} and N-2 ones
    for d in (2, 4):
        n = 2 * d
        row = -1 + math.log(math.e + math.exp(-1) + (n - 2))
        assert full_loss(make_cross_polytope(d)) == pytest.approx(2 * row, abs=1e-13)
    assert full_loss(make_cross_polytope(2)) == pytest.approx(1.2530467500728912, abs=1e-13)


def test_cross_polytope_beats_random_at_n_equals_2d():
    target = full_loss(make_cross_polytope(4))
    rng = np.random.default_rng(2)
    assert all(full_loss(EmbeddingPair.random(8, 4, rng)) > target for _ in range(200))


def test_oracle_distance_zero_iff_same_gram():
    etf = make_simplex_etf(4, 8)
    assert oracle_distance(etf, etf) == 0.0
    assert oracle_distance(etf, etf_gram(4)) < 1e-14
    # rotation leaves the Gram matrix unchanged
    q, _ = np.linalg.qr(np.random.default_rng(3).standard_normal((8, 8)))
    rot = EmbeddingPair.from_unnormalized(q @ etf.u, q @ etf.v)
    assert oracle_distance(rot, etf) < 1e-12
    with pytest.raises(ValueError):
        oracle_distance(etf, np.eye(3))


def test_random_state_far_from_etf():
    rng = np.random.default_rng(4)
    dists = [oracle_distance(EmbeddingPair.random(8, 16, rng), etf_gram(8)) for _ in range(100)]
    assert min(dists) > 1


def test_classification():
    assert classify_configuration(make_simplex_etf(5, 7)) is OracleKind.SIMPLEX_ETF
    assert classify_configuration(make_cross_polytope(3)) is OracleKind.CROSS_POLYTOPE
    assert classify_configuration(EmbeddingPair.random(6, 3, 5)) is None
    # N=2: the ETF and the cross-polytope coincide; the ETF label wins
    assert classify_configuration(make_cross_polytope(1)) is OracleKind.SIMPLEX_ETF
    with pytest.raises(ValueError):
        classify_configuration(make_cross_polytope(2), tol=0)


def test_classification_tolerance_boundary():
    etf = make_simplex_etf(4, 4)
    rng = np.random.default_rng(6)
    noisy = EmbeddingPair.from_unnormalized(etf.u + 0.002 * rng.standard_normal((4, 4)), etf.u)
    assert classify_configuration(noisy, tol=0.05) is OracleKind.SIMPLEX_ETF
    assert classify_configuration(noisy, tol=1e-6) is None


def test_classification_rejects_u_not_equal_v():
    # same Gram matrix as the ETF but v is a rotated copy of u
    etf = make_simplex_etf(3, 3)
    q = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1.0]])
    assert classify_configuration(EmbeddingPair(etf.u, q @ etf.u)) is None


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 5), st.integers(0, 1000))
def test_permuted_cross_polytope_pairing(d, seed):
    rng = np.random.default_rng(seed)
    perm = rng.permutation(2 * d)
    cp = make_cross_polytope(d)
    emb = EmbeddingPair(cp.u[:, perm], cp.v[:, perm])
    partner = antipode_pairing(gram(emb))
    assert partner is not None
    for i in range(2 * d):
        assert np.allclose(emb.u[:, partner[i]], -emb.u[:, i])
    assert oracle_distance(emb, aligned_cross_polytope_gram(gram(emb))) == 0.0
    assert classify_configuration(emb) is OracleKind.CROSS_POLYTOPE


def test_antipode_pairing_none_without_involution():
    g = np.array([[1, -0.9, -0.1], [-0.9, 1, -0.8], [-0.1, -0.8, 1.0]])
    assert antipode_pairing(g) is None


def test_default_oracle_choice():
    assert np.array_equal(default_oracle_gram(EmbeddingPair.random(8, 16, 0)), etf_gram(8))
    g = default_oracle_gram(EmbeddingPair.random(8, 4, 0))
    assert g is not None and g.shape == (8, 8)
    assert sorted(np.abs(g).sum(axis=1)) == [2.0] * 8
    assert default_oracle_gram(EmbeddingPair.random(7, 3, 0)) is None


def test_cross_polytope_n8_value_brute_force():
    # loss at N=8, d=4 through an independent nested-loop evaluation
    u = make_cross_polytope(4).u
    total = 0.0
    for i in range(8):
        row = [u[:, i] @ u[:, j] for j in range(8)]
        total += 2 * (-row[i] + math.log(sum(math.exp(x) for x in row)))
    assert full_loss(make_cross_polytope(4)) == pytest.approx(total / 8, abs=1e-13)
    assert full_loss(make_cross_polytope(4)) == pytest.approx(2.413505, abs=1e-6)
