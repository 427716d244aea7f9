import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import central_diff, rel_err
from minibatch_cl.embedding import Batch, BatchCollection, EmbeddingPair
from minibatch_cl.loss import (
    avg_minibatch_loss,
    batch_gradient,
    batch_losses,
    contrastive_loss,
    full_loss,
    jensen_lower_bound,
    lm_gradient,
    lm_loss,
    one_sided_loss,
    pair_weight,
    pair_weights,
    scatter_gradient,
    stacked_batch_gradients,
)
from minibatch_cl.optim import enumerate_batches


def naive_two_sided(u, v):
    # straight transcription with python floats: sum of -log softmax terms, both directions
    n = u.shape[1]
    total = 0.0
    for i in range(n):
        row = [float(u[:, i] @ v[:, j]) for j in range(n)]
        col = [float(v[:, i] @ u[:, j]) for j in range(n)]
        total += -row[i] + math.log(sum(math.exp(r) for r in row))
        total += -col[i] + math.log(sum(math.exp(c) for c in col))
    return total / n


def test_basis_full_batch_value():
    emb = EmbeddingPair(np.eye(4), np.eye(4))
    assert contrastive_loss(emb) == pytest.approx(2 * (math.log(math.e + 3) - 1), abs=1e-12)


def test_basis_all_pairs_mean():
    emb = EmbeddingPair(np.eye(4), np.eye(4))
    out = avg_minibatch_loss(emb, enumerate_batches(4, 2))
    assert out.total == pytest.approx(2 * (math.log(math.e + 1) - 1), abs=1e-12)
    assert len(out.per_batch) == 6
    assert [i for i, _ in out.per_batch] == list(range(6))


def test_identical_columns():
    e1 = np.tile(np.eye(4)[:, :1], 4)
    emb = EmbeddingPair(e1, e1)
    assert avg_minibatch_loss(emb, enumerate_batches(4, 2)).total == pytest.approx(2 * math.log(2), abs=1e-12)
    dup = EmbeddingPair(e1[:2, :2], e1[:2, :2])
    assert contrastive_loss(dup, (0, 1)) == pytest.approx(1.386294, abs=1e-6)


def test_rotated_cross_polytope_value():
    # four unit vectors at 45, 135, 225, 315 degrees
    ang = np.pi / 4 + np.pi / 2 * np.arange(4)
    u = np.vstack([np.cos(ang), np.sin(ang)])
    assert contrastive_loss(EmbeddingPair(u, u)) == pytest.approx(1.253, abs=1e-3)


def test_single_column_loss_is_zero():
    emb = EmbeddingPair(np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]]))
    assert contrastive_loss(emb) == 0.0


def test_two_sided_is_sum_of_one_sided():
    emb = EmbeddingPair.random(6, 3, 0)
    swapped = EmbeddingPair(emb.v, emb.u)
    bt = (1, 3, 4)
    assert contrastive_loss(emb, bt) == pytest.approx(one_sided_loss(emb, bt) + one_sided_loss(swapped, bt), abs=1e-13)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 7), st.integers(1, 5), st.integers(0, 10_000))
def test_matches_naive_transcription(n, d, seed):
    emb = EmbeddingPair.random(n, d, seed)
    assert full_loss(emb) == pytest.approx(naive_two_sided(emb.u, emb.v), rel=1e-12, abs=1e-12)


def test_full_batch_equals_contrastive_on_range():
    emb = EmbeddingPair.random(5, 3, 1)
    assert contrastive_loss(emb, range(5)) == full_loss(emb)
    coll = BatchCollection.of([range(5)])
    assert avg_minibatch_loss(emb, coll).total == pytest.approx(full_loss(emb), abs=1e-15)


def test_batch_losses_order_and_values():
    emb = EmbeddingPair.random(6, 4, 2)
    coll = BatchCollection.of([(0, 5), (2, 3), (1, 4)])
    got = batch_losses(emb, coll)
    want = [contrastive_loss(emb, b) for b in coll]
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-14)


def test_rejects_bad_inputs():
    emb = EmbeddingPair.random(4, 3, 0)
    with pytest.raises(ValueError):
        contrastive_loss(emb, (0, 4))
    with pytest.raises(ValueError):
        contrastive_loss(emb, (1, 1))
    with pytest.raises(ValueError):
        avg_minibatch_loss(emb, BatchCollection(()))
    with pytest.raises(ValueError):
        EmbeddingPair(np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(ValueError):
        EmbeddingPair(np.eye(2), np.eye(3))


def test_loss_is_large_but_finite_for_adversarial_gram():
    # u_i = -v_i: every positive pair anti-aligned
    u = np.eye(3)
    emb = EmbeddingPair(u, -u)
    assert np.isfinite(full_loss(emb)) and full_loss(emb) > 2


# -- gradients ---------------------------------------------------------------

def test_lm_gradient_at_zero():
    np.testing.assert_allclose(lm_gradient(np.zeros((2, 2))), [[-0.5, 0.5], [0.5, -0.5]], atol=1e-15)


def test_lm_gradient_rejects_non_square():
    with pytest.raises(ValueError):
        lm_gradient(np.zeros((2, 3)))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 5)).map(lambda t: (t[0], t[0])),
              elements=st.floats(-1, 1, allow_nan=False)))
def test_lm_gradient_finite_difference(x):
    num = central_diff(lambda y: float(lm_loss(y)), x)
    assert rel_err(lm_gradient(x), num) <= 1e-5 or np.abs(lm_gradient(x) - num).max() < 1e-9


def test_lm_gradient_entries_sum_to_zero():
    # P and Q each sum to b, cancelling the trace of 2I
    x = np.random.default_rng(0).uniform(-1, 1, (5, 5))
    g = lm_gradient(x)
    assert abs(g.sum()) < 1e-14


def test_batch_gradient_finite_difference():
    rng = np.random.default_rng(7)
    for _ in range(20):
        emb = EmbeddingPair.random(6, 4, rng)
        bt = tuple(sorted(rng.choice(6, 3, replace=False).tolist()))
        gu, gv = batch_gradient(emb, bt)
        ub, vb = emb.u[:, bt], emb.v[:, bt]
        assert rel_err(gu, central_diff(lambda m: float(lm_loss(m.T @ vb)), ub)) <= 1e-5
        assert rel_err(gv, central_diff(lambda m: float(lm_loss(ub.T @ m)), vb)) <= 1e-5


def test_stacked_and_scattered_gradient_match_single_batches():
    emb = EmbeddingPair.random(5, 3, 3)
    idx = enumerate_batches(5, 2).index_array()
    losses, gu, gv = stacked_batch_gradients(emb, idx)
    full_u, full_v = scatter_gradient(emb, idx, gu, gv)
    want_u = np.zeros_like(emb.u)
    want_v = np.zeros_like(emb.v)
    for row in idx:
        a, b = batch_gradient(emb, tuple(row))
        want_u[:, row] += a
        want_v[:, row] += b
    np.testing.assert_allclose(full_u, want_u, atol=1e-14)
    np.testing.assert_allclose(full_v, want_v, atol=1e-14)
    np.testing.assert_allclose(losses, [contrastive_loss(emb, tuple(r)) for r in idx], atol=1e-14)


def test_etf_is_stationary_on_the_sphere():
    from minibatch_cl.geometry import make_simplex_etf

    emb = make_simplex_etf(5, 6)
    gu, gv = batch_gradient(emb, range(5))
    # tangential part of the gradient: remove the radial component per column
    tan_u = gu - emb.u * np.sum(gu * emb.u, axis=0)
    tan_v = gv - emb.v * np.sum(gv * emb.v, axis=0)
    assert np.linalg.norm(tan_u) < 1e-6 and np.linalg.norm(tan_v) < 1e-6


# -- Jensen bound and edge weights ------------------------------------------

def test_jensen_bound_orthogonal_value():
    emb = EmbeddingPair(np.eye(3), np.eye(3))
    assert jensen_lower_bound(emb, (0, 1)) == pytest.approx(2 * math.log1p(math.exp(-1)), abs=1e-12)
    assert jensen_lower_bound(emb, (0, 1)) == pytest.approx(0.626523, abs=1e-6)


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 7), st.integers(2, 6), st.integers(0, 10_000))
def test_jensen_bound_below_loss(n, d, seed):
    emb = EmbeddingPair.random(n, d, seed)
    rng = np.random.default_rng(seed)
    b = int(rng.integers(2, n + 1))
    bt = tuple(sorted(rng.choice(n, b, replace=False).tolist()))
    assert jensen_lower_bound(emb, bt) <= contrastive_loss(emb, bt) + 1e-12


def test_jensen_bound_exact_for_pairs():
    # a size-2 batch has one term per log-sum-exp, so Jensen is an equality
    emb = EmbeddingPair.random(4, 3, 5)
    for bt in itertools.combinations(range(4), 2):
        assert jensen_lower_bound(emb, bt) == pytest.approx(contrastive_loss(emb, bt), abs=1e-12)


def test_jensen_bound_rejects_singletons():
    with pytest.raises(ValueError):
        jensen_lower_bound(EmbeddingPair.random(3, 2, 0), (1,))


def test_pair_weight_values_and_symmetry():
    emb = EmbeddingPair(np.eye(3), np.eye(3))
    assert pair_weight(emb, 0, 1, 2) == pytest.approx(4 * math.log1p(math.exp(-1)), abs=1e-12)
    assert pair_weight(emb, 0, 1, 2) == pytest.approx(1.253046, abs=1e-6)
    rnd = EmbeddingPair.random(6, 3, 9)
    w = pair_weights(rnd, 3)
    assert np.array_equal(w, w.T) and np.all(np.diag(w) == 0)
    for k, l in itertools.combinations(range(6), 2):
        assert pair_weight(rnd, k, l, 3) == pytest.approx(w[k, l], abs=1e-14)
        assert pair_weight(rnd, k, l, 3) == pytest.approx(pair_weight(rnd, l, k, 3), abs=1e-15)
    with pytest.raises(ValueError):
        pair_weight(rnd, 2, 2, 3)


def test_pair_weight_relates_to_jensen_bound():
    emb = EmbeddingPair.random(5, 3, 11)
    for k, l in itertools.combinations(range(5), 2):
        assert jensen_lower_bound(emb, (k, l)) == pytest.approx(pair_weight(emb, k, l, 2) / 2, abs=1e-12)


def test_jensen_bound_is_mean_of_pair_weights():
    emb = EmbeddingPair.random(6, 4, 12)
    bt = Batch((0, 2, 3, 5))
    w = sum(pair_weight(emb, k, l, bt.b) for k, l in itertools.combinations(bt.indices, 2))
    assert jensen_lower_bound(emb, bt) == pytest.approx(w / (bt.b * (bt.b - 1)), abs=1e-12)


# -- non-quasi-convexity regression ------------------------------------------

def _geodesic_triple():
    r = math.sqrt
    u1 = np.array([[r(0.5), r(2 / 5)], [r(0.5), r(1 / 5)]])
    u2 = np.full((2, 2), r(0.5))
    v1 = u2.copy()
    v2 = np.array([[r(2 / 5), r(0.5)], [r(1 / 5), r(0.5)]])
    # endpoints must live on the sphere, so the (2/5, 1/5) columns are normalised
    a = EmbeddingPair.from_unnormalized(u1, v1)
    b = EmbeddingPair.from_unnormalized(u2, v2)
    mid = EmbeddingPair.from_unnormalized(a.u + b.u, a.v + b.v)
    return a, b, mid


def _summed_loss(emb):
    # these reference values sum the per-pair terms instead of averaging them
    return emb.n * full_loss(emb)


def test_geodesic_midpoint_exceeds_endpoints():
    a, b, mid = _geodesic_triple()
    assert _summed_loss(mid) > max(_summed_loss(a), _summed_loss(b))
    assert full_loss(mid) > max(full_loss(a), full_loss(b))


def test_geodesic_triple_reference_values():
    a, b, mid = _geodesic_triple()
    assert max(_summed_loss(a), _summed_loss(b)) == pytest.approx(2.773, abs=0.01)
    assert _summed_loss(mid) == pytest.approx(2.798, abs=0.01)
