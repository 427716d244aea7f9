"""Headless invariant battery behind ``minibatch-cl verify``.

Each check is small (well under a second) and independent of the test suite,
so an installed package can audit itself without pytest.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from . import batching, geometry, loss, optim, toy
from .embedding import BatchCollection, EmbeddingPair


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _central_diff(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    out = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        out[i] = (f(xp) - f(xm)) / (2 * h)
    return out


def _rel_err(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12))


def check_closed_form_losses():
    n, b = 6, 3
    basis = EmbeddingPair(np.eye(n), np.eye(n))
    same = EmbeddingPair(np.tile(np.eye(n)[:, :1], n), np.tile(np.eye(n)[:, :1], n))
    errs = [
        abs(loss.one_sided_loss(basis, range(n)) - (math.log(math.e + n - 1) - 1)),
        abs(loss.one_sided_loss(same, range(n)) - math.log(n)),
        abs(loss.one_sided_loss(basis, range(b)) - (math.log(math.e + b - 1) - 1)),
    ]
    return max(errs) <= 1e-12, f"max abs error {max(errs):.2e}"


def check_lm_gradient():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(10):
        x = rng.uniform(-1, 1, (4, 4))
        worst = max(worst, _rel_err(loss.lm_gradient(x), _central_diff(lambda y: float(loss.lm_loss(y)), x)))
    return worst <= 1e-5, f"max relative error {worst:.2e}"


def check_batch_gradient():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(5):
        emb = EmbeddingPair.random(5, 3, rng)
        idx = (0, 2, 3)
        gu, gv = loss.batch_gradient(emb, idx)
        ub, vb = emb.u[:, idx], emb.v[:, idx]
        fu = _central_diff(lambda m: float(loss.lm_loss(m.T @ vb)), ub.copy())
        fv = _central_diff(lambda m: float(loss.lm_loss(ub.T @ m)), vb.copy())
        worst = max(worst, _rel_err(gu, fu), _rel_err(gv, fv))
    return worst <= 1e-5, f"max relative error {worst:.2e}"


def check_jensen_bound():
    rng = np.random.default_rng(3)
    gaps = []
    for _ in range(20):
        emb = EmbeddingPair.random(6, 3, rng)
        bt = tuple(sorted(rng.choice(6, 3, replace=False).tolist()))
        gaps.append(loss.contrastive_loss(emb, bt) - loss.jensen_lower_bound(emb, bt))
    return min(gaps) >= -1e-12, f"smallest gap {min(gaps):.3e}"


def check_optimal_geometries():
    etf = geometry.make_simplex_etf(5, 6)
    cp = geometry.make_cross_polytope(3)
    ok = (
        geometry.classify_configuration(etf) is geometry.OracleKind.SIMPLEX_ETF
        and geometry.classify_configuration(cp) is geometry.OracleKind.CROSS_POLYTOPE
        and geometry.oracle_distance(etf, geometry.etf_gram(5)) < 1e-12
    )
    return ok, "ETF(5,6) and cross-polytope(3) classified"


def check_gamma_sum():
    bad = [(m, k, q) for m in range(1, 13) for k in range(1, m + 1) for q in range(1, k + 1)
           if sum(optim.gamma_weights_exact(m, k, q)) != Fraction(q)]
    return not bad, f"{len(bad)} (m,k,q) triples with sum != q"


def check_jacobi():
    rng = np.random.default_rng(4)
    a = rng.standard_normal((7, 7))
    a = a + a.T
    vals, vecs = batching.jacobi_eigh(a)
    resid = float(np.linalg.norm(a @ vecs - vecs * vals))
    orth = float(np.linalg.norm(vecs.T @ vecs - np.eye(7)))
    return resid < 1e-8 and orth < 1e-8, f"residual {resid:.1e}, orthogonality {orth:.1e}"


def check_hungarian():
    rng = np.random.default_rng(5)
    pts, centers, b = rng.standard_normal((6, 2)), rng.standard_normal((3, 2)), 2
    coll = batching.balanced_assign(pts, centers, b)
    got = batching.assignment_cost(pts, centers, coll)
    best = math.inf
    for part in batching.iter_balanced_partitions(6, b):
        # every labelling of groups to centres
        for perm in itertools.permutations(range(3)):
            c = BatchCollection.of([part[p] for p in perm])
            best = min(best, batching.assignment_cost(pts, centers, c))
    return abs(got - best) < 1e-9, f"hungarian {got:.6f} vs exhaustive {best:.6f}"


def check_sc_partition():
    emb = EmbeddingPair.random(12, 4, 6)
    coll = batching.sc_select(emb, 3, 0)
    again = batching.sc_select(emb, 3, 0)
    members = sorted(i for bt in coll for i in bt)
    ok = members == list(range(12)) and all(bt.b == 3 for bt in coll) and coll == again
    return ok, "sc_select returns a deterministic exact partition"


def check_toy_gradient():
    s = toy.ToyState((0.05, 0.2, 0.5, 0.7), 0.05)
    worst = 0.0
    for bt in toy.TOY_BATCHES:
        num = _central_diff(lambda th: toy._batch_loss(th, bt), np.array(s.theta))
        worst = max(worst, float(np.abs(toy.toy_theta_gradient(s, bt) - num).max()))
    return worst <= 1e-6, f"max abs error {worst:.2e}"


def check_toy_class_losses():
    eps = 0.1
    s = toy.ToyState.initial(eps)
    got = (toy.toy_batch_loss(s, (0, 1)), toy.toy_batch_loss(s, (0, 2)), toy.toy_batch_loss(s, (0, 3)))
    want = toy.symmetric_class_losses(eps)
    err = max(abs(a - b) for a, b in zip(got, want))
    return err < 1e-12 and got[0] > got[2] > got[1], f"max abs error {err:.2e}"


CHECKS: list[tuple[str, Callable[[], tuple[bool, str]]]] = [
    ("closed_form_losses", check_closed_form_losses),
    ("lm_gradient_finite_difference", check_lm_gradient),
    ("batch_gradient_finite_difference", check_batch_gradient),
    ("jensen_lower_bound", check_jensen_bound),
    ("optimal_geometries", check_optimal_geometries),
    ("gamma_weights_sum_to_q", check_gamma_sum),
    ("jacobi_eigenpairs", check_jacobi),
    ("hungarian_optimality", check_hungarian),
    ("sc_select_partition", check_sc_partition),
    ("toy_theta_gradient", check_toy_gradient),
    ("toy_batch_classes", check_toy_class_losses),
]


def run_checks() -> list[CheckResult]:
    results = []
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as e:  # a crash is a failed invariant, not a crashed battery
            ok, detail = False, f"{type(e).__name__}: {e}"
        results.append(CheckResult(name, bool(ok), detail))
    return results
