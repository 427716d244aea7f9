"""Four-point system in the plane, parametrized by one angle per point.

Point i sits at angle theta_i away from the diagonal it belongs to, one point
per quadrant, and ``v`` is tied to ``u``. At ``theta_i = pi/4`` for all i the
four points form the cross-polytope (rotated by pi/4).
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .embedding import Batch, EmbeddingPair
from .geometry import aligned_cross_polytope_gram
from .loss import lm_gradient, lm_loss
from .optim import RunTrace, TraceRecord

TOY_BATCHES: tuple[tuple[int, int], ...] = tuple(itertools.combinations(range(4), 2))
# quadrant signs of (cos, sin) for each point
_SX = np.array([1.0, 1.0, -1.0, -1.0])
_SY = np.array([1.0, -1.0, -1.0, 1.0])


class ToyVariant(enum.Enum):
    OSGD = "osgd"
    SGD = "sgd"
    ALL_BATCH_GD = "all_batch_gd"


@dataclass(frozen=True)
class ToyState:
    theta: tuple[float, float, float, float]
    epsilon: float

    def __post_init__(self):
        th = tuple(float(t) for t in self.theta)
        if len(th) != 4:
            raise ValueError("the toy system has exactly four angles")
        if not all(math.isfinite(t) for t in th):
            raise ValueError("non-finite angle")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        object.__setattr__(self, "theta", th)

    @classmethod
    def initial(cls, epsilon: float) -> "ToyState":
        return cls((epsilon,) * 4, epsilon)


def _coords(theta: np.ndarray) -> np.ndarray:
    return np.vstack([_SX * np.cos(theta), _SY * np.sin(theta)])


def _dcoords(theta: np.ndarray) -> np.ndarray:
    """Column i is d u_i / d theta_i."""
    return np.vstack([-_SX * np.sin(theta), _SY * np.cos(theta)])


def toy_embeddings(s: ToyState) -> EmbeddingPair:
    u = _coords(np.array(s.theta))
    return EmbeddingPair(u, u)


def _check_batch(batch) -> tuple[int, ...]:
    idx = tuple(batch.indices if isinstance(batch, Batch) else Batch(tuple(batch)).indices)
    if len(idx) != 2 or max(idx) > 3:
        raise ValueError(f"toy batches are pairs drawn from 0..3, got {idx}")
    return idx


def _batch_loss(theta: np.ndarray, idx) -> float:
    ub = _coords(theta)[:, list(idx)]
    return float(lm_loss(ub.T @ ub))


def _theta_grad(theta: np.ndarray, idx) -> np.ndarray:
    cols = list(idx)
    ub = _coords(theta)[:, cols]
    g = lm_gradient(ub.T @ ub)
    # u and v are the same column, so both chain-rule paths land on theta
    gu = ub @ (g + g.T)
    out = np.zeros(4)
    out[cols] = np.einsum("dk,dk->k", gu, _dcoords(theta)[:, cols])
    return out


def toy_batch_loss(s: ToyState, batch) -> float:
    return _batch_loss(np.array(s.theta), _check_batch(batch))


def toy_theta_gradient(s: ToyState, batch) -> np.ndarray:
    """Gradient of the batch loss with respect to all four angles (zero off-batch)."""
    return _theta_grad(np.array(s.theta), _check_batch(batch))


def toy_step(s: ToyState, batch, eta: float) -> ToyState:
    th = np.array(s.theta) - eta * toy_theta_gradient(s, batch)
    return ToyState(tuple(th), s.epsilon)


def adjacent_drift(phi: float) -> float:
    """Per-angle increase rate on an adjacent batch at the symmetric state ``theta_i = phi``."""
    return 2.0 * math.sin(2 * phi) / (1.0 + math.exp(1.0 - math.cos(2 * phi)))


def symmetric_class_losses(epsilon: float) -> tuple[float, float, float]:
    """Closed-form (adjacent, antipodal, obtuse) batch losses at ``theta_i = epsilon``."""
    c = math.cos(2 * epsilon)
    return (
        -2 + 2 * math.log(math.e + math.exp(c)),
        -2 + 2 * math.log(math.e + math.exp(-1.0)),
        -2 + 2 * math.log(math.e + math.exp(-c)),
    )


def _in_window(theta: np.ndarray, rho: float) -> bool:
    return bool(np.all((theta > math.pi / 4 - rho) & (theta < math.pi / 4)))


def run_toy(
    variant,
    epsilon: float,
    eta: float,
    rho: float,
    seed: int = 0,
    max_steps: int = 5000,
    stop_at_hit: bool = False,
    record: bool = True,
) -> tuple[RunTrace, int | None]:
    """Run one toy trajectory from ``theta_i = epsilon``.

    Returns the trace (one record per step, full-batch loss and distance to
    the aligned cross-polytope) and the hitting time: the first step ``t`` at
    which every angle lies in ``(pi/4 - rho, pi/4)``. The bound on ``rho``
    keeps the starting point outside that window.
    With ``stop_at_hit`` the run ends at that step; ``record=False`` skips the
    per-step trace, which is all a hitting-time sweep needs.
    """
    variant = ToyVariant(variant)
    if not 0 < epsilon < math.pi / 4:
        raise ValueError("epsilon must lie in (0, pi/4)")
    if not 0 < rho < math.pi / 4 - epsilon:
        raise ValueError(f"rho must lie in (0, pi/4 - epsilon), got {rho}")
    if not eta > 0 or max_steps < 0:
        raise ValueError("need eta > 0 and max_steps >= 0")

    rng = np.random.default_rng(seed)
    theta = np.full(4, float(epsilon))
    trace = RunTrace()
    hit = None
    for t in range(max_steps):
        if hit is not None and stop_at_hit:
            break
        if variant is ToyVariant.OSGD:
            losses = [_batch_loss(theta, b) for b in TOY_BATCHES]
            chosen = (TOY_BATCHES[int(np.argmax(losses))],)  # argmax keeps the first maximum
        elif variant is ToyVariant.SGD:
            chosen = (TOY_BATCHES[int(rng.integers(len(TOY_BATCHES)))],)
        else:
            chosen = TOY_BATCHES
        step = sum(_theta_grad(theta, b) for b in chosen) / len(chosen)
        theta = theta - eta * step
        if not np.all((theta > 0) & (theta < math.pi / 2)):
            raise FloatingPointError(f"angle left (0, pi/2) at step {t + 1}: {theta}")
        if record:
            u = _coords(theta)
            g = u.T @ u
            dist = float(np.linalg.norm(g - aligned_cross_polytope_gram(g)))
            trace.append(TraceRecord(t + 1, float(lm_loss(g)), dist, chosen))
        if hit is None and _in_window(theta, rho):
            hit = t + 1
    trace.final = EmbeddingPair(_coords(theta), _coords(theta))
    return trace, hit


def hit_times(variant, epsilon: float, eta: float, rho: float, seeds, max_steps: int = 20000) -> list[int | None]:
    return [run_toy(variant, epsilon, eta, rho, s, max_steps, stop_at_hit=True, record=False)[1] for s in seeds]
