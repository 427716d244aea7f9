"""Mini-batch contrastive learning on the unit sphere.

Two-sided InfoNCE losses and their gradients, the optimal geometries
(simplex ETF, cross-polytope), projected GD / SGD / Ordered SGD, spectral
batch selection and a four-point toy system.
"""

__version__ = "0.1.0"

from .batching import brute_force_min_cut, chunked_sc_select, sc_select
from .embedding import Batch, BatchCollection, CollectionKind, EmbeddingPair
from .geometry import OracleKind, classify_configuration, make_cross_polytope, make_simplex_etf, oracle_distance
from .loss import batch_gradient, contrastive_loss, full_loss, lm_gradient, lm_loss, one_sided_loss, pair_weight
from .optim import OptimizerConfig, RunTrace, Variant, run_optimizer
from .toy import ToyState, ToyVariant, run_toy

__all__ = [
    "Batch", "BatchCollection", "CollectionKind", "EmbeddingPair", "OptimizerConfig", "OracleKind", "RunTrace",
    "ToyState", "ToyVariant", "Variant", "batch_gradient", "brute_force_min_cut", "chunked_sc_select",
    "classify_configuration", "contrastive_loss", "full_loss", "lm_gradient", "lm_loss", "make_cross_polytope",
    "make_simplex_etf", "one_sided_loss", "oracle_distance", "pair_weight", "run_optimizer", "run_toy", "sc_select",
]
