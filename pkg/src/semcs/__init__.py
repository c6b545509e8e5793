"""Text-conditioned semantic style transfer.

A content image is segmented into salient foreground and background
without supervision (spectral partitioning of a patch-feature affinity
graph), then a small per-image network is optimized so each region follows
its own style-text direction in a joint image/text embedding space.
"""

from . import image_io, sample_images
from .encoders import (ContentFeatureExtractor, ContentFeatureSet,
                       DenseFeatureExtractor, DenseFeatureMap, Embedding,
                       Encoders, ImageTextEncoder, load_encoders)
from .errors import (ConfigurationError, DegenerateMaskError,
                     InvalidInputError, NumericError, SemCSError)
from .evaluation import (DistsMetric, EvalRecord, EvalReport, NimaMetric,
                         batch_evaluate, dists_score, nima_score)
from .losses import (LossBreakdown, LossWeights, content_loss,
                     directional_loss, global_background_loss,
                     global_foreground_loss, image_direction, text_direction,
                     total_loss, tv_loss)
from .pipeline import (AdamState, StyleTextCondition, TransferConfig,
                       TransferResult, optimization_step, parse_style_text,
                       run_transfer)
from .spectral import (EigenSystem, MaskResult, SaliencyMask, build_affinity,
                       compute_mask, extract_salient_mask,
                       laplacian_eigendecomposition)
from .stylenet import StyleNet, init_stylenet, load_checkpoint, parameter_count, save_checkpoint

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # errors
    "SemCSError", "InvalidInputError", "ConfigurationError", "NumericError",
    "DegenerateMaskError",
    # encoders
    "Embedding", "DenseFeatureMap", "ContentFeatureSet",
    "DenseFeatureExtractor", "ImageTextEncoder", "ContentFeatureExtractor",
    "Encoders", "load_encoders",
    # spectral
    "EigenSystem", "SaliencyMask", "MaskResult", "build_affinity",
    "laplacian_eigendecomposition", "extract_salient_mask", "compute_mask",
    # style network
    "StyleNet", "init_stylenet", "parameter_count", "save_checkpoint",
    "load_checkpoint",
    # losses
    "LossWeights", "LossBreakdown", "text_direction", "image_direction",
    "directional_loss", "global_foreground_loss", "global_background_loss",
    "content_loss", "tv_loss", "total_loss",
    # pipeline
    "StyleTextCondition", "TransferConfig", "TransferResult", "AdamState",
    "parse_style_text", "optimization_step", "run_transfer",
    # evaluation
    "DistsMetric", "NimaMetric", "EvalRecord", "EvalReport", "dists_score",
    "nima_score", "batch_evaluate",
]
