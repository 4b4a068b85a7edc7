"""Wavelet-subband patch-distribution modeling for industrial anomaly detection.

Pipeline: multi-layer feature stacks are decomposed per layer with a 2D DWT,
selected subbands are concatenated and aligned into one embedding, per-location
multivariate Gaussians are fitted over normal images, and test images are
scored by squared Mahalanobis distance, post-processed into full-resolution
anomaly heatmaps.  Includes a synthetic corpus generator, evaluation metrics,
grid sweeps and report tables; see the ``wepadim`` CLI.
"""

from .config import WaveletConfig
from .dwt import SubbandPyramid, WaveletFamily, dwt2d, filter_bank, idwt2d
from .embed import (
    EmbeddingMap,
    RandomSelection,
    SubbandSet,
    all_subband_sets,
    bilinear_resize,
    build_embedding,
    random_baseline_embedding,
)
from .errors import (
    ConfigError,
    FormatError,
    InsufficientDataError,
    ManifestError,
    MetricUndefinedError,
    ModelCompatibilityError,
    NumericalError,
    ShapeError,
    SizeError,
    StorageError,
    UnsupportedDtypeError,
    WepadimError,
)
from .evaluation import (
    CorpusJob,
    PixelScoreAccumulator,
    SweepGrid,
    SweepRecord,
    aggregate_by_subband,
    best_per_class,
    component_impact,
    evaluate_class,
    roc_auc,
    sweep,
)
from .gaussian import (
    MomentAccumulator,
    PatchGaussianModel,
    finalize,
    load_model,
    mahalanobis_map,
    save_model,
)
from .pipeline import fit_model, score_entry, score_manifest
from .scoring import AnomalyResult, export_heatmap, gaussian_blur, postprocess
from .synth import PyramidExtractor, SynthSpec, extract_pyramid, generate_corpus
from .tensorio import (
    CorpusManifest,
    FeatureStack,
    load_feature_stack,
    load_manifest,
    read_tensor,
    save_manifest,
    write_tensor,
)

__version__ = "0.1.0"
