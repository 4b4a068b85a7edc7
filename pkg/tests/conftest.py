import numpy as np
import pytest

from wepadim import SubbandSet, WaveletConfig
from wepadim.synth import PyramidExtractor, SynthSpec, generate_corpus
from wepadim.tensorio import FeatureStack


# The reference corpus: fixed geometry whose fit stays fast while leaving the
# anomaly separable but not trivial.  Frozen AUC values in the tests belong to
# exactly this configuration.
REFERENCE_SPEC = SynthSpec(
    seed=7,
    image_size=(64, 64),
    n_train=60,
    n_test_normal=20,
    n_test_anomalous=20,
    texture="smooth-noise",
    anomaly_kind="lowfreq-blob",
    blob_sigma=6.0,
    anomaly_magnitude=7.0,
)
REFERENCE_STAGES = ((12, 2), (24, 4), (48, 8))
REFERENCE_CONFIG = WaveletConfig(
    family="haar", level=1, subbands=SubbandSet.parse("HL_LH_LL"),
    sigma=2.0, cov_reg=0.01,
)

# Small corpus for CLI/sweep tests: two layers, 16x16 images.
SMALL_SPEC = SynthSpec(
    seed=3,
    image_size=(16, 16),
    n_train=12,
    n_test_normal=5,
    n_test_anomalous=5,
    texture="smooth-noise",
    anomaly_kind="highfreq-speckle",
    speckle_patch=6,
    blob_sigma=2.0,
)
SMALL_STAGES = ((6, 2), (12, 4))


@pytest.fixture(scope="session")
def reference_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("reference_corpus")
    extractor = PyramidExtractor(seed=REFERENCE_SPEC.seed, stages=REFERENCE_STAGES)
    train, test = generate_corpus(REFERENCE_SPEC, out, extractor)
    return train, test


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("small_corpus")
    extractor = PyramidExtractor(seed=SMALL_SPEC.seed, stages=SMALL_STAGES)
    train, test = generate_corpus(SMALL_SPEC, out, extractor)
    return train, test


@pytest.fixture()
def resnet_shaped_stack():
    rng = np.random.default_rng(11)
    layers = tuple(
        (f"layer{i + 1}", rng.standard_normal(shape))
        for i, shape in enumerate([(64, 56, 56), (128, 28, 28), (256, 14, 14)])
    )
    return FeatureStack("img0", (224, 224), layers)
