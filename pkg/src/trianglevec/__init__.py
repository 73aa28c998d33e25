"""Vectorize charge-stability images of triangle features and classify them with an EBM."""

from .ebm import EbmConfig, EbmModel, train_ebm
from .fitvec import FitConfig, fit_synthetic, hybrid_vector, vectorize_synth
from .gabor import make_default_filterbank, vectorize_gabor
from .harness import CvProtocol, Dataset, cross_validate, stratified_kfold
from .imagegrid import BAD, GOOD, Image, LabeledImage
from .synthtri import CorpusSpec, SigmoidParams, TriangleParams, generate_corpus, render_triangle

__version__ = "0.1.0"

__all__ = [
    "BAD", "GOOD", "CorpusSpec", "CvProtocol", "Dataset", "EbmConfig", "EbmModel", "FitConfig", "Image",
    "LabeledImage", "SigmoidParams", "TriangleParams", "cross_validate", "fit_synthetic", "generate_corpus",
    "hybrid_vector", "make_default_filterbank", "render_triangle", "stratified_kfold", "train_ebm",
    "vectorize_gabor", "vectorize_synth",
]
