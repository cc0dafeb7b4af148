"""Cascaded language identification with hashed character n-gram classifiers."""

__version__ = "0.1.0"

from ._backend import NAME as KERNEL_BACKEND
from .cascade import (
    Argmax,
    Cascade,
    CascadeOutcome,
    ExternalBackend,
    F1,
    InternalBackend,
    PrecisionAtMinRecall,
    Stage,
    Threshold,
    external_stage_handshake,
    load_cascade,
    run_cascade,
    run_stage,
    tune_threshold,
)
from .classifier import Hyperparams, Model, Prediction, fit, forward, load_model, predict, save_model, train
from .data import LabeledCorpus, SplitSpec, generate_synthetic, load_tsv, rebalance, split
from .evaluation import EvalReport, confusion, evaluate_cascade, prf
from .features import FeatureConfig, extract_char_ngrams, featurize, fnv1a64
from .preprocess import PreprocessConfig, normalize_elongation, strip_social_tokens, tokenize
