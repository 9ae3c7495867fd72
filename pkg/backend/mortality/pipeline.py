"""
Model kinds and the fitted preprocessing + learner pipeline.

A pipeline is fitted on one cohort only: the encoder, imputer and
standardizer see no other rows. The decision threshold is attached after
fitting (calibration split search or an explicit value).
"""

# Standard library imports
import logging
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Tuple, Union

# Third-party imports
import numpy as np
from pydantic import BaseModel, ValidationError

# Local application imports
from .base_config import log_performance_metrics, log_processing_step
from .baselines import (
    BUURMAN_FEATURES,
    BuurmanModel,
    ProfundTable,
    buurman_predict,
    fit_buurman,
    load_profund_table,
    profund_scores,
)
from .dataset import Cohort, EncodedMatrix, Encoder, cohort_fingerprint, encode, fit_encoder, one_episode_per_patient, stratified_split
from .errors import ConfigError, DataError, UnsupportedModelError, format_validation_error
from .learners import (
    GradientBoostedEnsemble,
    GradientBoostingParams,
    KnnModel,
    KnnParams,
    RandomForestEnsemble,
    RandomForestParams,
    fit_gradient_boosting,
    fit_knn,
    fit_random_forest,
    gb_predict_proba,
    gini_importance,
    knn_predict_proba,
    rf_predict_proba,
)
from .metrics import ThresholdChoice, optimal_threshold
from .preprocess import Imputer, Standardizer, apply_imputer, apply_standardizer, fit_imputer, fit_standardizer
from .seeding import STREAM_CALIBRATION_SPLIT, STREAM_DEDUPE, derive_seed

logger = logging.getLogger(__name__)

COMPONENT = "Pipeline"


class ModelKind(str, Enum):
    GBC = "gbc"
    RF = "rf"
    KNN = "knn"
    BUURMAN = "buurman"
    PROFUND = "profund"


ALL_KINDS = tuple(ModelKind)
PROBABILITY_KINDS = (ModelKind.GBC, ModelKind.RF, ModelKind.KNN)
IMPORTANCE_KINDS = (ModelKind.GBC, ModelKind.RF)
BASELINE_KINDS = (ModelKind.BUURMAN, ModelKind.PROFUND)

_PARAMS_BY_KIND = {
    ModelKind.GBC: GradientBoostingParams,
    ModelKind.RF: RandomForestParams,
    ModelKind.KNN: KnnParams,
}

Learner = Union[GradientBoostedEnsemble, RandomForestEnsemble, KnnModel, BuurmanModel, ProfundTable]


def parse_model_kind(value: Union[str, ModelKind], operation: str = "training",
                     allowed: Iterable[ModelKind] = ALL_KINDS) -> ModelKind:
    allowed = tuple(allowed)
    supported = [k.value for k in allowed]
    try:
        kind = ModelKind(value)
    except ValueError:
        raise UnsupportedModelError(str(value), supported, operation)
    if kind not in allowed:
        raise UnsupportedModelError(kind.value, supported, operation)
    return kind


def build_params(kind: ModelKind, overrides: Optional[Dict[str, Any]] = None) -> Optional[BaseModel]:
    """Validated hyperparameters for kind; baselines take none"""
    overrides = overrides or {}
    params_class = _PARAMS_BY_KIND.get(kind)
    if params_class is None:
        if overrides:
            raise ConfigError(f"Model kind '{kind.value}' takes no hyperparameters, got {sorted(overrides)}")
        return None
    try:
        return params_class(**overrides)
    except ValidationError as e:
        raise ConfigError(f"Invalid hyperparameters for '{kind.value}': {format_validation_error(e)}")


@dataclass(frozen=True)
class TrainedPipeline:
    kind: ModelKind
    learner: Learner
    encoder: Optional[Encoder] = None
    imputer: Optional[Imputer] = None
    standardizer: Optional[Standardizer] = None
    params: Dict[str, Any] = field(default_factory=dict)
    seed: int = 0
    threshold: Optional[float] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def transform(self, cohort: Cohort) -> EncodedMatrix:
        """Encoded, imputed (and for KNN standardized) matrix ready for the learner"""
        if self.encoder is None or self.imputer is None:
            raise UnsupportedModelError(self.kind.value, [k.value for k in ALL_KINDS if k is not ModelKind.PROFUND],
                                        "matrix transformation")
        m = encode(cohort, self.encoder)
        if self.kind is ModelKind.BUURMAN:
            m = m.select(BUURMAN_FEATURES)
        m = apply_imputer(m, self.imputer)
        if self.standardizer is not None:
            m = apply_standardizer(m, self.standardizer)
        return m

    def score(self, cohort: Cohort) -> np.ndarray:
        if self.kind is ModelKind.PROFUND:
            return profund_scores(cohort, self.learner)
        m = self.transform(cohort)
        if self.kind is ModelKind.GBC:
            return gb_predict_proba(self.learner, m)
        if self.kind is ModelKind.RF:
            return rf_predict_proba(self.learner, m)
        if self.kind is ModelKind.KNN:
            return knn_predict_proba(self.learner, m)
        return buurman_predict(self.learner, m)

    def with_threshold(self, threshold: float, **metadata: Any) -> "TrainedPipeline":
        return replace(self, threshold=float(threshold), metadata={**self.metadata, **metadata})


def fit_pipeline(cohort: Cohort, kind: ModelKind, params: Optional[Dict[str, Any]] = None,
                 seed: int = 0, profund_table: Optional[ProfundTable] = None) -> TrainedPipeline:
    """Fit preprocessing and learner on every record of cohort"""
    hyper = build_params(kind, params)
    params_echo = hyper.model_dump(mode="json") if hyper is not None else {}

    if kind is ModelKind.PROFUND:
        table = profund_table or load_profund_table(schema=cohort.schema)
        table.check_features(cohort.schema)
        return TrainedPipeline(kind=kind, learner=table, params=params_echo, seed=seed)

    labels = cohort.labels()
    encoder = fit_encoder(cohort)
    m = encode(cohort, encoder)
    if kind is ModelKind.BUURMAN:
        m = m.select(BUURMAN_FEATURES)
    rows = np.arange(m.n_rows)
    imputer = fit_imputer(m, rows)
    m = apply_imputer(m, imputer)

    standardizer = None
    if kind is ModelKind.GBC:
        learner: Learner = fit_gradient_boosting(m, labels, hyper, seed)
    elif kind is ModelKind.RF:
        learner = fit_random_forest(m, labels, hyper, seed)
    elif kind is ModelKind.KNN:
        standardizer = fit_standardizer(m, rows)
        learner = fit_knn(apply_standardizer(m, standardizer), labels, hyper)
    else:
        learner = fit_buurman(m, labels)

    return TrainedPipeline(
        kind=kind,
        learner=learner,
        encoder=encoder,
        imputer=imputer,
        standardizer=standardizer,
        params=params_echo,
        seed=seed,
    )


def calibrate_threshold(cohort: Cohort, kind: ModelKind, params: Optional[Dict[str, Any]] = None,
                        seed: int = 0, test_fraction: float = 0.2,
                        profund_table: Optional[ProfundTable] = None) -> ThresholdChoice:
    """BER-minimizing threshold searched on a dedicated stratified calibration split"""
    labels = cohort.labels()
    split = stratified_split(labels, test_fraction, derive_seed(seed, STREAM_CALIBRATION_SPLIT))
    pipeline = fit_pipeline(cohort.subset(split.train), kind, params, seed, profund_table)
    scores = pipeline.score(cohort.subset(split.test))
    return optimal_threshold(scores, labels[split.test])


def train_pipeline(cohort: Cohort, kind: ModelKind, params: Optional[Dict[str, Any]] = None,
                   seed: int = 0, threshold: Optional[float] = None, dedupe: bool = True,
                   profund_table: Optional[ProfundTable] = None) -> TrainedPipeline:
    """
    Full training flow: one episode per patient, threshold search on a
    calibration split (unless threshold is given), then a refit on the
    whole deduplicated cohort.

    Args:
        cohort: labelled cohort
        kind: model kind
        params: hyperparameter overrides
        seed: master seed for deduplication, calibration split and learner
        threshold: explicit decision threshold, skips the search
        dedupe: keep one random episode per patient first

    Returns:
        Pipeline with threshold and training metadata attached
    """
    start_time = time.time()
    if dedupe:
        cohort = one_episode_per_patient(cohort, derive_seed(seed, STREAM_DEDUPE))
    labels = cohort.labels()
    if labels.min() == labels.max():
        raise DataError(f"Training cohort contains a single class ({int(labels[0])})")

    log_processing_step(COMPONENT, "train", {"kind": kind.value, "episodes": len(cohort), "seed": seed})

    calibration: Dict[str, Any] = {}
    if threshold is None:
        choice = calibrate_threshold(cohort, kind, params, seed, profund_table=profund_table)
        threshold = choice.threshold
        calibration = {"source": "calibration_split", **choice.model_dump()}
    else:
        calibration = {"source": "explicit", "threshold": float(threshold)}

    pipeline = fit_pipeline(cohort, kind, params, seed, profund_table)
    duration_ms = (time.time() - start_time) * 1000
    log_performance_metrics(COMPONENT, f"train {kind.value}", duration_ms, {"episodes": len(cohort)})

    return pipeline.with_threshold(
        threshold,
        cohort_fingerprint=cohort_fingerprint(cohort),
        n_train=len(cohort),
        prevalence=float(labels.mean()),
        calibration=calibration,
    )


def pipeline_importance(pipeline: TrainedPipeline) -> List[Tuple[str, float]]:
    if pipeline.kind not in IMPORTANCE_KINDS:
        raise UnsupportedModelError(pipeline.kind.value, [k.value for k in IMPORTANCE_KINDS], "importance")
    return gini_importance(pipeline.learner)
