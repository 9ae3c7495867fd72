"""
Repeated stratified hold-out evaluation with per-metric mean and 95% CI.

Every repetition derives its own seed from the master seed, splits the
cohort, fits the whole pipeline on the train part only and scores the
test part at the configured threshold.
"""

# Standard library imports
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

# Third-party imports
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

# Local application imports
from . import __version__
from .base_config import log_error, log_performance_metrics, log_processing_step
from .baselines import CONFIG_DIRECTORY, ProfundTable, load_profund_table
from .dataset import Cohort, Encoder, stratified_split
from .errors import ConfigError, DataError, UnsupportedModelError, format_validation_error
from .learners import GradientBoostedEnsemble, RandomForestEnsemble, gini_importance
from .metrics import METRIC_NAMES, ThresholdChoice, auc_score, confusion_at_threshold, metric_set, optimal_threshold
from .pipeline import (
    IMPORTANCE_KINDS,
    ModelKind,
    TrainedPipeline,
    calibrate_threshold,
    fit_pipeline,
    pipeline_importance,
)
from .schema import CohortSchema
from .seeding import STREAM_REPETITION, derive_seed

logger = logging.getLogger(__name__)

COMPONENT = "Evaluation"
CI_Z = 1.96
DEFAULT_EVAL_CONFIG = CONFIG_DIRECTORY / "eval_default.json"


class ThresholdMode(str, Enum):
    CALIBRATION = "calibration"
    PER_REPETITION = "per_repetition"
    FIXED = "fixed"


class EvalConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    repetitions: int = Field(default=100, ge=2)
    test_fraction: float = Field(default=0.2, gt=0.0, lt=1.0)
    seed: int = 0
    model_kind: ModelKind = ModelKind.GBC
    params: Dict[str, Any] = Field(default_factory=dict, description="Hyperparameter overrides for model_kind")
    threshold_mode: ThresholdMode = ThresholdMode.CALIBRATION
    fixed_threshold: Optional[float] = None
    profund_table: Optional[str] = Field(default=None, description="PROFUND table path; shipped table when unset")
    n_jobs: int = Field(default=1, ge=1, description="Repetitions run in parallel threads")

    @model_validator(mode="after")
    def _fixed_needs_value(self):
        if self.threshold_mode is ThresholdMode.FIXED and self.fixed_threshold is None:
            raise ValueError("threshold_mode 'fixed' needs fixed_threshold")
        return self


class EvalPlan(BaseModel):
    """Evaluation config file: one protocol shared by every listed model"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    models: List[ModelKind] = Field(default_factory=lambda: [ModelKind.GBC], min_length=1)
    params: Dict[ModelKind, Dict[str, Any]] = Field(default_factory=dict, description="Overrides per model kind")
    repetitions: int = Field(default=100, ge=2)
    test_fraction: float = Field(default=0.2, gt=0.0, lt=1.0)
    threshold_mode: ThresholdMode = ThresholdMode.CALIBRATION
    fixed_threshold: Optional[float] = None
    profund_table: Optional[str] = None

    def configs(self, seed: int, n_jobs: int = 1) -> List[EvalConfig]:
        return [
            EvalConfig(
                repetitions=self.repetitions,
                test_fraction=self.test_fraction,
                seed=seed,
                model_kind=kind,
                params=self.params.get(kind, {}),
                threshold_mode=self.threshold_mode,
                fixed_threshold=self.fixed_threshold,
                profund_table=self.profund_table if kind is ModelKind.PROFUND else None,
                n_jobs=n_jobs,
            )
            for kind in self.models
        ]


def parse_eval_plan(text: str) -> EvalPlan:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Invalid JSON in evaluation config: {e.msg} (column {e.colno})", line=e.lineno)
    try:
        return EvalPlan.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"Invalid evaluation config: {format_validation_error(e)}")


def load_eval_plan(path: Union[str, Path, None] = None) -> EvalPlan:
    path = Path(path) if path else DEFAULT_EVAL_CONFIG
    if not path.is_file():
        raise ConfigError(f"Evaluation config not found: {path}")
    return parse_eval_plan(path.read_text(encoding="utf-8"))


class MetricSummary(BaseModel):
    name: str
    mean: float
    ci_low: float
    ci_high: float
    values: List[float]


class ImportanceRow(BaseModel):
    feature: str
    label: str
    importance: float = Field(description="Fraction of the total, rows sum to 1")

    @property
    def percentage(self) -> float:
        return 100.0 * self.importance


class EvaluationReport(BaseModel):
    model: str
    threshold_mode: ThresholdMode
    threshold: Optional[float] = Field(default=None, description="Frozen threshold; None when searched per repetition")
    calibration: Optional[ThresholdChoice] = None
    repetition_thresholds: List[float]
    summaries: Dict[str, MetricSummary]
    importance: Optional[List[ImportanceRow]] = None
    config: Dict[str, Any]
    artifact_version: str = __version__
    repetition_seconds: List[float] = Field(default_factory=list, exclude=True)

    @model_validator(mode="after")
    def _five_metrics(self):
        if tuple(self.summaries) != METRIC_NAMES:
            raise ValueError(f"summaries must cover exactly {METRIC_NAMES}")
        return self


@dataclass(frozen=True)
class RepetitionResult:
    index: int
    seed: int
    threshold: float
    metrics: Dict[str, float]
    importance: Optional[List[Tuple[str, float]]]
    train_positive_rate: float
    test_positive_rate: float
    seconds: float


def summarize_metric(values: Sequence[float], name: str = "metric") -> MetricSummary:
    """Mean with a normal-approximation 95% CI: mean ± 1.96 × sample SD / √n"""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        raise DataError(f"Need at least 2 values to summarize '{name}', got {v.size}")
    mean = float(v.mean())
    half_width = CI_Z * float(v.std(ddof=1)) / math.sqrt(v.size)
    return MetricSummary(
        name=name,
        mean=mean,
        ci_low=mean - half_width,
        ci_high=mean + half_width,
        values=v.tolist(),
    )


def resummarize(report: EvaluationReport) -> Dict[str, MetricSummary]:
    return {name: summarize_metric(s.values, name) for name, s in report.summaries.items()}


def _importance_rows(pairs: Sequence[Tuple[str, float]], schema: Optional[CohortSchema]) -> List[ImportanceRow]:
    rows = []
    for feature, value in pairs:
        label = schema.get(feature).label if schema is not None and schema.has(feature) else feature
        rows.append(ImportanceRow(feature=feature, label=label, importance=float(value)))
    return rows


def importance_report(model: Union[TrainedPipeline, GradientBoostedEnsemble, RandomForestEnsemble],
                      encoder: Optional[Encoder] = None) -> List[ImportanceRow]:
    """Impurity importance per original feature, descending, with display labels"""
    if isinstance(model, TrainedPipeline):
        pairs = pipeline_importance(model)
        encoder = encoder or model.encoder
    elif isinstance(model, (GradientBoostedEnsemble, RandomForestEnsemble)):
        pairs = gini_importance(model)
    else:
        raise UnsupportedModelError(type(model).__name__, [k.value for k in IMPORTANCE_KINDS], "importance")
    return _importance_rows(pairs, encoder.schema if encoder is not None else None)


def _mean_importance(results: Sequence[RepetitionResult]) -> List[Tuple[str, float]]:
    totals: Dict[str, float] = {}
    for result in results:
        for feature, value in result.importance or []:
            totals[feature] = totals.get(feature, 0.0) + value
    means = {feature: total / len(results) for feature, total in totals.items()}
    return sorted(means.items(), key=lambda item: -item[1])


def run_repetition(cohort: Cohort, labels: np.ndarray, cfg: EvalConfig, index: int,
                   threshold: Optional[float], profund_table: Optional[ProfundTable]) -> RepetitionResult:
    """One hold-out repetition; the pipeline never sees the test rows"""
    start = time.perf_counter()
    seed = derive_seed(cfg.seed, STREAM_REPETITION, index)
    try:
        split = stratified_split(labels, cfg.test_fraction, seed)
        pipeline = fit_pipeline(cohort.subset(split.train), cfg.model_kind, cfg.params, seed, profund_table)
        scores = pipeline.score(cohort.subset(split.test))
        y_test = labels[split.test]

        used = threshold if threshold is not None else optimal_threshold(scores, y_test).threshold
        metrics = metric_set(confusion_at_threshold(scores, y_test, used))
        values = {
            "accuracy": metrics.accuracy,
            "auc": auc_score(scores, y_test),
            "specificity": metrics.specificity,
            "sensitivity": metrics.sensitivity,
            "ber": metrics.ber,
        }
        importance = pipeline_importance(pipeline) if cfg.model_kind in IMPORTANCE_KINDS else None
    except Exception as e:
        e.add_note(f"evaluation repetition {index} (seed {seed})")
        raise

    return RepetitionResult(
        index=index,
        seed=seed,
        threshold=float(used),
        metrics=values,
        importance=importance,
        train_positive_rate=float(labels[split.train].mean()),
        test_positive_rate=float(y_test.mean()),
        seconds=time.perf_counter() - start,
    )


def run_repeated_holdout(cohort: Cohort, cfg: EvalConfig) -> EvaluationReport:
    """
    Evaluate one model kind with cfg.repetitions stratified hold-out splits.

    The frozen threshold (calibration mode) is searched once on a separately
    seeded calibration split of the full cohort; the repetitions still use
    the full cohort.
    """
    start_time = time.time()
    labels = cohort.labels()
    if labels.min() == labels.max():
        raise DataError(f"Evaluation cohort contains a single class ({int(labels[0])})")

    log_processing_step(COMPONENT, "repeated_holdout", {
        "model": cfg.model_kind.value,
        "repetitions": cfg.repetitions,
        "episodes": len(cohort),
        "threshold_mode": cfg.threshold_mode.value,
    })

    profund_table = None
    if cfg.model_kind is ModelKind.PROFUND:
        profund_table = load_profund_table(cfg.profund_table, cohort.schema)

    calibration: Optional[ThresholdChoice] = None
    threshold: Optional[float] = None
    if cfg.threshold_mode is ThresholdMode.CALIBRATION:
        calibration = calibrate_threshold(
            cohort, cfg.model_kind, cfg.params, cfg.seed, cfg.test_fraction, profund_table
        )
        threshold = calibration.threshold
    elif cfg.threshold_mode is ThresholdMode.FIXED:
        threshold = cfg.fixed_threshold

    def run(index: int) -> RepetitionResult:
        return run_repetition(cohort, labels, cfg, index, threshold, profund_table)

    try:
        if cfg.n_jobs > 1:
            with ThreadPoolExecutor(max_workers=cfg.n_jobs) as pool:
                results = list(pool.map(run, range(cfg.repetitions)))
        else:
            results = [run(index) for index in range(cfg.repetitions)]
    except Exception as e:
        log_error(COMPONENT, "repeated_holdout", e, {"model": cfg.model_kind.value})
        raise

    results.sort(key=lambda r: r.index)
    summaries = {
        name: summarize_metric([r.metrics[name] for r in results], name) for name in METRIC_NAMES
    }
    importance = None
    if cfg.model_kind in IMPORTANCE_KINDS:
        importance = _importance_rows(_mean_importance(results), cohort.schema)

    duration_ms = (time.time() - start_time) * 1000
    log_performance_metrics(COMPONENT, f"evaluate {cfg.model_kind.value}", duration_ms, {
        "repetitions": cfg.repetitions,
        "auc_mean": round(summaries["auc"].mean, 4),
    })

    return EvaluationReport(
        model=cfg.model_kind.value,
        threshold_mode=cfg.threshold_mode,
        threshold=threshold,
        calibration=calibration,
        repetition_thresholds=[r.threshold for r in results],
        summaries=summaries,
        importance=importance,
        config=cfg.model_dump(mode="json", exclude={"n_jobs"}),
        repetition_seconds=[r.seconds for r in results],
    )
