"""
Synthetic admission cohorts with a planted mortality mechanism.

Features are drawn independently: numeric values from truncated normals,
booleans from Bernoulli rates, categories from configured probabilities.
The outcome is Bernoulli(sigmoid(intercept + risk)), where risk sums
weight × standardized value over numeric and boolean features plus a
centered per-level effect for categorical features. The intercept is
calibrated on a pilot sample to hit the target prevalence. Missingness is
applied after the outcome draw, so it is independent of the outcome.
"""

# Standard library imports
import json
import logging
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

# Third-party imports
import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from scipy.special import expit
from scipy.stats import truncnorm

# Local application imports
from .dataset import Cohort
from .errors import ConfigError, DataError, format_validation_error
from .metrics import auc_score
from .schema import CohortSchema, FeatureKind, PatientRecord, default_schema
from .seeding import STREAM_COHORT_BLOCK, STREAM_PATIENTS, STREAM_PILOT_BLOCK, generator

logger = logging.getLogger(__name__)

CONFIG_DIRECTORY = Path(__file__).resolve().parent.parent / "config"
DEFAULT_GENERATOR_CONFIG = CONFIG_DIRECTORY / "generator_default.json"

BLOCK_ROWS = 4096
PILOT_ROWS = 50000
MAX_BISECTION_STEPS = 100
INTERCEPT_BOUND = 50.0
PREVALENCE_TOLERANCE = 0.002
REAL_DECIMALS = 3


class NumericMarginal(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    mean: float
    sd: float = Field(ge=0.0)
    lower: Optional[float] = None
    upper: Optional[float] = None
    missing_rate: float = Field(default=0.0, ge=0.0, lt=1.0)
    weight: float = 0.0

    @model_validator(mode="after")
    def _bounds_ordered(self):
        if self.lower is not None and self.upper is not None and self.lower >= self.upper:
            raise ValueError(f"lower bound {self.lower} must be below upper bound {self.upper}")
        return self


class BooleanMarginal(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    positive_rate: float = Field(ge=0.0, le=1.0)
    weight: float = 0.0


class CategoryLevel(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    probability: float = Field(ge=0.0, le=1.0)
    effect: float = Field(default=0.0, description="Log-odds contribution before centering")


class CategoricalMarginal(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    levels: Dict[str, CategoryLevel]

    @field_validator("levels")
    @classmethod
    def _probabilities_sum_to_one(cls, levels: Dict[str, CategoryLevel]):
        if not levels:
            raise ValueError("at least one level is required")
        total = sum(level.probability for level in levels.values())
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"level probabilities sum to {total:.6f}, expected 1")
        return levels


class GeneratorConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    n: int = Field(default=20000, ge=1)
    seed: int = 0
    prevalence: float = Field(default=0.1243, gt=0.0, lt=1.0)
    weight_scale: float = Field(default=1.0, ge=0.0, description="Multiplies every weight and level effect")
    episodes_per_patient: Dict[int, float] = Field(default_factory=lambda: {1: 1.0})
    numeric: Dict[str, NumericMarginal] = Field(default_factory=dict)
    boolean: Dict[str, BooleanMarginal] = Field(default_factory=dict)
    categorical: Dict[str, CategoricalMarginal] = Field(default_factory=dict)

    @field_validator("episodes_per_patient")
    @classmethod
    def _episode_distribution(cls, distribution: Dict[int, float]):
        if not distribution or any(k < 1 for k in distribution) or any(p < 0 for p in distribution.values()):
            raise ValueError("episode counts must be >= 1 with non-negative probabilities")
        total = sum(distribution.values())
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"episode-count probabilities sum to {total:.6f}, expected 1")
        return distribution

    def check_schema(self, schema: CohortSchema):
        """Every schema feature configured once, in the section matching its kind"""
        sections = {
            FeatureKind.INTEGER: self.numeric,
            FeatureKind.REAL: self.numeric,
            FeatureKind.BOOLEAN: self.boolean,
            FeatureKind.CATEGORICAL: self.categorical,
        }
        for feature in schema.features:
            section = sections[feature.kind]
            if feature.name not in section:
                raise ConfigError(f"Feature '{feature.name}' ({feature.kind.value}) is not configured")
            marginal = section[feature.name]
            if isinstance(marginal, NumericMarginal) and marginal.missing_rate > 0 and not feature.missing_allowed:
                raise ConfigError(f"Feature '{feature.name}' does not allow missing values")
        configured = set(self.numeric) | set(self.boolean) | set(self.categorical)
        unknown = sorted(configured - set(schema.feature_names))
        if unknown:
            raise ConfigError(f"Unknown features in generator config: {', '.join(unknown)}")

    def with_weights_scaled(self, factor: float) -> "GeneratorConfig":
        return self.model_copy(update={"weight_scale": self.weight_scale * factor})

    def with_zero_weights(self) -> "GeneratorConfig":
        return self.model_copy(update={"weight_scale": 0.0})


@dataclass(frozen=True)
class GroundTruth:
    episode_ids: Tuple[str, ...]
    linear_predictor: np.ndarray
    true_risk: np.ndarray
    outcomes: np.ndarray
    intercept: float


def parse_generator_config(text: str, schema: Optional[CohortSchema] = None) -> GeneratorConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Invalid JSON in generator config: {e.msg} (column {e.colno})", line=e.lineno)
    try:
        config = GeneratorConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"Invalid generator config: {format_validation_error(e)}")
    config.check_schema(schema or default_schema())
    return config


def load_generator_config(path: Union[str, Path, None] = None, schema: Optional[CohortSchema] = None) -> GeneratorConfig:
    path = Path(path) if path else DEFAULT_GENERATOR_CONFIG
    if not path.is_file():
        raise ConfigError(f"Generator config not found: {path}")
    return parse_generator_config(path.read_text(encoding="utf-8"), schema)


@lru_cache(maxsize=1)
def default_generator_config() -> GeneratorConfig:
    return load_generator_config(DEFAULT_GENERATOR_CONFIG)


# ---------------------------------------------------------------------------
# Drawing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _NumericPlan:
    marginal: NumericMarginal
    integer: bool
    distribution: object
    center: float
    spread: float


def _numeric_plan(marginal: NumericMarginal, integer: bool) -> _NumericPlan:
    if marginal.sd == 0:
        return _NumericPlan(marginal, integer, None, marginal.mean, 0.0)
    lower = -np.inf if marginal.lower is None else (marginal.lower - marginal.mean) / marginal.sd
    upper = np.inf if marginal.upper is None else (marginal.upper - marginal.mean) / marginal.sd
    distribution = truncnorm(lower, upper, loc=marginal.mean, scale=marginal.sd)
    return _NumericPlan(marginal, integer, distribution, float(distribution.mean()), float(distribution.std()))


def _plans(config: GeneratorConfig, schema: CohortSchema) -> Dict[str, _NumericPlan]:
    return {
        f.name: _numeric_plan(config.numeric[f.name], f.kind is FeatureKind.INTEGER)
        for f in schema.features if f.kind.is_numeric
    }


def _draw_block(config: GeneratorConfig, schema: CohortSchema, plans: Dict[str, _NumericPlan],
                n_rows: int, rng: np.random.Generator) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
    """Feature columns (before missingness) and the risk term for one block"""
    columns: Dict[str, np.ndarray] = {}
    risk = np.zeros(n_rows)
    scale = config.weight_scale

    for feature in schema.features:
        if feature.kind.is_numeric:
            plan = plans[feature.name]
            marginal = plan.marginal
            if plan.distribution is None:
                values = np.full(n_rows, marginal.mean)
            else:
                values = plan.distribution.rvs(size=n_rows, random_state=rng)
            if plan.integer:
                values = np.rint(values)
                if marginal.lower is not None or marginal.upper is not None:
                    values = np.clip(values, marginal.lower, marginal.upper)
            else:
                values = np.round(values, REAL_DECIMALS)
            if plan.spread > 0 and marginal.weight != 0:
                risk += scale * marginal.weight * (values - plan.center) / plan.spread
            columns[feature.name] = values

        elif feature.kind is FeatureKind.BOOLEAN:
            marginal = config.boolean[feature.name]
            p = marginal.positive_rate
            values = (rng.random(n_rows) < p).astype(np.int64)
            if 0.0 < p < 1.0 and marginal.weight != 0:
                risk += scale * marginal.weight * (values - p) / np.sqrt(p * (1.0 - p))
            columns[feature.name] = values

        else:
            levels = config.categorical[feature.name].levels
            names = np.asarray(list(levels), dtype=object)
            probabilities = np.asarray([level.probability for level in levels.values()])
            probabilities = probabilities / probabilities.sum()
            effects = np.asarray([level.effect for level in levels.values()])
            effects = effects - float(probabilities @ effects)
            drawn = rng.choice(len(names), size=n_rows, p=probabilities)
            risk += scale * effects[drawn]
            columns[feature.name] = names[drawn]

    return columns, risk


def _block_sizes(n: int) -> List[int]:
    return [min(BLOCK_ROWS, n - start) for start in range(0, n, BLOCK_ROWS)]


def pilot_risk(config: GeneratorConfig, schema: Optional[CohortSchema] = None) -> np.ndarray:
    schema = schema or default_schema()
    plans = _plans(config, schema)
    parts = []
    for block, size in enumerate(_block_sizes(PILOT_ROWS)):
        _, risk = _draw_block(config, schema, plans, size, generator(config.seed, STREAM_PILOT_BLOCK, block))
        parts.append(risk)
    return np.concatenate(parts)


def calibrate_intercept(config: GeneratorConfig, schema: Optional[CohortSchema] = None) -> float:
    """
    Bisection on the intercept so the mean of sigmoid(intercept + risk) over
    a pilot sample matches the target prevalence.
    """
    risk = pilot_risk(config, schema)
    target = config.prevalence

    def prevalence_at(intercept: float) -> float:
        return float(expit(intercept + risk).mean())

    lower, upper = -INTERCEPT_BOUND, INTERCEPT_BOUND
    if not prevalence_at(lower) <= target <= prevalence_at(upper):
        raise ConfigError(f"Target prevalence {target} is unreachable with the configured weights")

    middle = 0.0
    achieved = prevalence_at(middle)
    for _ in range(MAX_BISECTION_STEPS):
        middle = (lower + upper) / 2.0
        achieved = prevalence_at(middle)
        if abs(achieved - target) <= 1e-10 or upper - lower <= 1e-12:
            break
        if achieved < target:
            lower = middle
        else:
            upper = middle

    if abs(achieved - target) > PREVALENCE_TOLERANCE:
        raise ConfigError(
            f"Intercept calibration did not converge: pilot prevalence {achieved:.4f}, target {target:.4f}"
        )
    logger.debug(f"Calibrated intercept {middle:.6f} (pilot prevalence {achieved:.6f})")
    return middle


def _patient_ids(config: GeneratorConfig) -> List[str]:
    counts = sorted(config.episodes_per_patient)
    probabilities = np.asarray([config.episodes_per_patient[k] for k in counts], dtype=np.float64)
    probabilities = probabilities / probabilities.sum()
    sizes = generator(config.seed, STREAM_PATIENTS).choice(counts, size=config.n, p=probabilities)

    ids: List[str] = []
    for patient, size in enumerate(sizes):
        ids.extend([f"P{patient + 1:06d}"] * int(size))
        if len(ids) >= config.n:
            break
    return ids[:config.n]


def generate_cohort(config: GeneratorConfig,
                    schema: Optional[CohortSchema] = None) -> Tuple[Cohort, GroundTruth]:
    """Draw a labelled cohort and its ground truth; deterministic per config.seed"""
    schema = schema or default_schema()
    config.check_schema(schema)
    intercept = calibrate_intercept(config, schema)
    plans = _plans(config, schema)

    column_parts: Dict[str, List[list]] = {f.name: [] for f in schema.features}
    linear_parts, outcome_parts = [], []

    for block, size in enumerate(_block_sizes(config.n)):
        rng = generator(config.seed, STREAM_COHORT_BLOCK, block)
        columns, risk = _draw_block(config, schema, plans, size, rng)
        linear = intercept + risk
        outcomes = (rng.random(size) < expit(linear)).astype(np.int64)

        for feature in schema.features:
            values = columns[feature.name]
            if feature.kind is FeatureKind.CATEGORICAL:
                cells = [str(v) for v in values]
            elif feature.kind is FeatureKind.REAL:
                cells = values.astype(np.float64).tolist()
            else:
                cells = values.astype(np.int64).tolist()
            if feature.kind.is_numeric:
                rate = config.numeric[feature.name].missing_rate
                if rate > 0:
                    missing = rng.random(size) < rate
                    cells = [None if m else c for c, m in zip(cells, missing)]
            column_parts[feature.name].append(cells)

        linear_parts.append(linear)
        outcome_parts.append(outcomes)

    linear = np.concatenate(linear_parts)
    outcomes = np.concatenate(outcome_parts)
    names = schema.feature_names
    flat = {name: [cell for part in column_parts[name] for cell in part] for name in names}
    patients = _patient_ids(config)
    episode_ids = tuple(f"E{row + 1:07d}" for row in range(config.n))

    records = tuple(
        PatientRecord(
            patient_id=patients[row],
            episode_id=episode_ids[row],
            values={name: flat[name][row] for name in names},
            outcome=int(outcomes[row]),
        )
        for row in range(config.n)
    )
    truth = GroundTruth(
        episode_ids=episode_ids,
        linear_predictor=linear,
        true_risk=expit(linear),
        outcomes=outcomes,
        intercept=intercept,
    )
    logger.info(f"Generated {config.n} episodes, prevalence {outcomes.mean():.4f}, intercept {intercept:.4f}")
    return Cohort(schema=schema, records=records), truth


def bayes_auc(truth: GroundTruth, outcomes: Optional[np.ndarray] = None) -> float:
    """AUC of the true risk against the outcomes: the ceiling for any learner"""
    outcomes = truth.outcomes if outcomes is None else np.asarray(outcomes)
    if outcomes.size and outcomes.min() == outcomes.max():
        raise DataError("Bayes AUC is undefined for single-class outcomes")
    return auc_score(truth.true_risk, outcomes)


def write_ground_truth_csv(truth: GroundTruth, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({
        "episode_id": list(truth.episode_ids),
        "true_risk": [repr(float(r)) for r in truth.true_risk],
        "outcome": [str(int(o)) for o in truth.outcomes],
    })
    frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
    return path
