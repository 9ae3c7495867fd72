"""
Cohort schema, patient records and record validation.

The default schema describes the 36 admission features: 11 demographic and
administrative fields, 7 laboratory results and 18 disease flags. Category
vocabularies for the categorical features are not part of the schema; they
are learned from data (dataset.fit_encoder) or configured (synth).
"""

# Standard library imports
import math
from enum import Enum
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple, Union

# Third-party imports
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

# Local application imports
from .errors import DataError

FeatureValue = Union[int, float, str, None]

TARGET_NAME = "exitus_1y"


class FeatureKind(str, Enum):
    CATEGORICAL = "categorical"
    BOOLEAN = "boolean"
    INTEGER = "integer"
    REAL = "real"

    @property
    def is_numeric(self) -> bool:
        return self in (FeatureKind.INTEGER, FeatureKind.REAL)


class FeatureSpec(BaseModel):
    """One column of the cohort schema"""
    model_config = ConfigDict(frozen=True)

    name: str = Field(description="Identifier used in CSV headers and records")
    label: str = Field(description="Display name used in reports")
    kind: FeatureKind
    units: Optional[str] = Field(default=None, description="Measurement units, e.g. g/dL")
    missing_allowed: bool = False


class CohortSchema(BaseModel):
    """Ordered feature list plus the binary target name"""
    model_config = ConfigDict(frozen=True)

    features: Tuple[FeatureSpec, ...]
    target_name: str = TARGET_NAME

    @model_validator(mode="after")
    def _unique_names(self):
        names = [f.name for f in self.features]
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise ValueError(f"Duplicate feature names: {duplicates}")
        return self

    @property
    def feature_names(self) -> List[str]:
        return [f.name for f in self.features]

    def get(self, name: str) -> FeatureSpec:
        for feature in self.features:
            if feature.name == name:
                return feature
        raise KeyError(name)

    def has(self, name: str) -> bool:
        return any(f.name == name for f in self.features)


class PatientRecord(BaseModel):
    """One admission episode. Missing values are None; do not mutate values after construction."""
    model_config = ConfigDict(frozen=True)

    patient_id: str
    episode_id: str
    values: Dict[str, FeatureValue]
    outcome: Optional[int] = Field(default=None, description="Exitus within 365 days of admission")


class Violation(BaseModel):
    feature: str
    message: str


class ValidationResult(BaseModel):
    ok: bool
    violations: List[Violation] = Field(default_factory=list)

    def describe(self) -> str:
        return "; ".join(f"{v.feature}: {v.message}" for v in self.violations)


class FeatureSummary(BaseModel):
    """Summary of one feature: kind, missing count, moments or level frequencies"""
    name: str
    label: str
    kind: FeatureKind
    units: Optional[str] = None
    count: int
    missing: int
    mean: Optional[float] = None
    sd: Optional[float] = None
    positive_rate: Optional[float] = None
    frequencies: Dict[str, float] = Field(default_factory=dict)


_DISEASE_FLAGS = [
    ("AcuteMyocardialInfarction", "Acute Myocardial Infarction"),
    ("CongestiveHeartFailure", "Congestive Heart Failure"),
    ("PeripheralVascularDisease", "Peripheral Vascular Disease"),
    ("CerebrovascularDisease", "Cerebrovascular Disease"),
    ("Dementia", "Dementia"),
    ("ChronicPulmonaryDisease", "Chronic Pulmonary Disease"),
    ("RheumaticDisease", "Rheumatic Disease"),
    ("PepticUlcerDisease", "Peptic Ulcer Disease"),
    ("MildLiverDisease", "Mild Liver Disease"),
    ("DiabetesWithoutComplications", "Diabetes Without Complications"),
    ("DiabetesWithComplications", "Diabetes With Complications"),
    ("HemiplegiaParaplegia", "Hemiplegia Paraplegia"),
    ("RenalDisease", "Renal Disease"),
    ("Malignancy", "Malignancy"),
    ("ModerateSevereLiverDisease", "Moderate Severe Liver Disease"),
    ("Metastasis", "Metastasis"),
    ("AIDS", "AIDS"),
    ("Delirium", "Delirium"),
]


@lru_cache(maxsize=1)
def default_schema() -> CohortSchema:
    """The 36-feature admission schema"""
    kinds = FeatureKind
    features = [
        FeatureSpec(name="Sex", label="Sex", kind=kinds.CATEGORICAL),
        FeatureSpec(name="Age", label="Age", kind=kinds.INTEGER, units="years"),
        FeatureSpec(name="UrgentAdmission", label="Urgent Admission", kind=kinds.BOOLEAN),
        FeatureSpec(name="AdmissionDestination", label="Admission Destination", kind=kinds.CATEGORICAL),
        FeatureSpec(name="Service", label="Service", kind=kinds.CATEGORICAL),
        FeatureSpec(name="AdmissionCause", label="Admission Cause", kind=kinds.CATEGORICAL),
        FeatureSpec(name="PrevStays", label="Prev. Stays", kind=kinds.INTEGER),
        FeatureSpec(name="Barthel", label="Barthel Test", kind=kinds.INTEGER, missing_allowed=True),
        FeatureSpec(name="PrevAdmissions", label="Prev. Admissions", kind=kinds.INTEGER),
        FeatureSpec(name="PrevEmergencyRoom", label="Prev. Emergency Room", kind=kinds.INTEGER),
        FeatureSpec(name="Charlson", label="Charlson Score", kind=kinds.INTEGER),
        FeatureSpec(name="Albumin", label="Albumin", kind=kinds.REAL, units="g/dL", missing_allowed=True),
        FeatureSpec(name="Creatinine", label="Creatinine", kind=kinds.REAL, units="mg/dL", missing_allowed=True),
        FeatureSpec(name="Hemoglobin", label="Hemoglobin", kind=kinds.REAL, units="g/dL", missing_allowed=True),
        FeatureSpec(name="Leucocytes", label="Leucocytes", kind=kinds.REAL, units="Cel/mL", missing_allowed=True),
        FeatureSpec(name="PCR", label="PCR", kind=kinds.REAL, units="mg/L", missing_allowed=True),
        FeatureSpec(name="Sodium", label="Sodium", kind=kinds.REAL, units="mEq/L", missing_allowed=True),
        FeatureSpec(name="Urea", label="Urea", kind=kinds.REAL, units="mg/dL", missing_allowed=True),
    ]
    features += [FeatureSpec(name=name, label=label, kind=kinds.BOOLEAN) for name, label in _DISEASE_FLAGS]
    return CohortSchema(features=tuple(features), target_name=TARGET_NAME)


def _kind_violation(value: FeatureValue, kind: FeatureKind) -> Optional[str]:
    """Message describing why value does not fit kind, or None"""
    if kind is FeatureKind.INTEGER:
        if isinstance(value, bool) or not isinstance(value, int):
            return f"expected integer, got {value!r}"
    elif kind is FeatureKind.BOOLEAN:
        if isinstance(value, bool) or not isinstance(value, int) or value not in (0, 1):
            return f"expected 0 or 1, got {value!r}"
    elif kind is FeatureKind.REAL:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return f"expected real number, got {value!r}"
        if not math.isfinite(value):
            return f"expected finite real number, got {value!r}"
    elif kind is FeatureKind.CATEGORICAL:
        if not isinstance(value, str) or not value.strip():
            return f"expected non-empty category code, got {value!r}"
    return None


def validate_record(record: PatientRecord, schema: CohortSchema) -> ValidationResult:
    """Check every value against its feature kind and missingness rule"""
    violations: List[Violation] = []

    for name in record.values:
        if not schema.has(name):
            violations.append(Violation(feature=name, message="unknown feature"))

    for feature in schema.features:
        value = record.values.get(feature.name)
        if value is None:
            if not feature.missing_allowed:
                violations.append(Violation(feature=feature.name, message="missing value not allowed"))
            continue
        problem = _kind_violation(value, feature.kind)
        if problem:
            violations.append(Violation(feature=feature.name, message=problem))

    if record.outcome is not None and (isinstance(record.outcome, bool) or record.outcome not in (0, 1)):
        violations.append(Violation(feature=schema.target_name, message=f"outcome must be 0 or 1, got {record.outcome!r}"))

    return ValidationResult(ok=not violations, violations=violations)


def summarize(records: Sequence[PatientRecord], schema: CohortSchema) -> List[FeatureSummary]:
    """Per-feature mean ± SD (sample, n-1) or level frequencies, with exact missing counts"""
    if len(records) == 0:
        raise DataError("Cannot summarize an empty cohort")

    summaries: List[FeatureSummary] = []
    for feature in schema.features:
        observed = [r.values.get(feature.name) for r in records]
        present = [v for v in observed if v is not None]
        summary = FeatureSummary(
            name=feature.name,
            label=feature.label,
            kind=feature.kind,
            units=feature.units,
            count=len(present),
            missing=len(observed) - len(present),
        )

        if feature.kind.is_numeric and present:
            values = np.asarray(present, dtype=float)
            summary.mean = float(values.mean())
            summary.sd = float(values.std(ddof=1)) if len(values) > 1 else None
        elif feature.kind is FeatureKind.BOOLEAN and present:
            values = np.asarray(present, dtype=float)
            summary.positive_rate = float(values.mean())
            summary.frequencies = {
                "0": float((values == 0).mean()),
                "1": float((values == 1).mean()),
            }
        elif feature.kind is FeatureKind.CATEGORICAL and present:
            levels, counts = np.unique(np.asarray([str(v) for v in present]), return_counts=True)
            summary.frequencies = {str(level): float(c) / len(present) for level, c in zip(levels, counts)}

        summaries.append(summary)

    return summaries
