"""
Shared fixtures: isolated settings, the default schema, hand-built records
and small generated cohorts
"""

# Standard library imports
from typing import Dict, Optional

# Third-party imports
import numpy as np
import pytest

# Local application imports
from mortality.base_config import get_settings
from mortality.dataset import Cohort, ColumnBlock, EncodedMatrix, write_cohort_csv
from mortality.schema import FeatureKind, PatientRecord, default_schema
from mortality.synth import default_generator_config, generate_cohort

BASE_VALUES: Dict[str, object] = {
    "Sex": "female",
    "Age": 70,
    "UrgentAdmission": 1,
    "AdmissionDestination": "HOSP_WARD",
    "Service": "MIN",
    "AdmissionCause": "DISEASE",
    "PrevStays": 2,
    "Barthel": 80,
    "PrevAdmissions": 1,
    "PrevEmergencyRoom": 0,
    "Charlson": 3,
    "Albumin": 3.1,
    "Creatinine": 0.9,
    "Hemoglobin": 12.5,
    "Leucocytes": 8.2,
    "PCR": 15.0,
    "Sodium": 139.0,
    "Urea": 40.0,
}


def make_values(**overrides) -> Dict[str, object]:
    values = dict(BASE_VALUES)
    for feature in default_schema().features:
        if feature.kind is FeatureKind.BOOLEAN and feature.name not in values:
            values[feature.name] = 0
    values.update(overrides)
    return values


def make_record(episode_id: str = "E1", patient_id: Optional[str] = None,
                outcome: Optional[int] = 0, **overrides) -> PatientRecord:
    return PatientRecord(
        patient_id=patient_id or f"P-{episode_id}",
        episode_id=episode_id,
        values=make_values(**overrides),
        outcome=outcome,
    )


def generated_cohort(n: int, seed: int = 0, **updates):
    config = default_generator_config().model_copy(update={"n": n, "seed": seed, **updates})
    return generate_cohort(config)


def numeric_matrix(columns, labels=None) -> EncodedMatrix:
    """EncodedMatrix of real columns; NaN marks a missing cell"""
    names = tuple(columns)
    values = np.column_stack([np.asarray(columns[name], dtype=np.float64) for name in names])
    blocks = tuple(
        ColumnBlock(feature=name, kind=FeatureKind.REAL, start=i, columns=(name,)) for i, name in enumerate(names)
    )
    return EncodedMatrix(
        values=values,
        mask=np.isnan(values),
        columns=names,
        blocks=blocks,
        labels=None if labels is None else np.asarray(labels, dtype=np.int64),
    )


def array_matrix(X, labels=None) -> EncodedMatrix:
    """Columns x0, x1, ... from a 2-D array"""
    X = np.asarray(X, dtype=np.float64)
    return numeric_matrix({f"x{j}": X[:, j] for j in range(X.shape[1])}, labels)


@pytest.fixture(autouse=True)
def isolated_settings(tmp_path, monkeypatch):
    """Log and storage directories under tmp_path; no database mirror"""
    monkeypatch.setenv("MORTALITY_LOG_DIRECTORY", str(tmp_path / "logs"))
    monkeypatch.setenv("MORTALITY_STORAGE_DIRECTORY", str(tmp_path / "storage"))
    monkeypatch.delenv("MORTALITY_DATABASE_URL", raising=False)
    get_settings.cache_clear()
    yield get_settings()
    get_settings.cache_clear()


@pytest.fixture
def schema():
    return default_schema()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def small_generated():
    """600 generated episodes with their ground truth"""
    return generated_cohort(600, seed=11)


@pytest.fixture
def small_cohort(small_generated) -> Cohort:
    return small_generated[0]


@pytest.fixture
def cohort_csv(tmp_path, small_cohort):
    return write_cohort_csv(small_cohort, tmp_path / "cohort.csv")


@pytest.fixture
def toy_cohort(schema) -> Cohort:
    """40 hand-built episodes where Urea and Malignancy drive the outcome"""
    records = []
    for i in range(40):
        sick = i % 4 == 0
        records.append(make_record(
            episode_id=f"E{i:03d}",
            outcome=int(sick),
            Urea=90.0 + i if sick else 30.0 + (i % 7),
            Malignancy=int(sick or i % 9 == 0),
            Age=60 + (i % 25),
            Charlson=i % 6,
            Barthel=None if i % 5 == 0 else 40 + i,
            Service="ONC" if sick else ("MIN" if i % 2 else "CAR"),
        ))
    return Cohort(schema=schema, records=tuple(records))
