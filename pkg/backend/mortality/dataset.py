"""
Cohort ingestion and shaping: CSV load/write, one-episode-per-patient
subsampling, one-hot encoding and stratified splitting.

CSV format: UTF-8, comma separated, header row; an empty cell is a missing
value; booleans are 0/1. Reserved columns are patient_id, episode_id and the
target (exitus_1y). Data rows are numbered from 1 in error messages.
"""

# Standard library imports
import hashlib
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

# Third-party imports
import numpy as np
import pandas as pd

# Local application imports
from .errors import DataError
from .schema import (
    CohortSchema,
    FeatureKind,
    FeatureValue,
    PatientRecord,
    default_schema,
    validate_record,
)

logger = logging.getLogger(__name__)

PATIENT_ID_COLUMN = "patient_id"
EPISODE_ID_COLUMN = "episode_id"


@dataclass(frozen=True)
class Cohort:
    schema: CohortSchema
    records: Tuple[PatientRecord, ...]

    def __len__(self) -> int:
        return len(self.records)

    def subset(self, indices: Sequence[int]) -> "Cohort":
        return Cohort(schema=self.schema, records=tuple(self.records[int(i)] for i in indices))

    def has_labels(self) -> bool:
        return len(self.records) > 0 and all(r.outcome is not None for r in self.records)

    def labels(self) -> np.ndarray:
        """Outcome vector; every record must carry an outcome"""
        if not self.has_labels():
            raise DataError(f"Cohort is not fully labelled ({self.schema.target_name} missing)")
        return np.fromiter((r.outcome for r in self.records), dtype=np.int64, count=len(self.records))

    def prevalence(self) -> float:
        return float(self.labels().mean())


@dataclass(frozen=True)
class ColumnBlock:
    """Contiguous output columns produced by one schema feature"""
    feature: str
    kind: FeatureKind
    start: int
    columns: Tuple[str, ...]
    levels: Tuple[str, ...] = ()

    @property
    def width(self) -> int:
        return len(self.columns)

    @property
    def stop(self) -> int:
        return self.start + self.width


@dataclass(frozen=True)
class Encoder:
    schema: CohortSchema
    vocabularies: Dict[str, Tuple[str, ...]]
    blocks: Tuple[ColumnBlock, ...]

    @property
    def columns(self) -> Tuple[str, ...]:
        return tuple(c for b in self.blocks for c in b.columns)

    @property
    def n_columns(self) -> int:
        return sum(b.width for b in self.blocks)

    def block(self, feature: str) -> ColumnBlock:
        for b in self.blocks:
            if b.feature == feature:
                return b
        raise KeyError(feature)


@dataclass(frozen=True)
class EncodedMatrix:
    """Encoded cohort. values holds NaN wherever mask is True."""
    values: np.ndarray
    mask: np.ndarray
    columns: Tuple[str, ...]
    blocks: Tuple[ColumnBlock, ...]
    labels: Optional[np.ndarray] = None
    episode_ids: Tuple[str, ...] = field(default=())

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_columns(self) -> int:
        return self.values.shape[1]

    @property
    def feature_of_column(self) -> Tuple[str, ...]:
        return tuple(b.feature for b in self.blocks for _ in b.columns)

    def with_values(self, values: np.ndarray, mask: np.ndarray) -> "EncodedMatrix":
        return replace(self, values=values, mask=mask)

    def select(self, features: Sequence[str]) -> "EncodedMatrix":
        """Restrict to the blocks of the named features, in the given order"""
        by_name = {b.feature: b for b in self.blocks}
        missing = [f for f in features if f not in by_name]
        if missing:
            raise DataError(f"Features not present in matrix: {missing}")

        index: List[int] = []
        blocks: List[ColumnBlock] = []
        for name in features:
            b = by_name[name]
            blocks.append(replace(b, start=len(index)))
            index.extend(range(b.start, b.stop))
        return EncodedMatrix(
            values=self.values[:, index],
            mask=self.mask[:, index],
            columns=tuple(self.columns[i] for i in index),
            blocks=tuple(blocks),
            labels=self.labels,
            episode_ids=self.episode_ids,
        )


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    test: np.ndarray
    seed: int


@dataclass(frozen=True)
class RowError:
    row: int
    column: Optional[str]
    message: str
    episode_id: Optional[str] = None


@dataclass
class CsvReadResult:
    records: List[Tuple[int, PatientRecord]] = field(default_factory=list)
    errors: List[RowError] = field(default_factory=list)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def _parse_cell(cell: str, kind: FeatureKind) -> FeatureValue:
    """Typed value of a non-empty cell; ValueError when it does not fit kind"""
    if kind is FeatureKind.CATEGORICAL:
        return cell
    if kind is FeatureKind.BOOLEAN:
        if cell in ("0", "1"):
            return int(cell)
        raise ValueError(f"expected 0 or 1, got {cell!r}")
    if kind is FeatureKind.INTEGER:
        try:
            return int(cell)
        except ValueError:
            number = float(cell)
            if not number.is_integer():
                raise ValueError(f"expected integer, got {cell!r}")
            return int(number)
    number = float(cell)
    if not math.isfinite(number):
        raise ValueError(f"expected finite real number, got {cell!r}")
    return number


def _read_frame(path: Union[str, Path], schema: CohortSchema) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"Cohort file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (UnicodeDecodeError, pd.errors.ParserError) as e:
        raise DataError(f"Unreadable cohort file {path}: {e}")
    except pd.errors.EmptyDataError:
        raise DataError(f"Cohort file {path} has no header row")

    reserved = {PATIENT_ID_COLUMN, EPISODE_ID_COLUMN, schema.target_name}
    known = set(schema.feature_names) | reserved
    for column in frame.columns:
        if column not in known:
            raise DataError("Unknown column", column=column)
    absent = [name for name in schema.feature_names if name not in frame.columns]
    if absent:
        raise DataError(f"Missing feature columns: {', '.join(absent)}")
    return frame


def _cell(row: Dict[str, object], column: str) -> str:
    value = row.get(column, "")
    # short rows come back as NaN even with dtype=str
    return value.strip() if isinstance(value, str) else ""


def read_csv_rows(path: Union[str, Path], schema: Optional[CohortSchema] = None) -> CsvReadResult:
    """
    Parse a cohort CSV row by row, collecting rows that fail instead of raising.

    Header problems (unknown or missing columns, unreadable file) still raise
    DataError: there is nothing row-wise to recover from them.
    """
    schema = schema or default_schema()
    frame = _read_frame(path, schema)
    result = CsvReadResult()

    features = schema.features
    has_target = schema.target_name in frame.columns
    rows = frame.to_dict(orient="records")

    for row_number, row in enumerate(rows, start=1):
        episode_id = _cell(row, EPISODE_ID_COLUMN) or str(row_number)
        patient_id = _cell(row, PATIENT_ID_COLUMN) or episode_id

        values: Dict[str, FeatureValue] = {}
        error: Optional[RowError] = None
        for feature in features:
            cell = _cell(row, feature.name)
            if cell == "":
                values[feature.name] = None
                continue
            try:
                values[feature.name] = _parse_cell(cell, feature.kind)
            except ValueError:
                error = RowError(row_number, feature.name, f"cannot parse {cell!r} as {feature.kind.value}", episode_id)
                break

        outcome: Optional[int] = None
        if error is None and has_target:
            cell = _cell(row, schema.target_name)
            if cell in ("0", "1"):
                outcome = int(cell)
            elif cell != "":
                error = RowError(row_number, schema.target_name, f"outcome must be 0 or 1, got {cell!r}", episode_id)

        if error is None:
            record = PatientRecord(patient_id=patient_id, episode_id=episode_id, values=values, outcome=outcome)
            validation = validate_record(record, schema)
            if validation.ok:
                result.records.append((row_number, record))
                continue
            first = validation.violations[0]
            error = RowError(row_number, first.feature, first.message, episode_id)

        result.errors.append(error)

    return result


def load_csv(path: Union[str, Path], schema: Optional[CohortSchema] = None) -> Cohort:
    """Load a cohort CSV; the first invalid row raises DataError with its row and column"""
    schema = schema or default_schema()
    result = read_csv_rows(path, schema)
    if result.errors:
        first = result.errors[0]
        raise DataError(first.message, row=first.row, column=first.column)
    logger.info(f"Loaded {len(result.records)} episodes from {path}")
    return Cohort(schema=schema, records=tuple(record for _, record in result.records))


def _format_cell(value: FeatureValue) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_cohort_csv(cohort: Cohort, path: Union[str, Path]) -> Path:
    """Write a cohort in the format load_csv reads; the target column is written when any record carries an outcome"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    schema = cohort.schema
    with_target = any(r.outcome is not None for r in cohort.records)

    header = [PATIENT_ID_COLUMN, EPISODE_ID_COLUMN] + schema.feature_names
    if with_target:
        header.append(schema.target_name)

    rows = []
    for record in cohort.records:
        row = [record.patient_id, record.episode_id]
        row += [_format_cell(record.values.get(name)) for name in schema.feature_names]
        if with_target:
            row.append(_format_cell(record.outcome))
        rows.append(row)

    pd.DataFrame(rows, columns=header, dtype=str).to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
    return path


def cohort_fingerprint(cohort: Cohort) -> str:
    """Short digest of episode ids and outcomes, stored as training metadata"""
    digest = hashlib.sha256()
    for record in cohort.records:
        digest.update(f"{record.episode_id}\x1f{record.outcome}\x1e".encode("utf-8"))
    return digest.hexdigest()[:16]


# ---------------------------------------------------------------------------
# Shaping
# ---------------------------------------------------------------------------

def one_episode_per_patient(cohort: Cohort, seed: int) -> Cohort:
    """Keep one uniformly chosen episode per patient, patients in first-appearance order"""
    groups: Dict[str, List[int]] = {}
    for index, record in enumerate(cohort.records):
        groups.setdefault(record.patient_id, []).append(index)

    rng = np.random.default_rng(seed)
    chosen = [episodes[int(rng.integers(len(episodes)))] for episodes in groups.values()]
    return cohort.subset(chosen)


def fit_encoder(cohort: Cohort) -> Encoder:
    """Learn sorted category vocabularies and the column layout"""
    if len(cohort) == 0:
        raise DataError("Cannot fit an encoder on an empty cohort")

    vocabularies: Dict[str, Tuple[str, ...]] = {}
    blocks: List[ColumnBlock] = []
    start = 0
    for feature in cohort.schema.features:
        if feature.kind is FeatureKind.CATEGORICAL:
            observed = {r.values.get(feature.name) for r in cohort.records}
            levels = tuple(sorted(str(v) for v in observed if v is not None))
            vocabularies[feature.name] = levels
            columns = tuple(f"{feature.name}={level}" for level in levels)
        else:
            levels = ()
            columns = (feature.name,)
        blocks.append(ColumnBlock(feature=feature.name, kind=feature.kind, start=start, columns=columns, levels=levels))
        start += len(columns)

    return Encoder(schema=cohort.schema, vocabularies=vocabularies, blocks=tuple(blocks))


def encode(cohort: Cohort, encoder: Encoder) -> EncodedMatrix:
    """One-hot categoricals, pass numeric and boolean values through, mask missing cells"""
    n = len(cohort)
    values = np.zeros((n, encoder.n_columns), dtype=np.float64)
    mask = np.zeros((n, encoder.n_columns), dtype=bool)

    for block in encoder.blocks:
        raw = [r.values.get(block.feature) for r in cohort.records]
        missing = np.fromiter((v is None for v in raw), dtype=bool, count=n)

        if block.kind is FeatureKind.CATEGORICAL:
            if block.width == 0:
                continue
            position = {level: i for i, level in enumerate(block.levels)}
            for row, value in enumerate(raw):
                if value is None:
                    continue
                column = position.get(str(value))
                # unseen categories leave the block at zero
                if column is not None:
                    values[row, block.start + column] = 1.0
            mask[:, block.start:block.stop] = missing[:, None]
        else:
            column = np.fromiter((np.nan if v is None else float(v) for v in raw), dtype=np.float64, count=n)
            values[:, block.start] = column
            mask[:, block.start] = missing

    values[mask] = np.nan
    labels = cohort.labels() if cohort.has_labels() else None
    return EncodedMatrix(
        values=values,
        mask=mask,
        columns=encoder.columns,
        blocks=encoder.blocks,
        labels=labels,
        episode_ids=tuple(r.episode_id for r in cohort.records),
    )


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def stratified_split(labels: Sequence[int], test_fraction: float, seed: int) -> SplitIndices:
    """
    Stratified train/test split.

    Minority test count is round-half-up(count × fraction); the majority class
    takes the remainder of round-half-up(n × fraction) so sizes sum exactly.
    """
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    y = np.asarray(labels)
    positives = np.flatnonzero(y == 1)
    negatives = np.flatnonzero(y == 0)
    if len(positives) + len(negatives) != len(y):
        raise DataError("Labels must be 0 or 1")
    if len(positives) == 0 or len(negatives) == 0:
        raise DataError("Stratified split needs both classes present")

    if len(positives) <= len(negatives):
        minority, majority = positives, negatives
    else:
        minority, majority = negatives, positives
    n_test_total = _round_half_up(len(y) * test_fraction)
    n_test_minority = _round_half_up(len(minority) * test_fraction)
    n_test_majority = min(max(n_test_total - n_test_minority, 0), len(majority))

    rng = np.random.default_rng(seed)
    shuffled_positive = rng.permutation(positives)
    shuffled_negative = rng.permutation(negatives)
    if minority is positives:
        test = np.concatenate([shuffled_positive[:n_test_minority], shuffled_negative[:n_test_majority]])
    else:
        test = np.concatenate([shuffled_positive[:n_test_majority], shuffled_negative[:n_test_minority]])

    in_test = np.zeros(len(y), dtype=bool)
    in_test[test] = True
    return SplitIndices(train=np.flatnonzero(~in_test), test=np.flatnonzero(in_test), seed=seed)
