"""
Train-split-only imputation and standardization.

Numeric and boolean columns are imputed with the training median; a
categorical block is imputed with its training mode (lowest level wins a
tie). Standardization is only used by the distance-based learner.
"""

# Standard library imports
from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

# Third-party imports
import numpy as np

# Local application imports
from .dataset import EncodedMatrix
from .errors import DataError, ModelError
from .schema import FeatureKind

SD_FLOOR = 1e-12


@dataclass(frozen=True)
class Imputer:
    columns: Tuple[str, ...]
    medians: Dict[str, float]
    modes: Dict[str, str]
    fill: np.ndarray


@dataclass(frozen=True)
class Standardizer:
    columns: Tuple[str, ...]
    mean: np.ndarray
    sd: np.ndarray
    floor: float = SD_FLOOR

    @property
    def scale(self) -> np.ndarray:
        return np.maximum(self.sd, self.floor)


def _check_rows(m: EncodedMatrix, rows: Sequence[int]) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise DataError("Cannot fit on an empty set of rows")
    return rows


def _check_layout(m: EncodedMatrix, columns: Tuple[str, ...]):
    if tuple(m.columns) != tuple(columns):
        raise ModelError(
            f"Column layout mismatch: matrix has {len(m.columns)} columns, fitted state expects {len(columns)}"
        )


def sorted_median(values: np.ndarray) -> float:
    """Median by full sort: middle value, or the mean of the two middle values"""
    ordered = np.sort(values)
    n = ordered.size
    middle = n // 2
    if n % 2:
        return float(ordered[middle])
    return float((ordered[middle - 1] + ordered[middle]) / 2)


def fit_imputer(m: EncodedMatrix, rows: Sequence[int]) -> Imputer:
    rows = _check_rows(m, rows)
    values = m.values[rows]
    mask = m.mask[rows]

    fill = np.zeros(m.n_columns, dtype=np.float64)
    medians: Dict[str, float] = {}
    modes: Dict[str, str] = {}

    for block in m.blocks:
        if block.width == 0:
            continue
        observed = ~mask[:, block.start]

        if not observed.any():
            raise DataError("Column is missing in every training row", column=block.feature)

        if block.kind is FeatureKind.CATEGORICAL:
            counts = values[observed, block.start:block.stop].sum(axis=0)
            # levels are sorted, so argmax picks the lexicographically lowest among ties
            best = int(np.argmax(counts))
            modes[block.feature] = block.levels[best]
            fill[block.start + best] = 1.0
        else:
            median = sorted_median(values[observed, block.start])
            medians[block.feature] = median
            fill[block.start] = median

    return Imputer(columns=tuple(m.columns), medians=medians, modes=modes, fill=fill)


def apply_imputer(m: EncodedMatrix, imputer: Imputer) -> EncodedMatrix:
    _check_layout(m, imputer.columns)
    values = np.where(m.mask, imputer.fill[None, :], m.values)
    return m.with_values(values, np.zeros_like(m.mask))


def fit_standardizer(m: EncodedMatrix, rows: Sequence[int]) -> Standardizer:
    rows = _check_rows(m, rows)
    if m.mask.any():
        raise DataError("Standardizer must be fitted on an imputed matrix")
    values = m.values[rows]
    return Standardizer(columns=tuple(m.columns), mean=values.mean(axis=0), sd=values.std(axis=0))


def apply_standardizer(m: EncodedMatrix, standardizer: Standardizer) -> EncodedMatrix:
    _check_layout(m, standardizer.columns)
    values = (m.values - standardizer.mean) / standardizer.scale
    return m.with_values(values, m.mask.copy())


def invert_standardizer(m: EncodedMatrix, standardizer: Standardizer) -> EncodedMatrix:
    _check_layout(m, standardizer.columns)
    values = m.values * standardizer.scale + standardizer.mean
    return m.with_values(values, m.mask.copy())
