"""
Comparator indices: the point-based PROFUND index and the four-feature
Buurman-style linear index refitted by least squares.
"""

# Standard library imports
import logging
import operator
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple, Union

# Third-party imports
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

# Local application imports
from .dataset import Cohort, EncodedMatrix
from .errors import ConfigError, DataError, ModelError
from .schema import CohortSchema, FeatureValue, PatientRecord

logger = logging.getLogger(__name__)

CONFIG_DIRECTORY = Path(__file__).resolve().parent.parent / "config"
DEFAULT_PROFUND_TABLE = CONFIG_DIRECTORY / "profund_default.txt"

BUURMAN_FEATURES = ("Barthel", "Charlson", "Malignancy", "Urea")

ProfundOp = Literal["<", "<=", ">", ">=", "==", "flag"]

_COMPARATORS: Dict[str, Callable[[float, float], bool]] = {
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
    "==": operator.eq,
}


class ProfundItem(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    feature: str
    op: ProfundOp
    cutpoint: Optional[Union[float, str]] = None
    points: int = Field(ge=0)

    def satisfied(self, value: FeatureValue) -> bool:
        """Predicate outcome; a missing input never satisfies an item"""
        if value is None:
            return False
        if self.op == "flag":
            return value == 1
        if isinstance(self.cutpoint, str) or isinstance(value, str):
            if self.op != "==":
                raise ModelError(f"Item '{self.name}' compares a category with '{self.op}'")
            return str(value) == str(self.cutpoint)
        return bool(_COMPARATORS[self.op](float(value), float(self.cutpoint)))


class ProfundTable(BaseModel):
    model_config = ConfigDict(frozen=True)

    items: Tuple[ProfundItem, ...]

    @property
    def max_points(self) -> int:
        return sum(item.points for item in self.items)

    def check_features(self, schema: CohortSchema):
        for item in self.items:
            if not schema.has(item.feature):
                raise ConfigError(f"PROFUND item '{item.name}' references unknown feature '{item.feature}'")


def _parse_cutpoint(text: str, op: str) -> Optional[Union[float, str]]:
    if op == "flag" or text in ("", "-"):
        return None
    try:
        return float(text)
    except ValueError:
        return text


def parse_profund_table(text: str, schema: Optional[CohortSchema] = None) -> ProfundTable:
    """
    Parse `name, feature, op, cutpoint, points` lines. Blank lines and lines
    starting with '#' are skipped; errors carry the 1-based line number.
    """
    items: List[ProfundItem] = []
    for line_number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = [part.strip() for part in stripped.split(",")]
        if len(fields) != 5:
            raise ConfigError(f"Expected 5 comma-separated fields, got {len(fields)}", line=line_number)
        name, feature, op, cutpoint, points = fields
        if op not in ("<", "<=", ">", ">=", "==", "flag"):
            raise ConfigError(f"Unknown operator '{op}'", line=line_number)
        if op != "flag" and cutpoint in ("", "-"):
            raise ConfigError(f"Operator '{op}' needs a cutpoint", line=line_number)
        try:
            item = ProfundItem(
                name=name, feature=feature, op=op,
                cutpoint=_parse_cutpoint(cutpoint, op), points=int(points),
            )
        except (ValueError, ValidationError) as e:
            raise ConfigError(f"Invalid PROFUND item: {e}", line=line_number)
        if schema is not None and not schema.has(feature):
            raise ConfigError(f"Unknown feature '{feature}'", line=line_number)
        items.append(item)

    if not items:
        raise ConfigError("PROFUND table has no items")
    return ProfundTable(items=tuple(items))


def load_profund_table(path: Union[str, Path, None] = None, schema: Optional[CohortSchema] = None) -> ProfundTable:
    path = Path(path) if path else DEFAULT_PROFUND_TABLE
    if not path.is_file():
        raise ConfigError(f"PROFUND table not found: {path}")
    return parse_profund_table(path.read_text(encoding="utf-8"), schema)


def profund_score(record: PatientRecord, table: ProfundTable) -> int:
    """Sum of points over satisfied items"""
    score = 0
    for item in table.items:
        if item.feature not in record.values:
            raise ModelError(f"PROFUND item '{item.name}' references unknown feature '{item.feature}'")
        if item.satisfied(record.values[item.feature]):
            score += item.points
    return score


def profund_scores(cohort: Cohort, table: ProfundTable) -> np.ndarray:
    return np.asarray([profund_score(r, table) for r in cohort.records], dtype=np.float64)


@dataclass(frozen=True)
class BuurmanModel:
    intercept: float
    coefficients: Tuple[float, ...]
    features: Tuple[str, ...] = BUURMAN_FEATURES

    def __post_init__(self):
        if len(self.coefficients) != len(BUURMAN_FEATURES):
            raise ModelError(f"Buurman model needs exactly {len(BUURMAN_FEATURES)} coefficients")

    def as_dict(self) -> Dict[str, float]:
        return dict(zip(self.features, self.coefficients))


def _check_buurman_layout(m: EncodedMatrix):
    if tuple(m.columns) != BUURMAN_FEATURES:
        raise ModelError(f"Buurman design must have columns {BUURMAN_FEATURES}, got {tuple(m.columns)}")
    if m.mask.any():
        raise ModelError("Buurman design must be imputed")


def fit_buurman(m: EncodedMatrix, labels: Optional[Sequence[float]] = None) -> BuurmanModel:
    """
    Ordinary least squares of the target on intercept + Barthel, Charlson,
    Malignancy and Urea.

    Columns enter the rank check one at a time, so a rank-deficient design
    names the first feature that adds nothing new.
    """
    _check_buurman_layout(m)
    y = np.asarray(m.labels if labels is None else labels, dtype=np.float64)
    if y.size != m.n_rows:
        raise ModelError(f"Expected {m.n_rows} labels, got {y.size}")
    if m.n_rows < 5:
        raise DataError(f"Buurman fit needs at least 5 rows, got {m.n_rows}")
    if np.all(y == y[0]):
        raise DataError("Buurman fit needs a non-constant target")

    design = np.column_stack([np.ones(m.n_rows), m.values])
    for j, feature in enumerate(BUURMAN_FEATURES, start=2):
        if np.linalg.matrix_rank(design[:, :j]) < j:
            raise ModelError(f"Rank-deficient Buurman design: '{feature}' is degenerate")

    solution, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    return BuurmanModel(intercept=float(solution[0]), coefficients=tuple(float(c) for c in solution[1:]))


def buurman_predict(model: BuurmanModel, m: EncodedMatrix) -> np.ndarray:
    """Unbounded linear predictor; only its ranking is used"""
    _check_buurman_layout(m)
    return model.intercept + m.values @ np.asarray(model.coefficients)
