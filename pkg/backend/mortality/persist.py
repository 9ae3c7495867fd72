"""
Versioned, checksummed JSON files for trained pipelines and evaluation reports.

File layout (keys sorted, compact separators, one trailing newline):

    {"checksum": ..., "created_utc": ..., "format_version": 1, "kind": ..., "payload": {...}}

The checksum is the SHA-256 of the same canonical serialization without the
checksum key. On load the file must parse, re-serialize to exactly its own
bytes and match its checksum before the version is even looked at.
"""

# Standard library imports
import hashlib
import json
import logging
import os
import tempfile
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

# Third-party imports
import numpy as np
from pydantic import BaseModel, Field, ValidationError

# Local application imports
from . import __version__
from .baselines import BuurmanModel, ProfundItem, ProfundTable
from .dataset import ColumnBlock, Encoder
from .errors import BundleIntegrityError, BundleVersionError
from .evaluation import EvaluationReport
from .learners import (
    GradientBoostedEnsemble,
    GradientBoostingParams,
    KnnModel,
    RandomForestEnsemble,
    RandomForestParams,
)
from .pipeline import ModelKind, TrainedPipeline
from .preprocess import Imputer, Standardizer
from .schema import CohortSchema, FeatureKind
from .trees import DecisionTree

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
REPORT_KIND = "evaluation_report"
BUNDLE_SUFFIX = ".arx.json"
FINGERPRINT_LENGTH = 16

_REQUIRED_KEYS = {"checksum", "format_version", "kind", "payload"}


class ModelBundle(BaseModel):
    format_version: int = FORMAT_VERSION
    kind: str
    created_utc: str
    checksum: str = ""
    payload: Dict[str, Any] = Field(default_factory=dict)

    @property
    def fingerprint(self) -> str:
        return self.checksum[:FINGERPRINT_LENGTH]


# ---------------------------------------------------------------------------
# Canonical container
# ---------------------------------------------------------------------------

def canonical_json(document: Dict[str, Any]) -> str:
    return json.dumps(document, sort_keys=True, separators=(",", ":"), allow_nan=False, ensure_ascii=True)


def compute_checksum(document: Dict[str, Any]) -> str:
    body = {key: value for key, value in document.items() if key != "checksum"}
    return hashlib.sha256(canonical_json(body).encode("ascii")).hexdigest()


def atomic_write_text(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    handle = tempfile.NamedTemporaryFile(
        "w", encoding="ascii", dir=path.parent, prefix=f".{path.name}.", suffix=".tmp", delete=False
    )
    try:
        with handle:
            handle.write(text)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(handle.name, path)
    except BaseException:
        Path(handle.name).unlink(missing_ok=True)
        raise


def write_document(path: Union[str, Path], kind: str, payload: Dict[str, Any],
                   created_utc: Optional[str] = None) -> Dict[str, Any]:
    document: Dict[str, Any] = {"format_version": FORMAT_VERSION, "kind": kind, "payload": payload}
    if created_utc is not None:
        document["created_utc"] = created_utc
    document["checksum"] = compute_checksum(document)
    atomic_write_text(Path(path), canonical_json(document) + "\n")
    return document


def read_document(path: Union[str, Path]) -> Dict[str, Any]:
    """Parse and verify a file; raises BundleIntegrityError or BundleVersionError"""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise BundleIntegrityError(f"Cannot read {path}: {e}")
    try:
        text = raw.decode("ascii")
        document = json.loads(text)
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise BundleIntegrityError(f"{path} is truncated or corrupt: {e}")

    if not isinstance(document, dict) or not _REQUIRED_KEYS <= set(document):
        raise BundleIntegrityError(f"{path} lacks the required top-level fields {sorted(_REQUIRED_KEYS)}")
    try:
        canonical = canonical_json(document) + "\n"
    except ValueError as e:
        raise BundleIntegrityError(f"{path} holds non-finite numbers: {e}")
    if canonical != text:
        raise BundleIntegrityError(f"{path} is not in canonical form (corrupted or edited)")
    if document["checksum"] != compute_checksum(document):
        raise BundleIntegrityError(f"Checksum mismatch in {path}")
    if document["format_version"] != FORMAT_VERSION:
        raise BundleVersionError(document["format_version"], FORMAT_VERSION)
    return document


# ---------------------------------------------------------------------------
# Pipeline state
# ---------------------------------------------------------------------------

def _schema_state(schema: CohortSchema) -> Dict[str, Any]:
    return schema.model_dump(mode="json")


def _encoder_state(encoder: Encoder) -> Dict[str, Any]:
    return {
        "schema": _schema_state(encoder.schema),
        "vocabularies": {name: list(levels) for name, levels in encoder.vocabularies.items()},
        "blocks": [
            {
                "feature": b.feature,
                "kind": b.kind.value,
                "start": b.start,
                "columns": list(b.columns),
                "levels": list(b.levels),
            }
            for b in encoder.blocks
        ],
    }


def _encoder_from_state(state: Dict[str, Any]) -> Encoder:
    return Encoder(
        schema=CohortSchema.model_validate(state["schema"]),
        vocabularies={name: tuple(levels) for name, levels in state["vocabularies"].items()},
        blocks=tuple(
            ColumnBlock(
                feature=b["feature"],
                kind=FeatureKind(b["kind"]),
                start=int(b["start"]),
                columns=tuple(b["columns"]),
                levels=tuple(b["levels"]),
            )
            for b in state["blocks"]
        ),
    )


def _imputer_state(imputer: Imputer) -> Dict[str, Any]:
    return {
        "columns": list(imputer.columns),
        "medians": dict(imputer.medians),
        "modes": dict(imputer.modes),
        "fill": imputer.fill.tolist(),
    }


def _imputer_from_state(state: Dict[str, Any]) -> Imputer:
    return Imputer(
        columns=tuple(state["columns"]),
        medians={k: float(v) for k, v in state["medians"].items()},
        modes=dict(state["modes"]),
        fill=np.asarray(state["fill"], dtype=np.float64),
    )


def _standardizer_state(standardizer: Standardizer) -> Dict[str, Any]:
    return {
        "columns": list(standardizer.columns),
        "mean": standardizer.mean.tolist(),
        "sd": standardizer.sd.tolist(),
        "floor": standardizer.floor,
    }


def _standardizer_from_state(state: Dict[str, Any]) -> Standardizer:
    return Standardizer(
        columns=tuple(state["columns"]),
        mean=np.asarray(state["mean"], dtype=np.float64),
        sd=np.asarray(state["sd"], dtype=np.float64),
        floor=float(state["floor"]),
    )


def _learner_state(kind: ModelKind, learner: Any) -> Dict[str, Any]:
    if kind is ModelKind.GBC:
        return {
            "init_score": learner.init_score,
            "learning_rate": learner.learning_rate,
            "trees": [t.to_state() for t in learner.trees],
            "columns": list(learner.columns),
            "feature_of_column": list(learner.feature_of_column),
            "params": learner.params.model_dump(mode="json"),
            "seed": learner.seed,
            "train_loss": list(learner.train_loss),
        }
    if kind is ModelKind.RF:
        return {
            "trees": [t.to_state() for t in learner.trees],
            "columns": list(learner.columns),
            "feature_of_column": list(learner.feature_of_column),
            "params": learner.params.model_dump(mode="json"),
            "n_candidate_features": learner.n_candidate_features,
            "seed": learner.seed,
        }
    if kind is ModelKind.KNN:
        return {
            "k": learner.k,
            "train_values": learner.train_values.tolist(),
            "train_labels": learner.train_labels.tolist(),
            "columns": list(learner.columns),
        }
    if kind is ModelKind.BUURMAN:
        return {
            "intercept": learner.intercept,
            "coefficients": list(learner.coefficients),
            "features": list(learner.features),
        }
    return {"items": [item.model_dump(mode="json") for item in learner.items]}


def _learner_from_state(kind: ModelKind, state: Dict[str, Any]) -> Any:
    if kind is ModelKind.GBC:
        return GradientBoostedEnsemble(
            init_score=float(state["init_score"]),
            learning_rate=float(state["learning_rate"]),
            trees=tuple(DecisionTree.from_state(t) for t in state["trees"]),
            columns=tuple(state["columns"]),
            feature_of_column=tuple(state["feature_of_column"]),
            params=GradientBoostingParams.model_validate(state["params"]),
            seed=int(state["seed"]),
            train_loss=tuple(float(v) for v in state["train_loss"]),
        )
    if kind is ModelKind.RF:
        return RandomForestEnsemble(
            trees=tuple(DecisionTree.from_state(t) for t in state["trees"]),
            columns=tuple(state["columns"]),
            feature_of_column=tuple(state["feature_of_column"]),
            params=RandomForestParams.model_validate(state["params"]),
            n_candidate_features=int(state["n_candidate_features"]),
            seed=int(state["seed"]),
        )
    if kind is ModelKind.KNN:
        columns = tuple(state["columns"])
        values = np.asarray(state["train_values"], dtype=np.float64).reshape(-1, len(columns))
        return KnnModel(
            k=int(state["k"]),
            train_values=values,
            train_labels=np.asarray(state["train_labels"], dtype=np.int64),
            columns=columns,
        )
    if kind is ModelKind.BUURMAN:
        return BuurmanModel(
            intercept=float(state["intercept"]),
            coefficients=tuple(float(c) for c in state["coefficients"]),
            features=tuple(state["features"]),
        )
    return ProfundTable(items=tuple(ProfundItem.model_validate(item) for item in state["items"]))


def pipeline_payload(pipeline: TrainedPipeline) -> Dict[str, Any]:
    return {
        "params": pipeline.params,
        "seed": pipeline.seed,
        "threshold": pipeline.threshold,
        "metadata": pipeline.metadata,
        "encoder": _encoder_state(pipeline.encoder) if pipeline.encoder is not None else None,
        "imputer": _imputer_state(pipeline.imputer) if pipeline.imputer is not None else None,
        "standardizer": _standardizer_state(pipeline.standardizer) if pipeline.standardizer is not None else None,
        "learner": _learner_state(pipeline.kind, pipeline.learner),
        "artifact_version": __version__,
    }


def pipeline_from_bundle(bundle: ModelBundle) -> TrainedPipeline:
    try:
        kind = ModelKind(bundle.kind)
        payload = bundle.payload
        return TrainedPipeline(
            kind=kind,
            learner=_learner_from_state(kind, payload["learner"]),
            encoder=_encoder_from_state(payload["encoder"]) if payload.get("encoder") else None,
            imputer=_imputer_from_state(payload["imputer"]) if payload.get("imputer") else None,
            standardizer=_standardizer_from_state(payload["standardizer"]) if payload.get("standardizer") else None,
            params=payload.get("params", {}),
            seed=int(payload.get("seed", 0)),
            threshold=payload.get("threshold"),
            metadata=payload.get("metadata", {}),
        )
    except (KeyError, TypeError, ValueError, ValidationError) as e:
        raise BundleIntegrityError(f"Bundle payload for kind '{bundle.kind}' is malformed: {e}")


def _utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def bundle_from_pipeline(pipeline: TrainedPipeline, created_utc: Optional[str] = None) -> ModelBundle:
    document = {
        "format_version": FORMAT_VERSION,
        "kind": pipeline.kind.value,
        "created_utc": created_utc or _utc_now(),
        "payload": pipeline_payload(pipeline),
    }
    # round-trip through JSON so the in-memory bundle equals what load_model returns
    document = json.loads(canonical_json(document))
    document["checksum"] = compute_checksum(document)
    return ModelBundle.model_validate(document)


def save_model(bundle: Union[ModelBundle, TrainedPipeline], path: Union[str, Path]) -> ModelBundle:
    """Write a bundle atomically; a pipeline is converted first"""
    if isinstance(bundle, TrainedPipeline):
        bundle = bundle_from_pipeline(bundle)
    write_document(path, bundle.kind, bundle.payload, bundle.created_utc)
    logger.info(f"Saved {bundle.kind} bundle to {path} (fingerprint {bundle.fingerprint})")
    return bundle


def load_model(path: Union[str, Path]) -> ModelBundle:
    document = read_document(path)
    if "created_utc" not in document:
        raise BundleIntegrityError(f"{path} is not a model bundle (no created_utc)")
    if document["kind"] not in {k.value for k in ModelKind}:
        raise BundleIntegrityError(f"{path} holds unknown kind '{document['kind']}'")
    return ModelBundle.model_validate(document)


def load_pipeline(path: Union[str, Path]) -> TrainedPipeline:
    return pipeline_from_bundle(load_model(path))


def read_bundle_header(path: Union[str, Path]) -> Dict[str, Any]:
    """
    kind, format_version, created_utc and fingerprint of a bundle.

    Reads and checksum-verifies the whole file, payload included, so a
    corrupted bundle raises here as it would in load_model.
    """
    document = read_document(path)
    return {
        "kind": document["kind"],
        "format_version": document["format_version"],
        "created_utc": document.get("created_utc"),
        "fingerprint": document["checksum"][:FINGERPRINT_LENGTH],
    }


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def save_report(reports: Union[EvaluationReport, Sequence[EvaluationReport]], path: Union[str, Path]) -> Path:
    """Write one or more reports; no timestamps, so equal inputs give equal bytes"""
    if isinstance(reports, EvaluationReport):
        reports = [reports]
    payload = {
        "artifact_version": __version__,
        "reports": [r.model_dump(mode="json") for r in reports],
    }
    write_document(path, REPORT_KIND, payload)
    return Path(path)


def load_report(path: Union[str, Path]) -> List[EvaluationReport]:
    document = read_document(path)
    if document["kind"] != REPORT_KIND:
        raise BundleIntegrityError(f"{path} holds '{document['kind']}', not an evaluation report")
    try:
        return [EvaluationReport.model_validate(r) for r in document["payload"]["reports"]]
    except (KeyError, TypeError, ValidationError) as e:
        raise BundleIntegrityError(f"Malformed evaluation report in {path}: {e}")
