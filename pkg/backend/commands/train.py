"""
`train`: fit a full pipeline on a labelled cohort and persist it as one bundle
"""

# Standard library imports
import argparse
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Tuple

# Local application imports
from models import CommandResult
from mortality.base_config import Settings
from mortality.baselines import load_profund_table
from mortality.dataset import load_csv
from mortality.persist import BUNDLE_SUFFIX, ModelBundle, save_model
from mortality.pipeline import ALL_KINDS, ModelKind, TrainedPipeline, parse_model_kind, train_pipeline

from .common import load_json_object, parse_json_object, resolve_out, resolve_seed
from .rendering import get_console

logger = logging.getLogger(__name__)

NAME = "train"


def register(subparsers, parent: argparse.ArgumentParser):
    parser = subparsers.add_parser(
        NAME, parents=[parent], help="Train a model and write a bundle",
        description="--config is a JSON object of hyperparameters; --params entries override it.",
    )
    parser.add_argument("cohort", help="Labelled cohort CSV")
    parser.add_argument("--model", "-m", required=True, help=f"Model kind: {', '.join(k.value for k in ALL_KINDS)}")
    add_fit_arguments(parser)
    parser.set_defaults(handler=handle)


def add_fit_arguments(parser: argparse.ArgumentParser):
    parser.add_argument("--params", default=None, help='Hyperparameters as a JSON object, e.g. \'{"n_trees": 50}\'')
    parser.add_argument("--threshold", type=float, default=None,
                        help="Decision threshold; skips the calibration-split search")
    parser.add_argument("--profund-table", default=None, help="PROFUND table file (profund only)")
    parser.add_argument("--no-dedupe", action="store_true", help="Keep every episode of a patient")


def fit_and_save(args: argparse.Namespace, settings: Settings, kind: ModelKind,
                 params: Dict[str, Any], profund_path: Optional[str]) -> Tuple[TrainedPipeline, Path, ModelBundle]:
    """Shared by train and baseline-fit: load, fit, calibrate, persist"""
    cohort = load_csv(args.cohort)
    seed = resolve_seed(args, settings)
    table = load_profund_table(profund_path, cohort.schema) if kind is ModelKind.PROFUND else None

    pipeline = train_pipeline(
        cohort, kind, params, seed,
        threshold=args.threshold,
        dedupe=not args.no_dedupe,
        profund_table=table,
    )
    out = resolve_out(args, settings, f"{kind.value}{BUNDLE_SUFFIX}")
    bundle = save_model(pipeline, out)
    return pipeline, out, bundle


def training_outputs(pipeline: TrainedPipeline, out: Path, bundle: ModelBundle) -> Dict[str, Any]:
    return {
        "bundle": str(out),
        "kind": pipeline.kind.value,
        "fingerprint": bundle.fingerprint,
        "threshold": pipeline.threshold,
        "n_train": pipeline.metadata.get("n_train"),
        "params": pipeline.params,
    }


def parse_kind(value: str, operation: str, allowed: Iterable[ModelKind]) -> ModelKind:
    return parse_model_kind(value.strip().lower(), operation, allowed)


def handle(args: argparse.Namespace, settings: Settings) -> CommandResult:
    kind = parse_kind(args.model, "training", ALL_KINDS)
    params = load_json_object(args.config, "hyperparameter file")
    if args.params:
        params.update(parse_json_object(args.params, "--params"))

    pipeline, out, bundle = fit_and_save(args, settings, kind, params, args.profund_table)
    get_console(args.quiet).print(
        f"Trained {kind.value} on {pipeline.metadata['n_train']} episodes, "
        f"threshold {pipeline.threshold:.4f}, bundle {out}"
    )
    return CommandResult(command=NAME, success=True, outputs=training_outputs(pipeline, out, bundle))
