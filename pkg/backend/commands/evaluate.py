"""
`evaluate`: repeated stratified hold-out for one or more model kinds
"""

# Standard library imports
import argparse
import json
import logging
from pathlib import Path
from typing import Any, Dict

# Third-party imports
from pydantic import ValidationError

# Local application imports
from models import CommandResult
from mortality.base_config import Settings
from mortality.dataset import load_csv, one_episode_per_patient
from mortality.errors import ConfigError, format_validation_error
from mortality.evaluation import EvalPlan, ThresholdMode, load_eval_plan, run_repeated_holdout
from mortality.persist import save_report
from mortality.pipeline import ALL_KINDS
from mortality.seeding import STREAM_DEDUPE, derive_seed

from .common import resolve_out, resolve_seed
from .rendering import evaluation_table, format_ci, get_console, importance_table
from .train import parse_kind

logger = logging.getLogger(__name__)

NAME = "evaluate"


def register(subparsers, parent: argparse.ArgumentParser):
    parser = subparsers.add_parser(
        NAME, parents=[parent], help="Repeated stratified hold-out evaluation",
        description="--config is an evaluation config (JSON); the shipped default is used when omitted.",
    )
    parser.add_argument("cohort", help="Labelled cohort CSV")
    parser.add_argument("--models", default=None, help="Comma-separated model kinds (overrides the config)")
    parser.add_argument("--repetitions", type=int, default=None)
    parser.add_argument("--threshold-mode", choices=[m.value for m in ThresholdMode], default=None)
    parser.add_argument("--threshold", type=float, default=None, help="Fixed threshold (implies --threshold-mode fixed)")
    parser.add_argument("--n-jobs", type=int, default=None, help="Repetitions run in parallel threads")
    parser.add_argument("--no-dedupe", action="store_true", help="Keep every episode of a patient")
    parser.set_defaults(handler=handle)


def timings_path_for(report_path: Path) -> Path:
    return report_path.with_suffix(".timings.json")


def _plan_with_overrides(plan: EvalPlan, args: argparse.Namespace) -> EvalPlan:
    updates: Dict[str, Any] = {}
    if args.models:
        updates["models"] = [parse_kind(v, "evaluation", ALL_KINDS).value for v in args.models.split(",") if v.strip()]
    if args.repetitions is not None:
        updates["repetitions"] = args.repetitions
    if args.threshold is not None:
        updates["threshold_mode"] = ThresholdMode.FIXED.value
        updates["fixed_threshold"] = args.threshold
    elif args.threshold_mode:
        updates["threshold_mode"] = args.threshold_mode
    if not updates:
        return plan
    try:
        return EvalPlan.model_validate({**plan.model_dump(mode="json"), **updates})
    except ValidationError as e:
        raise ConfigError(f"Invalid evaluation override: {format_validation_error(e)}")


def handle(args: argparse.Namespace, settings: Settings) -> CommandResult:
    plan = _plan_with_overrides(load_eval_plan(args.config), args)
    seed = resolve_seed(args, settings)
    n_jobs = args.n_jobs or settings.n_jobs

    cohort = load_csv(args.cohort)
    if not args.no_dedupe:
        cohort = one_episode_per_patient(cohort, derive_seed(seed, STREAM_DEDUPE))

    reports = [run_repeated_holdout(cohort, cfg) for cfg in plan.configs(seed, n_jobs)]

    out = resolve_out(args, settings, "evaluation_report.json")
    save_report(reports, out)
    timings = timings_path_for(out)
    with open(timings, "w", encoding="utf-8") as f:
        json.dump({r.model: r.repetition_seconds for r in reports}, f, indent=2)

    console = get_console(args.quiet)
    console.print(evaluation_table(reports))
    for report in reports:
        if report.importance:
            console.print(importance_table(report.importance[:10], f"Variable importance: {report.model} (top 10)"))

    return CommandResult(
        command=NAME,
        success=True,
        outputs={
            "report": str(out),
            "timings": str(timings),
            "episodes": len(cohort),
            "repetitions": plan.repetitions,
            "results": {r.model: {name: format_ci(s) for name, s in r.summaries.items()} for r in reports},
        },
    )
