"""
`synth`: write a synthetic cohort CSV and its ground-truth CSV
"""

# Standard library imports
import argparse
import logging
from pathlib import Path

# Third-party imports
from pydantic import ValidationError

# Local application imports
from models import CommandResult
from mortality.base_config import Settings, log_processing_step
from mortality.dataset import write_cohort_csv
from mortality.errors import ConfigError, format_validation_error
from mortality.synth import GeneratorConfig, bayes_auc, generate_cohort, load_generator_config, write_ground_truth_csv

from .common import resolve_out
from .rendering import get_console

logger = logging.getLogger(__name__)

NAME = "synth"


def register(subparsers, parent: argparse.ArgumentParser):
    parser = subparsers.add_parser(
        NAME, parents=[parent], help="Generate a synthetic cohort with a planted mortality signal",
        description="--config is a generator configuration (JSON); the shipped default is used when omitted.",
    )
    parser.add_argument("--n", type=int, default=None, help="Number of episodes (overrides the config)")
    parser.add_argument("--truth", default=None, help="Ground-truth CSV path (default: <out>.truth.csv)")
    parser.set_defaults(handler=handle)


def truth_path_for(cohort_path: Path) -> Path:
    return cohort_path.with_name(f"{cohort_path.stem}.truth.csv")


def handle(args: argparse.Namespace, settings: Settings) -> CommandResult:
    config = load_generator_config(args.config)
    updates = {}
    if args.n is not None:
        updates["n"] = args.n
    if args.seed is not None:
        updates["seed"] = args.seed
    if updates:
        try:
            config = GeneratorConfig.model_validate({**config.model_dump(), **updates})
        except ValidationError as e:
            raise ConfigError(f"Invalid generator override: {format_validation_error(e)}")

    out = resolve_out(args, settings, "cohort.csv")
    truth_path = Path(args.truth) if args.truth else truth_path_for(out)
    log_processing_step("CLI", NAME, {"n": config.n, "seed": config.seed, "out": str(out)})

    cohort, truth = generate_cohort(config)
    write_cohort_csv(cohort, out)
    write_ground_truth_csv(truth, truth_path)

    prevalence = float(truth.outcomes.mean())
    has_both = 0 < truth.outcomes.sum() < len(truth.outcomes)
    ceiling = bayes_auc(truth) if has_both else None

    console = get_console(args.quiet)
    console.print(f"Wrote {config.n} episodes to {out} (prevalence {prevalence:.4f})")
    if ceiling is not None:
        console.print(f"Bayes AUC of the planted risk: {ceiling:.4f}")

    return CommandResult(
        command=NAME,
        success=True,
        outputs={
            "cohort": str(out),
            "ground_truth": str(truth_path),
            "n": config.n,
            "seed": config.seed,
            "prevalence": prevalence,
            "intercept": truth.intercept,
            "bayes_auc": ceiling,
        },
    )
