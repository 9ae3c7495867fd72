"""
`baseline-fit`: fit the Buurman-modified index or apply the PROFUND table,
search its threshold on a calibration split and persist it as a bundle
"""

# Standard library imports
import argparse

# Local application imports
from models import CommandResult
from mortality.base_config import Settings
from mortality.pipeline import BASELINE_KINDS, ModelKind

from .common import parse_json_object
from .rendering import buurman_table, get_console, profund_table_view
from .train import add_fit_arguments, fit_and_save, parse_kind, training_outputs

NAME = "baseline-fit"


def register(subparsers, parent: argparse.ArgumentParser):
    parser = subparsers.add_parser(
        NAME, parents=[parent], help="Fit a clinical baseline (buurman or profund)",
        description="For profund, --config (or --profund-table) names the PROFUND table file.",
    )
    parser.add_argument("cohort", help="Labelled cohort CSV")
    parser.add_argument("--model", "-m", default=ModelKind.BUURMAN.value,
                        help=f"Baseline kind: {', '.join(k.value for k in BASELINE_KINDS)}")
    add_fit_arguments(parser)
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace, settings: Settings) -> CommandResult:
    kind = parse_kind(args.model, "baseline fitting", BASELINE_KINDS)
    # baselines take no hyperparameters; build_params rejects any given
    params = parse_json_object(args.params, "--params") if args.params else {}
    pipeline, out, bundle = fit_and_save(args, settings, kind, params, args.profund_table or args.config)

    console = get_console(args.quiet)
    if kind is ModelKind.BUURMAN:
        console.print(buurman_table(pipeline.learner))
    else:
        console.print(profund_table_view(pipeline.learner))
    console.print(f"Threshold {pipeline.threshold:.4f}, bundle {out}")

    outputs = training_outputs(pipeline, out, bundle)
    if kind is ModelKind.BUURMAN:
        outputs["intercept"] = pipeline.learner.intercept
        outputs["coefficients"] = pipeline.learner.as_dict()
    else:
        outputs["max_points"] = pipeline.learner.max_points
    return CommandResult(command=NAME, success=True, outputs=outputs)
