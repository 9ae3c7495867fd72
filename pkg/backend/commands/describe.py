"""
`describe`: per-feature summary of a cohort CSV (missing counts, mean ± SD, level shares)
"""

# Standard library imports
import argparse
import json
from pathlib import Path

# Local application imports
from models import CommandResult
from mortality.base_config import Settings
from mortality.dataset import load_csv
from mortality.schema import summarize

from .rendering import cohort_table, get_console

NAME = "describe"


def register(subparsers, parent: argparse.ArgumentParser):
    parser = subparsers.add_parser(NAME, parents=[parent], help="Summarize a cohort CSV feature by feature")
    parser.add_argument("cohort", help="Cohort CSV")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace, settings: Settings) -> CommandResult:
    cohort = load_csv(args.cohort)
    summaries = summarize(cohort.records, cohort.schema)
    prevalence = cohort.prevalence() if cohort.has_labels() else None

    get_console(args.quiet).print(cohort_table(summaries, len(cohort), prevalence))

    outputs = {"episodes": len(cohort), "prevalence": prevalence}
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", encoding="utf-8") as f:
            json.dump({**outputs, "features": [s.model_dump(mode="json") for s in summaries]}, f, indent=2)
        outputs["summary"] = str(out)
    return CommandResult(command=NAME, success=True, outputs=outputs)
