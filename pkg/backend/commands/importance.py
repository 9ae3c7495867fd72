"""
`importance`: impurity importance of a tree-ensemble bundle, per original feature
"""

# Standard library imports
import argparse
from pathlib import Path

# Third-party imports
import pandas as pd

# Local application imports
from models import CommandResult
from mortality.base_config import Settings
from mortality.evaluation import importance_report
from mortality.persist import load_model, pipeline_from_bundle
from mortality.pipeline import IMPORTANCE_KINDS

from .rendering import get_console, importance_table
from .train import parse_kind

NAME = "importance"


def register(subparsers, parent: argparse.ArgumentParser):
    parser = subparsers.add_parser(NAME, parents=[parent], help="Variable importance of a gbc or rf bundle")
    parser.add_argument("bundle", help="Model bundle (.arx.json)")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace, settings: Settings) -> CommandResult:
    bundle = load_model(args.bundle)
    parse_kind(bundle.kind, "importance", IMPORTANCE_KINDS)
    rows = importance_report(pipeline_from_bundle(bundle))

    get_console(args.quiet).print(importance_table(rows, f"Variable importance: {bundle.kind} ({bundle.fingerprint})"))

    outputs = {
        "kind": bundle.kind,
        "fingerprint": bundle.fingerprint,
        "rows": [{"feature": r.feature, "label": r.label, "percentage": round(r.percentage, 2)} for r in rows],
    }
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame(outputs["rows"]).to_csv(out, index=False, float_format="%.2f", lineterminator="\n")
        outputs["table"] = str(out)
    return CommandResult(command=NAME, success=True, outputs=outputs)
