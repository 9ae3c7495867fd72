"""
Rich console tables for command output
"""

# Standard library imports
from typing import Iterable, List, Optional, Sequence

# Third-party imports
from rich.console import Console
from rich.table import Table

# Local application imports
from mortality.baselines import BuurmanModel, ProfundTable
from mortality.evaluation import EvaluationReport, ImportanceRow, MetricSummary, ThresholdMode
from mortality.schema import FeatureKind, FeatureSummary

_METRIC_HEADERS = (
    ("accuracy", "Accuracy"),
    ("auc", "AUC ROC"),
    ("specificity", "Specificity"),
    ("sensitivity", "Sensitivity"),
    ("ber", "BER"),
)


def get_console(quiet: bool = False) -> Console:
    return Console(quiet=quiet, highlight=False)


def format_ci(summary: MetricSummary) -> str:
    """`mean [low, high]` with three decimals"""
    return f"{summary.mean:.3f} [{summary.ci_low:.3f}, {summary.ci_high:.3f}]"


def format_threshold(report: EvaluationReport) -> str:
    if report.threshold_mode is ThresholdMode.PER_REPETITION or report.threshold is None:
        return "per repetition"
    return f"{report.threshold:.3f}"


def evaluation_table(reports: Iterable[EvaluationReport]) -> Table:
    table = Table(title="Repeated hold-out results (mean [95% CI])")
    table.add_column("Model", style="bold")
    table.add_column("Threshold", justify="right")
    for _, header in _METRIC_HEADERS:
        table.add_column(header, justify="right")

    for report in reports:
        cells = [format_ci(report.summaries[name]) for name, _ in _METRIC_HEADERS]
        table.add_row(report.model, format_threshold(report), *cells)
    return table


def importance_table(rows: Sequence[ImportanceRow], title: str = "Variable importance") -> Table:
    table = Table(title=title)
    table.add_column("Feature")
    table.add_column("Importance (%)", justify="right")
    for row in rows:
        table.add_row(row.label, f"{row.percentage:.2f}")
    return table


def _distribution(summary: FeatureSummary) -> str:
    if summary.kind is FeatureKind.BOOLEAN:
        return "-" if summary.positive_rate is None else f"{100 * summary.positive_rate:.2f}%"
    if summary.kind is FeatureKind.CATEGORICAL:
        return ", ".join(f"{level}: {100 * share:.2f}%" for level, share in summary.frequencies.items()) or "-"
    if summary.mean is None:
        return "-"
    if summary.sd is None:
        return f"{summary.mean:.2f}"
    return f"{summary.mean:.2f} ± {summary.sd:.2f}"


def cohort_table(summaries: List[FeatureSummary], n_episodes: int, prevalence: Optional[float] = None) -> Table:
    title = f"Cohort description ({n_episodes} episodes"
    title += f", prevalence {100 * prevalence:.2f}%)" if prevalence is not None else ")"
    table = Table(title=title)
    table.add_column("Feature")
    table.add_column("Units")
    table.add_column("Kind")
    table.add_column("Missing", justify="right")
    table.add_column("Distribution")
    for s in summaries:
        table.add_row(s.label, s.units or "", s.kind.value, str(s.missing), _distribution(s))
    return table


def buurman_table(model: BuurmanModel) -> Table:
    table = Table(title="Buurman-modified index (least squares fit)")
    table.add_column("Term")
    table.add_column("Coefficient", justify="right")
    table.add_row("(intercept)", f"{model.intercept:.6g}")
    for feature, coefficient in model.as_dict().items():
        table.add_row(feature, f"{coefficient:.6g}")
    return table


def profund_table_view(table: ProfundTable) -> Table:
    view = Table(title=f"PROFUND index (max {table.max_points} points)")
    view.add_column("Item")
    view.add_column("Feature")
    view.add_column("Rule")
    view.add_column("Points", justify="right")
    for item in table.items:
        rule = "present" if item.op == "flag" else f"{item.op} {item.cutpoint}"
        view.add_row(item.name, item.feature, rule, str(item.points))
    return view
