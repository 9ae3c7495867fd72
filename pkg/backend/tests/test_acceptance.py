"""
Desk-scale checks on a 20000-episode generated cohort.

Run with `pytest -m slow`; the default addopts deselect them.
"""

# Third-party imports
import numpy as np
import pytest

# Local application imports
from conftest import generated_cohort
from mortality.evaluation import EvalConfig, importance_report, run_repeated_holdout
from mortality.pipeline import ModelKind, fit_pipeline
from mortality.synth import bayes_auc

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def desk_cohort():
    return generated_cohort(20000, seed=2024)


@pytest.fixture(scope="module")
def desk_reports(desk_cohort):
    cohort, _ = desk_cohort
    return {
        kind: run_repeated_holdout(cohort, EvalConfig(repetitions=3, seed=7, model_kind=kind))
        for kind in ModelKind
    }


def test_planted_signal_ceiling(desk_cohort):
    _, truth = desk_cohort
    assert 0.90 <= bayes_auc(truth) <= 0.96


def test_cohort_marginals(desk_cohort):
    cohort, truth = desk_cohort
    ages = np.asarray([r.values["Age"] for r in cohort.records], dtype=float)
    assert abs(ages.mean() - 61.327) <= 1.0

    barthel_missing = np.mean([r.values["Barthel"] is None for r in cohort.records])
    assert abs(barthel_missing - 0.8611) <= 0.02
    assert abs(truth.outcomes.mean() - 0.1243) <= 0.01


def test_boosting_recovers_most_of_the_signal(desk_cohort, desk_reports):
    _, truth = desk_cohort
    auc = desk_reports[ModelKind.GBC].summaries["auc"]
    assert 0.85 <= auc.mean <= bayes_auc(truth) + 0.02
    assert auc.ci_low <= auc.mean <= auc.ci_high


def test_boosting_beats_the_clinical_indices(desk_reports):
    boosted = desk_reports[ModelKind.GBC].summaries
    for baseline in (ModelKind.BUURMAN, ModelKind.PROFUND):
        assert boosted["auc"].mean > desk_reports[baseline].summaries["auc"].mean
        assert boosted["ber"].mean < desk_reports[baseline].summaries["ber"].mean


def test_importance_finds_planted_features(desk_reports):
    top = [row.feature for row in desk_reports[ModelKind.GBC].importance[:5]]
    assert "Urea" in top
    assert "Service" in top


def test_model_ordering(desk_reports):
    auc = {kind: report.summaries["auc"].mean for kind, report in desk_reports.items()}
    forest_floor = auc[ModelKind.RF] - 0.01
    assert auc[ModelKind.GBC] >= forest_floor
    for weaker in (ModelKind.KNN, ModelKind.BUURMAN, ModelKind.PROFUND):
        assert forest_floor >= auc[weaker]
    assert auc[ModelKind.GBC] - auc[ModelKind.BUURMAN] >= 0.10


def test_strongest_planted_feature_ranks_high_across_seeds():
    hits = 0
    for seed in range(10):
        cohort, _ = generated_cohort(10000, seed=100 + seed)
        pipeline = fit_pipeline(cohort, ModelKind.GBC, {}, seed=seed)
        top = [row.feature for row in importance_report(pipeline)[:3]]
        hits += "Urea" in top
    assert hits >= 9
