"""
Tests for the synthetic cohort generator and intercept calibration
"""

# Standard library imports
import json

# Third-party imports
import numpy as np
import pandas as pd
import pytest

# Local application imports
from conftest import generated_cohort
from mortality.errors import ConfigError
from mortality.schema import validate_record
from mortality.synth import (
    DEFAULT_GENERATOR_CONFIG,
    NumericMarginal,
    bayes_auc,
    calibrate_intercept,
    default_generator_config,
    generate_cohort,
    load_generator_config,
    parse_generator_config,
    write_ground_truth_csv,
)


@pytest.fixture(scope="module")
def cohort_5000():
    return generated_cohort(5000, seed=21)


@pytest.fixture(scope="module")
def cohort_20000():
    return generated_cohort(20000, seed=13)


def _default_json():
    return json.loads(DEFAULT_GENERATOR_CONFIG.read_text(encoding="utf-8"))


def test_same_seed_same_cohort():
    first, first_truth = generated_cohort(200, seed=8)
    second, second_truth = generated_cohort(200, seed=8)
    assert first.records == second.records
    assert np.array_equal(first_truth.true_risk, second_truth.true_risk)

    other, _ = generated_cohort(200, seed=9)
    assert other.records != first.records


def test_generated_records_validate(small_cohort):
    assert all(validate_record(r, small_cohort.schema).ok for r in small_cohort.records)
    assert len({r.episode_id for r in small_cohort.records}) == len(small_cohort)


def test_ground_truth_lines_up(small_generated):
    cohort, truth = small_generated
    assert truth.episode_ids == tuple(r.episode_id for r in cohort.records)
    assert truth.outcomes.tolist() == [r.outcome for r in cohort.records]
    assert np.all((truth.true_risk > 0) & (truth.true_risk < 1))


def test_age_mean_near_configured(cohort_5000):
    cohort, _ = cohort_5000
    ages = np.asarray([r.values["Age"] for r in cohort.records], dtype=float)
    assert abs(ages.mean() - 61.327) <= 1.0


def test_lightly_truncated_reals_near_configured(cohort_5000):
    cohort, _ = cohort_5000
    config = default_generator_config()
    for name in ("Hemoglobin", "Sodium"):
        marginal = config.numeric[name]
        values = np.asarray([r.values[name] for r in cohort.records if r.values[name] is not None])
        assert abs(values.mean() - marginal.mean) <= 0.1 * marginal.sd, name


def test_barthel_missing_rate():
    cohort, _ = generated_cohort(1000, seed=2)
    missing = sum(r.values["Barthel"] is None for r in cohort.records)
    assert 820 <= missing <= 900


def test_barthel_missingness_independent_of_outcome(cohort_20000):
    cohort, truth = cohort_20000
    missing = np.asarray([r.values["Barthel"] is None for r in cohort.records])
    assert missing.sum() > 0
    assert abs(truth.outcomes[missing].mean() - truth.outcomes.mean()) <= 0.02


def test_boolean_rates_match_configured(cohort_20000):
    cohort, _ = cohort_20000
    n = len(cohort)
    for name, marginal in default_generator_config().boolean.items():
        p = marginal.positive_rate
        rate = np.mean([r.values[name] for r in cohort.records])
        assert abs(rate - p) <= 3 * np.sqrt(p * (1 - p) / n), name


def test_prevalence_without_signal():
    _, truth = generated_cohort(10000, seed=1, weight_scale=0.0)
    assert abs(truth.outcomes.mean() - 0.1243) <= 0.01


def test_calibrated_prevalence(cohort_5000):
    _, truth = cohort_5000
    assert abs(truth.outcomes.mean() - 0.1243) <= 0.02
    assert abs(truth.true_risk.mean() - 0.1243) <= 0.01


def test_intercept_with_zero_weights():
    config = default_generator_config().with_zero_weights()
    assert calibrate_intercept(config.model_copy(update={"prevalence": 0.5})) == pytest.approx(0.0, abs=1e-9)
    assert calibrate_intercept(config) == pytest.approx(np.log(0.1243 / 0.8757), abs=1e-6)


def test_zero_sd_feature_is_constant():
    config = default_generator_config()
    numeric = dict(config.numeric)
    numeric["Age"] = NumericMarginal(mean=70, sd=0, lower=18, upper=110, weight=0.7)
    cohort, _ = generated_cohort(50, seed=4, numeric=numeric)
    assert {r.values["Age"] for r in cohort.records} == {70}


def test_bayes_auc_without_signal():
    _, truth = generated_cohort(2000, seed=5, weight_scale=0.0)
    assert bayes_auc(truth) == pytest.approx(0.5, abs=0.02)


def test_bayes_auc_with_signal(small_generated):
    _, truth = small_generated
    assert 0.8 <= bayes_auc(truth) <= 1.0


def test_stronger_weights_raise_bayes_auc():
    config = default_generator_config().model_copy(update={"n": 5000, "seed": 21})
    _, base = generate_cohort(config)
    _, doubled = generate_cohort(config.with_weights_scaled(2.0))
    assert bayes_auc(doubled) > bayes_auc(base)


def test_repeat_patients():
    cohort, _ = generated_cohort(300, seed=6, episodes_per_patient={1: 0.5, 3: 0.5})
    patients = {r.patient_id for r in cohort.records}
    assert len(patients) < 300
    assert len(cohort) == 300


def test_invalid_probability_sum_names_feature():
    raw = _default_json()
    first_level = next(iter(raw["categorical"]["Service"]["levels"]))
    raw["categorical"]["Service"]["levels"][first_level]["probability"] += 0.2
    with pytest.raises(ConfigError) as info:
        parse_generator_config(json.dumps(raw))
    assert "Service" in str(info.value)


def test_unconfigured_feature_rejected():
    raw = _default_json()
    del raw["numeric"]["Urea"]
    with pytest.raises(ConfigError) as info:
        parse_generator_config(json.dumps(raw))
    assert "Urea" in str(info.value)


def test_missing_rate_on_required_feature_rejected():
    raw = _default_json()
    raw["numeric"]["Age"]["missing_rate"] = 0.1
    with pytest.raises(ConfigError) as info:
        parse_generator_config(json.dumps(raw))
    assert "Age" in str(info.value)


def test_malformed_json_cites_line():
    with pytest.raises(ConfigError) as info:
        parse_generator_config('{\n  "n": 10,\n  oops\n}')
    assert info.value.line == 3


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_generator_config(tmp_path / "absent.json")


def test_ground_truth_csv(tmp_path, small_generated):
    _, truth = small_generated
    path = write_ground_truth_csv(truth, tmp_path / "truth.csv")
    frame = pd.read_csv(path, dtype={"episode_id": str})
    assert list(frame.columns) == ["episode_id", "true_risk", "outcome"]
    assert len(frame) == len(truth.episode_ids)
    assert frame["true_risk"].to_numpy() == pytest.approx(truth.true_risk, abs=1e-15)
