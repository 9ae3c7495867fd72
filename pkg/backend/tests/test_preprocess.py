"""
Tests for median/mode imputation and z-score standardization
"""

# Third-party imports
import numpy as np
import pytest

# Local application imports
from mortality.dataset import Cohort, encode, fit_encoder
from mortality.errors import DataError, ModelError
from mortality.preprocess import (
    apply_imputer,
    apply_standardizer,
    fit_imputer,
    fit_standardizer,
    invert_standardizer,
    sorted_median,
)
from conftest import make_record, numeric_matrix


def test_median_ignores_missing():
    m = numeric_matrix({"Urea": [1, 2, np.nan, 4]})
    assert fit_imputer(m, range(4)).medians["Urea"] == 2.0


def test_median_even_count():
    m = numeric_matrix({"Urea": [1, 2, 3, 4]})
    assert fit_imputer(m, range(4)).medians["Urea"] == 2.5


def test_sorted_median_matches_numpy(rng):
    for size in range(1, 40):
        values = rng.normal(size=size)
        assert sorted_median(values) == pytest.approx(float(np.median(values)), abs=1e-15)


def test_imputer_ignores_test_rows():
    base = {"Urea": [10, 20, 30, np.nan, 50, 60], "Age": [1, 2, 3, 4, 5, 6]}
    train = [0, 1, 3]
    fitted = fit_imputer(numeric_matrix(base), train)

    perturbed = {"Urea": [10, 20, 999, np.nan, -5, np.nan], "Age": [1, 2, 0, 4, 77, 6]}
    refitted = fit_imputer(numeric_matrix(perturbed), train)
    assert refitted.medians == fitted.medians
    assert np.array_equal(refitted.fill, fitted.fill)


def test_apply_imputer_fills_every_cell():
    m = numeric_matrix({"Urea": [np.nan, 30, 50], "Age": [70, np.nan, 60]})
    imputed = apply_imputer(m, fit_imputer(m, range(3)))
    assert imputed.values[0, 0] == 40.0
    assert imputed.values[1, 1] == 65.0
    assert not imputed.mask.any()
    assert not np.isnan(imputed.values).any()


def test_apply_imputer_identity_on_observed():
    m = numeric_matrix({"Urea": [1.5, 2.5], "Age": [3.0, 4.0]})
    assert np.array_equal(apply_imputer(m, fit_imputer(m, [0, 1])).values, m.values)


def test_all_missing_column_rejected():
    m = numeric_matrix({"Urea": [np.nan, np.nan], "Age": [1, 2]})
    with pytest.raises(DataError) as info:
        fit_imputer(m, [0, 1])
    assert info.value.column == "Urea"


def test_categorical_mode_fills_block(schema):
    cohort = Cohort(schema, (
        make_record("E1", Service="ONC"),
        make_record("E2", Service="MIN"),
        make_record("E3", Service="ONC"),
    ))
    encoder = fit_encoder(cohort)
    missing = make_record("E4").model_copy(update={"values": {**make_record().values, "Service": None}})

    imputer = fit_imputer(encode(cohort, encoder), range(3))
    assert imputer.modes["Service"] == "ONC"

    filled = apply_imputer(encode(Cohort(schema, (missing,)), encoder), imputer)
    block = encoder.block("Service")
    assert filled.values[0, block.start:block.stop].tolist() == [0.0, 1.0]


def test_categorical_mode_tie_breaks_lexicographically(schema):
    cohort = Cohort(schema, (make_record("E1", Service="TRA"), make_record("E2", Service="CAR")))
    imputer = fit_imputer(encode(cohort, fit_encoder(cohort)), [0, 1])
    assert imputer.modes["Service"] == "CAR"


def test_imputer_layout_mismatch():
    fitted = fit_imputer(numeric_matrix({"Urea": [1, 2]}), [0, 1])
    with pytest.raises(ModelError):
        apply_imputer(numeric_matrix({"Age": [1, 2]}), fitted)


def test_standardizer_population_sd():
    m = numeric_matrix({"x": [1, 3]})
    standardizer = fit_standardizer(m, [0, 1])
    assert standardizer.mean[0] == 2.0
    assert standardizer.sd[0] == 1.0
    assert apply_standardizer(m, standardizer).values[:, 0].tolist() == [-1.0, 1.0]


def test_constant_column_scales_to_zero():
    m = numeric_matrix({"x": [5, 5, 5]})
    assert apply_standardizer(m, fit_standardizer(m, range(3))).values[:, 0].tolist() == [0.0, 0.0, 0.0]


def test_standardizer_inverts(rng):
    m = numeric_matrix({"a": rng.normal(50, 20, 30), "b": rng.exponential(3, 30)})
    standardizer = fit_standardizer(m, range(20))
    restored = invert_standardizer(apply_standardizer(m, standardizer), standardizer)
    assert np.allclose(restored.values, m.values, rtol=0, atol=1e-12)


def test_standardizer_needs_imputed_matrix():
    with pytest.raises(DataError):
        fit_standardizer(numeric_matrix({"x": [1, np.nan]}), [0, 1])
