"""
Tests for the cohort schema, record validation and cohort summaries
"""

# Third-party imports
import pytest
from pydantic import ValidationError

# Local application imports
from conftest import make_record
from mortality.errors import DataError
from mortality.schema import CohortSchema, FeatureKind, FeatureSpec, PatientRecord, summarize, validate_record


def test_default_schema_layout(schema):
    assert len(schema.features) == 36
    assert schema.target_name == "exitus_1y"

    age = schema.get("Age")
    assert age.kind is FeatureKind.INTEGER
    assert not age.missing_allowed

    albumin = schema.get("Albumin")
    assert albumin.kind is FeatureKind.REAL
    assert albumin.units == "g/dL"
    assert albumin.missing_allowed


def test_default_schema_kind_counts(schema):
    kinds = [f.kind for f in schema.features]
    assert kinds.count(FeatureKind.CATEGORICAL) == 4
    assert kinds.count(FeatureKind.BOOLEAN) == 19
    assert kinds.count(FeatureKind.REAL) == 7


def test_duplicate_feature_names_rejected():
    feature = FeatureSpec(name="Age", label="Age", kind=FeatureKind.INTEGER)
    with pytest.raises(ValidationError):
        CohortSchema(features=(feature, feature))


def test_valid_record(schema):
    result = validate_record(make_record(), schema)
    assert result.ok
    assert result.violations == []


def test_type_mismatch_names_feature(schema):
    result = validate_record(make_record(Age="abc"), schema)
    assert not result.ok
    assert [v.feature for v in result.violations] == ["Age"]


def test_missing_where_allowed_is_ok(schema):
    optional = {f.name: None for f in schema.features if f.missing_allowed}
    assert validate_record(make_record(**optional), schema).ok


def test_missing_sex_is_a_violation(schema):
    result = validate_record(make_record(Sex=None), schema)
    assert not result.ok
    assert "Sex" in result.describe()


@pytest.mark.parametrize("overrides, feature", [
    ({"Malignancy": 2}, "Malignancy"),
    ({"Albumin": float("nan")}, "Albumin"),
    ({"Service": "  "}, "Service"),
    ({"Unknown": 1}, "Unknown"),
])
def test_other_violations(schema, overrides, feature):
    result = validate_record(make_record(**overrides), schema)
    assert feature in [v.feature for v in result.violations]


def test_outcome_must_be_binary(schema):
    record = PatientRecord(patient_id="P", episode_id="E", values=make_record().values, outcome=3)
    result = validate_record(record, schema)
    assert [v.feature for v in result.violations] == ["exitus_1y"]


def test_summarize_numeric_sample_sd(schema):
    records = [make_record("E1", Age=60), make_record("E2", Age=62)]
    age = {s.name: s for s in summarize(records, schema)}["Age"]
    assert age.mean == pytest.approx(61.0)
    assert age.sd == pytest.approx(1.0)


def test_summarize_missing_count(schema):
    records = [make_record("E1", Barthel=None), make_record("E2", Barthel=50)]
    barthel = {s.name: s for s in summarize(records, schema)}["Barthel"]
    assert barthel.missing == 1
    assert barthel.count == 1
    assert barthel.sd is None


def test_summarize_boolean_and_categorical(schema):
    records = [
        make_record("E1", Malignancy=1, Sex="male"),
        make_record("E2", Malignancy=0, Sex="female"),
        make_record("E3", Malignancy=1, Sex="male"),
        make_record("E4", Malignancy=0, Sex="male"),
    ]
    summaries = {s.name: s for s in summarize(records, schema)}
    assert summaries["Malignancy"].positive_rate == pytest.approx(0.5)
    assert summaries["Sex"].frequencies == {"female": 0.25, "male": 0.75}


def test_summarize_empty_cohort(schema):
    with pytest.raises(DataError):
        summarize([], schema)
