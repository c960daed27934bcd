import numpy as np
import pytest

from ttrules.data import BINARY, CATEGORICAL, CONTINUOUS, Column, FeatureSchema
from ttrules.exceptions import ParseError, SchemaError
from ttrules.grammar import parse_rules, quote, rules_to_text
from ttrules.inference import scores
from ttrules.rules import apply_dct, extract_rules, optimize


def test_round_trip_example2(demo):
    for rs in (extract_rules(demo), apply_dct(extract_rules(demo))):
        text = rules_to_text(rs)
        back = parse_rules(text, rs.schema, base=rs)
        assert back.equivalent(rs)
        assert back.provenance == rs.provenance
        assert rules_to_text(back) == text


def test_round_trip_trained(small_model, small_float_model, small_data):
    for m in (small_model, small_float_model):
        rs = optimize(extract_rules(m))
        back = parse_rules(rules_to_text(rs), rs.schema)
        assert back.equivalent(rs)
        np.testing.assert_array_equal(scores(back, small_data.X), scores(rs, small_data.X))


ADULT_LIKE = FeatureSchema((
    Column("age", CONTINUOUS),
    Column("fnlwgt", CONTINUOUS),
    Column("education_num", CONTINUOUS),
    Column("occupation=Machine-op-inspct", CATEGORICAL, 0, "Machine-op-inspct", "occupation"),
    Column("occupation=Handlers-cleaners", CATEGORICAL, 0, "Handlers-cleaners", "occupation"),
    Column("occupation=Farming-fishing", CATEGORICAL, 0, "Farming-fishing", "occupation"),
    Column("sex=Male", BINARY),
))

BASE_TEXT = """\
TASK binary
CLASSES 0, 1
BIAS 0.0, 0.0
RULE r1 WEIGHTS 0.0, 1.0 : (education_num > 11.0)
"""

R5 = ('RULE r5 WEIGHTS 0.0, -1.0 : (occupation=Machine-op-inspct AND age > 60.0) '
      'OR (occupation=Handlers-cleaners AND age < 30.0) '
      'OR (occupation=Farming-fishing AND fnlwgt > 300000.0)\n')


def test_human_added_rule():
    base = parse_rules(BASE_TEXT, ADULT_LIKE)
    edited = parse_rules(BASE_TEXT + R5, ADULT_LIKE)
    assert len(edited.rules) == len(base.rules) + 1
    r5 = edited.get("r5")
    assert r5.weights == (0.0, -1.0) and r5.n_literals == 6
    row = np.array([[65, 1e5, 13, 1, 0, 0, 1]], dtype=float)
    # r1 and r5 both fire: S1 - S0 = 1 - 1 = 0, which is class 0
    assert scores(base, row)[0].tolist() == [0.0, 1.0]
    assert scores(edited, row)[0].tolist() == [0.0, 0.0]


@pytest.mark.parametrize("text,line,column", [
    ("BIAS 0, 0\nRULE r WEIGHTS 1, 0 : AND x\n", 2, 23),
    ("BIAS 0, 0\nRULE r WEIGHTS 1, 0 : (sex=Male AND)\n", 2, 36),
    ("BIAS 0, 0\nRULE r WEIGHTS 1 0 : (sex=Male)\n", 2, 18),
    ("BIAS 0, 0\nRULE r WEIGHTS 1, 0 : (sex=Male)\nRULE r WEIGHTS 1, 0 : (sex=Male)\n", 3, 6),
    ("BIAS 0, 0\nRULE r WEIGHTS 1, 0, 2 : (sex=Male)\n", 2, None),
    ("BIAS 0, 0\nRULE r WEIGHTS 1, 0 : (age)\n", 2, None),
    ("BIAS 0, 0\nRULE r WEIGHTS 1, 0 : (sex=Male AND NOT sex=Male)\n", 2, None),
    ("WHAT\n", 1, 1),
    ("BIAS 0, 0\nRULE r WEIGHTS 1, 0 : sex=Male\n", 2, 23),
])
def test_syntax_errors_name_position(text, line, column):
    with pytest.raises(ParseError) as err:
        parse_rules(text, ADULT_LIKE)
    assert err.value.line == line
    if column is not None:
        assert err.value.column == column


def test_unknown_feature():
    with pytest.raises(SchemaError):
        parse_rules("BIAS 0, 0\nRULE r WEIGHTS 1, 0 : (salary > 3.0)\n", ADULT_LIKE)


def test_quoting_and_comments():
    schema = FeatureSchema((Column("native country=Holand-Netherlands", BINARY), Column("AND", BINARY)))
    text = ('# edited by hand\nTASK binary\nBIAS 0, 0.5\n'
            'RULE "odd id" WEIGHTS 1, 0 : ("native country=Holand-Netherlands" AND NOT "AND") # note\n')
    rs = parse_rules(text, schema)
    assert quote("AND") == '"AND"' and quote("x=1") == "x=1"
    assert parse_rules(rules_to_text(rs), schema).equivalent(rs)


def test_constants_and_forms():
    text = ("BIAS 0\nTASK regression\n"
            "RULE a WEIGHTS 1 : TRUE\n"
            "RULE b WEIGHTS 2 : (age >= 3.5 AND fnlwgt <= 10) OR (TRUE(sex=Male))\n"
            "RULE c WEIGHTS 3 : FALSE\n")
    rs = parse_rules(text, ADULT_LIKE)
    X = np.array([[3.5, 10, 0, 0, 0, 0, 0], [1.0, 11, 0, 0, 0, 0, 0]])
    np.testing.assert_array_equal(scores(rs, X), [3.0, 3.0])
    assert parse_rules(rules_to_text(rs), ADULT_LIKE).equivalent(rs)


def test_display_rounding(small_float_model):
    rs = extract_rules(small_float_model)
    rounded = rules_to_text(rs, digits=3)
    assert rounded != rules_to_text(rs) or not any(c.threshold for r in rs.rules for c in r.conditions)
