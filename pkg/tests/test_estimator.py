import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.model_selection import cross_val_score
from sklearn.pipeline import make_pipeline
from sklearn.linear_model import LogisticRegression

from conftest import mixed_dataset
from ttrules import TTRulesClassifier, TTRulesRegressor
from ttrules.inference import scores
from ttrules.ttnet import model_forward

SMALL = dict(n=3, stride=2, n_filters=3, amplification=4, epochs=3, learning_rate=0.01)


@pytest.fixture(scope="module")
def binary():
    ds = mixed_dataset(600, seed=4)
    return ds.X, np.where(ds.y == 1, "yes", "no"), ds.schema


def test_params_and_clone():
    est = TTRulesClassifier(**SMALL)
    params = est.get_params()
    assert params["n"] == 3 and params["ttc_threshold"] == 0.9
    twin = clone(est)
    assert twin.get_params() == params and twin is not est
    est.set_params(n_filters=5)
    assert est.n_filters == 5


def test_classifier_fit_predict(binary):
    X, y, schema = binary
    est = TTRulesClassifier(schema=schema, **SMALL).fit(X, y)
    assert list(est.classes_) == ["no", "yes"]
    pred = est.predict(X)
    assert set(pred) <= {"no", "yes"}
    assert est.score(X, y) > 0.6
    margin = est.decision_function(X)
    np.testing.assert_array_equal(pred == "yes", margin > 0)


def test_raw_rules_reproduce_the_network(binary):
    X, y, schema = binary
    est = TTRulesClassifier(schema=schema, **SMALL).fit(X, y)
    s_net, _ = model_forward(est.model_, X)
    np.testing.assert_array_equal(scores(est.raw_ruleset_, X), s_net)


def test_transform_gives_rule_firing(binary):
    X, y, schema = binary
    est = TTRulesClassifier(schema=schema, **SMALL).fit(X, y)
    F = est.transform(X[:20])
    assert F.shape == (20, len(est.ruleset_.rules))
    assert set(np.unique(F)) <= {0, 1}
    assert list(est.get_feature_names_out()) == [r.rule_id for r in est.ruleset_.rules]
    pipe = make_pipeline(TTRulesClassifier(schema=schema, **SMALL), LogisticRegression())
    assert pipe.fit(X, y).score(X, y) > 0.5


def test_multiclass_and_plain_arrays():
    ds = mixed_dataset(400, seed=1, task="multiclass")
    est = TTRulesClassifier(head_mode="float", **SMALL).fit(ds.X, ds.y)
    assert est.decision_function(ds.X).shape == (400, 3)
    assert est.n_features_in_ == 7


def test_regressor():
    ds = mixed_dataset(500, seed=2, task="regression")
    y = 50 + 10 * ds.y
    est = TTRulesRegressor(**SMALL).fit(ds.X, y)
    pred = est.predict(ds.X)
    assert pred.shape == (500,)
    assert np.sqrt(np.mean((pred - y) ** 2)) < np.std(y)


def test_errors(binary):
    X, y, schema = binary
    with pytest.raises(NotFittedError):
        TTRulesClassifier().predict(X)
    with pytest.raises(NotFittedError):
        TTRulesRegressor().predict(X)
    with pytest.raises(ValueError):
        TTRulesClassifier(**SMALL).fit(X, np.zeros(len(X)))
    est = TTRulesClassifier(schema=schema, **SMALL).fit(X, y)
    with pytest.raises(ValueError):
        est.predict(X[:, :4])


def test_cross_val_score_runs(binary):
    X, y, schema = binary
    s = cross_val_score(TTRulesClassifier(schema=schema, **SMALL), X, y, cv=2)
    assert s.shape == (2,)
