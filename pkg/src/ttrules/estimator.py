"""scikit-learn style wrappers: fit a TTnet, keep its (optimised) rule set, predict with the rules."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin, TransformerMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_is_fitted, validate_data

from .data import Dataset, FeatureSchema, TargetScaler
from .inference import rule_firing, scores
from .rules import extract_rules, optimize
from .ttnet import TrainConfig, labels_from_scores, train


def _schema_for(X, schema, feature_names):
    if schema is not None:
        if len(schema) != X.shape[1]:
            raise ValueError(f"schema has {len(schema)} columns, X has {X.shape[1]}")
        return schema
    binary = [bool(np.isin(X[:, j], (0.0, 1.0)).all()) for j in range(X.shape[1])]
    return FeatureSchema.plain(X.shape[1], feature_names, binary)


class _TTRulesBase(TransformerMixin, BaseEstimator):
    def __init__(self, n=5, stride=5, n_filters=10, amplification=10, k1=None, inner_bn=True,
                 epochs=10, batch_size=128, learning_rate=0.005, head_mode="binary_sparse",
                 dropout_p=0.2, mask_weight_decay=1e-7, dct=True, ttc_threshold=0.9,
                 schema=None, random_state=0):
        self.n = n
        self.stride = stride
        self.n_filters = n_filters
        self.amplification = amplification
        self.k1 = k1
        self.inner_bn = inner_bn
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.head_mode = head_mode
        self.dropout_p = dropout_p
        self.mask_weight_decay = mask_weight_decay
        self.dct = dct
        self.ttc_threshold = ttc_threshold
        self.schema = schema
        self.random_state = random_state

    def _config(self):
        return TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size, learning_rate=self.learning_rate,
            seed=int(self.random_state or 0), mask_weight_decay=self.mask_weight_decay,
            head_mode=self.head_mode, dropout_p=self.dropout_p, n=self.n, stride=self.stride,
            n_filters=self.n_filters, amplification=self.amplification, k1=self.k1, inner_bn=self.inner_bn,
        )

    def _fit_dataset(self, ds):
        self.model_ = train(ds, self._config())
        self.raw_ruleset_ = extract_rules(self.model_)
        self.ruleset_ = optimize(self.raw_ruleset_, dct=self.dct, ttc_threshold=self.ttc_threshold)
        self.schema_ = ds.schema
        return self

    def _scores(self, X):
        check_is_fitted(self, "ruleset_")
        X = validate_data(self, X, reset=False, dtype=float)
        return scores(self.ruleset_, X)

    def transform(self, X):
        """Rule firing matrix (n_samples, n_rules) of the fitted rule set."""
        check_is_fitted(self, "ruleset_")
        X = validate_data(self, X, reset=False, dtype=float)
        return rule_firing(self.ruleset_, X)

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "ruleset_")
        return np.array([r.rule_id for r in self.ruleset_.rules], dtype=object)


class TTRulesClassifier(ClassifierMixin, _TTRulesBase):
    """Truth Table rules classifier.

    Fits a TTnet, extracts its exact rule set and optimises it; ``predict``
    and ``decision_function`` evaluate the optimised rules. ``transform``
    returns which rules fire on each row.
    """

    def fit(self, X, y):
        X, y = validate_data(self, X, y, reset=True, dtype=float)
        check_classification_targets(y)
        self.classes_, codes = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes")
        task = "binary" if len(self.classes_) == 2 else "multiclass"
        schema = _schema_for(X, self.schema, getattr(self, "feature_names_in_", None))
        ds = Dataset(X.copy(), codes.astype(np.int64), schema, task, tuple(str(c) for c in self.classes_))
        return self._fit_dataset(ds)

    def decision_function(self, X):
        s = self._scores(X)
        return s[:, 1] - s[:, 0] if len(self.classes_) == 2 else s

    def predict(self, X):
        s = self._scores(X)
        task = "binary" if len(self.classes_) == 2 else "multiclass"
        return self.classes_[labels_from_scores(s, task)]


class TTRulesRegressor(RegressorMixin, _TTRulesBase):
    """Truth Table rules regressor with a float head on a standardised target."""

    def __init__(self, n=5, stride=5, n_filters=10, amplification=10, k1=None, inner_bn=True,
                 epochs=10, batch_size=128, learning_rate=0.005, head_mode="float",
                 dropout_p=0.2, mask_weight_decay=1e-7, dct=True, ttc_threshold=0.9,
                 schema=None, random_state=0):
        super().__init__(n=n, stride=stride, n_filters=n_filters, amplification=amplification, k1=k1,
                         inner_bn=inner_bn, epochs=epochs, batch_size=batch_size,
                         learning_rate=learning_rate, head_mode=head_mode, dropout_p=dropout_p,
                         mask_weight_decay=mask_weight_decay, dct=dct, ttc_threshold=ttc_threshold,
                         schema=schema, random_state=random_state)

    def fit(self, X, y):
        X, y = validate_data(self, X, y, reset=True, dtype=float, y_numeric=True)
        scaler = TargetScaler.fit(y)
        schema = _schema_for(X, self.schema, getattr(self, "feature_names_in_", None))
        ds = Dataset(X.copy(), scaler.transform(y), schema, "regression", (), scaler)
        return self._fit_dataset(ds)

    def predict(self, X):
        s = self._scores(X)
        return self.ruleset_.target_scaler.inverse(s)
