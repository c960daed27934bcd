"""Evaluate rule sets: rule firing, class scores, labels and metrics."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .exceptions import ContractError, InputError, SchemaError
from .ttnet import accumulate_scores, labels_from_scores


@dataclass(frozen=True)
class Prediction:
    scores: np.ndarray
    label: object
    fired: np.ndarray


def _rows(ruleset, X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != len(ruleset.schema):
        raise SchemaError(f"rows have {X.shape[-1]} columns, schema has {len(ruleset.schema)}")
    return X


def _condition_bits(schema, X, conditions, cache):
    out = np.empty((len(X), len(conditions)), dtype=np.int8)
    for j, cond in enumerate(conditions):
        if cond not in cache:
            try:
                col = schema.index(cond.feature)
            except KeyError:
                raise SchemaError(f"unknown feature {cond.feature!r}") from None
            cache[cond] = cond.evaluate(X[:, col])
        out[:, j] = cache[cond]
    return out


def eval_rule(rule, row, schema) -> int:
    """1 iff some clause of ``rule`` holds on the raw feature vector ``row``."""
    row = np.asarray(row, dtype=float)
    bits = _condition_bits(schema, row[None, :], rule.conditions, {})
    return int(rule.dnf.evaluate(bits)[0])


def rule_firing(ruleset, X, chunk: int = 2048) -> np.ndarray:
    """(N, R) int8 matrix; entry (x, r) is 1 iff rule r fires on row x."""
    X = _rows(ruleset, X)
    fired = np.empty((len(X), len(ruleset.rules)), dtype=np.int8)
    groups: dict = {}
    for k, r in enumerate(ruleset.rules):
        groups.setdefault((r.dnf, len(r.conditions)), []).append(k)
    for start in range(0, len(X), chunk):
        part = X[start:start + chunk]
        cache = {}
        for (dnf, n), idx in groups.items():
            bits = np.empty((len(part), len(idx), n), dtype=np.int8)
            for g, k in enumerate(idx):
                bits[:, g, :] = _condition_bits(ruleset.schema, part, ruleset.rules[k].conditions, cache)
            fired[start:start + chunk, idx] = dnf.evaluate(bits)
    return fired


def scores(ruleset, X, fired=None) -> np.ndarray:
    """Raw scores: (N, C) for classification, (N,) standardised for regression."""
    if fired is None:
        fired = rule_firing(ruleset, X)
    s = accumulate_scores(fired, ruleset.weight_matrix(), ruleset.bias)
    return s[:, 0] if ruleset.task == "regression" else s


def predict(ruleset, X, original_units: bool = True) -> list[Prediction]:
    fired = rule_firing(ruleset, X)
    s = scores(ruleset, X, fired)
    if ruleset.task == "regression":
        labels = ruleset.target_scaler.inverse(s) if original_units else s
    else:
        labels = labels_from_scores(s, ruleset.task)
    return [Prediction(s[i], labels[i], fired[i]) for i in range(len(s))]


def classify(ruleset, row) -> Prediction:
    """Score one row; binary label is 1 iff S1 - S0 > 0, multiclass ties go to the lowest index."""
    if ruleset.task == "regression":
        raise ContractError("classify needs a classification rule set")
    return predict(ruleset, row)[0]


def predictions_to_jsonl(ruleset, predictions) -> str:
    """One JSON record per row: scores, label and the ids of the rules that fired."""
    ids = [r.rule_id for r in ruleset.rules]
    lines = []
    for p in predictions:
        label = p.label
        if ruleset.task != "regression":
            label = ruleset.class_labels[int(label)] if ruleset.class_labels else int(label)
        else:
            label = float(label)
        rec = {
            "scores": np.atleast_1d(p.scores).tolist(),
            "label": label,
            "fired_rule_ids": [ids[k] for k in np.flatnonzero(p.fired)],
        }
        lines.append(json.dumps(rec))
    return "\n".join(lines) + ("\n" if lines else "")


def accuracy(labels, truths) -> float:
    labels, truths = np.asarray(labels), np.asarray(truths)
    if labels.shape != truths.shape:
        raise ContractError("labels and truths differ in length")
    return float(np.mean(labels == truths)) if len(truths) else float("nan")


def auc(margins, truths) -> float:
    """Area under the ROC curve by the rank-sum statistic; tied scores count one half."""
    margins, truths = np.asarray(margins, dtype=float), np.asarray(truths).astype(bool)
    if margins.shape != truths.shape:
        raise ContractError("margins and truths differ in length")
    n_pos = int(truths.sum())
    n_neg = len(truths) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise InputError("AUC is undefined when only one class is present")
    ranks = rankdata(margins)
    return float((ranks[truths].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def rmse(pred, truth) -> float:
    pred, truth = np.asarray(pred, dtype=float), np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise ContractError("predictions and truths differ in length")
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def metrics(score_matrix, truths, task, target_scaler=None) -> dict:
    """Accuracy (and AUC for binary tasks) or RMSE in standardised and original units."""
    s = np.asarray(score_matrix, dtype=float)
    truths = np.asarray(truths)
    if len(s) != len(truths):
        raise ContractError("scores and truths differ in length")
    if task == "regression":
        report = {"rmse": rmse(s, truths)}
        if target_scaler is not None:
            report["rmse_original"] = report["rmse"] * target_scaler.std
        return report
    report = {"accuracy": accuracy(labels_from_scores(s, task), truths)}
    if task == "binary":
        report["auc"] = auc(s[:, 1] - s[:, 0], truths)
    return report


def evaluate(ruleset, X, y) -> dict:
    """Metrics of ``ruleset`` on (X, y) plus its complexity."""
    from .rules import complexity

    report = metrics(scores(ruleset, X), y, ruleset.task, ruleset.target_scaler)
    report["num_rules"], report["total_literals"] = complexity(ruleset)
    return report
