"""Human-readable predicates on single input columns."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import CONTINUOUS

IS_TRUE = "is_true"
IS_FALSE = "is_false"
GT = "gt"
LT = "lt"
GE = "ge"
LE = "le"
TRUE = "true"
FALSE = "false"

_NEGATION = {IS_TRUE: IS_FALSE, IS_FALSE: IS_TRUE, GT: LE, LE: GT, LT: GE, GE: LT, TRUE: FALSE, FALSE: TRUE}
_SYMBOL = {GT: ">", LT: "<", GE: ">=", LE: "<="}
NUMERIC_FORMS = frozenset(_SYMBOL)


@dataclass(frozen=True)
class Condition:
    """A test on one feature: ``feature > 11``, ``NOT married``, ..."""

    feature: str
    form: str
    threshold: float | None = None

    def __post_init__(self):
        if self.form not in _NEGATION:
            raise ValueError(f"unknown condition form {self.form!r}")
        if self.form in NUMERIC_FORMS:
            if self.threshold is None or not math.isfinite(self.threshold):
                raise ValueError(f"{self.feature}: numeric condition needs a finite threshold")
        elif self.threshold is not None:
            raise ValueError(f"{self.feature}: {self.form} takes no threshold")

    @property
    def is_constant(self) -> bool:
        return self.form in (TRUE, FALSE)

    def negate(self) -> "Condition":
        return Condition(self.feature, _NEGATION[self.form], self.threshold)

    def evaluate(self, values):
        """Vectorised truth value (bool array) on raw column values."""
        x = np.asarray(values, dtype=float)
        f = self.form
        if f == GT:
            return x > self.threshold
        if f == LT:
            return x < self.threshold
        if f == GE:
            return x >= self.threshold
        if f == LE:
            return x <= self.threshold
        if f == IS_TRUE:
            return x >= 0.5
        if f == IS_FALSE:
            return x < 0.5
        return np.full(x.shape, f == TRUE)

    def render(self, digits: int | None = None) -> str:
        """Text form; ``digits`` rounds thresholds to significant digits for display."""
        if self.form == IS_TRUE:
            return self.feature
        if self.form == IS_FALSE:
            return f"NOT {self.feature}"
        if self.form in (TRUE, FALSE):
            return self.form.upper()
        t = f"{self.threshold:.{digits}g}" if digits else repr(float(self.threshold))
        return f"{self.feature} {_SYMBOL[self.form]} {t}"

    def to_dict(self):
        d = {"feature": self.feature, "form": self.form}
        if self.threshold is not None:
            d["threshold"] = self.threshold
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d["feature"], d["form"], d.get("threshold"))


def derive_threshold(bn, column: int, schema) -> Condition:
    """Condition equivalent to ``step(BN(x)) == 1`` for input column ``column``.

    ``gamma * (x - mean) / sqrt(var + eps) + beta > 0`` is solved for ``x``;
    on 0/1 columns the comparison collapses to a literal or a constant.
    """
    col = schema.columns[column]
    gamma = float(bn.gamma[column])
    beta = float(bn.beta[column])
    if gamma == 0.0:
        return Condition(col.name, TRUE if beta > 0 else FALSE)
    sd = math.sqrt(float(bn.running_var[column]) + bn.eps)
    t = float(bn.running_mean[column]) - beta * sd / gamma
    if col.kind == CONTINUOUS:
        return Condition(col.name, GT if gamma > 0 else LT, t)
    if gamma > 0:
        if t < 0:
            return Condition(col.name, TRUE)
        return Condition(col.name, IS_TRUE if t < 1 else FALSE)
    if t > 1:
        return Condition(col.name, TRUE)
    return Condition(col.name, IS_FALSE if t > 0 else FALSE)
