"""Rule sets extracted from a trained TTnet, and their post-training optimisation."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .conditions import IS_FALSE, IS_TRUE, Condition
from .data import FeatureSchema, TargetScaler
from .exceptions import ContractError, InputError, StateError
from .truth_tables import (
    Dnf,
    bits_to_hex,
    dc_mask_for_patch,
    enumerate_block,
    hex_to_bits,
    quine_mccluskey,
    realized_dont_cares,
)
from .ttnet import column_conditions, fold_head

RAW = "raw_R"
DCT = "dct_reduced"
DEDUP = "ttc_deduped"
RULESET_VERSION = 1


@dataclass(frozen=True)
class Rule:
    """One rule: a DNF over ``len(conditions)`` bits, bit j meaning ``conditions[j]``."""

    rule_id: str
    dnf: Dnf
    conditions: tuple[Condition, ...]
    weights: tuple[float, ...]
    filter_id: int | None = None
    patch_id: int | None = None
    realized_dc_values: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if any(i >= len(self.conditions) for i in self.dnf.variables()):
            raise ContractError(f"rule {self.rule_id}: literal index beyond its {len(self.conditions)} conditions")

    @property
    def n_literals(self) -> int:
        return self.dnf.n_literals

    def clause_atoms(self):
        """Clauses as tuples of conditions with negations pushed into them."""
        return tuple(
            tuple(self.conditions[i] if pol else self.conditions[i].negate() for i, pol in clause)
            for clause in self.dnf.clauses
        )

    def logical_key(self):
        return frozenset(frozenset(c) for c in self.clause_atoms())

    def to_dict(self):
        return {
            "rule_id": self.rule_id,
            "filter_id": self.filter_id,
            "patch_id": self.patch_id,
            "dnf": self.dnf.to_list(),
            "conditions": [c.to_dict() for c in self.conditions],
            "weights": list(self.weights),
            "realized_dc_values": [list(p) for p in self.realized_dc_values],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            rule_id=d["rule_id"],
            dnf=Dnf.from_list(d["dnf"]),
            conditions=tuple(Condition.from_dict(c) for c in d["conditions"]),
            weights=tuple(float(w) for w in d["weights"]),
            filter_id=d.get("filter_id"),
            patch_id=d.get("patch_id"),
            realized_dc_values=tuple((int(r), int(v)) for r, v in d.get("realized_dc_values", [])),
        )


@dataclass
class RuleSet:
    """Weighted rules plus a per-class bias; the rule-based model.

    ``tables`` keeps each filter's truth table and ``column_conditions`` the
    binarisation of every input column, so rules for any (filter, patch) slot
    can be rebuilt after deletions.
    """

    rules: list[Rule]
    bias: np.ndarray
    task: str
    schema: FeatureSchema
    provenance: str = RAW
    class_labels: tuple = ()
    target_scaler: TargetScaler = field(default_factory=TargetScaler)
    n: int | None = None
    stride: int | None = None
    tables: dict[int, np.ndarray] = field(default_factory=dict)
    column_conditions: tuple[Condition, ...] | None = None
    history: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.bias = np.asarray(self.bias, dtype=float)
        self.rules = [r for r in self.rules if any(w != 0.0 for w in r.weights)]
        ids = [r.rule_id for r in self.rules]
        if len(set(ids)) != len(ids):
            raise ContractError("duplicate rule ids")
        for r in self.rules:
            if len(r.weights) != len(self.bias):
                raise ContractError(f"rule {r.rule_id} has {len(r.weights)} weights, expected {len(self.bias)}")

    @property
    def n_outputs(self) -> int:
        return len(self.bias)

    def weight_matrix(self) -> np.ndarray:
        return np.array([r.weights for r in self.rules], dtype=float).reshape(len(self.rules), self.n_outputs)

    def get(self, rule_id):
        for r in self.rules:
            if r.rule_id == rule_id:
                return r
        raise KeyError(rule_id)

    def equivalent(self, other: "RuleSet") -> bool:
        """Same rule ids, logical content, weights and bias (formatting aside)."""
        if [r.rule_id for r in self.rules] != [r.rule_id for r in other.rules]:
            return False
        if not np.array_equal(self.bias, other.bias):
            return False
        return all(a.logical_key() == b.logical_key() and a.weights == b.weights
                   for a, b in zip(self.rules, other.rules))


def slot_rule_id(filter_id: int, patch_id: int) -> str:
    return f"f{filter_id}p{patch_id}"


def extract_rules(model, meta=None) -> RuleSet:
    """One rule per (filter, patch) slot, exactly reproducing the network."""
    if not model.bn_finalized:
        raise StateError("batch-norm statistics are stale; run recompute_bn_stats first")
    conds = column_conditions(model)
    W, b = fold_head(model)
    cols = model.spec.patch_columns(model.L)
    tables, dnfs = {}, {}
    for f in range(model.n_filters):
        tables[f] = enumerate_block(model.block(f), f).outputs
        dnfs[f] = quine_mccluskey(tables[f])
    rules = []
    for f in range(model.n_filters):
        for i, patch in enumerate(cols):
            weights = tuple(float(w) for w in W[model.slot(f, i)])
            rules.append(Rule(slot_rule_id(f, i), dnfs[f], tuple(conds[c] for c in patch), weights, f, i))
    meta = dict(meta or {})
    meta.setdefault("config_hash", _hash(model.config))
    meta.setdefault("seed", model.config.get("seed"))
    meta.setdefault("ttc_operand", "truth_table")
    return RuleSet(rules, b, model.task, model.schema, RAW, model.class_labels, model.target_scaler,
                   model.spec.n, model.spec.stride, tables, tuple(conds), [], meta)


def _polarity(cond: Condition):
    if cond.form == IS_TRUE:
        return 1
    if cond.form == IS_FALSE:
        return 0
    return None


def _patch_columns(ruleset, rule):
    return [ruleset.schema.index(c.feature) for c in rule.conditions]


class _Minimiser:
    def __init__(self):
        self.cache = {}

    def __call__(self, outputs, dc):
        key = (bits_to_hex(outputs), bits_to_hex(dc))
        if key not in self.cache:
            self.cache[key] = quine_mccluskey(outputs, dc)
        return self.cache[key]


def _dct_rule(ruleset, rule, minimise) -> Rule:
    n = len(rule.conditions)
    polarity = [_polarity(c) for c in rule.conditions]
    mask = dc_mask_for_patch(ruleset.schema, _patch_columns(ruleset, rule), polarity, rule.patch_id or 0).dont_care
    if not mask.any():
        return rule
    if rule.filter_id is not None and rule.filter_id in ruleset.tables:
        outputs = ruleset.tables[rule.filter_id]
    else:
        outputs = rule.dnf.truth_table(n)
    dnf = minimise(outputs, mask)
    realized = tuple(sorted(realized_dont_cares(dnf, mask, n).items()))
    return replace(rule, dnf=dnf, realized_dc_values=realized)


def apply_dct(ruleset: RuleSet, schema: FeatureSchema | None = None) -> RuleSet:
    """Re-minimise every rule with the impossible one-hot inputs of its patch as don't-cares."""
    if ruleset.provenance != RAW:
        raise StateError(f"don't-care injection expects a raw rule set, got {ruleset.provenance}")
    if schema is not None and schema != ruleset.schema:
        ruleset = replace(ruleset, schema=schema)
    minimise = _Minimiser()
    rules = [_dct_rule(ruleset, r, minimise) for r in ruleset.rules]
    return replace(ruleset, rules=rules, provenance=DCT, history=ruleset.history + [{"step": DCT}])


def ttc(y1, y2) -> float:
    """Truth Table Correlation: signed agreement fraction in [-1, 1].

    With ``a`` the fraction of agreeing positions, returns ``a`` when
    ``a >= 0.5`` and ``-(1 - a)`` otherwise: +1 for identical, -1 for
    complementary columns.
    """
    y1, y2 = np.asarray(y1), np.asarray(y2)
    if y1.shape != y2.shape or y1.ndim != 1 or len(y1) == 0:
        raise ContractError("ttc needs two non-empty vectors of equal length")
    a = float(np.mean(y1.astype(bool) == y2.astype(bool)))
    return a if a >= 0.5 else -(1.0 - a)


def _slot_rule(ruleset, filter_id, template: Rule, minimise) -> Rule:
    """Rule for ``filter_id`` on the patch of ``template`` (same conditions)."""
    dnf = minimise(ruleset.tables[filter_id], np.zeros_like(ruleset.tables[filter_id]))
    rule = Rule(slot_rule_id(filter_id, template.patch_id), dnf, template.conditions,
                tuple(0.0 for _ in template.weights), filter_id, template.patch_id)
    if ruleset.provenance != RAW:
        rule = _dct_rule(ruleset, rule, minimise)
    return rule


def dedup_filters(ruleset: RuleSet, model=None, threshold: float = 0.9) -> RuleSet:
    """Merge filters whose truth tables correlate with |TTC| >= threshold.

    Pairs are visited in ascending (f, g) order and g is folded into f: its
    weights are added to f's rule on the same patch when TTC > 0; when TTC < 0
    they are subtracted and added to the bias, since NOT g = 1 - g.
    """
    if not 0.5 < threshold <= 1:
        raise ContractError("threshold must lie in (0.5, 1]")
    tables = dict(ruleset.tables)
    if model is not None:
        tables = {f: enumerate_block(model.block(f), f).outputs for f in range(model.n_filters)}
    if not tables:
        return ruleset
    work = replace(ruleset, tables=tables)
    minimise = _Minimiser()
    by_slot = {(r.filter_id, r.patch_id): r for r in work.rules if r.filter_id is not None}
    others = [r for r in work.rules if r.filter_id is None]
    bias = work.bias.copy()
    alive = sorted(tables)
    merges = []
    for f in sorted(tables):
        if f not in alive:
            continue
        for g in sorted(tables):
            if g <= f or g not in alive:
                continue
            corr = ttc(tables[f], tables[g])
            if abs(corr) < threshold:
                continue
            alive.remove(g)
            merges.append({"kept": f, "removed": g, "ttc": corr})
            for (fid, pid), rule_g in sorted(by_slot.items()):
                if fid != g:
                    continue
                del by_slot[(fid, pid)]
                target = by_slot.get((f, pid)) or _slot_rule(work, f, rule_g, minimise)
                wg = np.asarray(rule_g.weights)
                wf = np.asarray(target.weights)
                if corr > 0:
                    new = wf + wg
                else:
                    new = wf - wg
                    bias = bias + wg
                by_slot[(f, pid)] = replace(target, weights=tuple(float(w) for w in new))
    rules = [by_slot[k] for k in sorted(by_slot)] + others
    kept_tables = {f: t for f, t in tables.items() if f in alive}
    return replace(work, rules=rules, bias=bias, provenance=DEDUP, tables=kept_tables,
                   history=work.history + [{"step": DEDUP, "threshold": threshold, "merges": merges}])


def optimize(ruleset: RuleSet, dct: bool = True, ttc_threshold: float | None = 0.9) -> RuleSet:
    """R -> R_opt: don't-care injection followed by correlated-filter removal."""
    out = apply_dct(ruleset) if dct else ruleset
    if ttc_threshold is not None:
        out = dedup_filters(out, threshold=ttc_threshold)
    return out


def complexity(ruleset: RuleSet) -> tuple[int, int]:
    """(number of rules with a nonzero weight, total literal count over them)."""
    live = [r for r in ruleset.rules if any(w != 0.0 for w in r.weights)]
    return len(live), sum(r.n_literals for r in live)


def estimate_complexity(n: int, L: int, s: int, F: int) -> int:
    """Pre-training estimate n * 2^(n-1) * floor((L - n) / s) * F."""
    if n < 1 or L < n or s < 1 or F < 0:
        raise ContractError("estimate_complexity needs n >= 1, L >= n, s >= 1, F >= 0")
    return n * 2 ** (n - 1) * ((L - n) // s) * F


# --------------------------------------------------------------------------
# persistence


def _hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


def ruleset_to_dict(rs: RuleSet) -> dict:
    tables = {str(f): bits_to_hex(t) for f, t in sorted(rs.tables.items())}
    return {
        "format": "ttrules-ruleset",
        "version": RULESET_VERSION,
        "provenance": rs.provenance,
        "meta": rs.meta,
        "task": rs.task,
        "class_labels": list(rs.class_labels),
        "target_scaler": {"mean": rs.target_scaler.mean, "std": rs.target_scaler.std},
        "bias_included": True,
        "bias": rs.bias.tolist(),
        "geometry": {"n": rs.n, "stride": rs.stride},
        "schema": rs.schema.to_dict(),
        "column_conditions": None if rs.column_conditions is None else [c.to_dict() for c in rs.column_conditions],
        "truth_tables": tables,
        "truth_table_digests": {f: hashlib.sha256(h.encode()).hexdigest()[:16] for f, h in tables.items()},
        "history": rs.history,
        "rules": [r.to_dict() for r in rs.rules],
    }


def ruleset_from_dict(d: dict) -> RuleSet:
    if d.get("format") != "ttrules-ruleset":
        raise InputError("not a ttrules rule-set file")
    if d.get("version") != RULESET_VERSION:
        raise InputError(f"unsupported rule-set version {d.get('version')}")
    n = d["geometry"]["n"]
    tables = {int(f): hex_to_bits(h, 2 ** n) for f, h in d["truth_tables"].items()}
    cc = d.get("column_conditions")
    return RuleSet(
        rules=[Rule.from_dict(r) for r in d["rules"]],
        bias=np.asarray(d["bias"], dtype=float),
        task=d["task"],
        schema=FeatureSchema.from_dict(d["schema"]),
        provenance=d["provenance"],
        class_labels=tuple(d["class_labels"]),
        target_scaler=TargetScaler(**d["target_scaler"]),
        n=n,
        stride=d["geometry"]["stride"],
        tables=tables,
        column_conditions=None if cc is None else tuple(Condition.from_dict(c) for c in cc),
        history=d.get("history", []),
        meta=d.get("meta", {}),
    )


def save_ruleset(rs: RuleSet, path) -> None:
    Path(path).write_text(json.dumps(ruleset_to_dict(rs), indent=1) + "\n")


def load_ruleset(path) -> RuleSet:
    return ruleset_from_dict(json.loads(Path(path).read_text()))
