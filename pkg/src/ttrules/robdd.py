"""Reduced ordered binary decision diagrams for single rules, and DOT export."""
from __future__ import annotations

import itertools
import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import ContractError
from .truth_tables import Dnf, all_assignments
from .ttnet import MAX_PATCH_BITS

FALSE_NODE = 0
TRUE_NODE = 1
EXHAUSTIVE_ORDER_MAX = 7
ORDER_SAMPLES = 2000


@dataclass(frozen=True)
class Robdd:
    """Node ``k >= 2`` is ``nodes[k - 2] = (var, low, high)``; 0 and 1 are the terminals.

    ``order[level]`` is the variable tested at that level; along every path
    levels strictly increase.
    """

    nodes: tuple[tuple[int, int, int], ...]
    root: int
    order: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.order)

    @property
    def size(self) -> int:
        """Number of decision nodes."""
        return len(self.nodes)

    def node(self, k):
        return self.nodes[k - 2]

    def level(self, var) -> int:
        return self.order.index(var)


def _check_order(order, n):
    order = tuple(int(v) for v in order)
    if sorted(order) != list(range(n)):
        raise ContractError(f"variable order {order} is not a permutation of 0..{n - 1}")
    return order


def build_from_truth_table(outputs, order=None) -> Robdd:
    """ROBDD of a 2^n truth table (rows MSB-first) by Shannon expansion with a unique table."""
    outputs = np.asarray(outputs).astype(np.int8)
    n = len(outputs).bit_length() - 1
    if len(outputs) != 1 << n or n > MAX_PATCH_BITS:
        raise ContractError(f"table length {len(outputs)} is not 2^n with n <= {MAX_PATCH_BITS}")
    order = _check_order(range(n) if order is None else order, n)
    # reindex so that order[0] is the most significant bit
    perm = all_assignments(n)[:, list(order)]
    table = np.empty_like(outputs)
    table[(perm << (n - 1 - np.arange(n))).sum(axis=1)] = outputs
    nodes: list[tuple[int, int, int]] = []
    unique: dict[tuple[int, int, int], int] = {}

    def make(level, lo, hi):
        if lo == hi:
            return lo
        key = (order[level], lo, hi)
        if key not in unique:
            nodes.append(key)
            unique[key] = len(nodes) + 1
        return unique[key]

    def build(level, block):
        if not block.any():
            return FALSE_NODE
        if block.all():
            return TRUE_NODE
        half = len(block) // 2
        lo = build(level + 1, block[:half])
        hi = build(level + 1, block[half:])
        return make(level, lo, hi)

    root = build(0, table)
    return Robdd(tuple(nodes), root, order)


def build_from_dnf(dnf: Dnf, n: int, order=None) -> Robdd:
    if dnf.variables() and dnf.variables()[-1] >= n:
        raise ContractError(f"DNF uses variable {dnf.variables()[-1]} beyond n={n}")
    return build_from_truth_table(dnf.truth_table(n), order)


def evaluate(robdd: Robdd, assignment) -> int:
    """Follow the path chosen by ``assignment`` (indexed by variable) to a terminal."""
    bits = np.asarray(assignment)
    if bits.shape[-1] < robdd.n:
        raise ContractError(f"assignment has {bits.shape[-1]} bits, diagram needs {robdd.n}")
    k = robdd.root
    while k > TRUE_NODE:
        var, lo, hi = robdd.node(k)
        k = hi if bits[var] else lo
    return k


def evaluate_all(robdd: Robdd) -> np.ndarray:
    """Outputs on all 2^n assignments, rows MSB-first."""
    rows = all_assignments(robdd.n)
    return np.array([evaluate(robdd, r) for r in rows], dtype=np.int8)


def best_order(dnf: Dnf, n: int, seed: int = 0) -> tuple[int, ...]:
    """Variable order giving the fewest nodes: exhaustive up to 7 variables, sampled beyond.

    Ties keep the first order met, starting from the natural one.
    """
    table = dnf.truth_table(n)
    best = tuple(range(n))
    best_size = build_from_truth_table(table, best).size
    if n <= EXHAUSTIVE_ORDER_MAX:
        candidates = itertools.permutations(range(n))
    else:
        rng = np.random.default_rng(seed)
        candidates = (tuple(int(v) for v in rng.permutation(n)) for _ in range(ORDER_SAMPLES))
    for order in candidates:
        size = build_from_truth_table(table, order).size
        if size < best_size:
            best, best_size = order, size
    return best


def _dot_string(text: str) -> str:
    return '"' + str(text).replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"'


def _weights_text(contributions) -> str:
    return "[" + ", ".join(f"{w:+.4g}" for w in contributions) + "]"


def to_dot(robdd: Robdd, labels, contributions=None, name: str = "rule") -> str:
    """DOT digraph of the diagram.

    ``labels[v]`` names the condition tested by variable v. Solid edges are
    taken when the condition holds, dashed edges ending in an open dot when it
    does not. The TRUE box shows the rule's per-class score contribution.
    """
    used = sorted({v for v, _, _ in robdd.nodes})
    missing = [v for v in used if v >= len(labels) or labels[v] is None]
    if missing:
        raise ContractError(f"no label for variable(s) {missing}")
    true_label = "TRUE" if contributions is None else "TRUE\nscore += " + _weights_text(contributions)
    false_label = "FALSE" if contributions is None else "FALSE\nscore += 0"
    lines = [f"digraph {_dot_string(name)} {{", '  node [fontname="Helvetica"];']
    reachable = _reachable(robdd)
    if FALSE_NODE in reachable:
        lines.append(f"  t0 [shape=box, label={_dot_string(false_label)}];")
    if TRUE_NODE in reachable:
        lines.append(f"  t1 [shape=box, label={_dot_string(true_label)}];")
    for k in sorted(reachable - {FALSE_NODE, TRUE_NODE}):
        var, _, _ = robdd.node(k)
        lines.append(f"  n{k} [shape=ellipse, label={_dot_string(labels[var])}];")
    for k in sorted(reachable - {FALSE_NODE, TRUE_NODE}):
        _, lo, hi = robdd.node(k)
        lines.append(f"  n{k} -> {_ref(hi)} [style=solid];")
        lines.append(f"  n{k} -> {_ref(lo)} [style=dashed, arrowhead=odot];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _ref(k):
    return f"t{k}" if k <= TRUE_NODE else f"n{k}"


def _reachable(robdd: Robdd) -> set[int]:
    seen, stack = set(), [robdd.root]
    while stack:
        k = stack.pop()
        if k in seen:
            continue
        seen.add(k)
        if k > TRUE_NODE:
            _, lo, hi = robdd.node(k)
            stack.extend((lo, hi))
    return seen


def rule_diagram(rule, order_mode: str = "natural") -> Robdd:
    n = len(rule.conditions)
    if order_mode == "natural":
        order = None
    elif order_mode == "best":
        order = best_order(rule.dnf, n)
    else:
        raise ContractError(f"unknown order mode {order_mode!r}")
    return build_from_dnf(rule.dnf, n, order)


def export_ruleset(ruleset, out_dir, order_mode: str = "natural", display_names=None, digits: int = 4) -> Path:
    """Write one DOT file per rule plus ``index.json`` mapping rule id to file and weights."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    display_names = display_names or {}
    index = {}
    for rule in ruleset.rules:
        labels = []
        for c in rule.conditions:
            shown = c.render(digits)
            if c.feature in display_names:
                shown = shown.replace(c.feature, display_names[c.feature], 1)
            labels.append(shown)
        diagram = rule_diagram(rule, order_mode)
        fname = re.sub(r"[^A-Za-z0-9_.-]", "_", rule.rule_id) + ".dot"
        while any(v["dot"] == fname for v in index.values()):
            fname = "_" + fname
        (out / fname).write_text(to_dot(diagram, labels, rule.weights, rule.rule_id))
        index[rule.rule_id] = {"dot": fname, "weights": list(rule.weights), "nodes": diagram.size}
    path = out / "index.json"
    path.write_text(json.dumps({"bias": ruleset.bias.tolist(), "rules": index}, indent=1) + "\n")
    return path
