"""Plain-text rule format: rendering and parsing.

One declaration per line::

    TASK binary
    CLASSES 0, 1
    BIAS -0.25, 0.25
    RULE f0p1 WEIGHTS 0.0, 1.0 : (BornUK AND NOT GoUni AND NOT Married)
    RULE r5 WEIGHTS -1, 0 : (capital_gain > 5000.0) OR (NOT married)

A condition is ``name``, ``NOT name``, ``name OP number`` with OP one of
``> < >= <=``, or ``TRUE(name)`` / ``FALSE(name)`` for an input bit that is
constant. A body may also be the bare constant ``TRUE`` or ``FALSE``. Names
that are not plain identifiers are written in double quotes. ``#`` starts a
comment.
"""
from __future__ import annotations

import re

import numpy as np

from .conditions import FALSE, GE, GT, IS_FALSE, IS_TRUE, LE, LT, TRUE, Condition
from .data import CONTINUOUS
from .exceptions import ParseError, SchemaError
from .rules import RAW, Rule, RuleSet
from .truth_tables import Dnf

KEYWORDS = {"RULE", "WEIGHTS", "AND", "OR", "NOT", "TRUE", "FALSE", "TASK", "CLASSES", "BIAS", "PROVENANCE"}
_OPS = {">": GT, "<": LT, ">=": GE, "<=": LE}
_BARE = re.compile(r"[A-Za-z_][A-Za-z0-9_.=\-+/&]*\Z")
_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<comment>\#.*)
  | (?P<str>"(?:[^"\\]|\\.)*")
  | (?P<op>>=|<=|>|<)
  | (?P<punct>[(),:])
  | (?P<word>[A-Za-z_][A-Za-z0-9_.=\-+/&]*)
  | (?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)
""", re.VERBOSE)
_SLOT_ID = re.compile(r"f(\d+)p(\d+)\Z")


def quote(name: str) -> str:
    if _BARE.match(name) and name not in KEYWORDS:
        return name
    return '"' + name.replace("\\", "\\\\").replace('"', '\\"') + '"'


def render_condition(cond: Condition, digits: int | None = None) -> str:
    name = quote(cond.feature)
    if cond.form == IS_TRUE:
        return name
    if cond.form == IS_FALSE:
        return f"NOT {name}"
    if cond.form in (TRUE, FALSE):
        return f"{cond.form.upper()}({name})"
    return name + cond.render(digits)[len(cond.feature):]


def render_body(rule: Rule, digits: int | None = None) -> str:
    if not rule.dnf.clauses:
        return "FALSE"
    if any(not c for c in rule.dnf.clauses):
        return "TRUE"
    return " OR ".join("(" + " AND ".join(render_condition(a, digits) for a in clause) + ")"
                       for clause in rule.clause_atoms())


def _numbers(values) -> str:
    return ", ".join(repr(float(v)) for v in values)


def rules_to_text(ruleset: RuleSet, digits: int | None = None) -> str:
    """Render a rule set; ``digits`` rounds thresholds for display (the result then may not round-trip)."""
    lines = [f"TASK {ruleset.task}"]
    if ruleset.class_labels:
        lines.append("CLASSES " + ", ".join(quote(str(c)) for c in ruleset.class_labels))
    lines.append(f"PROVENANCE {ruleset.provenance}")
    lines.append(f"BIAS {_numbers(ruleset.bias)}")
    for r in ruleset.rules:
        lines.append(f"RULE {quote(r.rule_id)} WEIGHTS {_numbers(r.weights)} : {render_body(r, digits)}")
    return "\n".join(lines) + "\n"


class _Tokens:
    def __init__(self, text: str, line: int):
        self.line = line
        self.items = []
        pos = 0
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if not m:
                raise ParseError(f"unexpected character {text[pos]!r}", line, pos + 1)
            kind = m.lastgroup
            if kind not in ("ws", "comment"):
                value = m.group()
                if kind == "str":
                    value = re.sub(r"\\(.)", r"\1", value[1:-1])
                elif kind == "word" and value in KEYWORDS:
                    kind = "kw"
                self.items.append((kind, value, pos + 1))
            pos = m.end()
        self.i = 0
        self.end_col = len(text) + 1

    def peek(self):
        return self.items[self.i] if self.i < len(self.items) else ("end", "", self.end_col)

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def error(self, what, tok=None):
        kind, value, col = tok or self.peek()
        found = "end of line" if kind == "end" else repr(value)
        raise ParseError(f"expected {what}, found {found}", self.line, col)

    def expect(self, kind, value=None, what=None):
        tok = self.peek()
        if tok[0] != kind or (value is not None and tok[1] != value):
            self.error(what or value or kind)
        return self.take()

    def accept(self, kind, value=None):
        tok = self.peek()
        if tok[0] == kind and (value is None or tok[1] == value):
            return self.take()
        return None

    def name(self, what="a feature name", numeric=False):
        tok = self.peek()
        if tok[0] not in ("word", "str") and not (numeric and tok[0] == "num"):
            self.error(what)
        return self.take()

    def number(self):
        tok = self.expect("num", what="a number")
        return float(tok[1])

    def number_list(self):
        values = [self.number()]
        while self.accept("punct", ","):
            values.append(self.number())
        return values

    def done(self):
        if self.peek()[0] != "end":
            self.error("end of line")


def _feature(schema, tok, line):
    _, name, col = tok
    try:
        return schema.columns[schema.index(name)]
    except KeyError:
        raise SchemaError(f"unknown feature {name!r} (line {line}, column {col})") from None


def _condition(toks, schema):
    tok = toks.peek()
    if tok[0] == "kw" and tok[1] in ("TRUE", "FALSE"):
        toks.take()
        toks.expect("punct", "(")
        ftok = toks.name()
        _feature(schema, ftok, toks.line)
        toks.expect("punct", ")")
        return Condition(ftok[1], tok[1].lower()), ftok
    if toks.accept("kw", "NOT"):
        ftok = toks.name()
        col = _feature(schema, ftok, toks.line)
        if col.kind == CONTINUOUS:
            raise ParseError(f"continuous feature {ftok[1]!r} needs a comparison", toks.line, ftok[2])
        return Condition(ftok[1], IS_FALSE), ftok
    ftok = toks.name("a condition")
    col = _feature(schema, ftok, toks.line)
    op = toks.accept("op")
    if op is None:
        if col.kind == CONTINUOUS:
            raise ParseError(f"continuous feature {ftok[1]!r} needs a comparison", toks.line, ftok[2])
        return Condition(ftok[1], IS_TRUE), ftok
    return Condition(ftok[1], _OPS[op[1]], toks.number()), ftok


def _base(cond: Condition):
    """(positive condition, polarity) so that ``cond`` is the literal of that polarity."""
    if cond.form in (IS_FALSE, LE, GE, FALSE):
        return cond.negate(), 0
    return cond, 1


def _body(toks, schema):
    """Parse the disjunction; returns (clauses of atoms)."""
    if toks.accept("kw", "TRUE"):
        return [[]]
    if toks.accept("kw", "FALSE"):
        return []
    clauses = []
    while True:
        toks.expect("punct", "(", "'('")
        clause, seen = [], {}
        while True:
            cond, ftok = _condition(toks, schema)
            if cond.feature in seen:
                raise ParseError(f"feature {cond.feature!r} appears twice in one clause", toks.line, ftok[2])
            seen[cond.feature] = cond
            clause.append(cond)
            if not toks.accept("kw", "AND"):
                break
        toks.expect("punct", ")", "'AND' or ')'")
        clauses.append(clause)
        if not toks.accept("kw", "OR"):
            return clauses


def _rule(rule_id, weights, clauses):
    conditions, index = [], {}
    dnf_clauses = []
    for clause in clauses:
        lits = []
        for atom in clause:
            base, pol = _base(atom)
            if base not in index:
                index[base] = len(conditions)
                conditions.append(base)
            lits.append((index[base], pol))
        dnf_clauses.append(tuple(lits))
    m = _SLOT_ID.match(rule_id)
    f, p = (int(m.group(1)), int(m.group(2))) if m else (None, None)
    return Rule(rule_id, Dnf(tuple(dnf_clauses)), tuple(conditions), tuple(weights), f, p)


def parse_rules(text: str, schema, base: RuleSet | None = None) -> RuleSet:
    """Parse rule text against ``schema``.

    Geometry, truth tables and metadata are taken from ``base`` when given;
    the declarations in the text replace its rules, bias and labels.
    """
    task, labels, bias, provenance = None, None, None, None
    rules, ids = [], set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        toks = _Tokens(raw, lineno)
        if not toks.items:
            continue
        head = toks.expect("kw", what="a declaration (TASK, CLASSES, PROVENANCE, BIAS or RULE)")
        key = head[1]
        if key == "TASK":
            task = toks.expect("word", what="a task name")[1]
        elif key == "CLASSES":
            labels = [toks.name("a class label", numeric=True)[1]]
            while toks.accept("punct", ","):
                labels.append(toks.name("a class label", numeric=True)[1])
        elif key == "PROVENANCE":
            provenance = toks.expect("word", what="a provenance tag")[1]
        elif key == "BIAS":
            bias = toks.number_list()
        elif key == "RULE":
            id_tok = toks.name("a rule id")
            if id_tok[1] in ids:
                raise ParseError(f"duplicate rule id {id_tok[1]!r}", lineno, id_tok[2])
            ids.add(id_tok[1])
            toks.expect("kw", "WEIGHTS")
            weights = toks.number_list()
            toks.expect("punct", ":", "':'")
            rules.append((lineno, _rule(id_tok[1], weights, _body(toks, schema))))
        else:
            toks.error("a declaration", head)
        toks.done()
    if task is None:
        task = base.task if base is not None else "binary"
    if bias is None:
        if base is None:
            raise ParseError("missing BIAS declaration", 1)
        bias = base.bias
    for lineno, r in rules:
        if len(r.weights) != len(bias):
            raise ParseError(f"rule {r.rule_id} has {len(r.weights)} weights but BIAS has {len(bias)}", lineno)
    kwargs = {}
    if base is not None:
        kwargs = dict(target_scaler=base.target_scaler, n=base.n, stride=base.stride, tables=base.tables,
                      column_conditions=base.column_conditions, history=base.history, meta=base.meta)
    return RuleSet(
        rules=[r for _, r in rules], bias=np.asarray(bias, dtype=float), task=task, schema=schema,
        provenance=provenance or (base.provenance if base is not None else RAW),
        class_labels=tuple(labels) if labels is not None else (base.class_labels if base is not None else ()),
        **kwargs,
    )
