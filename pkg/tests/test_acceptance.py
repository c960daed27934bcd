"""Acceptance suite: one PASS/FAIL line per criterion, at the stated tolerance.

Criteria 5, 6, 7 and 10 train full models and take several minutes in total.
"""
import itertools
import time
from pathlib import Path

import numpy as np
import pytest
from conftest import record_criterion
from scipy.optimize import Bounds, LinearConstraint, milp

from ttrules.cli import main as cli_main
from ttrules.data import Dataset, FeatureSchema, onehot_valid_rows
from ttrules.demo import DEMO_TABLE_HEX, demo_block, demo_model
from ttrules.inference import evaluate, scores
from ttrules.pipeline import Run, exactness, load_run_config
from ttrules.robdd import build_from_dnf, evaluate_all
from ttrules.rules import RuleSet, Rule, apply_dct, complexity, dedup_filters, extract_rules, optimize, ttc
from ttrules.truth_tables import Dnf, all_assignments, enumerate_block, quine_mccluskey
from ttrules.ttnet import TrainConfig, labels_from_scores, model_forward, train

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


def verdict(capsys, k, ok, detail):
    line = f"CRITERION {k}: {'PASS' if ok else 'FAIL'} - {detail}"
    record_criterion(line)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


# -- shared fold runs ---------------------------------------------------------


def run_all_folds(config_name, overrides=()):
    cfg = load_run_config(CONFIGS / config_name, overrides)
    run = Run(cfg)
    folds = []
    for k in range(len(run.plan.folds)):
        ds, tr, te = run.data(k)
        t0 = time.perf_counter()
        model = train(ds, cfg.train_config(), rows=tr)
        t_train = time.perf_counter() - t0
        t0 = time.perf_counter()
        raw = extract_rules(model)
        t_extract = time.perf_counter() - t0
        t0 = time.perf_counter()
        opt = optimize(raw, dct=cfg.dct, ttc_threshold=cfg.ttc_threshold)
        t_opt = time.perf_counter() - t0
        X_te, y_te = ds.X[te], ds.y[te]
        folds.append({
            "model": model, "raw": raw, "opt": opt, "X_te": X_te, "y_te": y_te, "schema": ds.schema,
            "t_train": t_train, "t_extract": t_extract, "t_opt": t_opt,
            "eval_raw": evaluate(raw, X_te, y_te), "eval_opt": evaluate(opt, X_te, y_te),
        })
    return folds


@pytest.fixture(scope="module")
def adult_folds():
    return run_all_folds("adult_small.ini")


@pytest.fixture(scope="module")
def compas_folds():
    return run_all_folds("compas.ini")


def _mean(folds, which, key):
    return float(np.mean([f[which][key] for f in folds]))


# -- 1 ---------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_1_exactness(capsys, adult_folds, compas_folds):
    worst_raw, worst_dct, rows = 1.0, 1.0, 0
    for folds in (adult_folds, compas_folds):
        for f in folds:
            model, raw = f["model"], f["raw"]
            X = f["X_te"]
            s_net, bits = model_forward(model, X)
            s_rule = scores(raw, X)
            same = labels_from_scores(s_net, raw.task) == labels_from_scores(s_rule, raw.task)
            worst_raw = min(worst_raw, float(same.mean()))
            dct = apply_dct(raw)
            worst_dct = min(worst_dct, exactness(model, dct, X))
            rows += len(X)
    ok = worst_raw == 1.0 and worst_dct == 1.0
    verdict(capsys, 1, ok, f"R agrees with the network on {worst_raw:.2%} (worst fold), DCT-reduced R on "
                           f"{worst_dct:.2%} of one-hot-valid rows; {rows} test rows over 10 folds (need 100%)")


# -- 2 ---------------------------------------------------------------------------


def _all_cubes(n):
    """Every cube over n variables as (mask, value)."""
    for spec in itertools.product((None, 0, 1), repeat=n):
        mask = value = 0
        for i, s in enumerate(spec):
            if s is not None:
                mask |= 1 << (n - 1 - i)
                value |= s << (n - 1 - i)
        yield mask, value


def brute_force_min_literals(outputs, dc):
    """Minimum total literals of a DNF matching ``outputs`` off the DC rows (MILP over all implicants)."""
    n = len(outputs).bit_length() - 1
    on = [r for r in range(len(outputs)) if outputs[r] and not dc[r]]
    if not on:
        return 0
    allowed = {r for r in range(len(outputs)) if outputs[r] or dc[r]}
    cubes, costs = [], []
    for mask, value in _all_cubes(n):
        rows = [r for r in range(len(outputs)) if r & mask == value]
        if all(r in allowed for r in rows):
            cubes.append(set(rows))
            costs.append(bin(mask).count("1"))
    A = np.array([[1.0 if r in c else 0.0 for c in cubes] for r in on])
    res = milp(np.array(costs, float), constraints=LinearConstraint(A, lb=1, ub=np.inf),
               integrality=np.ones(len(cubes)), bounds=Bounds(0, 1))
    return int(round(res.fun))


def test_criterion_2_qm_oracle(capsys):
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    agree = optimal = 0
    for _ in range(1000):
        n = int(rng.integers(1, 7))
        outputs = rng.integers(0, 2, 2 ** n)
        dc = rng.random(2 ** n) < rng.uniform(0, 0.4)
        dnf = quine_mccluskey(outputs, dc)
        got = dnf.truth_table(n)
        agree += bool(np.all(got[~dc] == outputs[~dc]))
        optimal += dnf.n_literals == brute_force_min_literals(outputs, dc)
    dt = time.perf_counter() - t0
    ok = agree == 1000 and optimal == 1000 and dt < 120
    verdict(capsys, 2, ok, f"{agree}/1000 agree on care rows, {optimal}/1000 minimum-literal, {dt:.1f}s (< 120s)")


# -- 3 ---------------------------------------------------------------------------


def random_dnf(rng, n, max_clauses=6):
    clauses = set()
    for _ in range(int(rng.integers(0, max_clauses + 1))):
        vars_ = rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False)
        clauses.add(tuple(sorted((int(v), int(rng.integers(0, 2))) for v in vars_)))
    return Dnf(tuple(sorted(clauses)))


def equivalent_variant(rng, dnf, n):
    """A syntactically different DNF with the same truth table."""
    choice = int(rng.integers(0, 3))
    if choice == 0:  # minimised form
        return quine_mccluskey(dnf.truth_table(n))
    if choice == 1 and dnf.clauses:  # add a clause subsumed by an existing one
        base = list(dnf.clauses[int(rng.integers(0, len(dnf.clauses)))])
        free = [v for v in range(n) if v not in {i for i, _ in base}]
        if free:
            extra = tuple(sorted(base + [(free[0], int(rng.integers(0, 2)))]))
            if frozenset(extra) not in {frozenset(c) for c in dnf.clauses}:
                return Dnf(dnf.clauses + (extra,))
    # Shannon split on a variable: f = (x AND f) OR (NOT x AND f)
    v = int(rng.integers(0, n))
    out = set()
    for c in dnf.clauses:
        vs = {i for i, _ in c}
        if v in vs:
            out.add(tuple(sorted(c)))
        else:
            out.add(tuple(sorted(c + ((v, 1),))))
            out.add(tuple(sorted(c + ((v, 0),))))
    return Dnf(tuple(sorted(out)))


def test_criterion_3_robdd(capsys):
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    agree = 0
    for _ in range(500):
        n = int(rng.integers(1, 10))
        dnf = random_dnf(rng, n)
        order = tuple(int(v) for v in rng.permutation(n))
        agree += np.array_equal(evaluate_all(build_from_dnf(dnf, n, order)), dnf.truth_table(n))
    canon = 0
    for _ in range(100):
        n = int(rng.integers(1, 10))
        a = random_dnf(rng, n)
        b = equivalent_variant(rng, a, n)
        assert np.array_equal(a.truth_table(n), b.truth_table(n))
        order = tuple(int(v) for v in rng.permutation(n))
        canon += build_from_dnf(a, n, order) == build_from_dnf(b, n, order)
    dt = time.perf_counter() - t0
    ok = agree == 500 and canon == 100 and dt < 60
    verdict(capsys, 3, ok, f"{agree}/500 DNFs agree on all assignments, {canon}/100 equivalent pairs give "
                           f"identical diagrams, {dt:.1f}s (< 60s)")


# -- 4 ---------------------------------------------------------------------------


def test_criterion_4_worked_example(capsys):
    table = enumerate_block(demo_block())
    expected_rows = np.zeros(16, dtype=np.int8)
    expected_rows[0b0001] = 1
    table_ok = np.array_equal(table.outputs, expected_rows) and table.to_hex() == DEMO_TABLE_HEX
    dnf = quine_mccluskey(table.outputs)
    qm_ok = dnf == Dnf((((3, 1), (0, 0), (1, 0), (2, 0)),))
    reduced = apply_dct(extract_rules(demo_model()))
    rule1 = [[c.render() for c in clause] for clause in reduced.get("f0p1").clause_atoms()]
    dct_ok = rule1 == [["BornUK", "NOT GoUni", "NOT Married"]]
    ok = table_ok and qm_ok and dct_ok
    verdict(capsys, 4, ok, f"table {table.to_hex()} (1 only at 0001), QM {dnf}, reduced Rule1 {rule1}")


# -- 5 ---------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_5_adult(capsys, adult_folds):
    acc = _mean(adult_folds, "eval_opt", "accuracy")
    acc_raw = _mean(adult_folds, "eval_raw", "accuracy")
    rules = max(f["eval_opt"]["num_rules"] for f in adult_folds)
    t_ext = max(f["t_extract"] + f["t_opt"] for f in adult_folds)
    t_all = sum(f["t_train"] + f["t_extract"] + f["t_opt"] for f in adult_folds)
    std = float(np.std([f["eval_opt"]["accuracy"] for f in adult_folds]))
    ok = acc >= 0.82 and rules <= 200 and t_ext <= 60 and t_all <= 600
    verdict(capsys, 5, ok, f"mean accuracy {acc:.4f} +- {std:.4f} (R: {acc_raw:.4f}; need >= 0.82), "
                           f"max rules {rules} (<= 200), extraction+optimisation {t_ext:.2f}s/fold (<= 60s), "
                           f"5-fold total {t_all:.0f}s (<= 600s)")


# -- 6 ---------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_6_compas(capsys, compas_folds):
    acc_raw = _mean(compas_folds, "eval_raw", "accuracy")
    acc_opt = _mean(compas_folds, "eval_opt", "accuracy")
    lit_raw = _mean(compas_folds, "eval_raw", "total_literals")
    lit_opt = _mean(compas_folds, "eval_opt", "total_literals")
    factor = lit_raw / lit_opt if lit_opt else float("inf")
    drop = acc_raw - acc_opt
    t_all = sum(f["t_train"] + f["t_extract"] + f["t_opt"] for f in compas_folds)
    ok = acc_opt >= 0.64 and factor >= 1.5 and drop <= 0.01 and t_all <= 300
    verdict(capsys, 6, ok, f"mean accuracy {acc_opt:.4f} (R: {acc_raw:.4f}; need >= 0.64), complexity "
                           f"{lit_raw:.0f} -> {lit_opt:.0f} ({factor:.2f}x, need >= 1.5x), "
                           f"accuracy drop {drop:+.4f} (<= 0.01), 5-fold total {t_all:.0f}s (<= 300s)")


# -- 7 ---------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_7_float_auc(capsys):
    folds = run_all_folds("adult_float.ini")
    auc_opt = _mean(folds, "eval_opt", "auc")
    auc_raw = _mean(folds, "eval_raw", "auc")
    std = float(np.std([f["eval_opt"]["auc"] for f in folds]))
    ok = auc_opt >= 0.88
    verdict(capsys, 7, ok, f"mean AUC {auc_opt:.4f} +- {std:.4f} (R: {auc_raw:.4f}; need >= 0.88)")


# -- 8 ---------------------------------------------------------------------------


def _two_filter_ruleset(table_f, table_g, w_f, w_g, n_patch=3):
    """Rule set of two filters over ``n_patch`` patches of a plain binary schema."""
    n = len(table_f).bit_length() - 1
    L = n + n_patch - 1
    schema = FeatureSchema.plain(L, binary=[True] * L)
    from ttrules.conditions import IS_TRUE, Condition

    rules = []
    for f, (table, w) in enumerate(((table_f, w_f), (table_g, w_g))):
        dnf = quine_mccluskey(table)
        for i in range(n_patch):
            conds = tuple(Condition(f"x{i + j}", IS_TRUE) for j in range(n))
            rules.append(Rule(f"f{f}p{i}", dnf, conds, tuple(w), f, i))
    return RuleSet(rules, np.array([0.1, -0.2]), "binary", schema, n=n, stride=1,
                   tables={0: np.asarray(table_f, np.int8), 1: np.asarray(table_g, np.int8)})


def test_criterion_8_ttc(capsys):
    rng = np.random.default_rng(8)
    props = 0
    for _ in range(10_000):
        size = int(rng.integers(1, 65))
        a, b = rng.integers(0, 2, size), rng.integers(0, 2, size)
        t = ttc(a, b)
        props += (ttc(a, a) == 1.0 and ttc(a, 1 - a) == -1.0 and ttc(b, a) == t and abs(t) <= 1.0)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 6))
        table = rng.integers(0, 2, 2 ** n).astype(np.int8)
        for other in (table, 1 - table):
            rs = _two_filter_ruleset(table, other, rng.normal(size=2), rng.normal(size=2))
            merged = dedup_filters(rs, threshold=0.9)
            assert complexity(merged)[0] <= complexity(rs)[0]
            X = all_assignments(len(rs.schema)).astype(float)
            worst = max(worst, float(np.abs(scores(rs, X) - scores(merged, X)).max()))
    ok = props == 10_000 and worst <= 1e-9
    verdict(capsys, 8, ok, f"{props}/10000 random pairs satisfy identity, complement, symmetry and bound; "
                           f"max score change after +-1 dedup {worst:.1e} (<= 1e-9)")


# -- 9 ---------------------------------------------------------------------------


def test_criterion_9_determinism(capsys, tmp_path):
    def end_to_end(out):
        args = ["--config", str(CONFIGS / "compas.ini"), "--fold", "0",
                "--set", "train.epochs=3", "--set", f"output.dir={out}"]
        for cmd in ("train", "extract", "optimize"):
            assert cli_main([cmd] + args) == 0
        return {p.name: p.read_bytes() for p in sorted((out / "fold0").glob("*.json"))}

    a = end_to_end(tmp_path / "a")
    b = end_to_end(tmp_path / "b")
    names = ["ruleset_raw.json", "ruleset_opt.json", "model.json"]
    same = [name for name in names if name in a and a[name] == b.get(name)]
    ok = len(same) == len(names)
    verdict(capsys, 9, ok, f"byte-identical across two seeded runs: {same} of {names}")


# -- 10 --------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_10_wide_smoke(capsys):
    rng = np.random.default_rng(10)
    n_rows, L = 5000, 20_000
    X = (rng.random((n_rows, L)) < 0.5).astype(float)
    logit = 1.5 * (X[:, 10] - X[:, 123]) + X[:, 4567] + X[:, 19_990] - 1.0
    y = (logit + rng.logistic(0, 1, n_rows) > 0).astype(np.int64)
    ds = Dataset(X, y, FeatureSchema.plain(L, binary=[True] * L), "binary", ("0", "1"))
    t0 = time.perf_counter()
    model = train(ds, TrainConfig(epochs=1, n=8, stride=8, n_filters=2, amplification=4, learning_rate=0.005))
    raw = extract_rules(model)
    elapsed = time.perf_counter() - t0
    s_net, _ = model_forward(model, X)
    same = float(np.mean(labels_from_scores(s_net, "binary") == labels_from_scores(scores(raw, X), "binary")))
    ok = same == 1.0 and elapsed < 600
    verdict(capsys, 10, ok, f"{n_rows}x{L} binary features, {model.n_slots} rule slots, {len(raw.rules)} live "
                            f"rules; train 1 epoch + extract {elapsed:.0f}s (< 600s), exactness {same:.2%}")
