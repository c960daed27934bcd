import json

import numpy as np
import pytest

from conftest import mixed_dataset
from ttrules.cli import main
from ttrules.pipeline import load_run_config
from ttrules.exceptions import ConfigurationError

CONFIG = """\
[data]
path = data.csv
target = label
categorical = city

[model]
n = 3
stride = 2
n_filters = 3
amplification = 4

[train]
epochs = 2
learning_rate = 0.01
seed = 1

[optimize]
dct = true
ttc_threshold = 0.9

[output]
dir = {out}
"""


@pytest.fixture
def workspace(tmp_path):
    ds = mixed_dataset(400, seed=3)
    city = np.array(["A", "B", "C", ""])[np.argmax(np.c_[ds.X[:, 2:5], 0.5 * np.ones(len(ds.X))], axis=1)]
    lines = ["age,smoker,city,income,owner,label"]
    for x, c, y in zip(ds.X, city, ds.y):
        lines.append(f"{float(x[0])!r},{int(x[1])},{c},{float(x[5])!r},{int(x[6])},{'yes' if y else 'no'}")
    (tmp_path / "data.csv").write_text("\n".join(lines) + "\n")
    (tmp_path / "new.csv").write_text("\n".join(lines[:1] + lines[1:6]).replace(",yes", ",").replace(",no", ",")
                                      + "\n")
    cfg = tmp_path / "run.ini"
    cfg.write_text(CONFIG.format(out=tmp_path / "runs"))
    return tmp_path, cfg


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def records(out):
    return [json.loads(line) for line in out.splitlines() if line.strip()]


def test_estimate(capsys):
    code, out, err = run(capsys, "estimate", "n=5", "L=100", "s=5", "F=10")
    assert code == 0 and out.strip() == "15200"
    assert "# seed" in err


@pytest.mark.parametrize("argv", [[], ["bogus"], ["estimate", "n=5"], ["estimate", "n=x", "L=1", "s=1", "F=1"],
                                  ["train"], ["predict", "--ruleset", "x"]])
def test_usage_errors_exit_2(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2 and err


def test_runtime_errors_exit_1(capsys, workspace, tmp_path):
    _, cfg = workspace
    code, _, err = run(capsys, "extract", "--config", cfg)
    assert code == 1 and "run 'train' first" in err
    code, _, err = run(capsys, "predict", "--ruleset", tmp_path / "missing.json", "--input", "x.csv")
    assert code == 1


def test_bad_config_exit_2(capsys, workspace):
    _, cfg = workspace
    code, _, err = run(capsys, "train", "--config", cfg, "--set", "model.width=3")
    assert code == 2 and "width" in err
    with pytest.raises(ConfigurationError):
        load_run_config(cfg, ["extra.x=1"])


def test_full_pipeline(capsys, workspace):
    tmp, cfg = workspace
    code, out, err = run(capsys, "train", "--config", cfg)
    assert code == 0 and "# config_hash" in err and "# seed: 1" in err
    assert "accuracy" in records(out)[0]

    code, out, _ = run(capsys, "extract", "--config", cfg)
    ext = records(out)[0]
    assert code == 0 and ext["exactness"] == 1.0

    code, out, _ = run(capsys, "eval", "--config", cfg, "--ruleset", "raw")
    raw = records(out)[0]
    assert raw["exactness"] == 1.0 and raw["num_rules"] == ext["num_rules"]

    code, out, _ = run(capsys, "optimize", "--config", cfg)
    opt = records(out)[0]
    assert code == 0 and opt["total_literals"] <= opt["total_literals_before"]

    code, out, _ = run(capsys, "eval", "--config", cfg)
    ev = records(out)[0]
    assert ev["num_rules"] <= raw["num_rules"] and ev["total_literals"] <= raw["total_literals"]

    code, out, _ = run(capsys, "optimize", "--config", cfg, "--dct-only")
    assert records(out)[0]["provenance"] == "dct_reduced"
    code, out, _ = run(capsys, "eval", "--config", cfg)
    assert records(out)[0]["exactness"] == 1.0

    fold = tmp / "runs" / "fold0"
    model = json.loads((fold / "model.json").read_text())
    rules = json.loads((fold / "ruleset_raw.json").read_text())
    assert model["seed"] == 1 and rules["meta"]["seed"] == 1
    assert rules["meta"]["config_hash"] == load_run_config(cfg).hash()

    code, out, _ = run(capsys, "predict", "--ruleset", fold / "ruleset_opt.json", "--input", tmp / "new.csv")
    preds = records(out)
    assert code == 0 and len(preds) == 5
    assert {"scores", "label", "fired_rule_ids"} == set(preds[0]) and preds[0]["label"] in ("no", "yes")

    code, out, _ = run(capsys, "export-dot", "--ruleset", fold / "ruleset_opt.json", "--out", tmp / "dot",
                       "--order", "best")
    index = json.loads((tmp / "dot" / "index.json").read_text())
    assert code == 0 and len(index["rules"]) == records(out)[0]["rules"]

    text = tmp / "rules.txt"
    code, _, _ = run(capsys, "rules-export", "--ruleset", fold / "ruleset_raw.json", "--output", text)
    assert code == 0
    code, out, _ = run(capsys, "rules-import", "--text", text, "--base", fold / "ruleset_raw.json",
                       "--output", tmp / "same.json")
    assert code == 0
    assert not json.loads((tmp / "same.json").read_text())["meta"].get("edited")
    code, out, _ = run(capsys, "eval", "--config", cfg, "--ruleset", tmp / "same.json")
    assert records(out)[0]["exactness"] == 1.0

    edited = text.read_text() + "RULE human WEIGHTS 0, -1 : (smoker AND owner)\n"
    text.write_text(edited)
    code, out, _ = run(capsys, "rules-import", "--text", text, "--base", fold / "ruleset_raw.json",
                       "--output", tmp / "edited.json")
    assert code == 0 and records(out)[0]["num_rules"] == ext["num_rules"] + 1
    code, out, _ = run(capsys, "eval", "--config", cfg, "--ruleset", tmp / "edited.json")
    assert "exactness" not in records(out)[0]


def test_all_folds_summary(capsys, workspace):
    _, cfg = workspace
    code, out, _ = run(capsys, "train", "--config", cfg, "--all-folds", "--set", "train.epochs=1")
    recs = records(out)
    assert code == 0 and [r["fold"] for r in recs[:5]] == [0, 1, 2, 3, 4]
    assert set(recs[5]["summary"]["accuracy"]) == {"mean", "std"}
    code, _, err = run(capsys, "train", "--config", cfg, "--fold", "7")
    assert code == 2
