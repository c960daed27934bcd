"""Run configuration and the per-fold train / extract / optimise / evaluate steps."""
from __future__ import annotations

import configparser
import hashlib
import json
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .data import Dataset, kfold_split, load_csv, onehot_valid_rows
from .exceptions import ConfigurationError, InputError
from .inference import evaluate, scores
from .rules import DCT, RAW, apply_dct, complexity, dedup_filters, extract_rules, load_ruleset, save_ruleset
from .ttnet import TrainConfig, labels_from_scores, load_model, model_forward, save_model, train

# section -> keys accepted in a config file
SECTIONS = {
    "data": ("path", "target", "task", "categorical", "continuous", "binary"),
    "model": ("n", "stride", "n_filters", "amplification", "k1", "inner_bn", "head_mode", "dropout_p"),
    "train": ("epochs", "batch_size", "learning_rate", "mask_weight_decay", "seed"),
    "split": ("seed",),
    "optimize": ("dct", "ttc_threshold"),
    "output": ("dir",),
}


@dataclass(frozen=True)
class RunConfig:
    data_path: str
    target: str
    task: str | None = None
    categorical: tuple[str, ...] = ()
    continuous: tuple[str, ...] = ()
    binary: tuple[str, ...] = ()
    n: int = 5
    stride: int = 5
    n_filters: int = 10
    amplification: int = 10
    k1: int | None = None
    inner_bn: bool = True
    head_mode: str = "binary_sparse"
    dropout_p: float = 0.2
    epochs: int = 10
    batch_size: int = 128
    learning_rate: float = 0.005
    mask_weight_decay: float = 1e-7
    seed: int = 0
    split_seed: int = 0
    dct: bool = True
    ttc_threshold: float | None = 0.9
    output_dir: str = "runs"

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size, learning_rate=self.learning_rate, seed=self.seed,
            mask_weight_decay=self.mask_weight_decay, head_mode=self.head_mode, dropout_p=self.dropout_p,
            n=self.n, stride=self.stride, n_filters=self.n_filters, amplification=self.amplification,
            k1=self.k1, inner_bn=self.inner_bn,
        )

    def declared_kinds(self) -> dict[str, str]:
        kinds = {c: "categorical" for c in self.categorical}
        kinds.update({c: "continuous" for c in self.continuous})
        kinds.update({c: "binary" for c in self.binary})
        return kinds

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        """Digest of everything that affects results (the output directory excluded)."""
        d = self.to_dict()
        d.pop("output_dir")
        d["data_path"] = Path(d["data_path"]).name
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


_FIELD_OF = {("split", "seed"): "split_seed", ("output", "dir"): "output_dir", ("data", "path"): "data_path"}
_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(name: str, text: str):
    kind = _TYPES[name]
    text = text.strip()
    try:
        if name in ("categorical", "continuous", "binary"):
            return tuple(t.strip() for t in text.split(",") if t.strip())
        if name in ("k1", "task", "ttc_threshold") and text.lower() in ("", "none", "auto", "off"):
            return None
        if "bool" in kind:
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if "int" in kind:
            return int(text)
        if "float" in kind:
            return float(text)
    except ValueError:
        raise ConfigurationError(f"bad value {text!r} for {name}") from None
    return text


def load_run_config(path=None, overrides=()) -> RunConfig:
    """Read an INI-style ``key = value`` file; ``overrides`` are ``section.key=value`` strings.

    A relative data path is resolved against the config file's directory.
    """
    parser = configparser.ConfigParser(interpolation=None)
    base = Path(".")
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise InputError(f"no such config file: {path}")
        parser.read(path, encoding="utf-8")
        base = path.parent
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigurationError(f"override {item!r} is not section.key=value")
        key, value = item.split("=", 1)
        section, name = key.strip().split(".", 1)
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, name, value)
    values = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigurationError(f"unknown config section [{section}]")
        for key, text in parser.items(section):
            if key not in SECTIONS[section]:
                raise ConfigurationError(f"unknown key {key!r} in [{section}]")
            name = _FIELD_OF.get((section, key), key)
            values[name] = _convert(name, text)
    for required in ("data_path", "target"):
        if required not in values:
            raise ConfigurationError(f"config lacks {'[data] path' if required == 'data_path' else '[data] target'}")
    data_path = Path(values["data_path"])
    if not data_path.is_absolute():
        data_path = base / data_path
    values["data_path"] = str(data_path)
    cfg = RunConfig(**values)
    cfg.train_config()  # validates the architecture
    return cfg


def load_dataset(cfg: RunConfig) -> Dataset:
    return load_csv(cfg.data_path, cfg.target, cfg.declared_kinds(), cfg.task)


class Run:
    """One configured experiment: dataset, folds, and the per-fold artifact layout."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.dataset = load_dataset(cfg)
        self.plan = kfold_split(self.dataset, cfg.split_seed)
        self.out = Path(cfg.output_dir)

    def fold_dir(self, k: int) -> Path:
        if not 0 <= k < len(self.plan.folds):
            raise ConfigurationError(f"fold {k} outside 0..{len(self.plan.folds) - 1}")
        d = self.out / f"fold{k}"
        d.mkdir(parents=True, exist_ok=True)
        return d

    def data(self, k: int):
        """(train dataset, train rows, test rows); regression targets re-scaled on the train rows."""
        tr, te = self.plan.folds[k]
        return self.dataset.restandardized(tr), tr, te

    def meta(self, k: int) -> dict:
        return {"config_hash": self.cfg.hash(), "seed": self.cfg.seed, "split_seed": self.cfg.split_seed,
                "fold": k, "ttc_operand": "truth_table"}

    def model_path(self, k):
        return self.fold_dir(k) / "model.json"

    def ruleset_path(self, k, which):
        return self.fold_dir(k) / {"raw": "ruleset_raw.json", "opt": "ruleset_opt.json"}[which]

    # steps -----------------------------------------------------------------

    def train(self, k: int, progress=None) -> dict:
        ds, tr, te = self.data(k)
        t0 = time.perf_counter()
        model = train(ds, self.cfg.train_config(), rows=tr, progress=progress)
        seconds = time.perf_counter() - t0
        model.config.update({"config_hash": self.cfg.hash(), "fold": k})
        save_model(model, self.model_path(k))
        s, _ = model_forward(model, ds.X[te])
        from .inference import metrics

        report = {"fold": k, "step": "train", "train_seconds": round(seconds, 3)}
        report.update(metrics(s, ds.y[te], ds.task, model.target_scaler))
        (self.fold_dir(k) / "train_metrics.json").write_text(json.dumps(report, sort_keys=True) + "\n")
        return report

    def _model(self, k):
        path = self.model_path(k)
        if not path.exists():
            raise InputError(f"no checkpoint for fold {k} at {path}; run 'train' first")
        return load_model(path)

    def extract(self, k: int) -> dict:
        ds, tr, te = self.data(k)
        model = self._model(k)
        t0 = time.perf_counter()
        rs = extract_rules(model, meta=self.meta(k))
        seconds = time.perf_counter() - t0
        save_ruleset(rs, self.ruleset_path(k, "raw"))
        report = {"fold": k, "step": "extract", "extract_seconds": round(seconds, 3),
                  "exactness": exactness(model, rs, ds.X[te])}
        report["num_rules"], report["total_literals"] = complexity(rs)
        return report

    def optimize(self, k: int, dct: bool | None = None, ttc_threshold="config") -> dict:
        raw_path = self.ruleset_path(k, "raw")
        if not raw_path.exists():
            raise InputError(f"no raw rule set for fold {k}; run 'extract' first")
        raw = load_ruleset(raw_path)
        dct = self.cfg.dct if dct is None else dct
        thr = self.cfg.ttc_threshold if ttc_threshold == "config" else ttc_threshold
        out = apply_dct(raw) if dct else raw
        if thr is not None:
            out = dedup_filters(out, threshold=thr)
        save_ruleset(out, self.ruleset_path(k, "opt"))
        before, after = complexity(raw), complexity(out)
        return {"fold": k, "step": "optimize", "provenance": out.provenance,
                "num_rules_before": before[0], "total_literals_before": before[1],
                "num_rules": after[0], "total_literals": after[1],
                "reduction": round(before[1] / after[1], 4) if after[1] else None}

    def evaluate(self, k: int, which: str = "opt", path=None) -> dict:
        ds, tr, te = self.data(k)
        rs = load_ruleset(path or self.ruleset_path(k, which))
        report = {"fold": k, "step": "eval", "ruleset": str(path or which), "provenance": rs.provenance}
        report.update(evaluate(rs, ds.X[te], ds.y[te]))
        if self.model_path(k).exists() and rs.provenance in (RAW, DCT) and not rs.meta.get("edited"):
            report["exactness"] = exactness(self._model(k), rs, ds.X[te])
        return report


def exactness(model, ruleset, X) -> float:
    """Fraction of rows on which the rule set reproduces the network's output.

    Classification compares labels, regression compares scores exactly. For a
    don't-care reduced rule set only one-hot-valid rows are considered.
    """
    X = np.asarray(X, dtype=float)
    if ruleset.provenance == DCT:
        X = X[onehot_valid_rows(X, ruleset.schema)]
    if len(X) == 0:
        return 1.0
    s_net, _ = model_forward(model, X)
    s_rule = scores(ruleset, X)
    if ruleset.task == "regression":
        return float(np.mean(s_net == s_rule))
    return float(np.mean(labels_from_scores(s_net, ruleset.task) == labels_from_scores(s_rule, ruleset.task)))


def summarize(reports: list[dict]) -> dict:
    """Mean and standard deviation of every numeric field across folds."""
    keys = [k for k in reports[0] if k != "fold" and isinstance(reports[0][k], (int, float))
            and not isinstance(reports[0][k], bool)]
    out = {}
    for key in keys:
        vals = np.array([r[key] for r in reports if r.get(key) is not None], dtype=float)
        if len(vals):
            out[key] = {"mean": float(vals.mean()), "std": float(vals.std())}
    return out
