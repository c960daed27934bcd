"""Command-line interface: ``ttrules <command> ...``.

Exit status is 0 on success, 1 on a runtime failure and 2 on a usage error.
Results go to stdout; the resolved configuration and seed are echoed to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .exceptions import ConfigurationError, TTRulesError

COMMANDS = ("train", "extract", "optimize", "eval", "predict", "export-dot", "rules-export", "rules-import",
            "estimate")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _fold_args(p):
    p.add_argument("--config", required=True, help="INI run configuration")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override one config entry (repeatable)")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--fold", type=int, default=0, help="fold index 0..4 (default 0)")
    g.add_argument("--all-folds", action="store_true", help="run every fold and report mean and std")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ttrules", description="Train Truth Table nets and work with their rule sets.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("train", help="train a TTnet per fold and save checkpoints")
    _fold_args(p)
    p = sub.add_parser("extract", help="extract the exact rule set R from a checkpoint")
    _fold_args(p)
    p = sub.add_parser("optimize", help="don't-care injection and correlated-filter removal")
    _fold_args(p)
    p.add_argument("--dct-only", action="store_true", help="skip filter deduplication")
    p.add_argument("--no-dct", action="store_true", help="skip don't-care injection")
    p.add_argument("--ttc-threshold", type=float, default=None, help="override the |TTC| merge threshold")
    p = sub.add_parser("eval", help="accuracy/AUC or RMSE and complexity of a rule set")
    _fold_args(p)
    p.add_argument("--ruleset", default="opt", help="'raw', 'opt' or a rule-set file (default opt)")

    p = sub.add_parser("predict", help="score a CSV with a rule set, one JSON line per row")
    p.add_argument("--ruleset", required=True)
    p.add_argument("--input", required=True, help="CSV with the raw source feature columns")
    p.add_argument("--output", help="write JSON lines here instead of stdout")

    p = sub.add_parser("export-dot", help="one ROBDD per rule as DOT, plus index.json")
    p.add_argument("--ruleset", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--order", choices=("natural", "best"), default="natural", help="variable order")

    p = sub.add_parser("rules-export", help="render a rule set as editable text")
    p.add_argument("--ruleset", required=True)
    p.add_argument("--output", help="text file (default stdout)")
    p.add_argument("--digits", type=int, default=None, help="round thresholds for display (breaks round-trip)")

    p = sub.add_parser("rules-import", help="parse edited rule text back into a rule-set file")
    p.add_argument("--text", required=True)
    p.add_argument("--base", required=True, help="rule-set file providing the schema and metadata")
    p.add_argument("--output", required=True)

    p = sub.add_parser("estimate", help="pre-training complexity estimate n*2^(n-1)*floor((L-n)/s)*F")
    p.add_argument("params", nargs="+", metavar="KEY=VALUE", help="n=, L=, s=, F=")
    return parser


def _echo(**items):
    for k, v in items.items():
        print(f"# {k}: {json.dumps(v, sort_keys=True)}", file=sys.stderr)


def _print(obj):
    print(json.dumps(obj, sort_keys=True))


def _run_folds(args, step):
    from .pipeline import Run, load_run_config, summarize

    cfg = load_run_config(args.config, args.set)
    _echo(config=cfg.to_dict(), config_hash=cfg.hash(), seed=cfg.seed)
    run = Run(cfg)
    folds = range(len(run.plan.folds)) if args.all_folds else [args.fold]
    run.fold_dir(folds[0])
    reports = []
    for k in folds:
        report = step(run, k)
        reports.append(report)
        _print(report)
    if args.all_folds:
        _print({"summary": summarize(reports)})
    return reports


def cmd_train(args):
    def step(run, k):
        progress = (lambda e, loss: logging.info("fold %d epoch %d loss %.5f", k, e, loss)) if args.verbose else None
        return run.train(k, progress)

    _run_folds(args, step)


def cmd_extract(args):
    reports = _run_folds(args, lambda run, k: run.extract(k))
    bad = [r["fold"] for r in reports if r["exactness"] != 1.0]
    if bad:
        raise TTRulesError(f"exactness invariant violated on fold(s) {bad}: rules disagree with the network")


def cmd_optimize(args):
    if args.dct_only and args.no_dct:
        raise UsageError("--dct-only and --no-dct exclude each other")
    thr = None if args.dct_only else (args.ttc_threshold if args.ttc_threshold is not None else "config")
    _run_folds(args, lambda run, k: run.optimize(k, dct=False if args.no_dct else None, ttc_threshold=thr))


def cmd_eval(args):
    which, path = args.ruleset, None
    if which not in ("raw", "opt"):
        path, which = Path(which), "opt"
    _run_folds(args, lambda run, k: run.evaluate(k, which, path))


def cmd_predict(args):
    from .data import encode_csv
    from .inference import predict, predictions_to_jsonl
    from .rules import load_ruleset

    rs = load_ruleset(args.ruleset)
    _echo(ruleset=args.ruleset, config_hash=rs.meta.get("config_hash"), seed=rs.meta.get("seed"))
    X = encode_csv(args.input, rs.schema)
    text = predictions_to_jsonl(rs, predict(rs, X))
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_export_dot(args):
    from .robdd import export_ruleset
    from .rules import load_ruleset

    rs = load_ruleset(args.ruleset)
    _echo(ruleset=args.ruleset, config_hash=rs.meta.get("config_hash"), seed=rs.meta.get("seed"), order=args.order)
    index = export_ruleset(rs, args.out, args.order)
    _print({"index": str(index), "rules": len(rs.rules)})


def cmd_rules_export(args):
    from .grammar import rules_to_text
    from .rules import load_ruleset

    rs = load_ruleset(args.ruleset)
    _echo(ruleset=args.ruleset, config_hash=rs.meta.get("config_hash"), seed=rs.meta.get("seed"))
    text = rules_to_text(rs, args.digits)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_rules_import(args):
    from .grammar import parse_rules
    from .rules import complexity, load_ruleset, save_ruleset

    base = load_ruleset(args.base)
    _echo(base=args.base, config_hash=base.meta.get("config_hash"), seed=base.meta.get("seed"))
    rs = parse_rules(Path(args.text).read_text(encoding="utf-8"), base.schema, base=base)
    if not rs.equivalent(base):
        # no longer the network's rules: exactness no longer applies
        rs.meta = {**rs.meta, "edited": True}
        rs.history = rs.history + [{"step": "edited"}]
    save_ruleset(rs, args.output)
    n_rules, n_lits = complexity(rs)
    _print({"output": args.output, "num_rules": n_rules, "total_literals": n_lits})


def cmd_estimate(args):
    from .rules import estimate_complexity

    values = {}
    for item in args.params:
        key, sep, value = item.partition("=")
        if not sep or key not in ("n", "L", "s", "F"):
            raise UsageError(f"estimate: expected n=, L=, s=, F=, got {item!r}")
        try:
            values[key] = int(value)
        except ValueError:
            raise UsageError(f"estimate: {key} must be an integer") from None
    missing = {"n", "L", "s", "F"} - set(values)
    if missing:
        raise UsageError(f"estimate: missing {', '.join(sorted(missing))}")
    _echo(config=values, seed=None)
    print(estimate_complexity(values["n"], values["L"], values["s"], values["F"]))


HANDLERS = {
    "train": cmd_train, "extract": cmd_extract, "optimize": cmd_optimize, "eval": cmd_eval,
    "predict": cmd_predict, "export-dot": cmd_export_dot, "rules-export": cmd_rules_export,
    "rules-import": cmd_rules_import, "estimate": cmd_estimate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("ttrules: a command is required: " + ", ".join(COMMANDS))
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s", stream=sys.stderr)
        HANDLERS[args.command](args)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return 2
    except ConfigurationError as e:
        print(f"ttrules: configuration error: {e}", file=sys.stderr)
        return 2
    except (TTRulesError, OSError, ValueError) as e:
        print(f"ttrules: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
