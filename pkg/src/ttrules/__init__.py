"""Truth Table rules: train TTnets on tabular data and turn them into exact rule sets."""
from .conditions import Condition, derive_threshold
from .data import Dataset, FeatureSchema, kfold_split, load_csv, validate_onehot
from .estimator import TTRulesClassifier, TTRulesRegressor
from .exceptions import (
    ConfigurationError,
    ContractError,
    InputError,
    ParseError,
    SchemaError,
    StateError,
    TrainingError,
    TTRulesError,
)
from .grammar import parse_rules, rules_to_text
from .inference import classify, eval_rule, metrics, rule_firing
from .robdd import Robdd, build_from_dnf, to_dot
from .rules import (
    Rule,
    RuleSet,
    apply_dct,
    complexity,
    dedup_filters,
    estimate_complexity,
    extract_rules,
    load_ruleset,
    optimize,
    save_ruleset,
    ttc,
)
from .truth_tables import Dnf, TruthTable, dc_mask_for_patch, enumerate_block, quine_mccluskey
from .ttnet import TrainConfig, TTnetModel, load_model, model_forward, recompute_bn_stats, save_model, train

__version__ = "0.1.0"
