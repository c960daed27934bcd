import numpy as np
import pytest

from ttrules.data import BINARY, CATEGORICAL, CONTINUOUS, Column, Dataset, FeatureSchema
from ttrules.demo import demo_model
from ttrules.ttnet import TrainConfig, train

ACCEPTANCE_LINES = []


def record_criterion(line: str) -> None:
    """Remember an acceptance verdict so it is repeated in the terminal summary."""
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def demo():
    return demo_model()


def mixed_schema():
    """Two continuous columns, two binary ones and a three-way one-hot group."""
    return FeatureSchema((
        Column("age", CONTINUOUS, source="age"),
        Column("smoker", BINARY, source="smoker"),
        Column("city=A", CATEGORICAL, 0, "A", "city"),
        Column("city=B", CATEGORICAL, 0, "B", "city"),
        Column("city=C", CATEGORICAL, 0, "C", "city"),
        Column("income", CONTINUOUS, source="income"),
        Column("owner", BINARY, source="owner"),
    ))


def mixed_dataset(n_rows=800, seed=0, task="binary"):
    rng = np.random.default_rng(seed)
    schema = mixed_schema()
    X = np.zeros((n_rows, len(schema)))
    X[:, 0] = rng.normal(40, 12, n_rows)
    X[:, 1] = rng.integers(0, 2, n_rows)
    city = rng.integers(0, 4, n_rows)  # 3 means missing
    for k in range(3):
        X[:, 2 + k] = city == k
    X[:, 5] = rng.gamma(2.0, 20.0, n_rows)
    X[:, 6] = rng.integers(0, 2, n_rows)
    logit = 0.08 * (X[:, 0] - 40) + 1.5 * X[:, 1] - 1.2 * X[:, 3] + 0.03 * (X[:, 5] - 40) + 0.5 * X[:, 6]
    if task == "regression":
        y = logit + rng.normal(0, 0.3, n_rows)
        y = (y - y.mean()) / y.std()
        return Dataset(X, y, schema, "regression")
    if task == "multiclass":
        y = np.digitize(logit + rng.normal(0, 0.5, n_rows), [-1.0, 1.0]).astype(np.int64)
        return Dataset(X, y, schema, "multiclass", ("lo", "mid", "hi"))
    y = (logit + rng.logistic(0, 1, n_rows) > 0).astype(np.int64)
    return Dataset(X, y, schema, "binary", ("0", "1"))


SMALL_CONFIG = dict(epochs=3, n=3, stride=2, n_filters=3, amplification=4, learning_rate=0.01)


@pytest.fixture(scope="session")
def small_data():
    return mixed_dataset()


@pytest.fixture(scope="session")
def small_model(small_data):
    return train(small_data, TrainConfig(**SMALL_CONFIG))


@pytest.fixture(scope="session")
def small_float_model(small_data):
    return train(small_data, TrainConfig(head_mode="float", **SMALL_CONFIG))
