"""Truth Table net: input batch-norm, a bank of LTT blocks, and a linear head.

Training uses hand-written backpropagation with straight-through estimators
for the two Heaviside steps. Inference evaluates every block with a fixed,
shape-independent sequence of elementwise operations so that
:func:`ttrules.truth_tables.enumerate_block` reproduces the exact bits the
network computes on data.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .conditions import derive_threshold
from .data import Dataset, FeatureSchema, TargetScaler
from .exceptions import ConfigurationError, ContractError, InputError, TrainingError

log = logging.getLogger(__name__)

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
MAX_PATCH_BITS = 9
CHECKPOINT_VERSION = 1
HEAD_MODES = ("binary_sparse", "float")
TASKS = ("binary", "multiclass", "regression")


def bin_act(x):
    """Heaviside step with the tie at zero sent to 0."""
    return (np.asarray(x) > 0).astype(np.int8)


@dataclass
class BatchNorm:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    eps: float = BN_EPS
    momentum: float = BN_MOMENTUM

    @classmethod
    def init(cls, size):
        return cls(np.ones(size), np.zeros(size), np.zeros(size), np.ones(size))

    @property
    def scale(self):
        return self.gamma / np.sqrt(self.running_var + self.eps)

    @property
    def shift(self):
        return self.beta - self.running_mean * self.scale

    def to_dict(self):
        return {
            "gamma": self.gamma.tolist(),
            "beta": self.beta.tolist(),
            "running_mean": self.running_mean.tolist(),
            "running_var": self.running_var.tolist(),
            "eps": self.eps,
            "momentum": self.momentum,
        }

    @classmethod
    def from_dict(cls, d):
        arr = lambda k: np.asarray(d[k], dtype=float)  # noqa: E731
        return cls(arr("gamma"), arr("beta"), arr("running_mean"), arr("running_var"), d["eps"], d["momentum"])


@dataclass(frozen=True)
class LttBlockSpec:
    """Geometry of one LTT block: an ``n``-bit patch read every ``stride`` columns.

    The first convolution (kernel ``k1``, ``amplification`` output channels)
    and the second (kernel ``k2``, one output channel) both have stride 1, so
    ``k1 + k2 - 1 == n`` and a patch yields a single bit.
    """

    n: int
    stride: int = 1
    amplification: int = 4
    k1: int | None = None
    inner_bn: bool = True

    def __post_init__(self):
        k1 = self.n if self.k1 is None else self.k1
        object.__setattr__(self, "k1", k1)
        if not 1 <= self.n <= MAX_PATCH_BITS:
            raise ConfigurationError(f"patch width n={self.n} outside 1..{MAX_PATCH_BITS}")
        if self.stride < 1 or self.amplification < 1:
            raise ConfigurationError("stride and amplification must be positive")
        if not 1 <= k1 <= self.n:
            raise ConfigurationError(f"k1={k1} must lie in 1..n")

    @property
    def k2(self) -> int:
        return self.n - self.k1 + 1

    def n_patches(self, L: int) -> int:
        if L < self.n:
            raise ConfigurationError(f"{L} input columns cannot hold a {self.n}-wide patch")
        return (L - self.n) // self.stride + 1

    def patch_columns(self, L: int) -> np.ndarray:
        """(P, n) array of input column indices, row i = patch i."""
        P = self.n_patches(L)
        return np.arange(P)[:, None] * self.stride + np.arange(self.n)[None, :]


@dataclass
class LttBlock:
    """Parameters of one filter: ``W1`` is (A, k1), ``W2`` is (k2, A)."""

    W1: np.ndarray
    W2: np.ndarray
    spec: LttBlockSpec
    inner_bn: BatchNorm | None = None

    def __post_init__(self):
        A = self.spec.amplification
        if self.W1.shape != (A, self.spec.k1) or self.W2.shape != (self.spec.k2, A):
            raise ContractError(f"block weights {self.W1.shape}/{self.W2.shape} do not match {self.spec}")


def block_preactivation(block: LttBlock, bits):
    """Real-valued block output before the final step, for bits of shape (..., n).

    Sums run in a fixed order with elementwise operations only, so the result
    for a given patch does not depend on how many patches are evaluated at once.
    """
    bits = np.asarray(bits, dtype=float)
    n, k1, k2 = block.spec.n, block.spec.k1, block.spec.k2
    if bits.shape[-1] != n:
        raise ContractError(f"expected {n} bits, got {bits.shape[-1]}")
    A = block.spec.amplification
    if block.inner_bn is not None:
        scale, shift = block.inner_bn.scale, block.inner_bn.shift
    out = np.zeros(bits.shape[:-1])
    for t in range(k2):
        for a in range(A):
            h = np.zeros(bits.shape[:-1])
            for j in range(k1):
                h = h + bits[..., t + j] * block.W1[a, j]
            if block.inner_bn is not None:
                h = h * scale[a] + shift[a]
            out = out + np.maximum(h, 0.0) * block.W2[t, a]
    return out


def block_forward(block: LttBlock, bits):
    """Output bit(s) of one LTT block on an n-bit patch (or a stack of them)."""
    return bin_act(block_preactivation(block, bits))


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 128
    learning_rate: float = 0.005
    seed: int = 0
    mask_weight_decay: float = 1e-7
    head_mode: str = "binary_sparse"
    dropout_p: float = 0.2
    n: int = 5
    stride: int = 5
    n_filters: int = 10
    amplification: int = 10
    k1: int | None = None
    inner_bn: bool = True

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or not self.learning_rate > 0:
            raise ConfigurationError("epochs, batch_size and learning_rate must be positive")
        if self.head_mode not in HEAD_MODES:
            raise ConfigurationError(f"head_mode must be one of {HEAD_MODES}")
        if not 0 <= self.dropout_p < 1:
            raise ConfigurationError("dropout_p must lie in [0, 1)")
        if self.n_filters < 1:
            raise ConfigurationError("n_filters must be positive")
        self.block_spec()

    def block_spec(self) -> LttBlockSpec:
        return LttBlockSpec(self.n, self.stride, self.amplification, self.k1, self.inner_bn)


@dataclass
class TTnetModel:
    spec: LttBlockSpec
    schema: FeatureSchema
    task: str
    head_mode: str
    input_bn: BatchNorm
    W1: np.ndarray  # (F, A, k1)
    W2: np.ndarray  # (F, k2, A)
    inner_bn: BatchNorm | None  # over F*A channels, filter-major
    final_bn: BatchNorm  # over F*P rule slots, filter-major
    head_weight: np.ndarray  # (S, C) float weights, or latent weights in binary_sparse mode
    head_bias: np.ndarray  # (C,)
    head_mask: np.ndarray | None = None  # (S, C) latent BinMask, binary_sparse only
    dropout_p: float = 0.0
    class_labels: tuple = ()
    target_scaler: TargetScaler = field(default_factory=TargetScaler)
    config: dict = field(default_factory=dict)
    bn_finalized: bool = False

    @property
    def L(self) -> int:
        return len(self.schema)

    @property
    def n_filters(self) -> int:
        return self.W1.shape[0]

    @property
    def n_patches(self) -> int:
        return self.spec.n_patches(self.L)

    @property
    def n_slots(self) -> int:
        return self.n_filters * self.n_patches

    @property
    def n_outputs(self) -> int:
        return self.head_bias.shape[0]

    def block(self, f: int) -> LttBlock:
        bn = None
        if self.inner_bn is not None:
            A = self.spec.amplification
            sl = slice(f * A, (f + 1) * A)
            bn = BatchNorm(self.inner_bn.gamma[sl], self.inner_bn.beta[sl],
                           self.inner_bn.running_mean[sl], self.inner_bn.running_var[sl])
        return LttBlock(self.W1[f], self.W2[f], self.spec, bn)

    def effective_head(self) -> np.ndarray:
        """Head weights as used in the forward pass; {-1, 0, +1} in binary_sparse mode."""
        if self.head_mode == "binary_sparse":
            return _sign(self.head_weight) * (self.head_mask > 0)
        return self.head_weight

    def slot(self, f: int, patch: int) -> int:
        return f * self.n_patches + patch


def _sign(w):
    return np.where(w >= 0, 1.0, -1.0)


def column_conditions(model: TTnetModel):
    """Per-column condition equivalent to the input batch-norm followed by the step."""
    return [derive_threshold(model.input_bn, j, model.schema) for j in range(model.L)]


def input_bits(model: TTnetModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    bits = np.empty(X.shape, dtype=np.int8)
    for j, cond in enumerate(column_conditions(model)):
        bits[:, j] = cond.evaluate(X[:, j])
    return bits


def fold_head(model: TTnetModel):
    """Absorb the final batch-norm into the head: returns (weights (S, C), bias (C,))."""
    W = model.effective_head()
    scale, shift = model.final_bn.scale, model.final_bn.shift
    return W * scale[:, None], model.head_bias + (W * shift[:, None]).sum(axis=0)


def accumulate_scores(fired, weights, bias):
    """``bias + fired @ weights`` summed slot by slot in a fixed order."""
    fired = np.asarray(fired, dtype=float)
    scores = np.tile(np.asarray(bias, dtype=float), (fired.shape[0], 1))
    for r in range(weights.shape[0]):
        scores = scores + fired[:, r:r + 1] * weights[r]
    return scores


def slot_bits(model: TTnetModel, X, chunk: int = 4096) -> np.ndarray:
    """Binary rule-slot vector (N, F*P) computed by the network at inference."""
    X = _check_rows(model, X)
    cols = model.spec.patch_columns(model.L)
    out = np.empty((len(X), model.n_slots), dtype=np.int8)
    P = model.n_patches
    blocks = [model.block(f) for f in range(model.n_filters)]
    for start in range(0, len(X), chunk):
        patches = input_bits(model, X[start:start + chunk])[:, cols]
        for f, blk in enumerate(blocks):
            out[start:start + chunk, f * P:(f + 1) * P] = block_forward(blk, patches)
    return out


def _check_rows(model, X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.L:
        raise ContractError(f"expected rows of length {model.L}, got shape {X.shape}")
    return X


def model_forward(model: TTnetModel, X, training: bool = False, rng=None):
    """Scores and rule-slot bits for a row or a batch of rows.

    Returns ``(scores, bits)``: scores is (N, C) for classification and (N,)
    for regression. With ``training=True`` batch statistics and dropout are
    used, exactly as during fitting.
    """
    X = _check_rows(model, X)
    if training:
        trainer = _Trainer.from_model(model, rng or np.random.default_rng(0))
        cache = trainer.forward(X, training=True)
        scores, bits = cache["scores"], cache["slots"].astype(np.int8)
    else:
        bits = slot_bits(model, X)
        W, b = fold_head(model)
        scores = accumulate_scores(bits, W, b)
    if model.task == "regression":
        scores = scores[:, 0]
    return scores, bits


def predict_labels(model: TTnetModel, X):
    scores, _ = model_forward(model, X)
    return labels_from_scores(scores, model.task)


def labels_from_scores(scores, task):
    """Binary: class 1 iff s1 - s0 > 0. Multiclass: argmax, ties to lowest index."""
    scores = np.asarray(scores)
    if task == "regression":
        return scores
    if task == "binary":
        return (scores[:, 1] - scores[:, 0] > 0).astype(np.int64)
    return np.argmax(scores, axis=1)


# --------------------------------------------------------------------------
# training


def _bn_backward(dy, xh, inv, gamma, axes):
    count = np.prod([dy.shape[a] for a in axes])
    dgamma = (dy * xh).sum(axis=axes)
    dbeta = dy.sum(axis=axes)
    dxh = dy * gamma
    dx = inv / count * (count * dxh - dxh.sum(axis=axes, keepdims=True)
                        - xh * (dxh * xh).sum(axis=axes, keepdims=True))
    return dx, dgamma, dbeta


class _Trainer:
    """Batched forward/backward over a parameter dict; used only while fitting."""

    def __init__(self, params, spec, L, task, head_mode, dropout_p, rng):
        self.p = params
        self.spec = spec
        self.L = L
        self.task = task
        self.head_mode = head_mode
        self.dropout_p = dropout_p
        self.rng = rng
        self.cols = spec.patch_columns(L)
        self.P = len(self.cols)
        self.F = params["W1"].shape[0]
        self.A = spec.amplification
        self.m1 = spec.k2
        self.running = {}

    @classmethod
    def from_model(cls, model, rng):
        p = {
            "in_g": model.input_bn.gamma, "in_b": model.input_bn.beta,
            "W1": model.W1, "W2": model.W2,
            "fin_g": model.final_bn.gamma, "fin_b": model.final_bn.beta,
            "W": model.head_weight, "b": model.head_bias,
        }
        if model.inner_bn is not None:
            p["blk_g"], p["blk_b"] = model.inner_bn.gamma, model.inner_bn.beta
        if model.head_mask is not None:
            p["M"] = model.head_mask
        return cls(p, model.spec, model.L, model.task, model.head_mode, model.dropout_p, rng)

    def head_weights(self):
        if self.head_mode == "binary_sparse":
            return _sign(self.p["W"]) * (self.p["M"] > 0)
        return self.p["W"]

    def forward(self, x, training=True):
        p, c = self.p, {}
        B = len(x)
        mu, var = x.mean(axis=0), x.var(axis=0)
        inv0 = 1.0 / np.sqrt(var + BN_EPS)
        xh0 = (x - mu) * inv0
        z0 = p["in_g"] * xh0 + p["in_b"]
        u = (z0 > 0).astype(float)
        U = u[:, self.cols]  # (B, P, n)
        win = np.arange(self.m1)[:, None] + np.arange(self.spec.k1)[None, :]
        Uw = U[:, :, win]  # (B, P, m1, k1)
        W1r = p["W1"].transpose(2, 0, 1).reshape(self.spec.k1, self.F * self.A)
        h1 = Uw @ W1r  # (B, P, m1, F*A)
        c.update(mu=mu, var=var, inv0=inv0, xh0=xh0, z0=z0, Uw=Uw, W1r=W1r, h1=h1)
        if "blk_g" in p:
            mu1 = h1.mean(axis=(0, 1, 2))
            var1 = h1.var(axis=(0, 1, 2))
            inv1 = 1.0 / np.sqrt(var1 + BN_EPS)
            xh1 = (h1 - mu1) * inv1
            h2 = p["blk_g"] * xh1 + p["blk_b"]
            c.update(mu1=mu1, var1=var1, inv1=inv1, xh1=xh1)
        else:
            h2 = h1
        r = np.maximum(h2, 0.0).reshape(B, self.P, self.m1, self.F, self.A)
        out = np.einsum("bptfa,fta->bpf", r, p["W2"])
        v = (out > 0).astype(float)
        slots = v.transpose(0, 2, 1).reshape(B, self.F * self.P)
        mu2, var2 = slots.mean(axis=0), slots.var(axis=0)
        inv2 = 1.0 / np.sqrt(var2 + BN_EPS)
        xh2 = (slots - mu2) * inv2
        zf = p["fin_g"] * xh2 + p["fin_b"]
        drop = None
        if training and self.head_mode == "float" and self.dropout_p > 0:
            drop = (self.rng.random(zf.shape) >= self.dropout_p) / (1.0 - self.dropout_p)
            zf = zf * drop
        Weff = self.head_weights()
        scores = zf @ Weff + p["b"]
        c.update(h2=h2, r=r, out=out, slots=slots, mu2=mu2, var2=var2, inv2=inv2, xh2=xh2,
                 zf=zf, drop=drop, Weff=Weff, scores=scores)
        return c

    def loss_and_grads(self, x, y, wd_mask=0.0):
        c = self.forward(x, training=True)
        dscores, loss = head_loss_grad(c["scores"], y, self.task)
        p, g = self.p, {}
        B = len(x)
        g["b"] = dscores.sum(axis=0)
        dWeff = c["zf"].T @ dscores
        if self.head_mode == "binary_sparse":
            W, M = p["W"], p["M"]
            g["W"] = dWeff * (M > 0) * (np.abs(W) <= 1)
            g["M"] = dWeff * _sign(W) * (np.abs(M) <= 1) + wd_mask * M
        else:
            g["W"] = dWeff
        dzf = dscores @ c["Weff"].T
        if c["drop"] is not None:
            dzf = dzf * c["drop"]
        dslots, g["fin_g"], g["fin_b"] = _bn_backward(dzf, c["xh2"], c["inv2"], p["fin_g"], (0,))
        dv = dslots.reshape(B, self.F, self.P).transpose(0, 2, 1)
        dout = dv * (np.abs(c["out"]) <= 1)
        g["W2"] = np.einsum("bpf,bptfa->fta", dout, c["r"])
        dr = np.einsum("bpf,fta->bptfa", dout, p["W2"]).reshape(c["h2"].shape)
        dh2 = dr * (c["h2"] > 0)
        if "blk_g" in p:
            dh1, g["blk_g"], g["blk_b"] = _bn_backward(dh2, c["xh1"], c["inv1"], p["blk_g"], (0, 1, 2))
        else:
            dh1 = dh2
        k1 = self.spec.k1
        dW1r = c["Uw"].reshape(-1, k1).T @ dh1.reshape(-1, self.F * self.A)
        g["W1"] = dW1r.reshape(k1, self.F, self.A).transpose(1, 2, 0)
        dUw = dh1 @ c["W1r"].T  # (B, P, m1, k1)
        dU = np.zeros((B, self.P, self.spec.n))
        for j in range(k1):
            dU[:, :, j:j + self.m1] += dUw[:, :, :, j]
        du = np.zeros_like(x)
        for j in range(self.spec.n):
            du[:, self.cols[:, j]] += dU[:, :, j]
        dz0 = du * (np.abs(c["z0"]) <= 1)
        _, g["in_g"], g["in_b"] = _bn_backward(dz0, c["xh0"], c["inv0"], p["in_g"], (0,))
        return loss, g, c


def head_loss_grad(scores, y, task):
    """Mean loss and its gradient w.r.t. the scores (cross-entropy or squared error)."""
    B = len(scores)
    if task == "regression":
        diff = scores[:, 0] - y
        return (2.0 * diff / B)[:, None], float(np.mean(diff ** 2))
    z = scores - scores.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    y = np.asarray(y, dtype=np.int64)
    loss = -float(logp[np.arange(B), y].mean())
    d = np.exp(logp)
    d[np.arange(B), y] -= 1.0
    return d / B, loss


def head_loss(features, W, b, y, task):
    """Loss of a float linear head on fixed features; used for gradient checks."""
    return head_loss_grad(features @ W + b, y, task)[1]


def head_gradient(features, W, b, y, task):
    d, _ = head_loss_grad(features @ W + b, y, task)
    return features.T @ d, d.sum(axis=0)


class _Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def init_model(schema: FeatureSchema, task: str, n_outputs: int, config: TrainConfig, rng,
               class_labels=(), target_scaler=None) -> TTnetModel:
    spec = config.block_spec()
    L = len(schema)
    F, A, k1, k2 = config.n_filters, spec.amplification, spec.k1, spec.k2
    S = F * spec.n_patches(L)
    bound1 = 1.0 / math.sqrt(k1)
    bound2 = 1.0 / math.sqrt(k2 * A)
    W1 = rng.uniform(-bound1, bound1, size=(F, A, k1))
    W2 = rng.uniform(-bound2, bound2, size=(F, k2, A))
    head_w = rng.normal(0.0, 0.01, size=(S, n_outputs))
    mask = np.abs(rng.normal(0.0, 0.01, size=(S, n_outputs))) if config.head_mode == "binary_sparse" else None
    final_bn = BatchNorm.init(S)
    if config.head_mode == "binary_sparse":
        # +-1 weights over S unit-variance slots: start with unit-variance scores
        final_bn.gamma[:] = 1.0 / math.sqrt(S)
    return TTnetModel(
        spec=spec, schema=schema, task=task, head_mode=config.head_mode,
        input_bn=BatchNorm.init(L), W1=W1, W2=W2,
        inner_bn=BatchNorm.init(F * A) if spec.inner_bn else None,
        final_bn=final_bn, head_weight=head_w, head_bias=np.zeros(n_outputs),
        head_mask=mask, dropout_p=config.dropout_p if config.head_mode == "float" else 0.0,
        class_labels=tuple(class_labels), target_scaler=target_scaler or TargetScaler(),
        config=asdict(config),
    )


def _update_running(bn: BatchNorm, mean, var, count):
    unbiased = var * count / max(count - 1, 1)
    bn.running_mean = (1 - bn.momentum) * bn.running_mean + bn.momentum * mean
    bn.running_var = (1 - bn.momentum) * bn.running_var + bn.momentum * unbiased


def train(dataset: Dataset, config: TrainConfig, rows=None, progress=None) -> TTnetModel:
    """Fit a TTnet on ``dataset`` (restricted to ``rows`` if given).

    Adam over shuffled minibatches; after the last epoch every batch-norm's
    statistics are recomputed on the full training rows.
    """
    X = np.asarray(dataset.X, dtype=float)
    y = np.asarray(dataset.y)
    if rows is not None:
        X, y = X[np.asarray(rows)], y[np.asarray(rows)]
    if len(X) < 2:
        raise InputError("need at least two training rows")
    task = dataset.task
    n_out = 1 if task == "regression" else len(dataset.class_labels)
    rng = np.random.default_rng(config.seed)
    model = init_model(dataset.schema, task, n_out, config, rng, dataset.class_labels, dataset.target_scaler)
    trainer = _Trainer.from_model(model, rng)
    params = trainer.p
    opt = _Adam(params, config.learning_rate)
    wd = config.mask_weight_decay if config.head_mode == "binary_sparse" else 0.0
    n = len(X)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total, seen = 0.0, 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            if len(idx) < 2:
                continue
            loss, grads, cache = trainer.loss_and_grads(X[idx], y[idx], wd)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss in epoch {epoch + 1}")
            opt.step(params, grads)
            _update_running(model.input_bn, cache["mu"], cache["var"], len(idx))
            if model.inner_bn is not None:
                _update_running(model.inner_bn, cache["mu1"], cache["var1"], len(idx) * trainer.P * trainer.m1)
            _update_running(model.final_bn, cache["mu2"], cache["var2"], len(idx))
            total += loss * len(idx)
            seen += len(idx)
        log.info("epoch %d/%d loss %.5f", epoch + 1, config.epochs, total / max(seen, 1))
        if progress is not None:
            progress(epoch + 1, total / max(seen, 1))
    _write_back(model, params)
    return recompute_bn_stats(model, X)


def _write_back(model, p):
    model.input_bn.gamma, model.input_bn.beta = p["in_g"], p["in_b"]
    model.W1, model.W2 = p["W1"], p["W2"]
    if model.inner_bn is not None:
        model.inner_bn.gamma, model.inner_bn.beta = p["blk_g"], p["blk_b"]
    model.final_bn.gamma, model.final_bn.beta = p["fin_g"], p["fin_b"]
    model.head_weight, model.head_bias = p["W"], p["b"]
    if "M" in p:
        model.head_mask = p["M"]


def _channel_stats(chunks):
    """Exact two-pass mean and population variance over a re-iterable of (rows, C) arrays."""
    total, count = None, 0
    for a in chunks():
        s = a.sum(axis=0)
        total = s if total is None else total + s
        count += a.shape[0]
    mean = total / count
    sq = None
    for a in chunks():
        s = ((a - mean) ** 2).sum(axis=0)
        sq = s if sq is None else sq + s
    return mean, sq / count


def _conv1_outputs(model, patches):
    """First-convolution outputs as (rows * positions, F*A)."""
    spec = model.spec
    F, A = model.n_filters, spec.amplification
    win = np.arange(spec.k2)[:, None] + np.arange(spec.k1)[None, :]
    W1r = model.W1.transpose(2, 0, 1).reshape(spec.k1, F * A)
    return patches[..., win].reshape(-1, spec.k1) @ W1r


def recompute_bn_stats(model: TTnetModel, X, chunk: int = 4096) -> TTnetModel:
    """Set every batch-norm's statistics to the exact values over the rows of ``X``.

    Layers are refreshed in order, each seeing inputs produced with the already
    refreshed upstream statistics. Variances are population variances.
    """
    X = _check_rows(model, X)
    model = replace(model, input_bn=_copy_bn(model.input_bn), inner_bn=_copy_bn(model.inner_bn),
                    final_bn=_copy_bn(model.final_bn))

    def rows():
        for s in range(0, len(X), chunk):
            yield X[s:s + chunk]

    model.input_bn.running_mean, model.input_bn.running_var = _channel_stats(rows)
    cols = model.spec.patch_columns(model.L)
    if model.inner_bn is not None:
        def conv1():
            for xb in rows():
                yield _conv1_outputs(model, input_bits(model, xb)[:, cols].astype(float))
        model.inner_bn.running_mean, model.inner_bn.running_var = _channel_stats(conv1)

    def slots():
        for xb in rows():
            yield slot_bits(model, xb).astype(float)
    model.final_bn.running_mean, model.final_bn.running_var = _channel_stats(slots)
    model.bn_finalized = True
    return model


def _copy_bn(bn):
    if bn is None:
        return None
    return BatchNorm(bn.gamma.copy(), bn.beta.copy(), bn.running_mean.copy(), bn.running_var.copy(),
                     bn.eps, bn.momentum)


# --------------------------------------------------------------------------
# checkpoints


def model_to_dict(model: TTnetModel) -> dict:
    return {
        "format": "ttrules-checkpoint",
        "version": CHECKPOINT_VERSION,
        "config": model.config,
        "config_hash": _config_hash(model.config),
        "seed": model.config.get("seed"),
        "task": model.task,
        "head_mode": model.head_mode,
        "dropout_p": model.dropout_p,
        "class_labels": list(model.class_labels),
        "target_scaler": {"mean": model.target_scaler.mean, "std": model.target_scaler.std},
        "spec": {"n": model.spec.n, "stride": model.spec.stride, "amplification": model.spec.amplification,
                 "k1": model.spec.k1, "inner_bn": model.spec.inner_bn},
        "schema": model.schema.to_dict(),
        "bn_finalized": model.bn_finalized,
        "params": {
            "input_bn": model.input_bn.to_dict(),
            "W1": model.W1.tolist(),
            "W2": model.W2.tolist(),
            "inner_bn": model.inner_bn.to_dict() if model.inner_bn is not None else None,
            "final_bn": model.final_bn.to_dict(),
            "head_weight": model.head_weight.tolist(),
            "head_bias": model.head_bias.tolist(),
            "head_mask": model.head_mask.tolist() if model.head_mask is not None else None,
        },
    }


def model_from_dict(d: dict) -> TTnetModel:
    if d.get("format") != "ttrules-checkpoint":
        raise InputError("not a ttrules checkpoint")
    if d.get("version") != CHECKPOINT_VERSION:
        raise InputError(f"unsupported checkpoint version {d.get('version')}")
    p = d["params"]
    arr = lambda v: None if v is None else np.asarray(v, dtype=float)  # noqa: E731
    return TTnetModel(
        spec=LttBlockSpec(**d["spec"]),
        schema=FeatureSchema.from_dict(d["schema"]),
        task=d["task"],
        head_mode=d["head_mode"],
        input_bn=BatchNorm.from_dict(p["input_bn"]),
        W1=arr(p["W1"]),
        W2=arr(p["W2"]),
        inner_bn=BatchNorm.from_dict(p["inner_bn"]) if p["inner_bn"] is not None else None,
        final_bn=BatchNorm.from_dict(p["final_bn"]),
        head_weight=arr(p["head_weight"]),
        head_bias=arr(p["head_bias"]),
        head_mask=arr(p["head_mask"]),
        dropout_p=d["dropout_p"],
        class_labels=tuple(d["class_labels"]),
        target_scaler=TargetScaler(**d["target_scaler"]),
        config=d["config"],
        bn_finalized=d["bn_finalized"],
    )


def _config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]


def save_model(model: TTnetModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)))


def load_model(path) -> TTnetModel:
    return model_from_dict(json.loads(Path(path).read_text()))
