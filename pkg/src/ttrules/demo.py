"""A hand-set four-bit LTT block on a five-column toy schema.

Columns are Male, GoUni, Married and a two-way one-hot birthplace group
(BornUS, BornUK). The block fires only on the patch 0001, so with stride 1
it yields the rules ``BornUS AND NOT Male AND NOT GoUni AND NOT Married`` and
``BornUK AND NOT GoUni AND NOT Married AND NOT BornUS``.
"""
from __future__ import annotations

import numpy as np

from .data import BINARY, CATEGORICAL, Column, FeatureSchema
from .ttnet import BN_EPS, BatchNorm, LttBlock, LttBlockSpec, TTnetModel

DEMO_W1 = np.array([[10.0, -1.0, 3.0], [6.0, -5.0, 4.0], [4.0, 4.0, -3.0], [4.0, 4.0, 3.0]])
DEMO_W2 = np.array([[-5.0, 0.0, 9.0, -5.0], [-5.0, 4.0, 0.0, 0.0]])
DEMO_TABLE_HEX = "4000"
DEMO_LABELS = {"Male": "Male", "GoUni": "Go Uni.", "Married": "Married", "BornUS": "Born US", "BornUK": "Born UK"}


def demo_spec() -> LttBlockSpec:
    return LttBlockSpec(n=4, stride=1, amplification=4, k1=3, inner_bn=False)


def demo_block() -> LttBlock:
    return LttBlock(DEMO_W1.copy(), DEMO_W2.copy(), demo_spec(), None)


def demo_schema() -> FeatureSchema:
    return FeatureSchema((
        Column("Male", BINARY, source="Male"),
        Column("GoUni", BINARY, source="GoUni"),
        Column("Married", BINARY, source="Married"),
        Column("BornUS", CATEGORICAL, 0, "US", "Born"),
        Column("BornUK", CATEGORICAL, 0, "UK", "Born"),
    ))


def _identity_bn(size, mean=0.0):
    # scale 1, shift -mean: the step then tests x > mean
    return BatchNorm(np.ones(size), np.zeros(size), np.full(size, mean), np.full(size, 1.0 - BN_EPS))


def demo_model(head=((0.0, 1.0), (0.0, 1.0)), bias=(0.0, 0.0)) -> TTnetModel:
    """Binary-task TTnet (one filter, two patches) with a float head ``head`` (2 slots x 2 classes)."""
    schema = demo_schema()
    spec = demo_spec()
    return TTnetModel(
        spec=spec, schema=schema, task="binary", head_mode="float",
        input_bn=_identity_bn(len(schema), 0.5),
        W1=DEMO_W1[None].copy(), W2=DEMO_W2[None].copy(), inner_bn=None,
        final_bn=_identity_bn(spec.n_patches(len(schema))),
        head_weight=np.array(head, dtype=float), head_bias=np.array(bias, dtype=float),
        class_labels=("0", "1"), config={"demo": True, "seed": 0}, bn_finalized=True,
    )
