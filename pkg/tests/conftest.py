"""Shared fixtures: the desk-scale dataset and classifier under attack.

The desk regime (lightly trained MLP on the synthetic class-template
dataset) is expensive enough to build once per session.
"""

import numpy as np
import pytest

from uapkit.classifier import Network, build_preset
from uapkit.datasets import split_balanced, synth_dataset

DESK_SEED = 3
DESK_SIGMA = 0.05
DESK_N_PER_CLASS = 60
DESK_INPUT_PER_CLASS = 50
DESK_SPLIT_SEED = 0
DESK_NET_SEED = 7
DESK_TRAIN_EPOCHS = 1
DESK_TRAIN_LR = 0.02
DESK_EPSILON = 1.0


@pytest.fixture(scope="session")
def desk_dataset():
    return synth_dataset(class_count=10, n_per_class=DESK_N_PER_CLASS,
                         sigma=DESK_SIGMA, seed=DESK_SEED)


@pytest.fixture(scope="session")
def desk_split(desk_dataset):
    return split_balanced(desk_dataset, DESK_INPUT_PER_CLASS, seed=DESK_SPLIT_SEED)


@pytest.fixture(scope="session")
def desk_mlp(desk_split):
    input_set, _ = desk_split
    net = Network(build_preset("mlp", input_set.image_shape, 10),
                  input_set.image_shape, 10)
    net.init_weights(DESK_NET_SEED)
    net.train_sgd(input_set.images, input_set.labels, DESK_TRAIN_EPOCHS,
                  DESK_TRAIN_LR, 32, DESK_NET_SEED)
    return net


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
