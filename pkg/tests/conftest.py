import random

import pytest

from monomine.langid import FeatureSpec, TrainConfig, train

import synth


@pytest.fixture(scope="session")
def two_lang_model():
    """Small model over two disjoint-alphabet languages, shared by tests."""
    langs = synth.make_langs(("aa", "bb"))
    labeled = synth.labeled_examples(langs, per_lang=150, seed=7)
    spec = FeatureSpec(n_buckets=1 << 14)
    model = train(labeled, spec, TrainConfig(epochs=40, learning_rate=10.0))
    return langs, model


@pytest.fixture()
def rng():
    return random.Random(1234)
