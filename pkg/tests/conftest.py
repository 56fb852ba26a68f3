"""Shared grammars and parameter sets for the test suite."""

import numpy as np
import pytest

from src.grammar.core import GrammarDims, concentrated_grammar, normalize_random
from src.model.factored import concentrated_factored, random_factored
from src.model.neural import NeuralParams

SMALL_DIMS = GrammarDims(m1=2, m2=2, p=3, v=5)
SMALL_RANKS = (2, 2, 2, 2)


@pytest.fixture
def concentrated():
    return concentrated_grammar(v=1)


@pytest.fixture
def concentrated_fg():
    return concentrated_factored(v=1)


@pytest.fixture
def small_grammar():
    return normalize_random(SMALL_DIMS, seed=7)


@pytest.fixture
def small_fg():
    return random_factored(SMALL_DIMS, SMALL_RANKS, seed=3)


@pytest.fixture
def tiny_params():
    dims = GrammarDims(m1=2, m2=2, p=3, v=6)
    return NeuralParams.xavier(dims, SMALL_RANKS, 16, seed=0, dtype="float64")


@pytest.fixture
def rng():
    return np.random.default_rng(42)
