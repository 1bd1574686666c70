import numpy as np
import pytest

from walkcount import markov


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def k3():
    return markov.complete_graph_chain(3)


@pytest.fixture
def k4():
    return markov.complete_graph_chain(4)


@pytest.fixture
def two_state_lazy():
    return markov.MarkovChain(np.full((2, 2), 0.5))


@pytest.fixture
def two_state_biased():
    # p01=0.2, p10=0.4 with self-loops; stationary (2/3, 1/3)
    return markov.two_state_chain(0.2, 0.4)
