import hypothesis
import numpy as np
import pytest

from geometry.types import PairedEmbeddings
from service.synth import SynthConfig, synth_bipartite

np.seterr(all="warn")

hypothesis.settings.register_profile("fast", max_examples=5)
hypothesis.settings.register_profile("ci", max_examples=50, deadline=None)
hypothesis.settings.register_profile("debugger", report_multiple_bugs=False)


def unit_rows(rng: np.random.Generator, m: int, d: int) -> np.ndarray:
    x = rng.standard_normal((m, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def random_pairs(rng):
    return PairedEmbeddings(unit_rows(rng, 6, 5), unit_rows(rng, 6, 5))


@pytest.fixture(scope="session")
def bipartite():
    return synth_bipartite(SynthConfig(M=128, d=32, seed=0))
