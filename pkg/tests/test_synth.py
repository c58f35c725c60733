import math

import numpy as np
import pytest
from pydantic import ValidationError

from geometry.metrics import modality_gap, relative_alignment
from service.synth import SynthConfig, separating_normal, synth_bipartite


def test_deterministic_for_seed():
    cfg = SynthConfig(M=16, d=8, seed=4)
    a, b = synth_bipartite(cfg), synth_bipartite(cfg)
    assert np.array_equal(a.image, b.image) and np.array_equal(a.text, b.text)
    c = synth_bipartite(cfg.model_copy(update={"seed": 5}))
    assert not np.array_equal(a.image, c.image)


def test_rows_are_unit(bipartite):
    np.testing.assert_allclose(np.linalg.norm(bipartite.image, axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(bipartite.text, axis=1), 1.0, atol=1e-12)
    assert bipartite.size == 128 and bipartite.dim == 32


def test_modalities_linearly_separable(bipartite):
    normal = separating_normal(SynthConfig(M=128, d=32, seed=0))
    assert (bipartite.image @ normal > 0).all()
    assert (bipartite.text @ normal < 0).all()


def test_gap_grows_with_centroid_angle():
    for seed in range(10):
        narrow = modality_gap(synth_bipartite(SynthConfig(M=64, d=16, gap_angle=math.pi / 6, seed=seed)))[1]
        wide = modality_gap(synth_bipartite(SynthConfig(M=64, d=16, gap_angle=2 * math.pi / 3, seed=seed)))[1]
        assert wide > narrow > 0


def test_uncoupled_pairs_have_no_relative_alignment():
    P = synth_bipartite(SynthConfig(M=64, d=16, kappa_modality=1e4, pair_coupling=0.0, seed=2))
    # every text row sits at the same centroid, so positives are no closer than negatives
    assert relative_alignment(P) == pytest.approx(0.0, abs=0.05)


def test_config_validation():
    with pytest.raises(ValidationError):
        SynthConfig(gap_angle=math.pi)
    with pytest.raises(ValidationError):
        SynthConfig(kappa_modality=math.inf)
    with pytest.raises(ValidationError):
        SynthConfig(pair_coupling=1.5)
    with pytest.raises(ValidationError):
        SynthConfig(unknown=1)
