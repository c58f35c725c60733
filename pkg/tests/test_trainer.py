import math

import numpy as np
import pytest

from conftest import unit_rows
from errors import ConfigError, DimensionMismatch, OutOfRange
from geometry.types import PairedEmbeddings
from objective.config import MixLossConfig
from service.synth import SynthConfig, synth_bipartite
from training.model import (
    LOG_TAU_MIN,
    AdamState,
    ProjectionModel,
    adam_step,
    forward,
    init_model,
)
from training.trainer import (
    TrainConfig,
    Trainer,
    evaluate,
    finite_difference_check,
    history_frame,
    objective_gradients,
    train,
    write_history,
)


@pytest.fixture
def raw_pairs(rng):
    return PairedEmbeddings.raw(unit_rows(rng, 12, 4), unit_rows(rng, 12, 4))


def test_forward_identity_and_scaled_identity(raw_pairs):
    eye = ProjectionModel(np.eye(4), np.eye(4), math.log(0.01), math.log(0.01))
    out = forward(eye, raw_pairs)
    np.testing.assert_allclose(out.image, raw_pairs.image, atol=1e-12)
    doubled = ProjectionModel(2 * np.eye(4), 2 * np.eye(4), math.log(0.01), math.log(0.01))
    np.testing.assert_allclose(forward(doubled, raw_pairs).text, raw_pairs.text, atol=1e-12)


def test_forward_rows_unit(rng, raw_pairs):
    model = init_model(4, seed=0, noise=0.5)
    out = forward(model, raw_pairs)
    np.testing.assert_allclose(np.linalg.norm(out.image, axis=1), 1.0, atol=1e-12)
    with pytest.raises(DimensionMismatch):
        forward(init_model(3, seed=0), raw_pairs)


def test_init_model_deterministic():
    a, b = init_model(6, seed=2), init_model(6, seed=2)
    assert np.array_equal(a.w_img, b.w_img)
    assert a.tau1 == pytest.approx(0.01) and a.tau2 == pytest.approx(0.01)
    assert np.abs(a.w_img - np.eye(6)).max() < 0.01


def test_adam_zero_gradient_keeps_params():
    params = init_model(3, seed=0).params()
    grads = {k: np.zeros_like(v) if isinstance(v, np.ndarray) else 0.0 for k, v in params.items()}
    new, state = adam_step(params, grads, AdamState.zeros(params), lr=0.1)
    assert state.step == 1
    for key in params:
        np.testing.assert_array_equal(new[key], params[key])


def test_adam_first_step_moves_by_lr_sign():
    params = {"w_img": np.array([[1.0, -2.0]]), "log_tau1": 0.0}
    grads = {"w_img": np.array([[0.5, -3.0]]), "log_tau1": -0.25}
    new, _ = adam_step(params, grads, AdamState.zeros(params), lr=0.01)
    np.testing.assert_allclose(new["w_img"], [[0.99, -1.99]], atol=1e-7)
    assert new["log_tau1"] == pytest.approx(0.01, abs=1e-7)


def test_adam_weight_decay_on_matrices_only():
    params = {"w_img": np.array([[1.0]]), "log_tau1": 1.0}
    grads = {"w_img": np.array([[0.0]]), "log_tau1": 0.0}
    new, _ = adam_step(params, grads, AdamState.zeros(params), lr=0.1, wd=0.5)
    assert new["w_img"][0, 0] == pytest.approx(0.95)
    assert new["log_tau1"] == 1.0


def test_adam_rejects_mismatched_keys():
    params = {"w_img": np.zeros((1, 1))}
    with pytest.raises(DimensionMismatch):
        adam_step(params, {"w_txt": np.zeros((1, 1))}, AdamState.zeros(params), lr=0.1)


def test_temperature_clamped():
    model = init_model(2, seed=0)
    params = model.params() | {"log_tau1": math.log(1e-5), "log_tau2": 3.0}
    clamped = model.with_params(params)
    assert clamped.log_tau1 == LOG_TAU_MIN
    assert clamped.tau2 == pytest.approx(1.0)


def test_zero_epochs_returns_initialization(raw_pairs):
    cfg = TrainConfig(epochs=0, seed=7)
    model, history = train(raw_pairs, cfg)
    init = init_model(4, 7)
    assert history == []
    assert np.array_equal(model.w_img, init.w_img)
    assert model.log_tau2 == init.log_tau2


def test_training_rejects_single_pair(rng):
    P = PairedEmbeddings.raw(unit_rows(rng, 1, 3), unit_rows(rng, 1, 3))
    with pytest.raises(OutOfRange):
        Trainer(P, TrainConfig())


def test_train_config_errors_name_fields():
    with pytest.raises(ConfigError, match="batch_size"):
        TrainConfig.from_json('{"batch_size": 1}')
    with pytest.raises(ConfigError, match="loss.tau1"):
        TrainConfig.from_json('{"loss": {"tau1": -1}}')
    assert TrainConfig.from_json('{"epochs": 2}').epochs == 2


def test_training_deterministic_and_one_record_per_epoch(raw_pairs, tmp_path):
    cfg = TrainConfig(epochs=3, batch_size=5, lr=1e-2, seed=1)
    m1, h1 = train(raw_pairs, cfg)
    m2, h2 = train(raw_pairs, cfg)
    assert [r.epoch for r in h1] == [0, 1, 2]
    assert h1 == h2
    assert np.array_equal(m1.w_txt, m2.w_txt)
    frame = history_frame(h1)
    assert np.isfinite(frame.drop(columns="epoch").to_numpy()).all()

    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    write_history(tmp_path / "a", h1)
    write_history(tmp_path / "b", h2)
    assert (tmp_path / "a" / "history.csv").read_bytes() == (tmp_path / "b" / "history.csv").read_bytes()
    assert len((tmp_path / "a" / "history.jsonl").read_text().splitlines()) == 3


def test_learning_rate_decay_recorded(raw_pairs):
    _, history = train(raw_pairs, TrainConfig(epochs=3, lr=0.1, lr_decay=0.5))
    assert [r.lr for r in history] == pytest.approx([0.1, 0.05, 0.025])


@pytest.mark.parametrize("tau", [0.5, 0.1])
@pytest.mark.parametrize("loss", ["plain", "m2", "uni", "m3mix"])
@pytest.mark.parametrize("m,d", [(2, 3), (4, 3), (8, 3), (2, 8), (4, 8), (8, 8)])
def test_parameter_gradients_match_finite_differences(m, d, loss, tau):
    rng = np.random.default_rng(10 * m + d)
    P = PairedEmbeddings.raw(unit_rows(rng, m, d), unit_rows(rng, m, d))
    cfg = {
        "plain": MixLossConfig.plain(tau),
        "m2": MixLossConfig(w_m2=1.0, w_v=0.0, w_l=0.0, w_vl=0.0, tau1=tau),
        "uni": MixLossConfig(w_m2=0.0, w_v=0.3, w_l=0.3, w_vl=0.3, tau1=tau),
        "m3mix": MixLossConfig(tau1=tau),
    }[loss]
    model = init_model(d, seed=m, tau1=tau, tau2=tau, noise=0.3)
    result = finite_difference_check(model, P, cfg, step=1e-6)
    assert result.max_rel_error < 1e-4


def test_finite_difference_step_range(raw_pairs):
    with pytest.raises(OutOfRange):
        finite_difference_check(init_model(4, 0), raw_pairs, MixLossConfig(), step=1e-2)


def test_swapped_modalities_swap_projection_gradients(rng):
    P = PairedEmbeddings.raw(unit_rows(rng, 5, 3), unit_rows(rng, 5, 3))
    W = np.eye(3) + 0.2 * rng.standard_normal((3, 3))
    model = ProjectionModel(W, W.copy(), math.log(0.1), math.log(0.1))
    _, grads = objective_gradients(model, P, MixLossConfig.plain(0.1), 0, 0, 0)
    _, swapped = objective_gradients(model, P.swapped(), MixLossConfig.plain(0.1), 0, 0, 0)
    np.testing.assert_allclose(grads["w_img"], swapped["w_txt"], atol=1e-12)


def test_evaluate_at_initialization_matches_raw_metrics():
    data = synth_bipartite(SynthConfig(M=64, d=8, seed=0))
    cfg = TrainConfig(init_noise=0.0)
    model = init_model(8, 0, noise=0.0)
    record = evaluate(model, data, cfg, epoch=0, lr=cfg.lr)
    assert record.hn_mix_image > record.hn_orig_image
    assert record.tau1 == pytest.approx(0.01)


@pytest.mark.slow
def test_plain_training_reduces_clip_loss():
    data = synth_bipartite(SynthConfig(M=256, d=32, seed=0))
    cfg = TrainConfig(epochs=30, loss=MixLossConfig.plain())
    initial = evaluate(init_model(32, cfg.seed, noise=cfg.init_noise), data, cfg, 0, cfg.lr)
    _, history = train(data, cfg)
    assert history[-1].loss_clip < initial.loss_clip


@pytest.mark.slow
def test_m3mix_beats_plain_on_most_seeds():
    wins = 0
    for seed in range(5):
        data = synth_bipartite(SynthConfig(M=256, d=32, seed=seed))
        _, plain = train(data, TrainConfig(epochs=30, loss=MixLossConfig.plain(), seed=seed))
        _, mixed = train(data, TrainConfig(epochs=30, loss=MixLossConfig(), seed=seed))
        wins += mixed[-1].uniformity > plain[-1].uniformity and mixed[-1].relative_alignment > plain[-1].relative_alignment
        assert mixed[-1].hn_mix_image > mixed[-1].hn_orig_image
        # mixed negatives get easier as training proceeds but never all vanish
        assert mixed[0].hn_mix_image > mixed[-1].hn_mix_image > 0.0
        assert plain[-1].loss_clip < plain[0].loss_clip and mixed[-1].loss_clip < mixed[0].loss_clip
    assert wins >= 4
