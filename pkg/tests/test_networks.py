import numpy as np
import pytest

from src.config import RunConfig
from src.exceptions import InvalidParamsError, ValidationError
from src.metrics import evaluate
from src.model_store import ModelKind, fit_model
from src.networks import (
    AdamState,
    CNNConfig,
    DivergedTrainingError,
    MLPConfig,
    NeuralRegressor,
    NonFiniteActivationError,
    NonFiniteLossError,
    adam_step,
    build,
    build_cnn,
    build_mlp,
    config_from_arrays,
    config_to_arrays,
    fit_regressor,
    forward,
    loss_and_grads,
    mlp_forward,
    train,
)
from src.nn_layers import ShapeMismatchError
from src.saliency import compare_with_reference, saliency
from src.synthetic import PLANTED_CENTERS_NM, PlantedSignalConfig, planted_dataset


def tiny_mlp(**overrides):
    params = dict(input_dim=12, hidden=(32, 16, 8), l1=0.0, l2=0.0, seed=1)
    params.update(overrides)
    return MLPConfig(**params)


def tiny_cnn():
    return CNNConfig(conv_channels=(4,), dense=16, input_mode="spectrum", n_points=30, seed=1)


# --------------------------------------------------------------------------
# Adam
# --------------------------------------------------------------------------

def test_adam_two_steps():
    state = AdamState(lr0=0.1, decay=1.0)
    p = np.array([1.0, 2.0])
    adam_step(state, [p], [np.array([0.5, 0.0])])
    assert p[0] == pytest.approx(0.9, abs=1e-7)
    assert p[1] == 2.0
    assert state.m[0][1] == 0.0 and state.v[0][1] == 0.0
    adam_step(state, [p], [np.array([-0.5, 0.0])])
    assert state.t == 2
    assert p[0] == pytest.approx(0.9052631579, abs=1e-6)


def test_adam_learning_rate_decay():
    assert AdamState(lr0=0.1, decay=0.5).learning_rate(2) == pytest.approx(0.025)


def test_adam_rejects_mismatched_shapes():
    with pytest.raises(ShapeMismatchError):
        adam_step(AdamState(), [np.zeros(3)], [np.zeros(4)])
    with pytest.raises(ShapeMismatchError):
        adam_step(AdamState(), [np.zeros(3)], [])


# --------------------------------------------------------------------------
# Construction and forward passes
# --------------------------------------------------------------------------

def test_full_cnn_shape_trace():
    network = build_cnn(CNNConfig())
    trace = network.layers.shape_trace((244, 488, 1))
    pooled = [shape for shape, layer in zip(trace, network.layers.layers) if type(layer).__name__ == "MaxPool2D"]
    assert pooled == [(81, 162, 32), (27, 54, 64), (9, 18, 128)]
    assert trace[-1] == (1,)
    assert network.config.flat_size == 9 * 18 * 128


def test_spectrum_mode_cnn_shapes():
    cfg = CNNConfig(input_mode="spectrum")
    assert cfg.image_shape == (1, 2701) and cfg.kernel == (1, 3)
    assert cfg.flat_size == 100 * 128
    with pytest.raises(InvalidParamsError):
        CNNConfig(input_mode="spectrum", n_points=20)
    with pytest.raises(InvalidParamsError):
        CNNConfig(input_mode="waveform")


def test_mlp_config_validation():
    with pytest.raises(InvalidParamsError):
        MLPConfig(input_dim=10, hidden=(5,), l1=1e-3, regularized_layer=2)
    assert MLPConfig(input_dim=10, hidden=(5,), l1=0.0, l2=0.0, regularized_layer=2).hidden == (5,)


def test_mlp_forward_checks_shape_and_finiteness(rng):
    network = build(tiny_mlp())
    with pytest.raises(ShapeMismatchError):
        mlp_forward(network, np.zeros((2, 11)))
    network.layers.layers[-1].bias.data[:] = np.inf
    with pytest.raises(NonFiniteActivationError):
        mlp_forward(network, rng.normal(size=(2, 12)))


def test_relu_network_is_positively_homogeneous(rng):
    network = build_mlp(MLPConfig(input_dim=10, hidden=(6, 4, 3), l1=0.0, l2=0.0))
    x = rng.normal(size=(5, 10))
    assert np.allclose(forward(network, 3.5 * x), 3.5 * forward(network, x), rtol=1e-12, atol=1e-14)


def test_build_is_seeded():
    a, b = build(tiny_cnn()), build(tiny_cnn())
    assert all(np.array_equal(p.data, q.data) for p, q in zip(a.parameters(), b.parameters()))


# --------------------------------------------------------------------------
# Loss and gradients
# --------------------------------------------------------------------------

def test_regularized_loss_gradient(rng):
    network = build(MLPConfig(input_dim=6, hidden=(5, 4, 3), l1=1e-2, l2=1e-2, seed=3))
    x, y = rng.normal(size=(5, 6)), rng.normal(size=5)
    _, grads = loss_and_grads(network, x, y)
    h = 1e-6
    for param, grad in zip(network.parameters(), grads):
        flat = param.data.reshape(-1)
        for i in range(0, flat.size, max(1, flat.size // 7)):
            saved = flat[i]
            flat[i] = saved + h
            up = loss_and_grads(network, x, y)[0]
            flat[i] = saved - h
            down = loss_and_grads(network, x, y)[0]
            flat[i] = saved
            assert (up - down) / (2 * h) == pytest.approx(grad.reshape(-1)[i], rel=1e-5, abs=1e-8)


def test_loss_rejects_batch_mismatch(rng):
    with pytest.raises(ValidationError):
        loss_and_grads(build(tiny_mlp()), rng.normal(size=(3, 12)), np.zeros(2))


# --------------------------------------------------------------------------
# Training
# --------------------------------------------------------------------------

@pytest.mark.parametrize("cfg, width", [(tiny_mlp(), 12), (tiny_cnn(), 30)], ids=["mlp", "cnn"])
def test_small_networks_overfit_eight_samples(cfg, width):
    rng = np.random.default_rng(8)
    rows, y = rng.normal(size=(8, width)), rng.uniform(0.0, 20.0, size=8)
    result = fit_regressor(build(cfg), rows, y, learning_rate=1e-2, lr_decay=1.0, batch_size=8, epochs=300)
    best = result.log[result.best_epoch]
    assert best.train_rmse < 0.1 * y.std()
    assert best.train_rmse < result.log[0].train_rmse


def test_training_is_deterministic(rng):
    rows, y = rng.normal(size=(20, 12)), rng.uniform(0.0, 5.0, size=20)
    runs = [fit_regressor(build(tiny_mlp()), rows, y, rows[:5], y[:5], batch_size=4, epochs=5, seed=9)
            for _ in range(2)]
    assert runs[0].log_text() == runs[1].log_text()
    assert runs[0].model.predict(rows).tobytes() == runs[1].model.predict(rows).tobytes()


def test_best_snapshot_is_restored(rng):
    rows, y = rng.normal(size=(30, 12)), rng.uniform(0.0, 5.0, size=30)
    val_rows, val_y = rng.normal(size=(6, 12)), rng.uniform(0.0, 5.0, size=6)
    result = fit_regressor(build(tiny_mlp()), rows, y, val_rows, val_y, batch_size=8, epochs=12)
    best = min(result.log, key=lambda record: record.val_rmse)
    assert result.best_epoch == best.epoch
    restored = np.sqrt(np.mean((result.model.predict(val_rows) - val_y) ** 2))
    assert restored == pytest.approx(best.val_rmse, rel=1e-12)


def test_non_finite_loss_stops_training(rng, mocker):
    mocker.patch("src.networks.loss_and_grads", side_effect=NonFiniteLossError("loss is nan"))
    with pytest.raises(DivergedTrainingError, match="epoch 0"):
        fit_regressor(build(tiny_mlp()), rng.normal(size=(4, 12)), np.arange(4.0), epochs=2)


def test_regressor_arrays_round_trip(rng):
    rows, y = rng.normal(size=(10, 30)), rng.uniform(0.0, 5.0, size=10)
    model = fit_regressor(build(tiny_cnn()), rows, y, batch_size=5, epochs=2).model
    restored = NeuralRegressor.from_arrays(tiny_cnn(), model.to_arrays())
    assert restored.predict(rows).tobytes() == model.predict(rows).tobytes()


def test_config_arrays_round_trip():
    cfg = CNNConfig(conv_channels=(8, 16), dense=12, input_mode="spectrum", n_points=200, seed=5)
    assert config_from_arrays("cnn", config_to_arrays(cfg)) == cfg
    mlp = tiny_mlp(l1=1e-4)
    assert config_from_arrays("mlp", config_to_arrays(mlp)) == mlp
    meta = config_to_arrays(cfg)
    meta["spectrogram_recipe"] = np.array([7.0])
    with pytest.raises(ValidationError):
        config_from_arrays("cnn", meta)


def test_train_uses_run_split(planted_small):
    config = RunConfig(hyperparameters={"mlp": {"hidden": [8, 4, 2], "epochs": 2, "batch_size": 16}})
    result = train("mlp", planted_small, config)
    assert len(result.train_indices) == 64 and len(result.val_indices) == 16
    assert len(result.log) == 2
    assert set(result.train_indices).isdisjoint(result.val_indices)


@pytest.mark.slow
def test_full_cnn_overfits_eight_spectrograms():
    data = planted_dataset(PlantedSignalConfig(n_samples=8, seed=3))
    result = fit_regressor(build(CNNConfig(seed=3)), data.matrix, data.labels,
                           learning_rate=1e-3, lr_decay=1.0, batch_size=8, epochs=300)
    best = result.log[result.best_epoch]
    assert (best.train_rmse / data.labels.std()) ** 2 < 1e-3


@pytest.mark.slow
def test_planted_signal_recovery_with_mlp():
    data = planted_dataset(PlantedSignalConfig(n_samples=2000, seed=42))
    config = RunConfig(hyperparameters={"mlp": {"epochs": 60}})
    outcome = fit_model(ModelKind.MLP, data, config)
    report = outcome.validation
    assert report.r2 > 0.9 and report.rpd > 2.0

    processed = outcome.model.preprocess(data.subset(outcome.val_indices))
    saliency_map = saliency(outcome.model.estimator, processed.matrix.mean(axis=0))
    top5 = [peak.wavelength_nm for peak in saliency_map.top_peaks[:5]]
    for centre in PLANTED_CENTERS_NM:
        assert min(abs(nm - centre) for nm in top5) <= 10.0
    assert evaluate(processed.labels, outcome.model.predict_preprocessed(processed.matrix)).r2 == report.r2
    assert len(compare_with_reference(saliency_map)) > 0
