"""
MLP and CNN regressors for carbospec.
=====================================

Network construction, forward passes, the regularized MSE loss with its
reverse-mode gradients, the Adam optimizer with per-epoch learning-rate
decay, and the seeded training loop with a best-validation snapshot.

Architectures:
    MLP  input -> Dense(500) -> ReLU -> Dense(200) -> ReLU -> Dense(50) -> ReLU -> Dense(1)
         L1 + L2 penalties on the weights of the third hidden layer only.
    CNN  [Conv 3x3 same -> ReLU -> MaxPool 3x3/3] x 3 (32, 64, 128 filters)
         -> Flatten -> Dense(50) -> ReLU -> Dense(1)
         input is a 244 x 488 spectrogram, or the spectrum itself as a
         1 x 2701 image with 1 x 3 kernels and pools.

NeuralRegressor wraps a network with the input/target standardization
learned on the training rows, so it predicts g/100g from preprocessed
spectra directly.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from .config import (
    DEFAULT_SEED,
    NN_BATCH_SIZE,
    NN_EPOCHS,
    NN_L1,
    NN_L2,
    NN_LEARNING_RATE,
    NN_LR_DECAY,
    RunConfig,
)
from .exceptions import InvalidParamsError, NumericalDivergenceError, ValidationError, WidthMismatchError
from .metrics import format_number, rmse
from .nn_layers import Conv2D, Dense, Flatten, MaxPool2D, ReLU, Sequential, ShapeMismatchError, Tensor
from .spectra import NIR_GRID, SpectralDataset
from .spectrogram import RECIPE_VERSION_CODE, SPECTROGRAM_HEIGHT, SPECTROGRAM_WIDTH, render_batch
from .utils import split_indices


class NonFiniteActivationError(NumericalDivergenceError):
    """A forward pass produced NaN or infinity."""
    pass


class NonFiniteLossError(NumericalDivergenceError):
    """The training loss is NaN or infinite."""
    pass


class DivergedTrainingError(NumericalDivergenceError):
    """Training stopped because the loss became non-finite."""
    pass


INPUT_MODES = ("spectrogram", "spectrum")

# Raw network inputs up to this many values are built once per fit
_CACHE_LIMIT = 20_000_000


@dataclass(frozen=True)
class MLPConfig:
    input_dim: int = NIR_GRID.n_points
    hidden: Tuple[int, ...] = (500, 200, 50)
    l1: float = NN_L1
    l2: float = NN_L2
    regularized_layer: int = 2  # index among hidden Dense layers
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.input_dim < 1 or any(h < 1 for h in self.hidden):
            raise InvalidParamsError(f"invalid MLP widths: input {self.input_dim}, hidden {self.hidden}")
        if (self.l1 > 0 or self.l2 > 0) and not 0 <= self.regularized_layer < len(self.hidden):
            raise InvalidParamsError(
                f"regularized layer {self.regularized_layer} does not exist in hidden layers {self.hidden}"
            )

    @property
    def kind(self) -> str:
        return "mlp"

    @property
    def n_inputs(self) -> int:
        return self.input_dim


@dataclass(frozen=True)
class CNNConfig:
    conv_channels: Tuple[int, ...] = (32, 64, 128)
    dense: int = 50
    input_mode: str = "spectrogram"
    n_points: int = NIR_GRID.n_points
    image_shape: Optional[Tuple[int, int]] = None
    kernel: Optional[Tuple[int, int]] = None
    pool: Optional[Tuple[int, int]] = None
    l1: float = 0.0
    l2: float = 0.0
    regularized_layer: int = 0  # index among Dense layers after Flatten
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.input_mode not in INPUT_MODES:
            raise InvalidParamsError(f"input_mode must be one of {INPUT_MODES}, got {self.input_mode!r}")
        spectrogram = self.input_mode == "spectrogram"
        defaults = {
            "image_shape": (SPECTROGRAM_HEIGHT, SPECTROGRAM_WIDTH) if spectrogram else (1, self.n_points),
            "kernel": (3, 3) if spectrogram else (1, 3),
            "pool": (3, 3) if spectrogram else (1, 3),
        }
        for name, default in defaults.items():
            value = getattr(self, name)
            object.__setattr__(self, name, tuple(int(v) for v in (default if value is None else value)))
        object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))
        if not self.conv_channels or any(c < 1 for c in self.conv_channels) or self.dense < 1:
            raise InvalidParamsError(f"invalid CNN widths: {self.conv_channels}, dense {self.dense}")
        h, w = self.image_shape
        for _ in self.conv_channels:
            h, w = h // self.pool[0], w // self.pool[1]
        if h < 1 or w < 1:
            raise InvalidParamsError(f"image {self.image_shape} too small for {len(self.conv_channels)} pools of {self.pool}")
        if (self.l1 > 0 or self.l2 > 0) and self.regularized_layer != 0:
            raise InvalidParamsError("only the hidden dense layer (index 0) can be regularized in a CNN")

    @property
    def kind(self) -> str:
        return "cnn"

    @property
    def n_inputs(self) -> int:
        return self.n_points

    @property
    def flat_size(self) -> int:
        h, w = self.image_shape
        for _ in self.conv_channels:
            h, w = h // self.pool[0], w // self.pool[1]
        return h * w * self.conv_channels[-1]


NetworkConfig = Union[MLPConfig, CNNConfig]


@dataclass
class Network:
    config: NetworkConfig
    layers: Sequential

    @property
    def kind(self) -> str:
        return self.config.kind

    def parameters(self) -> List[Tensor]:
        return self.layers.parameters()

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def regularized_dense(self) -> Optional[Dense]:
        if self.config.l1 <= 0 and self.config.l2 <= 0:
            return None
        return self.layers.dense_layers()[self.config.regularized_layer]


def build_mlp(cfg: MLPConfig) -> Network:
    rng = np.random.default_rng(cfg.seed)
    layers = []
    width = cfg.input_dim
    for units in cfg.hidden:
        layers += [Dense(width, units, rng), ReLU()]
        width = units
    layers.append(Dense(width, 1, rng))
    return Network(cfg, Sequential(layers))


def build_cnn(cfg: CNNConfig) -> Network:
    rng = np.random.default_rng(cfg.seed)
    layers = []
    c_in = 1
    for channels in cfg.conv_channels:
        layers += [Conv2D(c_in, channels, cfg.kernel, rng), ReLU(), MaxPool2D(cfg.pool)]
        c_in = channels
    layers += [Flatten(), Dense(cfg.flat_size, cfg.dense, rng), ReLU(), Dense(cfg.dense, 1, rng)]
    return Network(cfg, Sequential(layers))


def build(cfg: NetworkConfig) -> Network:
    """Fresh network with seeded He-uniform weights and zero biases."""
    return build_mlp(cfg) if isinstance(cfg, MLPConfig) else build_cnn(cfg)


# --------------------------------------------------------------------------
# Forward / loss
# --------------------------------------------------------------------------

def _head(network: Network, x: np.ndarray) -> np.ndarray:
    out = network.layers.forward(x)[:, 0]
    if not np.all(np.isfinite(out)):
        raise NonFiniteActivationError(f"{network.kind} forward pass produced non-finite outputs")
    return out


def mlp_forward(network: Network, x: np.ndarray) -> np.ndarray:
    """
    Forward pass of an MLP.

    Args:
        network (Network): MLP network
        x: (batch, input_dim) array

    Returns:
        np.ndarray: (batch,) outputs

    Raises:
        ShapeMismatchError: On a wrong input width
        NonFiniteActivationError: If any output is NaN or infinite
    """
    x = np.asarray(x, dtype=np.float64)
    if network.kind != "mlp":
        raise ValidationError(f"mlp_forward called on a {network.kind} network")
    if x.ndim != 2 or x.shape[1] != network.config.input_dim:
        raise ShapeMismatchError(f"MLP expects (batch, {network.config.input_dim}), got {x.shape}")
    return _head(network, x)


def cnn_forward(network: Network, images: np.ndarray) -> np.ndarray:
    """
    Forward pass of a CNN on (batch, H, W) or (batch, H, W, 1) images.

    Raises:
        ShapeMismatchError: If the image size differs from the configured one
    """
    images = np.asarray(images, dtype=np.float64)
    if network.kind != "cnn":
        raise ValidationError(f"cnn_forward called on a {network.kind} network")
    if images.ndim == 3:
        images = images[..., np.newaxis]
    if images.ndim != 4 or images.shape[1:] != (*network.config.image_shape, 1):
        raise ShapeMismatchError(f"CNN expects (batch, {network.config.image_shape[0]}, "
                                 f"{network.config.image_shape[1]}, 1), got {images.shape}")
    return _head(network, images)


def forward(network: Network, x: np.ndarray) -> np.ndarray:
    return mlp_forward(network, x) if network.kind == "mlp" else cnn_forward(network, x)


def _as_network_input(network: Network, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if network.kind == "cnn" and x.ndim == 3:
        x = x[..., np.newaxis]
    return x


def regularization_terms(network: Network) -> Tuple[float, float]:
    """(l1 * sum|W|, l2 * sum W^2) over the regularized layer's weights."""
    layer = network.regularized_dense()
    if layer is None:
        return 0.0, 0.0
    w = layer.weight.data
    return network.config.l1 * float(np.sum(np.abs(w))), network.config.l2 * float(np.sum(w * w))


def loss_and_grads(network: Network, x: np.ndarray, y: np.ndarray) -> Tuple[float, List[np.ndarray]]:
    """
    Regularized MSE and its gradient for every parameter.

    loss = mean((f(x) - y)^2) + l1 * ||W_reg||_1 + l2 * ||W_reg||_2^2

    Returns:
        tuple: (loss, gradients in network.parameters() order)

    Raises:
        NonFiniteLossError: If the loss is NaN or infinite
    """
    x = _as_network_input(network, x)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.shape[0] < 1 or x.shape[0] != y.shape[0]:
        raise ValidationError(f"batch of {x.shape[0]} inputs and {y.shape[0]} targets")

    network.layers.zero_grad()
    residual = forward(network, x) - y
    l1_term, l2_term = regularization_terms(network)
    loss = float(np.mean(residual * residual)) + l1_term + l2_term
    if not np.isfinite(loss):
        raise NonFiniteLossError(f"non-finite loss {loss}")

    network.layers.backward((2.0 / y.size) * residual[:, np.newaxis])
    layer = network.regularized_dense()
    if layer is not None:
        w = layer.weight.data
        layer.weight.grad += network.config.l1 * np.sign(w) + 2.0 * network.config.l2 * w
    return loss, [p.grad.copy() for p in network.parameters()]


def input_gradient(network: Network, x: np.ndarray) -> np.ndarray:
    """d output / d input for every row of x (rows are independent)."""
    x = _as_network_input(network, x)
    network.layers.zero_grad()
    forward(network, x)
    grad = network.layers.backward(np.ones((x.shape[0], 1)))
    network.layers.zero_grad()
    return grad


# --------------------------------------------------------------------------
# Adam
# --------------------------------------------------------------------------

@dataclass
class AdamState:
    lr0: float = NN_LEARNING_RATE
    decay: float = NN_LR_DECAY
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: List[np.ndarray] = field(default_factory=list, repr=False)
    v: List[np.ndarray] = field(default_factory=list, repr=False)

    def learning_rate(self, epoch: int) -> float:
        return self.lr0 * self.decay ** epoch


def adam_step(state: AdamState, params: Sequence[np.ndarray], grads: Sequence[np.ndarray],
              epoch: int = 0) -> Sequence[np.ndarray]:
    """
    One bias-corrected Adam update, applied in place.

    Entries whose gradient is exactly zero keep their parameter value and
    moment estimates; the step counter still advances.

    Args:
        state (AdamState): Optimizer state, moment buffers created on first use
        params: Parameter arrays (modified in place)
        grads: Gradients, same shapes as params
        epoch (int): Current epoch, sets lr = lr0 * decay ** epoch

    Returns:
        The updated params
    """
    if len(params) != len(grads):
        raise ShapeMismatchError(f"{len(params)} parameters but {len(grads)} gradients")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeMismatchError(f"parameter {p.shape}, gradient {g.shape}, moment {m.shape}")

    state.t += 1
    lr = state.learning_rate(epoch)
    correction1 = 1.0 - state.beta1 ** state.t
    correction2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        active = g != 0.0
        if not active.any():
            continue
        ga = g[active]
        m[active] = state.beta1 * m[active] + (1.0 - state.beta1) * ga
        v[active] = state.beta2 * v[active] + (1.0 - state.beta2) * ga * ga
        p[active] -= lr * (m[active] / correction1) / (np.sqrt(v[active] / correction2) + state.eps)
    return params


# --------------------------------------------------------------------------
# Regressor wrapper
# --------------------------------------------------------------------------

def network_inputs(cfg: NetworkConfig, rows: np.ndarray, sample_ids: Optional[Sequence[str]] = None) -> np.ndarray:
    """Preprocessed spectra -> unscaled network inputs (spectrograms for CNN spectrogram mode)."""
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if rows.shape[1] != cfg.n_inputs:
        raise WidthMismatchError(f"model expects spectra of {cfg.n_inputs} values, got {rows.shape[1]}")
    if isinstance(cfg, MLPConfig):
        return rows
    if cfg.input_mode == "spectrogram":
        return render_batch(rows, sample_ids)[..., np.newaxis]
    return rows.reshape(rows.shape[0], 1, rows.shape[1], 1)


@dataclass
class NeuralRegressor:
    network: Network
    x_mean: np.ndarray
    x_scale: float
    y_mean: float
    y_scale: float

    @property
    def kind(self) -> str:
        return self.network.kind

    @property
    def config(self) -> NetworkConfig:
        return self.network.config

    def standardize(self, raw_inputs: np.ndarray) -> np.ndarray:
        return (raw_inputs - self.x_mean) / self.x_scale

    def predict(self, rows: np.ndarray, batch_size: int = 256) -> np.ndarray:
        """g/100g predictions for preprocessed spectra rows."""
        rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        out = np.empty(rows.shape[0])
        for start in range(0, rows.shape[0], batch_size):
            chunk = rows[start:start + batch_size]
            out[start:start + batch_size] = forward(self.network, self.standardize(network_inputs(self.config, chunk)))
        return out * self.y_scale + self.y_mean

    def input_saliency(self, row: np.ndarray) -> np.ndarray:
        """|d prediction / d raw network input| for a single preprocessed spectrum."""
        raw = network_inputs(self.config, row)
        grad = input_gradient(self.network, self.standardize(raw))[0]
        return np.abs(grad) * (self.y_scale / self.x_scale)

    def to_arrays(self) -> Dict[str, np.ndarray]:
        arrays = {f"param.{i:03d}": p.data for i, p in enumerate(self.network.parameters())}
        arrays["x_mean"] = self.x_mean
        arrays["x_scale"] = np.array([self.x_scale])
        arrays["y_mean"] = np.array([self.y_mean])
        arrays["y_scale"] = np.array([self.y_scale])
        return arrays

    @classmethod
    def from_arrays(cls, cfg: NetworkConfig, arrays: Dict[str, np.ndarray]) -> "NeuralRegressor":
        network = build(cfg)
        names = sorted(name for name in arrays if name.startswith("param."))
        network.layers.set_state([arrays[name] for name in names])
        x_mean = arrays["x_mean"]
        expected = (cfg.input_dim,) if isinstance(cfg, MLPConfig) else (*cfg.image_shape, 1)
        return cls(network, x_mean.reshape(expected), float(arrays["x_scale"].reshape(-1)[0]),
                   float(arrays["y_mean"].reshape(-1)[0]), float(arrays["y_scale"].reshape(-1)[0]))


def config_to_arrays(cfg: NetworkConfig) -> Dict[str, np.ndarray]:
    """Hyperparameters as named f64 arrays for the model container."""
    common = {
        "l1": np.array([cfg.l1]),
        "l2": np.array([cfg.l2]),
        "regularized_layer": np.array([float(cfg.regularized_layer)]),
        "seed": np.array([float(cfg.seed)]),
    }
    if isinstance(cfg, MLPConfig):
        return {"input_dim": np.array([float(cfg.input_dim)]),
                "hidden": np.array(cfg.hidden, dtype=np.float64), **common}
    return {
        "conv_channels": np.array(cfg.conv_channels, dtype=np.float64),
        "dense": np.array([float(cfg.dense)]),
        "input_mode": np.array([float(INPUT_MODES.index(cfg.input_mode))]),
        "n_points": np.array([float(cfg.n_points)]),
        "image_shape": np.array(cfg.image_shape, dtype=np.float64),
        "kernel": np.array(cfg.kernel, dtype=np.float64),
        "pool": np.array(cfg.pool, dtype=np.float64),
        "spectrogram_recipe": np.array([float(RECIPE_VERSION_CODE)]),
        **common,
    }


def config_from_arrays(kind: str, meta: Dict[str, np.ndarray]) -> NetworkConfig:
    def scalar(name: str) -> float:
        return float(meta[name].reshape(-1)[0])

    def ints(name: str) -> Tuple[int, ...]:
        return tuple(int(v) for v in meta[name].reshape(-1))

    if kind == "mlp":
        return MLPConfig(int(scalar("input_dim")), ints("hidden"), scalar("l1"), scalar("l2"),
                         int(scalar("regularized_layer")), int(scalar("seed")))
    recipe = int(scalar("spectrogram_recipe"))
    if recipe != RECIPE_VERSION_CODE:
        raise ValidationError(f"unknown spectrogram recipe version {recipe}")
    return CNNConfig(ints("conv_channels"), int(scalar("dense")), INPUT_MODES[int(scalar("input_mode"))],
                     int(scalar("n_points")), ints("image_shape"), ints("kernel"), ints("pool"),
                     scalar("l1"), scalar("l2"), int(scalar("regularized_layer")), int(scalar("seed")))


# --------------------------------------------------------------------------
# Training
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    learning_rate: float
    train_loss: float
    train_rmse: float
    val_rmse: float

    def to_line(self) -> str:
        return (f"epoch={self.epoch} lr={format_number(self.learning_rate)} "
                f"train_loss={format_number(self.train_loss)} train_rmse={format_number(self.train_rmse)} "
                f"val_rmse={format_number(self.val_rmse)}")


@dataclass
class TrainResult:
    model: NeuralRegressor
    log: List[EpochRecord]
    best_epoch: int
    train_indices: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    val_indices: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def log_text(self) -> str:
        return "".join(record.to_line() + "\n" for record in self.log)


class _Inputs:
    """Raw network inputs for a fixed set of rows, built once when they fit in memory."""

    def __init__(self, cfg: NetworkConfig, rows: np.ndarray):
        self.cfg = cfg
        self.rows = rows
        per_row = cfg.n_inputs if isinstance(cfg, MLPConfig) else cfg.image_shape[0] * cfg.image_shape[1]
        self.cached = network_inputs(cfg, rows) if rows.shape[0] * per_row <= _CACHE_LIMIT else None

    def take(self, indices: np.ndarray) -> np.ndarray:
        if self.cached is not None:
            return self.cached[indices]
        return network_inputs(self.cfg, self.rows[indices])

    def statistics(self, batch_size: int) -> Tuple[np.ndarray, float]:
        """Per-feature mean and one global scale over all rows."""
        n = self.rows.shape[0]
        total = None
        for start in range(0, n, batch_size):
            block = self.take(np.arange(start, min(n, start + batch_size))).sum(axis=0)
            total = block if total is None else total + block
        mean = total / n
        squares = 0.0
        count = 0
        for start in range(0, n, batch_size):
            block = self.take(np.arange(start, min(n, start + batch_size))) - mean
            squares += float(np.sum(block * block))
            count += block.size
        scale = float(np.sqrt(squares / count))
        return mean, scale if scale > 0 else 1.0


def fit_regressor(network: Network, rows: np.ndarray, y: np.ndarray,
                  val_rows: Optional[np.ndarray] = None, val_y: Optional[np.ndarray] = None,
                  learning_rate: float = NN_LEARNING_RATE, lr_decay: float = NN_LR_DECAY,
                  batch_size: int = NN_BATCH_SIZE, epochs: int = NN_EPOCHS,
                  seed: int = DEFAULT_SEED) -> TrainResult:
    """
    Train a network on preprocessed spectra with Adam and keep the best epoch.

    Without validation rows the snapshot is chosen on the training RMSE.

    Args:
        network (Network): Freshly built network (trained in place)
        rows: (n, n_points) preprocessed training spectra
        y: n targets in g/100g
        val_rows, val_y: Optional validation set
        learning_rate (float): Initial Adam learning rate
        lr_decay (float): Multiplicative decay per epoch
        batch_size (int): Mini-batch size
        epochs (int): Number of passes over the training rows
        seed (int): Seed of the shuffling stream

    Returns:
        TrainResult with the best-snapshot model and the per-epoch log

    Raises:
        DivergedTrainingError: If the loss or activations become non-finite
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if rows.shape[0] != y.shape[0] or rows.shape[0] < 1:
        raise ValidationError(f"{rows.shape[0]} training rows and {y.shape[0]} targets")
    has_val = val_rows is not None and val_y is not None and len(val_y) > 0
    if epochs < 1 or batch_size < 1 or not learning_rate > 0:
        raise InvalidParamsError("epochs, batch_size and learning_rate must be positive")

    inputs = _Inputs(network.config, rows)
    x_mean, x_scale = inputs.statistics(batch_size)
    y_mean = float(y.mean())
    y_scale = float(y.std()) or 1.0
    model = NeuralRegressor(network, x_mean, x_scale, y_mean, y_scale)
    y_std = (y - y_mean) / y_scale

    params = network.parameters()
    state = AdamState(lr0=learning_rate, decay=lr_decay)
    shuffle_rng = np.random.default_rng([seed, 1])
    n = rows.shape[0]
    log: List[EpochRecord] = []
    best_rmse = np.inf
    best_epoch = 0
    best_state = network.layers.get_state()

    logger.info(f"Training {network.kind} ({network.n_parameters()} parameters) on {n} samples for {epochs} epochs")
    for epoch in range(epochs):
        order = shuffle_rng.permutation(n)
        weighted_loss = 0.0
        try:
            for start in range(0, n, batch_size):
                idx = order[start:start + batch_size]
                loss, grads = loss_and_grads(network, model.standardize(inputs.take(idx)), y_std[idx])
                adam_step(state, [p.data for p in params], grads, epoch)
                weighted_loss += loss * idx.size
            train_pred = model.predict(rows)
            val_pred = model.predict(val_rows) if has_val else None
        except NumericalDivergenceError as exc:
            raise DivergedTrainingError(f"{network.kind} training diverged at epoch {epoch}: {exc}") from exc

        train_rmse = rmse(y, train_pred)
        val_rmse = rmse(val_y, val_pred) if has_val else train_rmse
        record = EpochRecord(epoch, state.learning_rate(epoch), weighted_loss / n, train_rmse, val_rmse)
        log.append(record)
        logger.debug(record.to_line())
        if val_rmse < best_rmse:
            best_rmse, best_epoch = val_rmse, epoch
            best_state = network.layers.get_state()

    network.layers.set_state(best_state)
    logger.info(f"Best {network.kind} epoch {best_epoch}: validation RMSE {best_rmse:.4f}")
    return TrainResult(model, log, best_epoch)


def config_for(kind: str, params: Dict, n_points: int, seed: int) -> NetworkConfig:
    """Network config from RunConfig hyperparameters."""
    if kind == "mlp":
        return MLPConfig(input_dim=n_points, hidden=tuple(params["hidden"]),
                         l1=float(params["l1"]), l2=float(params["l2"]), seed=seed)
    if kind == "cnn":
        return CNNConfig(conv_channels=tuple(params["conv_channels"]), dense=int(params["dense"]),
                         input_mode=str(params["input_mode"]), n_points=n_points, seed=seed)
    raise InvalidParamsError(f"not a neural model kind: {kind!r}")


def train(model_kind: str, dataset: SpectralDataset, config: Optional[RunConfig] = None) -> TrainResult:
    """
    Train an MLP or CNN on a preprocessed dataset with the run's seeded split.

    Args:
        model_kind (str): "mlp" or "cnn"
        dataset (SpectralDataset): SG-preprocessed spectra with labels
        config (RunConfig): Seed, split and hyperparameters

    Returns:
        TrainResult (deterministic for a given seed and dataset)
    """
    config = config or RunConfig()
    params = config.params_for(model_kind)
    cfg = config_for(model_kind, params, dataset.grid.n_points, config.seed)
    train_idx, val_idx = split_indices(len(dataset), config.train_fraction, config.seed, config.shuffle)

    result = fit_regressor(
        build(cfg),
        dataset.matrix[train_idx], dataset.labels[train_idx],
        dataset.matrix[val_idx], dataset.labels[val_idx],
        learning_rate=float(params["learning_rate"]),
        lr_decay=float(params["lr_decay"]),
        batch_size=int(params["batch_size"]),
        epochs=int(params["epochs"]),
        seed=config.seed,
    )
    result.train_indices, result.val_indices = train_idx, val_idx
    return result
