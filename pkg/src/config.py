"""
Configuration module for carbospec.
Handles environment variables, model defaults and the per-run configuration.
"""

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

from dotenv import load_dotenv

from .exceptions import InvalidParamsError

# Load environment variables from .env file
load_dotenv()

# Runtime
CARBOSPEC_THREADS: int = int(os.getenv("CARBOSPEC_THREADS", "1"))
DEFAULT_SEED: int = int(os.getenv("CARBOSPEC_SEED", "42"))
DEFAULT_TRAIN_FRACTION: float = float(os.getenv("CARBOSPEC_TRAIN_FRACTION", "0.8"))

# Metrics
# 0 = population standard deviation (divide by n), 1 = sample form
STDEV_DDOF: int = int(os.getenv("CARBOSPEC_STDEV_DDOF", "0"))

# Classical models
PLS_COMPONENTS: int = int(os.getenv("CARBOSPEC_PLS_COMPONENTS", "29"))
LSSVM_GAMMA: float = float(os.getenv("CARBOSPEC_LSSVM_GAMMA", "1000.0"))
CUBIST_MIN_LEAF: int = int(os.getenv("CARBOSPEC_CUBIST_MIN_LEAF", "10"))

# Neural models
NN_LEARNING_RATE: float = float(os.getenv("CARBOSPEC_NN_LEARNING_RATE", "1e-3"))
NN_LR_DECAY: float = float(os.getenv("CARBOSPEC_NN_LR_DECAY", "0.97"))
NN_BATCH_SIZE: int = int(os.getenv("CARBOSPEC_NN_BATCH_SIZE", "64"))
NN_EPOCHS: int = int(os.getenv("CARBOSPEC_NN_EPOCHS", "100"))
NN_L1: float = float(os.getenv("CARBOSPEC_NN_L1", "1e-5"))
NN_L2: float = float(os.getenv("CARBOSPEC_NN_L2", "1e-5"))

# Logging Configuration
LOG_LEVEL: str = os.getenv("CARBOSPEC_LOG_LEVEL", "INFO")
LOG_FILE: Optional[str] = os.getenv("CARBOSPEC_LOG_FILE") or None
DEBUG: bool = os.getenv("CARBOSPEC_DEBUG", "False").lower() == "true"

MODEL_KINDS = ("plsr", "cubist", "lssvm", "mlp", "cnn")


def default_hyperparameters() -> Dict[str, Dict[str, Any]]:
    """
    Default hyperparameters per model kind.

    Returns:
        dict: kind -> parameter mapping
    """
    neural = {
        "learning_rate": NN_LEARNING_RATE,
        "lr_decay": NN_LR_DECAY,
        "batch_size": NN_BATCH_SIZE,
        "epochs": NN_EPOCHS,
    }
    return {
        "plsr": {"n_components": PLS_COMPONENTS},
        "cubist": {"n_components": PLS_COMPONENTS, "min_leaf": CUBIST_MIN_LEAF, "smoothing": False},
        "lssvm": {"n_components": PLS_COMPONENTS, "gamma": LSSVM_GAMMA},
        "mlp": {**neural, "hidden": [500, 200, 50], "l1": NN_L1, "l2": NN_L2},
        "cnn": {**neural, "conv_channels": [32, 64, 128], "dense": 50, "input_mode": "spectrogram"},
    }


@dataclass
class RunConfig:
    """Everything needed to reproduce one training run."""

    seed: int = DEFAULT_SEED
    train_fraction: float = DEFAULT_TRAIN_FRACTION
    shuffle: bool = True
    derivative: int = 2
    hyperparameters: Dict[str, Dict[str, Any]] = field(default_factory=default_hyperparameters)
    output_dir: str = "."
    verbosity: str = LOG_LEVEL

    def params_for(self, kind: str) -> Dict[str, Any]:
        """Hyperparameters for one model kind, falling back to defaults."""
        merged = dict(default_hyperparameters().get(kind, {}))
        merged.update(self.hyperparameters.get(kind, {}))
        return merged

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidParamsError(f"run configuration is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise InvalidParamsError("run configuration must be a JSON object")
        try:
            return cls(**data)
        except TypeError as exc:
            raise InvalidParamsError(f"unknown or missing run configuration fields: {exc}") from exc

    def save(self, path: Path) -> None:
        from .utils import atomic_write_text

        atomic_write_text(Path(path), self.to_json() + "\n")


def validate_run_config(config: RunConfig) -> tuple[bool, str]:
    """
    Validate a run configuration.

    Returns:
        tuple: (is_valid, error_message)
    """
    if not 0.0 < config.train_fraction < 1.0:
        return False, f"train fraction must be in (0, 1), got {config.train_fraction}"

    if config.derivative not in (1, 2):
        return False, f"derivative must be 1 or 2, got {config.derivative}"

    unknown = set(config.hyperparameters) - set(MODEL_KINDS)
    if unknown:
        return False, f"unknown model kinds in hyperparameters: {sorted(unknown)}"

    for kind in ("plsr", "cubist", "lssvm"):
        if int(config.params_for(kind)["n_components"]) < 1:
            return False, f"{kind}: n_components must be >= 1"

    if float(config.params_for("lssvm")["gamma"]) <= 0:
        return False, "lssvm: gamma must be > 0"

    for kind in ("mlp", "cnn"):
        params = config.params_for(kind)
        if int(params["epochs"]) < 1 or int(params["batch_size"]) < 1:
            return False, f"{kind}: epochs and batch_size must be >= 1"
        if float(params["learning_rate"]) <= 0:
            return False, f"{kind}: learning_rate must be > 0"

    return True, "Run configuration is valid"
