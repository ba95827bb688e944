"""
Model container and the SpectralModel wrapper for carbospec.
============================================================

A SpectralModel binds a fitted estimator to the PreprocessPipeline it was
trained under, so predictions always start from raw spectra. Cubist and
LS-SVM models also carry the PLS projection that produces their latent
features.

Container layout (all integers little-endian):

    "CSPC" | u32 format_version | u8 model_kind
    | u32 len | pipeline JSON (UTF-8)
    | u32 array_count
    | per array: u32 len | name (UTF-8) | u8 dtype (0x01 = f64) | u8 rank
                 | u64 dims[rank] | f64 data[prod(dims)]
    | u32 CRC-32 of every preceding byte

Array names are namespaced: "est." estimator parameters, "pls." the PLS
projection, "meta." hyperparameters and recipe versions.
"""

import struct
import zlib
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from loguru import logger

from .config import RunConfig
from .exceptions import StorageError, ValidationError
from .linear_models import (
    CubistModel,
    LSSVMModel,
    PLSRModel,
    cubist_fit,
    cubist_predict,
    lssvm_fit,
    lssvm_predict,
    plsr_component_rmse,
    plsr_fit,
    plsr_predict,
    plsr_transform,
)
from .metrics import EvaluationReport, evaluate
from .networks import EpochRecord, NeuralRegressor, config_from_arrays, config_to_arrays
from .networks import train as train_network
from .preprocess import AbsorbanceStep, PreprocessPipeline, apply_pipeline, standard_pipeline
from .spectra import ABSORBANCE, REFLECTANCE_PCT, KindMismatchError, SpectralDataset, SpectrumKind
from .utils import atomic_write_bytes, split_indices

MAGIC = b"CSPC"
FORMAT_VERSION = 1
DTYPE_F64 = 0x01


class ContainerError(StorageError):
    """A model file is malformed."""
    pass


class CrcMismatchError(ContainerError):
    """The stored CRC-32 does not match the file content."""
    pass


class UnsupportedVersionError(ContainerError):
    """The container format version is not supported."""
    pass


class ModelKindMismatchError(ValidationError):
    """The model file holds a different model kind than requested."""
    pass


class ModelKind(IntEnum):
    PLSR = 1
    CUBIST = 2
    LSSVM = 3
    MLP = 4
    CNN = 5

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, text: str) -> "ModelKind":
        try:
            return cls[text.upper()]
        except KeyError as exc:
            raise ValidationError(f"unknown model kind {text!r}") from exc


Estimator = Union[PLSRModel, CubistModel, LSSVMModel, NeuralRegressor]


# --------------------------------------------------------------------------
# Binary container
# --------------------------------------------------------------------------

def encode_container(kind: ModelKind, pipeline_json: str, arrays: Dict[str, np.ndarray],
                     version: int = FORMAT_VERSION) -> bytes:
    """Serialize to the container layout; arrays are written sorted by name."""
    parts = [MAGIC, struct.pack("<IB", version, int(kind))]
    blob = pipeline_json.encode("utf-8")
    parts += [struct.pack("<I", len(blob)), blob, struct.pack("<I", len(arrays))]
    for name in sorted(arrays):
        values = np.asarray(arrays[name], dtype=np.float64)
        encoded = name.encode("utf-8")
        parts += [struct.pack("<I", len(encoded)), encoded,
                  struct.pack("<BB", DTYPE_F64, values.ndim),
                  struct.pack(f"<{values.ndim}Q", *values.shape),
                  values.astype("<f8").tobytes(order="C")]
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ContainerError(f"model file truncated at byte {self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_container(data: bytes) -> Tuple[ModelKind, str, Dict[str, np.ndarray]]:
    """
    Parse container bytes.

    Returns:
        tuple: (model kind, pipeline JSON, named arrays)

    Raises:
        ContainerError: Bad magic, truncation or malformed fields
        UnsupportedVersionError: If format_version != 1
        CrcMismatchError: If the trailing CRC does not verify
    """
    if len(data) < 4 + 4 + 1 + 4 + 4 + 4 or data[:4] != MAGIC:
        raise ContainerError("not a carbospec model file (bad magic)")
    version = struct.unpack_from("<I", data, 4)[0]
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"model format version {version} is not supported (expected {FORMAT_VERSION})")
    stored_crc = struct.unpack_from("<I", data, len(data) - 4)[0]
    if zlib.crc32(data[:-4]) & 0xFFFFFFFF != stored_crc:
        raise CrcMismatchError("model file CRC-32 mismatch; the file is corrupt")

    reader = _Reader(data[:-4])
    reader.take(8)
    (tag,) = reader.unpack("<B")
    try:
        kind = ModelKind(tag)
    except ValueError as exc:
        raise ContainerError(f"unknown model kind tag {tag}") from exc
    (blob_len,) = reader.unpack("<I")
    pipeline_json = reader.take(blob_len).decode("utf-8")

    arrays: Dict[str, np.ndarray] = {}
    (count,) = reader.unpack("<I")
    for _ in range(count):
        (name_len,) = reader.unpack("<I")
        name = reader.take(name_len).decode("utf-8")
        dtype, rank = reader.unpack("<BB")
        if dtype != DTYPE_F64:
            raise ContainerError(f"array {name!r}: unsupported dtype byte {dtype:#04x}")
        dims = reader.unpack(f"<{rank}Q") if rank else ()
        size = int(np.prod(dims)) if rank else 1
        values = np.frombuffer(reader.take(8 * size), dtype="<f8").astype(np.float64)
        arrays[name] = values.reshape(dims) if rank else values.reshape(())
    if reader.pos != len(reader.data):
        raise ContainerError(f"{len(reader.data) - reader.pos} unexpected trailing bytes")
    return kind, pipeline_json, arrays


# --------------------------------------------------------------------------
# SpectralModel
# --------------------------------------------------------------------------

@dataclass
class SpectralModel:
    """A fitted estimator together with its preprocessing pipeline."""

    kind: ModelKind
    pipeline: PreprocessPipeline
    estimator: Estimator
    projection: Optional[PLSRModel] = None

    @property
    def input_kind(self) -> SpectrumKind:
        steps = self.pipeline.steps
        return REFLECTANCE_PCT if steps and isinstance(steps[0], AbsorbanceStep) else ABSORBANCE

    def preprocess(self, dataset: SpectralDataset, threads: int = 1) -> SpectralDataset:
        if dataset.kind != self.input_kind:
            raise KindMismatchError(f"model expects {self.input_kind} spectra, got {dataset.kind}")
        return apply_pipeline(dataset, self.pipeline, threads)

    def predict_preprocessed(self, rows: np.ndarray) -> np.ndarray:
        """Predictions for spectra that already went through the pipeline."""
        if self.kind == ModelKind.PLSR:
            return plsr_predict(self.estimator, rows)
        if self.kind == ModelKind.CUBIST:
            return cubist_predict(self.estimator, plsr_transform(self.projection, rows))
        if self.kind == ModelKind.LSSVM:
            return lssvm_predict(self.estimator, plsr_transform(self.projection, rows))
        return self.estimator.predict(rows)

    def predict(self, dataset: SpectralDataset, threads: int = 1) -> np.ndarray:
        """g/100g predictions for raw spectra, one per sample."""
        return self.predict_preprocessed(self.preprocess(dataset, threads).matrix)

    def spectral_coefficients(self) -> np.ndarray:
        """Effective per-wavelength coefficients of a linear model."""
        if self.kind == ModelKind.PLSR:
            return self.estimator.spectral_coefficients()
        if self.kind in (ModelKind.CUBIST, ModelKind.LSSVM):
            proj = self.projection
            rotations = proj.rotations if proj.x_scale is None else proj.rotations / proj.x_scale[:, np.newaxis]
            if self.kind == ModelKind.LSSVM:
                latent = self.estimator.primal_weights / self.estimator.scaler.data_range
            else:
                weights = np.array([rule.n_samples for rule in self.estimator.rules], dtype=np.float64)
                latent = np.average([rule.coefficients for rule in self.estimator.rules], axis=0, weights=weights)
            return rotations @ latent
        raise ValidationError(f"{self.kind.label} is not a linear model")

    def to_arrays(self) -> Dict[str, np.ndarray]:
        arrays: Dict[str, np.ndarray] = {}
        if isinstance(self.estimator, NeuralRegressor):
            arrays.update({f"meta.{k}": v for k, v in config_to_arrays(self.estimator.config).items()})
        arrays.update({f"est.{k}": v for k, v in self.estimator.to_arrays().items()})
        if self.projection is not None:
            arrays.update({f"pls.{k}": v for k, v in self.projection.to_arrays().items()})
        return arrays

    @classmethod
    def from_arrays(cls, kind: ModelKind, pipeline: PreprocessPipeline,
                    arrays: Dict[str, np.ndarray]) -> "SpectralModel":
        def namespace(prefix: str) -> Dict[str, np.ndarray]:
            return {k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)}

        est, pls, meta = namespace("est."), namespace("pls."), namespace("meta.")
        try:
            projection = PLSRModel.from_arrays(pls) if pls else None
            if kind == ModelKind.PLSR:
                estimator: Estimator = PLSRModel.from_arrays(est)
            elif kind == ModelKind.CUBIST:
                estimator = CubistModel.from_arrays(est)
            elif kind == ModelKind.LSSVM:
                estimator = LSSVMModel.from_arrays(est)
            else:
                estimator = NeuralRegressor.from_arrays(config_from_arrays(kind.label, meta), est)
        except KeyError as exc:
            raise ContainerError(f"model file lacks array {exc}") from exc
        if kind in (ModelKind.CUBIST, ModelKind.LSSVM) and projection is None:
            raise ContainerError(f"{kind.label} model file lacks its PLS projection")
        return cls(kind, pipeline, estimator, projection)


def save_model(model: SpectralModel, path: Union[str, Path]) -> None:
    """Write a model container atomically (temporary file, then rename)."""
    data = encode_container(model.kind, model.pipeline.to_json(), model.to_arrays())
    atomic_write_bytes(Path(path), data)
    logger.info(f"Saved {model.kind.label} model to {path} ({len(data)} bytes)")


def load_model(path: Union[str, Path], expected_kind: Optional[ModelKind] = None) -> SpectralModel:
    """
    Read a model container.

    Raises:
        CrcMismatchError, UnsupportedVersionError, ContainerError
        ModelKindMismatchError: If expected_kind is given and differs
    """
    data = Path(path).read_bytes()
    kind, pipeline_json, arrays = decode_container(data)
    if expected_kind is not None and kind != expected_kind:
        raise ModelKindMismatchError(f"{path} holds a {kind.label} model, expected {expected_kind.label}")
    return SpectralModel.from_arrays(kind, PreprocessPipeline.from_json(pipeline_json), arrays)


# --------------------------------------------------------------------------
# Fitting
# --------------------------------------------------------------------------

@dataclass
class FitOutcome:
    model: SpectralModel
    train_indices: np.ndarray
    val_indices: np.ndarray
    validation: Optional[EvaluationReport] = None
    epoch_log: List[EpochRecord] = field(default_factory=list)
    component_rmse: List[float] = field(default_factory=list)

    def log_text(self) -> str:
        lines = [record.to_line() for record in self.epoch_log]
        lines += [f"components={k} val_rmse={value:.17g}" for k, value in enumerate(self.component_rmse, start=1)]
        return "".join(line + "\n" for line in lines)


def _latent_components(requested: int, n_train: int, n_features: int) -> int:
    k = min(int(requested), n_train - 1, n_features)
    if k < 1:
        raise ValidationError(f"too few training samples ({n_train}) for a PLS projection")
    if k < requested:
        logger.warning(f"Using {k} PLS components instead of {requested} (limited by the training data)")
    return k


def fit_model(kind: ModelKind, dataset: SpectralDataset, config: Optional[RunConfig] = None,
              threads: int = 1) -> FitOutcome:
    """
    Preprocess, split and fit one model kind.

    Args:
        kind (ModelKind): Which regressor to train
        dataset (SpectralDataset): Raw absorbance (or percent reflectance) spectra
        config (RunConfig): Seed, split, derivative order and hyperparameters
        threads (int): Worker threads for preprocessing

    Returns:
        FitOutcome with the model, split indices and validation report
    """
    config = config or RunConfig()
    params = config.params_for(kind.label)
    pipeline = standard_pipeline(config.derivative, from_reflectance=dataset.kind == REFLECTANCE_PCT)
    processed = apply_pipeline(dataset, pipeline, threads)
    train_idx, val_idx = split_indices(len(processed), config.train_fraction, config.seed, config.shuffle)
    X_train, y_train = processed.matrix[train_idx], processed.labels[train_idx]
    X_val, y_val = processed.matrix[val_idx], processed.labels[val_idx]

    projection: Optional[PLSRModel] = None
    epoch_log: List[EpochRecord] = []
    component_rmse: List[float] = []
    if kind == ModelKind.PLSR:
        k = _latent_components(params["n_components"], X_train.shape[0], X_train.shape[1])
        estimator: Estimator = plsr_fit(X_train, y_train, k)
        if val_idx.size and estimator.n_components:
            component_rmse = plsr_component_rmse(estimator, X_val, y_val)
    elif kind in (ModelKind.CUBIST, ModelKind.LSSVM):
        k = _latent_components(params["n_components"], X_train.shape[0], X_train.shape[1])
        projection = plsr_fit(X_train, y_train, k)
        scores = plsr_transform(projection, X_train)
        if kind == ModelKind.CUBIST:
            estimator = cubist_fit(scores, y_train, int(params["min_leaf"]), bool(params["smoothing"]))
        else:
            estimator = lssvm_fit(scores, y_train, float(params["gamma"]))
    else:
        result = train_network(kind.label, processed, config)
        estimator = result.model
        epoch_log = result.log

    model = SpectralModel(kind, pipeline, estimator, projection)
    validation = None
    if val_idx.size >= 4 and np.ptp(y_val) > 0:
        validation = evaluate(y_val, model.predict_preprocessed(X_val))
        logger.info(f"{kind.label} validation: R2={validation.r2:.4f} RMSE={validation.rmse:.4f}")
    else:
        logger.warning(f"Validation set of {val_idx.size} samples is too small for a report")
    return FitOutcome(model, train_idx, val_idx, validation, epoch_log, component_rmse)
