"""
Spectral pretreatment for carbospec.
====================================

Min-max normalization and Savitzky-Golay smoothing / differentiation,
composed into a serializable PreprocessPipeline:

    Absorbance -> MinMaxNormalize -> SavitzkyGolay

Savitzky-Golay coefficients are least-squares solutions of the window's
Vandermonde system, cached per (window, polyorder, deriv, position). Edge
points use the first/last full window evaluated off-centre, so the output
keeps the input length. Derivatives are divided by step_nm ** deriv.

Usage:
    from src.preprocess import standard_pipeline, apply_pipeline

    processed = apply_pipeline(dataset, standard_pipeline(deriv=2))
"""

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from .exceptions import ConstantSpectrumError, InvalidParamsError, ValidationError
from .spectra import (
    ABSORBANCE,
    REFLECTANCE_PCT,
    KindMismatchError,
    SpectralDataset,
    Spectrum,
    SpectrumKind,
    _check_reflectance,
    derivative_kind,
    reflectance_to_absorbance,
)
from .utils import ordered_map

PIPELINE_FORMAT_VERSION = 1


class WindowTooLargeError(ValidationError):
    """Spectrum shorter than the filter window."""
    pass


class InvalidPipelineError(ValidationError):
    """Pipeline steps are out of order or do not fit the data kind."""
    pass


@dataclass(frozen=True)
class SGParams:
    window: int
    polyorder: int
    deriv_order: int = 0

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise InvalidParamsError(f"window must be odd and >= 3, got {self.window}")
        if not 0 <= self.polyorder < self.window:
            raise InvalidParamsError(f"polyorder must satisfy 0 <= polyorder < window, got {self.polyorder}")
        if not 0 <= self.deriv_order <= self.polyorder:
            raise InvalidParamsError(f"deriv_order must satisfy 0 <= deriv <= polyorder, got {self.deriv_order}")


SG1 = SGParams(window=11, polyorder=2, deriv_order=1)
SG2 = SGParams(window=13, polyorder=2, deriv_order=2)


# --------------------------------------------------------------------------
# Min-max normalization
# --------------------------------------------------------------------------

def _minmax_rows(matrix: np.ndarray, sample_ids: Sequence[str]) -> np.ndarray:
    lo = matrix.min(axis=1, keepdims=True)
    hi = matrix.max(axis=1, keepdims=True)
    span = hi - lo
    flat = np.flatnonzero(span[:, 0] == 0)
    if flat.size:
        raise ConstantSpectrumError(f"sample {sample_ids[flat[0]]}: constant spectrum cannot be min-max normalized")
    return (matrix - lo) / span


def minmax_normalize(spectrum: Spectrum) -> Spectrum:
    """
    Rescale one spectrum to [0, 1]: (x - min) / (max - min).

    Raises:
        ConstantSpectrumError: If max == min
    """
    out = _minmax_rows(spectrum.values[np.newaxis, :], [spectrum.sample_id])[0]
    return Spectrum(out, spectrum.kind, spectrum.sample_id, spectrum.grid)


# --------------------------------------------------------------------------
# Savitzky-Golay
# --------------------------------------------------------------------------

@lru_cache(maxsize=256)
def _sg_weights(window: int, polyorder: int, deriv: int, pos: int) -> Tuple[float, ...]:
    """Dot-product weights giving d^deriv/du^deriv at offset `pos` in unit-spaced samples."""
    offsets = np.arange(window, dtype=np.float64) - pos
    vander = offsets[:, np.newaxis] ** np.arange(polyorder + 1, dtype=np.float64)
    # rows of pinv map samples to polynomial coefficients
    projector = np.linalg.pinv(vander)
    weights = math.factorial(deriv) * projector[deriv]
    return tuple(float(w) for w in weights)


def savgol_coefficients(params: SGParams, pos: Optional[int] = None) -> np.ndarray:
    """
    Filter weights (dot order) for unit sample spacing.

    Args:
        params (SGParams): Window, polynomial order and derivative order
        pos (int): Evaluation position inside the window; default is the centre

    Returns:
        np.ndarray: `params.window` weights
    """
    if pos is None:
        pos = params.window // 2
    if not 0 <= pos < params.window:
        raise InvalidParamsError(f"position {pos} outside window of {params.window}")
    return np.array(_sg_weights(params.window, params.polyorder, params.deriv_order, pos))


def _savgol_rows(matrix: np.ndarray, params: SGParams, step_nm: float) -> np.ndarray:
    n_samples, length = matrix.shape
    window = params.window
    if length < window:
        raise WindowTooLargeError(f"spectrum length {length} shorter than window {window}")
    half = window // 2
    scale = 1.0 / step_nm ** params.deriv_order
    out = np.empty_like(matrix)

    centre = savgol_coefficients(params)
    interior = np.zeros((n_samples, length - window + 1))
    # fixed accumulation order keeps rows bit-identical regardless of batch size
    for j in range(window):
        interior += centre[j] * matrix[:, j:j + length - window + 1]
    out[:, half:length - half] = interior * scale

    head = matrix[:, :window]
    tail = matrix[:, length - window:]
    for i in range(half):
        w_head = savgol_coefficients(params, pos=i)
        w_tail = savgol_coefficients(params, pos=window - half + i)
        acc_head = np.zeros(n_samples)
        acc_tail = np.zeros(n_samples)
        for j in range(window):
            acc_head += w_head[j] * head[:, j]
            acc_tail += w_tail[j] * tail[:, j]
        out[:, i] = acc_head * scale
        out[:, length - half + i] = acc_tail * scale
    return out


def savitzky_golay(spectrum: Spectrum, params: SGParams) -> Spectrum:
    """
    Savitzky-Golay smoothing or derivative of one spectrum, in units per nm^d.

    Args:
        spectrum (Spectrum): Input spectrum
        params (SGParams): Filter parameters

    Returns:
        Spectrum: Kind Derivative(params.deriv_order)

    Raises:
        WindowTooLargeError: If the spectrum is shorter than the window
    """
    out = _savgol_rows(spectrum.values[np.newaxis, :], params, spectrum.grid.step_nm)[0]
    return Spectrum(out, derivative_kind(params.deriv_order), spectrum.sample_id, spectrum.grid)


# --------------------------------------------------------------------------
# Pipeline
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class AbsorbanceStep:
    op: str = "absorbance"

    def to_dict(self) -> Dict[str, Any]:
        return {"op": self.op}


@dataclass(frozen=True)
class MinMaxNormalizeStep:
    op: str = "minmax"

    def to_dict(self) -> Dict[str, Any]:
        return {"op": self.op}


@dataclass(frozen=True)
class SavitzkyGolayStep:
    params: SGParams
    op: str = "savgol"

    def to_dict(self) -> Dict[str, Any]:
        return {"op": self.op, "window": self.params.window,
                "polyorder": self.params.polyorder, "deriv": self.params.deriv_order}


Step = Union[AbsorbanceStep, MinMaxNormalizeStep, SavitzkyGolayStep]

# Rank enforces Absorbance -> MinMax -> SG
_STEP_RANK = {"absorbance": 0, "minmax": 1, "savgol": 2}


def _step_from_dict(data: Dict[str, Any]) -> Step:
    op = data.get("op")
    if op == "absorbance":
        return AbsorbanceStep()
    if op == "minmax":
        return MinMaxNormalizeStep()
    if op == "savgol":
        return SavitzkyGolayStep(SGParams(int(data["window"]), int(data["polyorder"]), int(data["deriv"])))
    raise InvalidPipelineError(f"unknown pipeline step: {data!r}")


@dataclass(frozen=True)
class PreprocessPipeline:
    """Ordered, serializable list of pretreatment steps."""

    steps: Tuple[Step, ...] = ()

    def __post_init__(self):
        steps = tuple(self.steps)
        object.__setattr__(self, "steps", steps)
        ranks = [_STEP_RANK[step.op] for step in steps]
        if ranks.count(0) > 1 or (0 in ranks and ranks[0] != 0):
            raise InvalidPipelineError("Absorbance may appear at most once and only as the first step")
        if any(b < a for a, b in zip(ranks, ranks[1:])):
            raise InvalidPipelineError("steps must follow Absorbance -> MinMaxNormalize -> SavitzkyGolay")

    def to_json(self) -> str:
        return json.dumps({"version": PIPELINE_FORMAT_VERSION,
                           "steps": [step.to_dict() for step in self.steps]}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PreprocessPipeline":
        data = json.loads(text)
        if data.get("version") != PIPELINE_FORMAT_VERSION:
            raise InvalidPipelineError(f"unsupported pipeline version {data.get('version')!r}")
        return cls(tuple(_step_from_dict(step) for step in data.get("steps", [])))

    def output_kind(self, input_kind: SpectrumKind) -> SpectrumKind:
        kind = input_kind
        for step in self.steps:
            if isinstance(step, AbsorbanceStep):
                kind = ABSORBANCE
            elif isinstance(step, SavitzkyGolayStep):
                kind = derivative_kind(step.params.deriv_order)
        return kind

    def describe(self) -> str:
        parts = []
        for step in self.steps:
            if isinstance(step, SavitzkyGolayStep):
                p = step.params
                parts.append(f"SG(w={p.window},p={p.polyorder},d={p.deriv_order})")
            else:
                parts.append(step.op)
        return " -> ".join(parts) or "identity"


def standard_pipeline(deriv: int = 2, from_reflectance: bool = False) -> PreprocessPipeline:
    """
    The pretreatment chain used for every model: [Absorbance] -> MinMax -> SG-1/SG-2.

    Args:
        deriv (int): 1 for SG-1 (11, 2), 2 for SG-2 (13, 2)
        from_reflectance (bool): Prepend the absorbance transform
    """
    if deriv not in (1, 2):
        raise InvalidParamsError(f"derivative must be 1 or 2, got {deriv}")
    steps: List[Step] = [AbsorbanceStep()] if from_reflectance else []
    steps.append(MinMaxNormalizeStep())
    steps.append(SavitzkyGolayStep(SG1 if deriv == 1 else SG2))
    return PreprocessPipeline(tuple(steps))


def _apply_rows(matrix: np.ndarray, sample_ids: Sequence[str], kind: SpectrumKind,
                steps: Sequence[Step], step_nm: float) -> np.ndarray:
    for step in steps:
        if isinstance(step, AbsorbanceStep):
            if kind != REFLECTANCE_PCT:
                raise KindMismatchError(f"absorbance step expects reflectance_pct, got {kind}")
            for i, sid in enumerate(sample_ids):
                _check_reflectance(matrix[i], sid)
            matrix = reflectance_to_absorbance(matrix)
            kind = ABSORBANCE
        elif isinstance(step, MinMaxNormalizeStep):
            matrix = _minmax_rows(matrix, sample_ids)
        else:
            try:
                matrix = _savgol_rows(matrix, step.params, step_nm)
            except WindowTooLargeError as exc:
                raise WindowTooLargeError(f"samples {sample_ids[0]}..: {exc}") from exc
            kind = derivative_kind(step.params.deriv_order)
    return matrix


def apply_pipeline(dataset: SpectralDataset, pipeline: PreprocessPipeline, threads: int = 1) -> SpectralDataset:
    """
    Apply pipeline steps, in order, to every spectrum of a dataset.

    Rows are independent, so splitting the work across `threads` gives
    bit-identical output.

    Args:
        dataset (SpectralDataset): Input dataset
        pipeline (PreprocessPipeline): Steps to apply
        threads (int): Worker threads

    Returns:
        SpectralDataset: Dataset whose kind reflects the last step

    Raises:
        ValidationError subclasses naming the offending sample id
    """
    if not pipeline.steps:
        return dataset
    if len(dataset) == 0:
        return dataset.with_matrix(dataset.matrix, pipeline.output_kind(dataset.kind))

    n = len(dataset)
    chunk = max(1, math.ceil(n / max(1, threads)))
    bounds = [(start, min(n, start + chunk)) for start in range(0, n, chunk)]

    def run(bound: Tuple[int, int]) -> np.ndarray:
        lo, hi = bound
        return _apply_rows(dataset.matrix[lo:hi], dataset.sample_ids[lo:hi], dataset.kind,
                           pipeline.steps, dataset.grid.step_nm)

    parts = ordered_map(run, bounds, threads)
    out_kind = pipeline.output_kind(dataset.kind)
    logger.debug(f"Applied pipeline {pipeline.describe()} to {n} samples")
    return dataset.with_matrix(np.vstack(parts), out_kind)
