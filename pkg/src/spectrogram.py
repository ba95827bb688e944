"""
Spectrogram rendering for the CNN input.

A preprocessed spectrum is drawn as a 1-pixel line plot on a 244 x 488
canvas: the spectrum is linearly resampled to 488 columns, each value is
mapped to a row (row 0 = spectrum maximum, row 243 = minimum) and column c
is lit from its own row to the row of column c + 1, which keeps the line
connected. Pixels on the line are 1.0, everything else 0.0.

The recipe is versioned; the version is stored with every CNN model file.
"""

from typing import Union

import numpy as np

from .exceptions import ConstantSpectrumError, ValidationError
from .spectra import Spectrum

SPECTROGRAM_HEIGHT = 244
SPECTROGRAM_WIDTH = 488
RECIPE_VERSION = "line-raster-v1"
RECIPE_VERSION_CODE = 1


def column_positions(n_values: int, width: int = SPECTROGRAM_WIDTH) -> np.ndarray:
    """Fractional spectrum index sampled by each image column."""
    return np.linspace(0.0, n_values - 1.0, width)


def resample_columns(values: np.ndarray, width: int = SPECTROGRAM_WIDTH) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    return np.interp(column_positions(values.size, width), np.arange(values.size), values)


def value_rows(columns: np.ndarray, height: int = SPECTROGRAM_HEIGHT, sample_id: str = "?") -> np.ndarray:
    top, bottom = float(columns.max()), float(columns.min())
    if not top > bottom:
        raise ConstantSpectrumError(f"sample {sample_id}: spectrum is constant, cannot render a spectrogram")
    return np.rint((top - columns) / (top - bottom) * (height - 1)).astype(np.int64)


def render_spectrogram(spectrum: Union[Spectrum, np.ndarray],
                       height: int = SPECTROGRAM_HEIGHT,
                       width: int = SPECTROGRAM_WIDTH) -> np.ndarray:
    """
    Render one spectrum as a (height, width) image in {0.0, 1.0}.

    Args:
        spectrum: Spectrum (usually SG-2) or a raw 1-D value array
        height (int): Image rows
        width (int): Image columns

    Returns:
        np.ndarray: float64 image

    Raises:
        ConstantSpectrumError: If the resampled spectrum has max == min
    """
    if isinstance(spectrum, Spectrum):
        values, sample_id = spectrum.values, spectrum.sample_id
    else:
        values, sample_id = np.asarray(spectrum, dtype=np.float64), "?"
    if values.ndim != 1 or values.size < 2:
        raise ValidationError(f"sample {sample_id}: need a 1-D spectrum with at least 2 values")
    if not np.all(np.isfinite(values)):
        raise ValidationError(f"sample {sample_id}: spectrum contains non-finite values")

    rows = value_rows(resample_columns(values, width), height, sample_id)
    following = np.append(rows[1:], rows[-1])
    lo = np.minimum(rows, following)
    hi = np.maximum(rows, following)
    grid = np.arange(height)[:, np.newaxis]
    return ((grid >= lo) & (grid <= hi)).astype(np.float64)


def render_batch(matrix: np.ndarray, sample_ids=None) -> np.ndarray:
    """Stack of spectrograms, (n, height, width)."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    out = np.empty((matrix.shape[0], SPECTROGRAM_HEIGHT, SPECTROGRAM_WIDTH))
    for i, row in enumerate(matrix):
        try:
            out[i] = render_spectrogram(row)
        except ConstantSpectrumError as exc:
            name = sample_ids[i] if sample_ids is not None else f"row {i}"
            raise ConstantSpectrumError(f"sample {name}: spectrum is constant, cannot render a spectrogram") from exc
    return out


def columns_to_wavelengths(column_profile: np.ndarray, n_values: int) -> np.ndarray:
    """Map a per-column profile back onto the spectrum's sample positions by linear interpolation."""
    column_profile = np.asarray(column_profile, dtype=np.float64)
    return np.interp(np.arange(n_values), column_positions(n_values, column_profile.size), column_profile)
