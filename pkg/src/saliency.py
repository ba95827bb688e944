"""
Gradient saliency maps for the neural regressors.

Saliency is |d prediction / d input| per wavelength. For spectrogram CNNs
the pixel gradients are summed over image rows and the 488 column values
are interpolated back onto the wavelength grid. Linear models have no
saliency map; their spectral coefficients are reported instead.
"""

from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from .exceptions import ValidationError
from .networks import MLPConfig, Network, NeuralRegressor, input_gradient
from .reference_data import SALIENCY_REFERENCE_PEAKS_NM
from .spectra import NIR_GRID, WavelengthGrid
from .spectrogram import columns_to_wavelengths


class UnsupportedModelError(ValidationError):
    """Saliency requested for a model without input gradients (PLSR, Cubist, LS-SVM)."""
    pass


PEAK_PERCENTILE = 90.0
MIN_PEAK_SEPARATION_NM = 10.0
TOP_PEAKS = 10


@dataclass(frozen=True)
class SaliencyPeak:
    wavelength_nm: float
    magnitude: float


@dataclass
class SaliencyMap:
    magnitudes: np.ndarray
    wavelengths: np.ndarray
    top_peaks: List[SaliencyPeak]

    def normalized(self) -> np.ndarray:
        top = float(self.magnitudes.max())
        return self.magnitudes / top if top > 0 else np.zeros_like(self.magnitudes)

    def peaks_text(self) -> str:
        lines = ["rank\twavelength_nm\tmagnitude"]
        for rank, peak in enumerate(self.top_peaks, start=1):
            lines.append(f"{rank}\t{peak.wavelength_nm:.1f}\t{peak.magnitude:.6g}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> Dict[str, Any]:
        return {"peaks": [{"wavelength_nm": p.wavelength_nm, "magnitude": p.magnitude} for p in self.top_peaks]}


def find_peaks(magnitudes: np.ndarray, wavelengths: np.ndarray,
               percentile: float = PEAK_PERCENTILE,
               min_separation_nm: float = MIN_PEAK_SEPARATION_NM,
               top: int = TOP_PEAKS) -> List[SaliencyPeak]:
    """
    Local maxima above the given percentile, strongest first.

    A candidate closer than `min_separation_nm` to a stronger kept peak is
    dropped. Equal magnitudes are ordered by wavelength.
    """
    m = np.asarray(magnitudes, dtype=np.float64)
    if m.size < 3:
        return []
    threshold = float(np.percentile(m, percentile))
    interior = np.arange(1, m.size - 1)
    is_peak = (m[interior] > m[interior - 1]) & (m[interior] >= m[interior + 1]) & (m[interior] > threshold)
    candidates = interior[is_peak]
    order = sorted(candidates, key=lambda i: (-m[i], wavelengths[i]))

    kept: List[int] = []
    for i in order:
        if all(abs(wavelengths[i] - wavelengths[j]) >= min_separation_nm for j in kept):
            kept.append(i)
        if len(kept) == top:
            break
    return [SaliencyPeak(float(wavelengths[i]), float(m[i])) for i in kept]


def network_saliency(network: Network, x: np.ndarray) -> np.ndarray:
    """|d output / d input| of a bare network for a batch of inputs."""
    return np.abs(input_gradient(network, x))


def _per_wavelength(model: NeuralRegressor, row: np.ndarray) -> np.ndarray:
    grad = model.input_saliency(row)
    cfg = model.config
    if isinstance(cfg, MLPConfig):
        return grad.reshape(-1)
    if cfg.input_mode == "spectrum":
        return grad.reshape(-1)
    return columns_to_wavelengths(grad[..., 0].sum(axis=0), cfg.n_points)


def saliency(model: Union[NeuralRegressor, Network, Any], rows: np.ndarray,
             grid: WavelengthGrid = NIR_GRID, top: int = TOP_PEAKS) -> SaliencyMap:
    """
    Saliency map of an MLP or CNN regressor.

    Args:
        model: Trained NeuralRegressor (or a bare MLP Network)
        rows: One preprocessed spectrum, or several whose maps are averaged
        grid (WavelengthGrid): Grid of the spectra
        top (int): Number of peaks to report

    Returns:
        SaliencyMap

    Raises:
        UnsupportedModelError: For PLSR, Cubist and LS-SVM models
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if isinstance(model, NeuralRegressor):
        magnitudes = np.mean([_per_wavelength(model, row) for row in rows], axis=0)
    elif isinstance(model, Network) and model.kind == "mlp":
        magnitudes = network_saliency(model, rows).mean(axis=0)
    else:
        raise UnsupportedModelError(
            f"saliency needs an MLP or CNN model, got {type(model).__name__}; use the coefficient report"
        )
    wavelengths = grid.wavelengths()
    if magnitudes.shape != wavelengths.shape:
        raise ValidationError(f"saliency has {magnitudes.size} values for a grid of {wavelengths.size}")
    return SaliencyMap(magnitudes, wavelengths, find_peaks(magnitudes, wavelengths, top=top))


def compare_with_reference(saliency_map: SaliencyMap,
                           reference_nm: Sequence[float] = SALIENCY_REFERENCE_PEAKS_NM,
                           tolerance_nm: float = MIN_PEAK_SEPARATION_NM) -> List[Dict[str, Any]]:
    """Nearest reported peak for each documented band and whether it lies within tolerance."""
    rows = []
    for ref in reference_nm:
        nearest: Optional[SaliencyPeak] = None
        if saliency_map.top_peaks:
            nearest = min(saliency_map.top_peaks, key=lambda p: abs(p.wavelength_nm - ref))
        gap = abs(nearest.wavelength_nm - ref) if nearest else float("inf")
        rows.append({"reference_nm": ref,
                     "nearest_peak_nm": nearest.wavelength_nm if nearest else None,
                     "gap_nm": gap,
                     "matched": gap <= tolerance_nm})
    return rows


@dataclass
class CoefficientReport:
    """Largest-magnitude spectral coefficients of a linear model."""

    model_kind: str
    entries: List[SaliencyPeak]

    def to_text(self) -> str:
        lines = [f"# coefficient magnitude report ({self.model_kind}); not a saliency map",
                 "rank\twavelength_nm\t|coefficient|"]
        for rank, entry in enumerate(self.entries, start=1):
            lines.append(f"{rank}\t{entry.wavelength_nm:.1f}\t{entry.magnitude:.6g}")
        return "\n".join(lines) + "\n"


def coefficient_report(model_kind: str, coefficients: np.ndarray,
                       grid: WavelengthGrid = NIR_GRID, top: int = TOP_PEAKS) -> CoefficientReport:
    magnitudes = np.abs(np.asarray(coefficients, dtype=np.float64).reshape(-1))
    wavelengths = grid.wavelengths()
    order = np.lexsort((wavelengths, -magnitudes))[:top]
    return CoefficientReport(model_kind, [SaliencyPeak(float(wavelengths[i]), float(magnitudes[i])) for i in order])
