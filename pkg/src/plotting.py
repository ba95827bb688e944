"""
Figure output for carbospec: SVG spectrum and saliency plots, PNG spectrograms.

SVG output is byte-reproducible: the hash salt is fixed, the date metadata
is dropped and text stays as <text> elements.
"""

import io
from pathlib import Path
from typing import Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from loguru import logger  # noqa: E402
from matplotlib.collections import LineCollection  # noqa: E402
from matplotlib.colors import LinearSegmentedColormap  # noqa: E402
from PIL import Image  # noqa: E402

from .reference_data import CARBONATE_BANDS, CarbonateBand  # noqa: E402
from .saliency import SaliencyMap  # noqa: E402
from .spectra import NIR_GRID, WavelengthGrid  # noqa: E402
from .utils import atomic_write_bytes  # noqa: E402

plt.rcParams["svg.hashsalt"] = "carbospec"
plt.rcParams["svg.fonttype"] = "none"

SALIENCY_CMAP = LinearSegmentedColormap.from_list("saliency", ["#add8e6", "#ff0000"])
PathLike = Union[str, Path]


def _save_svg(fig, path: PathLike) -> None:
    buffer = io.BytesIO()
    fig.savefig(buffer, format="svg", metadata={"Date": None})
    plt.close(fig)
    atomic_write_bytes(Path(path), buffer.getvalue())
    logger.info(f"Wrote {path}")


def marker_positions(bands: Sequence[CarbonateBand] = CARBONATE_BANDS,
                     grid: WavelengthGrid = NIR_GRID) -> list:
    """Wavelengths of the dashed band markers; ranges are marked at their start, clipped to the grid."""
    return [min(max(band.start_nm, grid.start_nm), grid.end_nm) for band in bands]


def plot_spectrum(values: np.ndarray, path: PathLike, grid: WavelengthGrid = NIR_GRID,
                  title: str = "", markers: bool = False, ylabel: str = "value") -> None:
    """
    Spectrum polyline as SVG, optionally with dashed lines at the carbonate bands.

    Args:
        values: Spectrum values on `grid`
        path: Output .svg file
        grid (WavelengthGrid): Wavelength axis
        title (str): Figure title
        markers (bool): Draw the documented carbonate band markers
        ylabel (str): Y axis label
    """
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.plot(grid.wavelengths(), np.asarray(values, dtype=np.float64), color="black", linewidth=0.8, gid="spectrum")
    if markers:
        for band, position in zip(CARBONATE_BANDS, marker_positions(grid=grid)):
            ax.axvline(position, color="tab:red", linestyle="--", linewidth=0.6, gid=f"band-{band.start_nm:g}")
            ax.annotate(f"{band.start_nm:g}", (position, 1.0), xycoords=("data", "axes fraction"),
                        fontsize=6, rotation=90, va="top", ha="right")
    ax.set_xlabel("wavelength (nm)")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    _save_svg(fig, path)


def plot_saliency(values: np.ndarray, saliency_map: SaliencyMap, path: PathLike,
                  grid: WavelengthGrid = NIR_GRID, title: str = "") -> None:
    """
    Spectrum coloured by normalized saliency (red = high, light blue = low)
    with a table of the top peaks.
    """
    wavelengths = grid.wavelengths()
    values = np.asarray(values, dtype=np.float64)
    points = np.column_stack([wavelengths, values])
    segments = np.stack([points[:-1], points[1:]], axis=1)
    weights = saliency_map.normalized()

    fig, (ax, table_ax) = plt.subplots(1, 2, figsize=(10, 4), gridspec_kw={"width_ratios": [3, 1]})
    lines = LineCollection(segments, cmap=SALIENCY_CMAP, linewidths=1.2, gid="saliency-spectrum")
    lines.set_array(0.5 * (weights[:-1] + weights[1:]))
    lines.set_clim(0.0, 1.0)
    ax.add_collection(lines)
    ax.set_xlim(wavelengths[0], wavelengths[-1])
    spread = float(values.max() - values.min()) or 1.0
    ax.set_ylim(values.min() - 0.05 * spread, values.max() + 0.05 * spread)
    ax.set_xlabel("wavelength (nm)")
    ax.set_ylabel("value")
    fig.colorbar(lines, ax=ax, label="normalized saliency")
    if title:
        ax.set_title(title)

    table_ax.axis("off")
    rows = [[str(rank), f"{peak.wavelength_nm:.1f}", f"{peak.magnitude:.4g}"]
            for rank, peak in enumerate(saliency_map.top_peaks, start=1)]
    if rows:
        table_ax.table(cellText=rows, colLabels=["#", "nm", "|grad|"], loc="center")
    fig.tight_layout()
    _save_svg(fig, path)


def save_spectrogram_png(image: np.ndarray, path: PathLike, invert: Optional[bool] = True) -> None:
    """Write a spectrogram image (values in [0, 1]) as an 8-bit grayscale PNG."""
    pixels = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    if invert:
        pixels = 1.0 - pixels
    buffer = io.BytesIO()
    Image.fromarray(np.rint(pixels * 255).astype(np.uint8), mode="L").save(buffer, format="PNG")
    atomic_write_bytes(Path(path), buffer.getvalue())
    logger.info(f"Wrote {path}")
