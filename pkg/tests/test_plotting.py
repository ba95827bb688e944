import xml.etree.ElementTree as ET

import numpy as np
import pytest
from PIL import Image

from src.plotting import marker_positions, plot_saliency, plot_spectrum, save_spectrogram_png
from src.reference_data import CARBONATE_BANDS
from src.saliency import SaliencyMap, SaliencyPeak
from src.spectra import NIR_GRID


@pytest.fixture
def spectrum_values():
    wl = NIR_GRID.wavelengths()
    return 0.4 + 0.1 * np.exp(-0.5 * ((wl - 1908.0) / 15.0) ** 2)


def test_marker_positions_are_clipped(small_grid):
    assert marker_positions() == [1415.0, 1900.0, 2000.0, 2160.0, 2340.0, 2500.0]
    assert marker_positions(grid=small_grid) == [1200.0] * len(CARBONATE_BANDS)


def test_spectrum_svg_is_well_formed_and_reproducible(tmp_path, spectrum_values):
    first, second = tmp_path / "a.svg", tmp_path / "b.svg"
    plot_spectrum(spectrum_values, first, title="S1", markers=True)
    plot_spectrum(spectrum_values, second, title="S1", markers=True)
    assert first.read_bytes() == second.read_bytes()
    root = ET.parse(first).getroot()
    assert root.tag.endswith("svg")
    text = first.read_text()
    assert 'id="spectrum' in text and 'id="band-1415' in text


def test_spectrum_svg_without_markers(tmp_path, spectrum_values):
    path = tmp_path / "plain.svg"
    plot_spectrum(spectrum_values, path)
    assert "band-" not in path.read_text()


def test_saliency_svg_lists_peaks(tmp_path, spectrum_values):
    magnitudes = spectrum_values - spectrum_values.min()
    smap = SaliencyMap(magnitudes, NIR_GRID.wavelengths(), [SaliencyPeak(1908.0, float(magnitudes.max()))])
    path = tmp_path / "saliency.svg"
    plot_saliency(spectrum_values, smap, path, title="mlp saliency")
    ET.parse(path)
    text = path.read_text()
    assert "1908.0" in text and "normalized saliency" in text


def test_saliency_svg_handles_zero_map(tmp_path, spectrum_values):
    smap = SaliencyMap(np.zeros(NIR_GRID.n_points), NIR_GRID.wavelengths(), [])
    path = tmp_path / "flat.svg"
    plot_saliency(spectrum_values, smap, path)
    ET.parse(path)


def test_spectrogram_png(tmp_path):
    image = np.zeros((244, 488))
    image[10, :] = 1.0
    path = tmp_path / "s.png"
    save_spectrogram_png(image, path)
    with Image.open(path) as png:
        assert png.size == (488, 244) and png.mode == "L"
        pixels = np.asarray(png)
    assert pixels[10].max() == 0 and pixels[0].min() == 255
    save_spectrogram_png(image, path, invert=False)
    with Image.open(path) as png:
        assert np.asarray(png)[10].min() == 255
