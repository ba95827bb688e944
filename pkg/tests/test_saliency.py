import numpy as np
import pytest

from src.exceptions import ValidationError
from src.linear_models import plsr_fit
from src.networks import CNNConfig, MLPConfig, NeuralRegressor, build
from src.saliency import (
    SaliencyMap,
    SaliencyPeak,
    UnsupportedModelError,
    coefficient_report,
    compare_with_reference,
    find_peaks,
    network_saliency,
    saliency,
)
from src.spectra import NIR_GRID


def bump(wavelengths, centre, height, width=3.0):
    return height * np.exp(-0.5 * ((wavelengths - centre) / width) ** 2)


def mlp_regressor(small_grid, y_scale=2.0, x_scale=0.5):
    network = build(MLPConfig(input_dim=small_grid.n_points, hidden=(6, 4, 3), l1=0.0, l2=0.0, seed=4))
    return NeuralRegressor(network, np.zeros(small_grid.n_points), x_scale, 1.0, y_scale)


def test_find_peaks_orders_by_magnitude():
    wl = NIR_GRID.wavelengths()
    m = bump(wl, 1415.0, 1.0) + bump(wl, 1908.0, 3.0) + bump(wl, 2335.0, 2.0)
    peaks = find_peaks(m, wl)
    assert [p.wavelength_nm for p in peaks] == [1908.0, 2335.0, 1415.0]
    assert peaks[0].magnitude == pytest.approx(3.0)


def test_find_peaks_enforces_separation_and_limit():
    wl = NIR_GRID.wavelengths()
    m = bump(wl, 1500.0, 2.0, width=1.0) + bump(wl, 1505.0, 1.0, width=1.0)
    assert [p.wavelength_nm for p in find_peaks(m, wl)] == [1500.0]
    many = sum(bump(wl, c, 1.0 + c / 1e4, width=1.0) for c in np.arange(1200.0, 2400.0, 50.0))
    assert len(find_peaks(many, wl, top=5)) == 5
    assert find_peaks(np.zeros(2), wl[:2]) == []


def test_find_peaks_ignores_flat_signal():
    wl = NIR_GRID.wavelengths()
    assert find_peaks(np.ones(wl.size), wl) == []


def test_bare_network_saliency_matches_finite_differences(small_grid, rng):
    network = build(MLPConfig(input_dim=small_grid.n_points, hidden=(6, 4, 3), l1=0.0, l2=0.0, seed=4))
    x = rng.normal(size=small_grid.n_points)
    grad = network_saliency(network, x[np.newaxis, :])[0]
    h = 1e-6
    for i in (0, 17, 50, 100):
        step = np.zeros_like(x)
        step[i] = h
        up = network.layers.forward((x + step)[np.newaxis, :])[0, 0]
        down = network.layers.forward((x - step)[np.newaxis, :])[0, 0]
        assert abs(up - down) / (2 * h) == pytest.approx(grad[i], rel=1e-6, abs=1e-10)


def test_regressor_saliency_is_scaled_gradient(small_grid, rng):
    model = mlp_regressor(small_grid)
    x = rng.normal(size=small_grid.n_points)
    result = saliency(model, x, grid=small_grid)
    h = 1e-6
    for i in (3, 42, 99):
        step = np.zeros_like(x)
        step[i] = h
        slope = (model.predict(x + step)[0] - model.predict(x - step)[0]) / (2 * h)
        assert abs(slope) == pytest.approx(result.magnitudes[i], rel=1e-6, abs=1e-10)
    assert np.all(result.magnitudes >= 0)
    assert result.normalized().max() == pytest.approx(1.0)


def test_saliency_averages_rows(small_grid, rng):
    model = mlp_regressor(small_grid)
    rows = rng.normal(size=(3, small_grid.n_points))
    averaged = saliency(model, rows, grid=small_grid).magnitudes
    single = [saliency(model, row, grid=small_grid).magnitudes for row in rows]
    assert np.allclose(averaged, np.mean(single, axis=0))


def test_spectrogram_cnn_saliency_lands_on_grid(small_grid, rng):
    cfg = CNNConfig(conv_channels=(2,), dense=4, n_points=small_grid.n_points, seed=2)
    model = NeuralRegressor(build(cfg), np.zeros((*cfg.image_shape, 1)), 1.0, 0.0, 1.0)
    result = saliency(model, rng.normal(size=small_grid.n_points), grid=small_grid)
    assert result.magnitudes.shape == (small_grid.n_points,)
    assert np.all(np.isfinite(result.magnitudes)) and np.all(result.magnitudes >= 0)


def test_linear_models_have_no_saliency(rng):
    X = rng.normal(size=(20, NIR_GRID.n_points))
    with pytest.raises(UnsupportedModelError):
        saliency(plsr_fit(X, X[:, 0], k=2), X[0])


def test_saliency_rejects_wrong_grid(small_grid, rng):
    with pytest.raises(ValidationError):
        saliency(mlp_regressor(small_grid), rng.normal(size=small_grid.n_points), grid=NIR_GRID)


def test_compare_with_reference():
    peaks = [SaliencyPeak(1417.0, 3.0), SaliencyPeak(1950.0, 2.0), SaliencyPeak(2330.5, 1.0)]
    saliency_map = SaliencyMap(np.zeros(3), np.zeros(3), peaks)
    rows = compare_with_reference(saliency_map, reference_nm=(1415.0, 1908.0, 2335.0))
    assert [r["matched"] for r in rows] == [True, False, True]
    assert rows[0]["gap_nm"] == pytest.approx(2.0)
    assert rows[1]["nearest_peak_nm"] == 1950.0
    empty = compare_with_reference(SaliencyMap(np.zeros(3), np.zeros(3), []), reference_nm=(1415.0,))
    assert empty[0]["matched"] is False and empty[0]["nearest_peak_nm"] is None


def test_peaks_text_and_dict():
    saliency_map = SaliencyMap(np.zeros(2), np.zeros(2), [SaliencyPeak(1908.0, 0.25)])
    assert saliency_map.peaks_text() == "rank\twavelength_nm\tmagnitude\n1\t1908.0\t0.25\n"
    assert saliency_map.to_dict() == {"peaks": [{"wavelength_nm": 1908.0, "magnitude": 0.25}]}


def test_coefficient_report(small_grid):
    coefficients = np.zeros(small_grid.n_points)
    coefficients[[10, 20, 30]] = [-5.0, 2.0, -2.0]
    report = coefficient_report("plsr", coefficients, grid=small_grid, top=3)
    assert [e.wavelength_nm for e in report.entries] == [1155.0, 1160.0, 1165.0]
    text = report.to_text()
    assert text.startswith("# coefficient magnitude report (plsr); not a saliency map\n")
    assert "1\t1155.0\t5\n" in text
