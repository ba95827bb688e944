import sys

import numpy as np
import pytest

from src import synthetic
from src.exceptions import InvalidParamsError
from src.ingest import load_canonical
from src.spectra import ABSORBANCE, NIR_GRID, REFLECTANCE_PCT
from src.synthetic import PLANTED_CENTERS_NM, PlantedSignalConfig, as_reflectance, planted_dataset


def test_shape_ids_and_labels(planted_small):
    assert planted_small.matrix.shape == (80, NIR_GRID.n_points)
    assert planted_small.sample_ids[:2] == ("SYN00000", "SYN00001")
    assert planted_small.kind == ABSORBANCE
    assert np.all(planted_small.labels >= 0) and np.all(planted_small.labels <= 40.0)


def test_generation_is_seeded():
    a = planted_dataset(PlantedSignalConfig(n_samples=5, seed=3))
    b = planted_dataset(PlantedSignalConfig(n_samples=5, seed=3))
    c = planted_dataset(PlantedSignalConfig(n_samples=5, seed=4))
    assert a.matrix.tobytes() == b.matrix.tobytes()
    assert not np.array_equal(a.labels, c.labels)


def test_planted_bands_track_the_label():
    data = planted_dataset(PlantedSignalConfig(n_samples=400, seed=11, noise_sd=0.0))
    wl = NIR_GRID.wavelengths()
    for center in PLANTED_CENTERS_NM:
        peak = np.argmin(np.abs(wl - center))
        shoulder = np.argmin(np.abs(wl - (center - 60.0)))
        depth = data.matrix[:, peak] - data.matrix[:, shoulder]
        assert np.corrcoef(depth, data.labels)[0, 1] > 0.85


def test_small_grid(small_grid):
    data = planted_dataset(PlantedSignalConfig(n_samples=3, seed=1), grid=small_grid)
    assert data.matrix.shape == (3, small_grid.n_points) and data.grid == small_grid


def test_as_reflectance(planted_small):
    refl = as_reflectance(planted_small)
    assert refl.kind == REFLECTANCE_PCT
    assert np.allclose(refl.matrix, 100.0 * 10.0 ** -planted_small.matrix)
    assert refl.sample_ids == planted_small.sample_ids


@pytest.mark.parametrize("kwargs", [{"n_samples": 0}, {"width_nm": 0.0}, {"noise_sd": -1.0}])
def test_invalid_config(kwargs):
    with pytest.raises(InvalidParamsError):
        planted_dataset(PlantedSignalConfig(**kwargs))


def test_main_writes_csv(tmp_path, monkeypatch, capsys):
    out = tmp_path / "refl.csv"
    monkeypatch.setattr(sys, "argv", ["synthetic", "-o", str(out), "--samples", "4", "--seed", "5", "--reflectance"])
    synthetic.main()
    assert capsys.readouterr().out.startswith("SUCCESS: 4 reflectance_pct spectra")
    assert load_canonical(out, REFLECTANCE_PCT).sample_ids == ("SYN00000", "SYN00001", "SYN00002", "SYN00003")


def test_main_rejects_bad_count(tmp_path, monkeypatch):
    monkeypatch.setattr(sys, "argv", ["synthetic", "-o", str(tmp_path / "x.csv"), "--samples", "0"])
    with pytest.raises(SystemExit) as exc:
        synthetic.main()
    assert exc.value.code == 2
