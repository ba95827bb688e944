import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from src.exceptions import GridMismatchError, LengthMismatchError, ValidationError
from src.spectra import (
    ABSORBANCE,
    NIR_GRID,
    REFLECTANCE_PCT,
    DuplicateSampleIdError,
    EmptyAfterScreeningError,
    KindMismatchError,
    NegativeContentError,
    NonPositiveReflectanceError,
    SpectralDataset,
    Spectrum,
    SpectrumKind,
    WavelengthGrid,
    absorbance_to_reflectance,
    dataset_to_absorbance,
    derivative_kind,
    normalize_carbonate_units,
    reflectance_to_absorbance,
    screen,
    to_absorbance,
)


def flat_reflectance(value, sample_id="S"):
    return Spectrum(np.full(NIR_GRID.n_points, value), REFLECTANCE_PCT, sample_id)


def test_grid_defaults():
    assert NIR_GRID.n_points == 2701
    wl = NIR_GRID.wavelengths()
    assert wl[0] == 1150.0 and wl[-1] == 2500.0
    assert np.all(np.diff(wl) == 0.5)
    assert NIR_GRID.labels()[:2] == ["1150.0", "1150.5"]


def test_grid_rejects_bad_span():
    with pytest.raises(GridMismatchError):
        WavelengthGrid(1150.0, 1150.7, 0.5)
    with pytest.raises(GridMismatchError):
        WavelengthGrid(2500.0, 1150.0, 0.5)


def test_kind_parse_and_str():
    assert SpectrumKind.parse("Reflectance") == REFLECTANCE_PCT
    assert SpectrumKind.parse("absorbance") == ABSORBANCE
    assert SpectrumKind.parse("derivative2") == derivative_kind(2)
    assert str(derivative_kind(1)) == "derivative1"
    with pytest.raises(ValidationError):
        SpectrumKind.parse("transmission")


@pytest.mark.parametrize("reflectance, expected", [(100.0, 0.0), (10.0, 1.0), (50.0, 0.3010299957)])
def test_to_absorbance_examples(reflectance, expected):
    out = to_absorbance(flat_reflectance(reflectance))
    assert out.kind == ABSORBANCE
    assert np.allclose(out.values, expected, atol=1e-10)


def test_to_absorbance_rejects_non_positive():
    values = np.full(NIR_GRID.n_points, 40.0)
    values[17] = 0.0
    with pytest.raises(NonPositiveReflectanceError, match="S7"):
        to_absorbance(Spectrum(values, REFLECTANCE_PCT, "S7"))


def test_to_absorbance_needs_reflectance():
    with pytest.raises(KindMismatchError):
        to_absorbance(Spectrum(np.zeros(NIR_GRID.n_points), ABSORBANCE, "A"))


@given(st.floats(min_value=1e-6, max_value=100.0))
def test_absorbance_round_trip(reflectance):
    back = absorbance_to_reflectance(reflectance_to_absorbance(np.array([reflectance])))[0]
    assert back == pytest.approx(reflectance, rel=1e-12)


@given(st.floats(min_value=1e-6, max_value=100.0), st.floats(min_value=1e-6, max_value=100.0))
def test_absorbance_strictly_decreasing(r1, r2):
    assume(abs(r1 - r2) > 1e-9 * max(r1, r2))
    a1, a2 = reflectance_to_absorbance(np.array([r1, r2]))
    assert (a1 > a2) == (r1 < r2)


def test_spectrum_validates_length_and_validity():
    with pytest.raises(GridMismatchError):
        Spectrum(np.zeros(10), ABSORBANCE, "short")
    assert flat_reflectance(50.0).is_valid()
    assert not flat_reflectance(101.0).is_valid()


def test_dataset_invariants(reflectance_dataset):
    assert len(reflectance_dataset) == 6
    assert not reflectance_dataset.matrix.flags.writeable
    with pytest.raises(LengthMismatchError):
        SpectralDataset(reflectance_dataset.matrix, [1.0], reflectance_dataset.sample_ids, REFLECTANCE_PCT)
    with pytest.raises(NegativeContentError):
        SpectralDataset(reflectance_dataset.matrix[:1], [-0.5], ("x",), REFLECTANCE_PCT)
    with pytest.raises(DuplicateSampleIdError):
        SpectralDataset(reflectance_dataset.matrix[:2], [1.0, 2.0], ("x", "x"), REFLECTANCE_PCT)
    with pytest.raises(ValidationError):
        SpectralDataset(np.empty((0, 2701)), [], (), REFLECTANCE_PCT)


def test_from_spectra_rejects_mixed_kinds():
    spectra = [flat_reflectance(50.0, "a"), Spectrum(np.zeros(2701), ABSORBANCE, "b")]
    with pytest.raises(KindMismatchError):
        SpectralDataset.from_spectra(spectra, [1.0, 2.0])


def test_subset_copies_rows_exactly(reflectance_dataset):
    sub = reflectance_dataset.subset([4, 1])
    assert sub.sample_ids == ("R4", "R1")
    assert np.array_equal(sub.matrix[0], reflectance_dataset.matrix[4])
    assert sub.labels.tolist() == [12.0, 1.5]


def test_screen_passes_clean_dataset_through(reflectance_dataset):
    kept, log = screen(reflectance_dataset)
    assert kept is reflectance_dataset
    assert len(log) == 0


def test_screen_drops_out_of_range_and_nan(reflectance_dataset):
    matrix = reflectance_dataset.matrix.copy()
    matrix[2, 10] = 101.0
    matrix[4, 99] = np.nan
    raw = reflectance_dataset.with_matrix(matrix, REFLECTANCE_PCT)
    kept, log = screen(raw)
    assert kept.sample_ids == ("R0", "R1", "R3", "R5")
    assert [(e.sample_id, e.index, e.reason) for e in log] == [("R2", 10, "AboveLimit"), ("R4", 99, "NonFinite")]
    assert np.array_equal(kept.matrix, matrix[[0, 1, 3, 5]])
    assert log.to_text() == "R2\tAboveLimit:10\nR4\tNonFinite:99\n"


def test_screen_everything_rejected(reflectance_dataset):
    raw = reflectance_dataset.with_matrix(np.zeros_like(reflectance_dataset.matrix), REFLECTANCE_PCT)
    with pytest.raises(EmptyAfterScreeningError):
        screen(raw)


def test_dataset_to_absorbance(reflectance_dataset):
    out = dataset_to_absorbance(reflectance_dataset)
    assert out.kind == ABSORBANCE
    assert np.allclose(out.matrix, -np.log10(reflectance_dataset.matrix / 100.0))
    assert out.labels is not None and out.sample_ids == reflectance_dataset.sample_ids


@pytest.mark.parametrize("g_per_kg, expected", [(0.0, 0.0), (85.6, 8.56), (1000.0, 100.0)])
def test_normalize_carbonate_units(g_per_kg, expected):
    assert normalize_carbonate_units(g_per_kg) == pytest.approx(expected, abs=1e-12)


def test_normalize_carbonate_units_rejects_negative():
    with pytest.raises(NegativeContentError):
        normalize_carbonate_units(-1.0)
    with pytest.raises(NegativeContentError):
        normalize_carbonate_units(math.nan)
