"""
Spectral core types for carbospec.
==================================

Defines the fixed NIR wavelength grid, spectrum kinds, the immutable
Spectrum / SpectralDataset containers, the pseudo-absorbance transform,
reflectance screening and carbonate unit normalization.

Reflectance is stored in percent (0, 100]; absorbance is computed on the
fractional value so that R = 100 % gives A = 0.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from .exceptions import GridMismatchError, LengthMismatchError, ValidationError


class NonPositiveReflectanceError(ValidationError):
    """Reflectance value <= 0; the sample must be screened out."""
    pass


class ReflectanceOutOfRangeError(ValidationError):
    """Reflectance value above 100 % or not finite."""
    pass


class EmptyAfterScreeningError(ValidationError):
    """Every sample of a dataset was rejected by screening."""
    pass


class NegativeContentError(ValidationError):
    """Carbonate content below zero."""
    pass


class KindMismatchError(ValidationError):
    """Spectra of different kinds were combined."""
    pass


class DuplicateSampleIdError(ValidationError):
    """A sample id occurs more than once."""
    pass


@dataclass(frozen=True)
class WavelengthGrid:
    """Uniform wavelength grid in nanometres."""

    start_nm: float = 1150.0
    end_nm: float = 2500.0
    step_nm: float = 0.5

    def __post_init__(self):
        if self.step_nm <= 0 or self.end_nm <= self.start_nm:
            raise GridMismatchError(
                f"grid must be strictly increasing: start={self.start_nm}, end={self.end_nm}, step={self.step_nm}"
            )
        span = (self.end_nm - self.start_nm) / self.step_nm
        if abs(span - round(span)) > 1e-9:
            raise GridMismatchError(f"grid span {self.end_nm - self.start_nm} nm is not a multiple of {self.step_nm} nm")

    @property
    def n_points(self) -> int:
        return int(round((self.end_nm - self.start_nm) / self.step_nm)) + 1

    def wavelengths(self) -> np.ndarray:
        return self.start_nm + self.step_nm * np.arange(self.n_points, dtype=np.float64)

    def index_of(self, wavelength_nm: float) -> int:
        """Nearest grid index for a wavelength (clipped to the grid)."""
        idx = int(round((wavelength_nm - self.start_nm) / self.step_nm))
        return min(max(idx, 0), self.n_points - 1)

    def labels(self) -> List[str]:
        """Column labels as written in the canonical CSV header ("1150.0", ...)."""
        return [f"{w:.1f}" for w in self.wavelengths()]


NIR_GRID = WavelengthGrid()


class KindTag(str, Enum):
    REFLECTANCE_PCT = "reflectance_pct"
    ABSORBANCE = "absorbance"
    DERIVATIVE = "derivative"


@dataclass(frozen=True)
class SpectrumKind:
    """Kind of values a spectrum holds; derivatives carry their order."""

    tag: KindTag
    order: int = 0

    def __str__(self) -> str:
        if self.tag is KindTag.DERIVATIVE:
            return f"derivative{self.order}"
        return self.tag.value

    @classmethod
    def parse(cls, text: str) -> "SpectrumKind":
        text = text.strip().lower().replace("-", "_")
        if text in ("reflectance", "reflectance_pct", "reflectance_percent"):
            return REFLECTANCE_PCT
        if text == "absorbance":
            return ABSORBANCE
        if text.startswith("derivative") and text[len("derivative"):].isdigit():
            return derivative_kind(int(text[len("derivative"):]))
        raise ValidationError(f"unknown spectrum kind: {text!r}")


REFLECTANCE_PCT = SpectrumKind(KindTag.REFLECTANCE_PCT)
ABSORBANCE = SpectrumKind(KindTag.ABSORBANCE)


def derivative_kind(order: int) -> SpectrumKind:
    return SpectrumKind(KindTag.DERIVATIVE, int(order))


class Source(str, Enum):
    KSSL = "KSSL"
    LUCAS = "LUCAS"
    LOCAL = "Local"
    MERGED = "Merged"


def _frozen(values: np.ndarray) -> np.ndarray:
    values = np.array(values, dtype=np.float64, copy=True)
    values.setflags(write=False)
    return values


@dataclass(frozen=True)
class Spectrum:
    """One sample's values on the wavelength grid."""

    values: np.ndarray
    kind: SpectrumKind
    sample_id: str
    grid: WavelengthGrid = NIR_GRID

    def __post_init__(self):
        values = _frozen(self.values)
        if values.ndim != 1 or values.shape[0] != self.grid.n_points:
            raise GridMismatchError(
                f"sample {self.sample_id}: expected {self.grid.n_points} values, got {values.shape}"
            )
        object.__setattr__(self, "values", values)

    def is_valid(self) -> bool:
        """True when the kind's value invariants hold (finite; reflectance in (0, 100])."""
        if not np.all(np.isfinite(self.values)):
            return False
        if self.kind == REFLECTANCE_PCT:
            return bool(np.all(self.values > 0.0) and np.all(self.values <= 100.0))
        return True


@dataclass(frozen=True)
class SpectralDataset:
    """
    Immutable matrix of spectra with carbonate labels (g/100g).

    Rows of `matrix` are samples; columns follow `grid`. Raw datasets may hold
    out-of-range reflectance until they pass through `screen`.
    """

    matrix: np.ndarray
    labels: np.ndarray
    sample_ids: Tuple[str, ...]
    kind: SpectrumKind
    source: Source = Source.LOCAL
    grid: WavelengthGrid = NIR_GRID
    sample_sources: Optional[Tuple[Source, ...]] = None
    allow_empty: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        matrix = _frozen(self.matrix)
        if matrix.ndim == 1 and matrix.size == 0:
            matrix = _frozen(np.empty((0, self.grid.n_points)))
        labels = _frozen(self.labels).reshape(-1)
        sample_ids = tuple(str(s) for s in self.sample_ids)

        if matrix.ndim != 2 or matrix.shape[1] != self.grid.n_points:
            raise GridMismatchError(f"expected (n, {self.grid.n_points}) matrix, got {matrix.shape}")
        n = matrix.shape[0]
        if n == 0 and not self.allow_empty:
            raise ValidationError("dataset must hold at least one sample")
        if labels.shape[0] != n or len(sample_ids) != n:
            raise LengthMismatchError(
                f"{n} spectra but {labels.shape[0]} labels and {len(sample_ids)} sample ids"
            )
        if np.any(~np.isfinite(labels)) or np.any(labels < 0):
            raise NegativeContentError("carbonate labels must be finite and >= 0")
        if len(set(sample_ids)) != n:
            raise DuplicateSampleIdError("sample ids must be unique within a dataset")

        sources = self.sample_sources
        if sources is None:
            sources = (self.source,) * n
        elif len(sources) != n:
            raise LengthMismatchError(f"{n} spectra but {len(sources)} per-sample source tags")

        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "sample_ids", sample_ids)
        object.__setattr__(self, "sample_sources", tuple(Source(s) for s in sources))

    @classmethod
    def empty(cls, kind: SpectrumKind, grid: WavelengthGrid = NIR_GRID, source: Source = Source.LOCAL) -> "SpectralDataset":
        return cls(np.empty((0, grid.n_points)), np.empty(0), (), kind, source, grid, allow_empty=True)

    @classmethod
    def from_spectra(cls, spectra: Sequence[Spectrum], labels: Sequence[float], source: Source = Source.LOCAL) -> "SpectralDataset":
        """Build a dataset from Spectrum objects that share one kind and grid."""
        if not spectra:
            raise ValidationError("dataset must hold at least one sample")
        kinds = {s.kind for s in spectra}
        grids = {s.grid for s in spectra}
        if len(kinds) != 1:
            raise KindMismatchError(f"spectra of mixed kinds: {sorted(str(k) for k in kinds)}")
        if len(grids) != 1:
            raise GridMismatchError("spectra on different wavelength grids")
        matrix = np.vstack([s.values for s in spectra])
        return cls(matrix, np.asarray(labels, dtype=np.float64), tuple(s.sample_id for s in spectra),
                   spectra[0].kind, source, spectra[0].grid)

    def __len__(self) -> int:
        return self.matrix.shape[0]

    def spectrum(self, index: int) -> Spectrum:
        return Spectrum(self.matrix[index], self.kind, self.sample_ids[index], self.grid)

    def spectra(self) -> Iterator[Spectrum]:
        for i in range(len(self)):
            yield self.spectrum(i)

    def subset(self, indices: Union[Sequence[int], np.ndarray]) -> "SpectralDataset":
        """Rows `indices` in the given order, values copied bit-exactly."""
        indices = np.asarray(indices, dtype=np.int64)
        return SpectralDataset(
            self.matrix[indices],
            self.labels[indices],
            tuple(self.sample_ids[i] for i in indices),
            self.kind,
            self.source,
            self.grid,
            tuple(self.sample_sources[i] for i in indices),
            allow_empty=True,
        )

    def with_matrix(self, matrix: np.ndarray, kind: SpectrumKind) -> "SpectralDataset":
        """Same samples and labels with new values of a new kind."""
        return SpectralDataset(matrix, self.labels, self.sample_ids, kind, self.source,
                               self.grid, self.sample_sources, allow_empty=True)


# --------------------------------------------------------------------------
# Absorbance
# --------------------------------------------------------------------------

def _check_reflectance(values: np.ndarray, sample_id: str) -> None:
    if np.any(~np.isfinite(values)):
        idx = int(np.flatnonzero(~np.isfinite(values))[0])
        raise ReflectanceOutOfRangeError(f"sample {sample_id}: non-finite reflectance at index {idx}")
    if np.any(values <= 0.0):
        idx = int(np.flatnonzero(values <= 0.0)[0])
        raise NonPositiveReflectanceError(
            f"sample {sample_id}: reflectance {values[idx]} <= 0 at index {idx}; screen the sample out"
        )
    if np.any(values > 100.0):
        idx = int(np.flatnonzero(values > 100.0)[0])
        raise ReflectanceOutOfRangeError(f"sample {sample_id}: reflectance {values[idx]} > 100 at index {idx}")


def reflectance_to_absorbance(values: np.ndarray) -> np.ndarray:
    """A = log10(1 / (R / 100)) elementwise, R in percent."""
    return -np.log10(np.asarray(values, dtype=np.float64) / 100.0)


def absorbance_to_reflectance(values: np.ndarray) -> np.ndarray:
    """Inverse transform: R = 100 * 10^(-A)."""
    return 100.0 * np.power(10.0, -np.asarray(values, dtype=np.float64))


def to_absorbance(spectrum: Spectrum) -> Spectrum:
    """
    Convert a percent-reflectance spectrum to pseudo absorbance.

    Args:
        spectrum (Spectrum): Spectrum of kind REFLECTANCE_PCT

    Returns:
        Spectrum: Absorbance spectrum on the same grid

    Raises:
        KindMismatchError: If the spectrum is not percent reflectance
        NonPositiveReflectanceError: If any value is <= 0
    """
    if spectrum.kind != REFLECTANCE_PCT:
        raise KindMismatchError(f"sample {spectrum.sample_id}: expected reflectance_pct, got {spectrum.kind}")
    _check_reflectance(spectrum.values, spectrum.sample_id)
    return Spectrum(reflectance_to_absorbance(spectrum.values), ABSORBANCE, spectrum.sample_id, spectrum.grid)


def dataset_to_absorbance(dataset: SpectralDataset) -> SpectralDataset:
    """Absorbance transform applied to every row; the first offending sample is reported."""
    if dataset.kind != REFLECTANCE_PCT:
        raise KindMismatchError(f"expected reflectance_pct dataset, got {dataset.kind}")
    for i in range(len(dataset)):
        _check_reflectance(dataset.matrix[i], dataset.sample_ids[i])
    return dataset.with_matrix(reflectance_to_absorbance(dataset.matrix), ABSORBANCE)


# --------------------------------------------------------------------------
# Screening
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Rejection:
    sample_id: str
    index: int
    reason: str  # NonPositive | AboveLimit | NonFinite

    def to_line(self) -> str:
        return f"{self.sample_id}\t{self.reason}:{self.index}"


@dataclass
class RejectionLog:
    """Samples dropped by screening, one entry per sample."""

    entries: List[Rejection] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def to_text(self) -> str:
        """Line-oriented "sample_id<TAB>reason" text."""
        return "".join(entry.to_line() + "\n" for entry in self.entries)

    def extend(self, other: "RejectionLog") -> None:
        self.entries.extend(other.entries)


def _first_violation(row: np.ndarray) -> Optional[Tuple[int, str]]:
    bad_finite = ~np.isfinite(row)
    with np.errstate(invalid="ignore"):
        bad_low = row <= 0.0
        bad_high = row > 100.0
    bad = bad_finite | bad_low | bad_high
    if not bad.any():
        return None
    idx = int(np.flatnonzero(bad)[0])
    if bad_finite[idx]:
        return idx, "NonFinite"
    if bad_low[idx]:
        return idx, "NonPositive"
    return idx, "AboveLimit"


def screen(dataset: SpectralDataset) -> Tuple[SpectralDataset, RejectionLog]:
    """
    Drop reflectance samples outside the theoretical limits (0, 100].

    Args:
        dataset (SpectralDataset): Raw percent-reflectance dataset

    Returns:
        tuple: (retained dataset, rejection log)

    Raises:
        KindMismatchError: If the dataset is not percent reflectance
        EmptyAfterScreeningError: If every sample is rejected
    """
    if dataset.kind != REFLECTANCE_PCT:
        raise KindMismatchError(f"screening expects reflectance_pct, got {dataset.kind}")

    log = RejectionLog()
    keep: List[int] = []
    for i in range(len(dataset)):
        violation = _first_violation(dataset.matrix[i])
        if violation is None:
            keep.append(i)
        else:
            log.entries.append(Rejection(dataset.sample_ids[i], violation[0], violation[1]))

    if not keep:
        raise EmptyAfterScreeningError(f"all {len(dataset)} samples rejected by screening")
    if log.entries:
        logger.info(f"Screening rejected {len(log)} of {len(dataset)} samples")
        return dataset.subset(keep), log
    return dataset, log


# --------------------------------------------------------------------------
# Units
# --------------------------------------------------------------------------

def normalize_carbonate_units(value_g_per_kg: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """
    Convert carbonate content from g/kg to g/100g.

    Raises:
        NegativeContentError: If any value is negative
    """
    arr = np.asarray(value_g_per_kg, dtype=np.float64)
    if np.any(arr < 0) or np.any(~np.isfinite(arr)):
        raise NegativeContentError(f"carbonate content must be finite and >= 0, got {value_g_per_kg}")
    result = arr / 10.0
    return float(result) if result.ndim == 0 else result
