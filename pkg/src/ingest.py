"""
Spectral library ingestion for carbospec.
=========================================

- Canonical CSV: "sample_id", "carbonate_g100g", then one column per grid
  wavelength ("1150.0" ... "2500.0"). UTF-8, comma separated, LF endings,
  values written with 17 significant digits so a round trip is exact.
- KSSL / LUCAS adapters for wide CSV exports (one row per sample, one
  column per wavelength, a carbonate column); column names are configurable.
- Linear resampling onto the canonical grid, library merging with a label
  distribution diagnostic, and the bundled volumetric reference pairs.

Usage:
    from src.ingest import AdapterOptions, adapt_lucas, merge

    lucas = adapt_lucas("lucas_wide.csv", AdapterOptions(label_column="CaCO3"))
"""

import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger

from . import reference_data
from .exceptions import GridMismatchError, StorageError, ValidationError
from .metrics import label_distance
from .spectra import (
    ABSORBANCE,
    NIR_GRID,
    REFLECTANCE_PCT,
    DuplicateSampleIdError,
    KindMismatchError,
    Rejection,
    RejectionLog,
    Source,
    SpectralDataset,
    SpectrumKind,
    WavelengthGrid,
    dataset_to_absorbance,
    normalize_carbonate_units,
    screen,
)
from .utils import atomic_write_text, ordered_map


class HeaderMismatchError(ValidationError):
    """The CSV header does not follow the canonical layout."""
    pass


class ParseError(ValidationError):
    """A cell could not be parsed as a finite decimal."""
    pass


class NegativeLabelError(ParseError):
    """A carbonate label is negative."""
    pass


class MissingColumnsError(ValidationError):
    """Required columns are absent from a source export."""
    pass


class UnitFlagRequiredError(ValidationError):
    """The reflectance unit of a KSSL export (percent or fraction) was not declared."""
    pass


ID_COLUMN = "sample_id"
LABEL_COLUMN = "carbonate_g100g"
PAIRS_COLUMNS = ("observed", "predicted")
REFLECTANCE_UNITS = ("percent", "fraction")
LABEL_UNITS = ("g/100g", "g/kg")
PathLike = Union[str, Path]


def _read_csv(path: PathLike, **kwargs) -> pd.DataFrame:
    try:
        return pd.read_csv(path, float_precision="round_trip", **kwargs)
    except (FileNotFoundError, PermissionError, IsADirectoryError):
        raise
    except pd.errors.EmptyDataError as exc:
        raise HeaderMismatchError(f"{path}: file is empty, header row is mandatory") from exc
    except pd.errors.ParserError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not valid UTF-8 ({exc})") from exc


def _numeric_block(frame: pd.DataFrame, path: PathLike) -> np.ndarray:
    """Frame -> float64 matrix; the first unparseable or non-finite cell is reported by row and column."""
    coerced = frame.apply(pd.to_numeric, errors="coerce")
    for col_idx, column in enumerate(frame.columns):
        original = frame[column]
        if original.dtype != object:
            continue
        bad = coerced[column].isna() & original.notna()
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise ParseError(f"{path}: row {row + 2}, column {column!r}: "
                             f"cannot parse {original.iloc[row]!r} as a decimal")
    values = coerced.to_numpy(dtype=np.float64)
    if frame.shape[0] and not np.all(np.isfinite(values)):
        row, col = np.argwhere(~np.isfinite(values))[0]
        raise ParseError(f"{path}: row {row + 2}, column {frame.columns[col]!r}: value is not a finite decimal")
    return values


# --------------------------------------------------------------------------
# Canonical CSV
# --------------------------------------------------------------------------

def _check_canonical_header(columns: Sequence[str], grid: WavelengthGrid, path: PathLike) -> None:
    expected = [ID_COLUMN, LABEL_COLUMN]
    for i, name in enumerate(expected):
        if i >= len(columns) or columns[i] != name:
            found = columns[i] if i < len(columns) else "<missing>"
            raise HeaderMismatchError(f"{path}: column {i} must be {name!r}, found {found!r}")

    wavelengths = grid.wavelengths()
    labels = list(columns[2:])
    for i, label in enumerate(labels):
        try:
            value = float(label)
        except ValueError as exc:
            raise HeaderMismatchError(f"{path}: column {i + 2} {label!r} is not a wavelength") from exc
        if i >= wavelengths.size or abs(value - wavelengths[i]) > 1e-9:
            raise GridMismatchError(f"{path}: column {i + 2} {label!r} is not on the "
                                    f"{grid.start_nm}-{grid.end_nm} nm / {grid.step_nm} nm grid")
    if len(labels) != wavelengths.size:
        raise GridMismatchError(f"{path}: {len(labels)} wavelength columns, expected {wavelengths.size}")


def load_canonical(path: PathLike, kind: SpectrumKind = ABSORBANCE, source: Source = Source.LOCAL,
                   grid: WavelengthGrid = NIR_GRID) -> SpectralDataset:
    """
    Read a canonical spectral CSV.

    Args:
        path: CSV file
        kind (SpectrumKind): What the values are (reflectance percent or absorbance)
        source (Source): Provenance tag
        grid (WavelengthGrid): Expected wavelength grid

    Returns:
        SpectralDataset

    Raises:
        HeaderMismatchError: Naming the first offending column
        GridMismatchError: If wavelength columns are off-grid
        ParseError: With row and column of the bad cell
        NegativeLabelError: If a carbonate label is negative
    """
    frame = _read_csv(path, dtype={ID_COLUMN: str}, keep_default_na=False, na_values=[""])
    columns = [str(c) for c in frame.columns]
    _check_canonical_header(columns, grid, path)
    if frame.empty:
        raise ValidationError(f"{path}: no samples")

    ids = frame[ID_COLUMN]
    if ids.isna().any():
        row = int(np.flatnonzero(ids.isna().to_numpy())[0])
        raise ParseError(f"{path}: row {row + 2}, column {ID_COLUMN!r}: empty sample id")
    values = _numeric_block(frame[columns[1:]], path)
    labels = values[:, 0]
    if np.any(labels < 0):
        row = int(np.flatnonzero(labels < 0)[0])
        raise NegativeLabelError(f"{path}: row {row + 2}, column {LABEL_COLUMN!r}: "
                                 f"NegativeContent ({labels[row]})")

    dataset = SpectralDataset(values[:, 1:], labels, tuple(ids.astype(str)), kind, source, grid)
    logger.info(f"Loaded {len(dataset)} {kind} spectra from {path}")
    return dataset


def canonical_csv_text(dataset: SpectralDataset) -> str:
    frame = pd.DataFrame(dataset.matrix, columns=dataset.grid.labels())
    frame.insert(0, LABEL_COLUMN, dataset.labels)
    frame.insert(0, ID_COLUMN, list(dataset.sample_ids))
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, float_format="%.17g", lineterminator="\n")
    return buffer.getvalue()


def write_canonical(dataset: SpectralDataset, path: PathLike) -> None:
    """Write a dataset as canonical CSV (atomic, 17 significant digits, LF)."""
    atomic_write_text(Path(path), canonical_csv_text(dataset))
    logger.info(f"Wrote {len(dataset)} spectra to {path}")


def load_many(paths: Sequence[PathLike], kind: SpectrumKind = ABSORBANCE, threads: int = 1) -> List[SpectralDataset]:
    """Independent canonical loads, results in input order."""
    return ordered_map(lambda p: load_canonical(p, kind), list(paths), threads)


# --------------------------------------------------------------------------
# Resampling
# --------------------------------------------------------------------------

def resample(wavelengths: Sequence[float], matrix: np.ndarray, grid: WavelengthGrid = NIR_GRID,
             max_extrapolation_nm: float = 1.0) -> np.ndarray:
    """
    Linearly interpolate spectra from a source wavelength axis onto `grid`.

    Grid points up to `max_extrapolation_nm` beyond the source range take the
    nearest edge value.

    Args:
        wavelengths: Strictly increasing source wavelengths (nm)
        matrix: (n, len(wavelengths)) values
        grid (WavelengthGrid): Target grid
        max_extrapolation_nm (float): Allowed edge extension

    Returns:
        np.ndarray: (n, grid.n_points)

    Raises:
        GridMismatchError: If the source does not cover the grid
    """
    src = np.asarray(wavelengths, dtype=np.float64)
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    if src.ndim != 1 or src.size < 2 or matrix.shape[1] != src.size:
        raise GridMismatchError(f"source axis of {src.size} wavelengths for {matrix.shape[1]} columns")
    if np.any(np.diff(src) <= 0):
        raise GridMismatchError("source wavelengths must be strictly increasing")

    target = grid.wavelengths()
    below = src[0] - target[0]
    above = target[-1] - src[-1]
    if below > max_extrapolation_nm + 1e-9 or above > max_extrapolation_nm + 1e-9:
        raise GridMismatchError(f"source covers {src[0]}-{src[-1]} nm, grid needs {target[0]}-{target[-1]} nm")
    if below > 0 or above > 0:
        logger.warning(f"Extending source range {src[0]}-{src[-1]} nm by edge values to reach the grid")

    if src.size == target.size and np.array_equal(src, target):
        return matrix.copy()
    return np.vstack([np.interp(target, src, row) for row in matrix]) if matrix.shape[0] else np.empty((0, target.size))


# --------------------------------------------------------------------------
# Source adapters
# --------------------------------------------------------------------------

@dataclass
class AdapterOptions:
    """
    Column mapping and units of a wide source export.

    Wavelength columns are those whose name, after removing
    `wavelength_prefix` and `wavelength_suffix`, parses as a number in nm.
    """

    id_column: str = "sample_id"
    label_column: str = "caco3"
    wavelength_prefix: str = ""
    wavelength_suffix: str = ""
    reflectance_unit: Optional[str] = None   # KSSL: "percent" | "fraction"
    label_unit: Optional[str] = None         # default g/100g for KSSL, g/kg for LUCAS
    max_extrapolation_nm: float = 1.0

    def wavelength_of(self, column: str) -> Optional[float]:
        name = str(column)
        if self.wavelength_prefix:
            if not name.startswith(self.wavelength_prefix):
                return None
            name = name[len(self.wavelength_prefix):]
        if self.wavelength_suffix:
            if not name.endswith(self.wavelength_suffix):
                return None
            name = name[: -len(self.wavelength_suffix)]
        try:
            value = float(name)
        except ValueError:
            return None
        return value if math.isfinite(value) else None


@dataclass
class _WideExport:
    ids: Tuple[str, ...]
    labels: np.ndarray
    wavelengths: np.ndarray
    matrix: np.ndarray


def _read_wide(path: PathLike, opts: AdapterOptions) -> _WideExport:
    frame = _read_csv(path, dtype={opts.id_column: str})
    missing = [c for c in (opts.id_column, opts.label_column) if c not in frame.columns]
    if missing:
        raise MissingColumnsError(f"{path}: missing columns {missing}")

    spectral = [(opts.wavelength_of(c), c) for c in frame.columns if c not in (opts.id_column, opts.label_column)]
    spectral = sorted((w, c) for w, c in spectral if w is not None)
    if len(spectral) < 2:
        raise MissingColumnsError(f"{path}: no wavelength columns found "
                                  f"(prefix {opts.wavelength_prefix!r}, suffix {opts.wavelength_suffix!r})")

    labels = pd.to_numeric(frame[opts.label_column], errors="coerce").to_numpy(dtype=np.float64)
    matrix = frame[[c for _, c in spectral]].apply(pd.to_numeric, errors="coerce").to_numpy(dtype=np.float64)
    return _WideExport(tuple(frame[opts.id_column].astype(str)), labels,
                       np.array([w for w, _ in spectral]), matrix)


def _label_rejections(export: _WideExport, path: PathLike) -> Tuple[np.ndarray, RejectionLog]:
    """Rows without a usable label are dropped; negative labels are an error."""
    log = RejectionLog()
    keep = np.isfinite(export.labels)
    for i in np.flatnonzero(~keep):
        log.entries.append(Rejection(export.ids[i], -1, "MissingLabel"))
    negative = keep & (export.labels < 0)
    if negative.any():
        row = int(np.flatnonzero(negative)[0])
        raise NegativeLabelError(f"{path}: row {row + 2}: NegativeContent ({export.labels[row]})")
    return np.flatnonzero(keep), log


def _labels_in_g100g(labels: np.ndarray, unit: str) -> np.ndarray:
    if unit not in LABEL_UNITS:
        raise ValidationError(f"label unit must be one of {LABEL_UNITS}, got {unit!r}")
    return normalize_carbonate_units(labels) if unit == "g/kg" else labels


def adapt_kssl_with_log(path: PathLike, opts: AdapterOptions,
                        grid: WavelengthGrid = NIR_GRID) -> Tuple[SpectralDataset, RejectionLog]:
    """
    KSSL export -> absorbance dataset on the canonical grid, plus the rejection log.

    Reflectance is resampled (the 350-2500 nm scan is cropped to the grid),
    screened to (0, 100] percent and converted to absorbance.

    Raises:
        UnitFlagRequiredError: If opts.reflectance_unit is not declared
        MissingColumnsError: If the id, label or wavelength columns are absent
    """
    if opts.reflectance_unit not in REFLECTANCE_UNITS:
        raise UnitFlagRequiredError(
            f"KSSL reflectance unit must be declared as one of {REFLECTANCE_UNITS}, got {opts.reflectance_unit!r}"
        )
    export = _read_wide(path, opts)
    keep, log = _label_rejections(export, path)
    reflectance = resample(export.wavelengths, export.matrix[keep], grid, opts.max_extrapolation_nm)
    if opts.reflectance_unit == "fraction":
        reflectance = reflectance * 100.0
    labels = _labels_in_g100g(export.labels[keep], opts.label_unit or "g/100g")

    raw = SpectralDataset(reflectance, labels, tuple(export.ids[i] for i in keep), REFLECTANCE_PCT,
                          Source.KSSL, grid, allow_empty=True)
    if len(raw) == 0:
        raise ValidationError(f"{path}: no samples with a carbonate label")
    screened, screen_log = screen(raw)
    log.extend(screen_log)
    dataset = dataset_to_absorbance(screened)
    logger.info(f"KSSL: {len(dataset)} spectra from {path}, {len(log)} rejected")
    return dataset, log


def adapt_kssl(path: PathLike, opts: AdapterOptions, grid: WavelengthGrid = NIR_GRID) -> SpectralDataset:
    return adapt_kssl_with_log(path, opts, grid)[0]


def adapt_lucas_with_log(path: PathLike, opts: Optional[AdapterOptions] = None,
                         grid: WavelengthGrid = NIR_GRID) -> Tuple[SpectralDataset, RejectionLog]:
    """
    LUCAS export -> absorbance dataset on the canonical grid, plus the rejection log.

    Spectra are already absorbance; carbonate labels default to g/kg and are
    converted to g/100g. Rows with non-finite spectra are rejected.
    """
    opts = opts or AdapterOptions()
    export = _read_wide(path, opts)
    keep, log = _label_rejections(export, path)
    matrix = resample(export.wavelengths, export.matrix[keep], grid, opts.max_extrapolation_nm)
    labels = _labels_in_g100g(export.labels[keep], opts.label_unit or "g/kg")
    ids = [export.ids[i] for i in keep]

    finite = np.all(np.isfinite(matrix), axis=1)
    for i in np.flatnonzero(~finite):
        log.entries.append(Rejection(ids[i], int(np.flatnonzero(~np.isfinite(matrix[i]))[0]), "NonFinite"))
    if not finite.any():
        raise ValidationError(f"{path}: no usable LUCAS spectra")

    dataset = SpectralDataset(matrix[finite], labels[finite], tuple(np.asarray(ids, dtype=object)[finite]),
                              ABSORBANCE, Source.LUCAS, grid)
    logger.info(f"LUCAS: {len(dataset)} spectra from {path}, {len(log)} rejected")
    return dataset, log


def adapt_lucas(path: PathLike, opts: Optional[AdapterOptions] = None, grid: WavelengthGrid = NIR_GRID) -> SpectralDataset:
    return adapt_lucas_with_log(path, opts, grid)[0]


# --------------------------------------------------------------------------
# Merge
# --------------------------------------------------------------------------

def merge(a: SpectralDataset, b: SpectralDataset) -> SpectralDataset:
    """
    Concatenate two libraries (a's rows, then b's rows).

    The Wasserstein distance between the two label distributions is logged
    as a merge diagnostic; per-sample source tags are kept.

    Raises:
        KindMismatchError, GridMismatchError, DuplicateSampleIdError
    """
    if a.kind != b.kind:
        raise KindMismatchError(f"cannot merge {a.kind} with {b.kind}")
    if a.grid != b.grid:
        raise GridMismatchError("cannot merge datasets on different wavelength grids")
    if len(b) == 0:
        return a
    if len(a) == 0:
        return b
    shared = set(a.sample_ids) & set(b.sample_ids)
    if shared:
        raise DuplicateSampleIdError(f"sample ids present in both datasets: {sorted(shared)[:5]}")

    merged = SpectralDataset(
        np.vstack([a.matrix, b.matrix]),
        np.concatenate([a.labels, b.labels]),
        a.sample_ids + b.sample_ids,
        a.kind,
        Source.MERGED,
        a.grid,
        a.sample_sources + b.sample_sources,
    )
    logger.info(f"Merged {len(a)} + {len(b)} = {len(merged)} spectra; "
                f"label Wasserstein distance {label_distance(a.labels, b.labels):.4f}")
    return merged


# --------------------------------------------------------------------------
# Reference and paired data
# --------------------------------------------------------------------------

def load_reference_table1() -> Tuple[np.ndarray, np.ndarray, Tuple[str, ...]]:
    """Measured (volumetric) and MLP-predicted carbonate contents of the 19 local samples, with group tags."""
    pairs = reference_data.TABLE1_PAIRS
    return (np.array([p.measured for p in pairs]),
            np.array([p.predicted for p in pairs]),
            tuple(p.group for p in pairs))


def load_pairs(path: PathLike) -> Tuple[np.ndarray, np.ndarray]:
    """Read an "observed,predicted" CSV."""
    frame = _read_csv(path)
    missing = [c for c in PAIRS_COLUMNS if c not in frame.columns]
    if missing:
        raise MissingColumnsError(f"{path}: missing columns {missing}")
    values = _numeric_block(frame[list(PAIRS_COLUMNS)], path)
    return values[:, 0], values[:, 1]


def write_rejection_log(log: RejectionLog, path: PathLike) -> None:
    try:
        atomic_write_text(Path(path), log.to_text())
    except OSError as exc:
        raise StorageError(f"cannot write rejection log {path}: {exc}") from exc
