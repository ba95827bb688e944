"""
Synthetic planted-signal spectra.

Absorbance = smooth random baseline
           + sum over planted centres of depth * carbonate * Gaussian(centre, width)
           + one distractor band whose depth is independent of carbonate
           + white noise

Used for the end-to-end recovery runs: a model trained on these spectra
should predict the label and its saliency should land on the planted
centres, not on the distractor.

Run directly to write a canonical CSV:

    python -m src.synthetic -o planted.csv --samples 2000 --seed 42
"""

import argparse
import sys
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from loguru import logger

from .config import DEFAULT_SEED, LOG_LEVEL
from .exceptions import InvalidParamsError
from .ingest import write_canonical
from .spectra import ABSORBANCE, NIR_GRID, REFLECTANCE_PCT, SpectralDataset, WavelengthGrid, absorbance_to_reflectance
from .utils import setup_logging

PLANTED_CENTERS_NM: Tuple[float, ...] = (1415.0, 1908.0, 2335.0)
DISTRACTOR_NM = 2200.0


@dataclass(frozen=True)
class PlantedSignalConfig:
    n_samples: int = 2000
    centers_nm: Tuple[float, ...] = PLANTED_CENTERS_NM
    width_nm: float = 12.0
    depth_per_unit: float = 0.004      # absorbance per g/100g at the band centre
    label_max: float = 40.0
    baseline_level: float = 0.45
    baseline_spread: float = 0.15
    distractor_depth: float = 0.08
    noise_sd: float = 1e-3
    seed: int = DEFAULT_SEED

    def validate(self) -> None:
        if self.n_samples < 1:
            raise InvalidParamsError(f"n_samples must be >= 1, got {self.n_samples}")
        if self.width_nm <= 0 or self.label_max <= 0 or self.noise_sd < 0:
            raise InvalidParamsError("width_nm and label_max must be > 0, noise_sd >= 0")


def gaussian_band(wavelengths: np.ndarray, center_nm: float, width_nm: float) -> np.ndarray:
    return np.exp(-0.5 * ((wavelengths - center_nm) / width_nm) ** 2)


def planted_labels(config: PlantedSignalConfig, rng: np.random.Generator) -> np.ndarray:
    # skewed towards low contents, as in soil libraries
    return config.label_max * rng.beta(1.2, 2.5, size=config.n_samples)


def smooth_baselines(n: int, grid: WavelengthGrid, config: PlantedSignalConfig,
                     rng: np.random.Generator) -> np.ndarray:
    """Quadratic baselines plus one broad hump per sample."""
    wavelengths = grid.wavelengths()
    x = np.linspace(-1.0, 1.0, grid.n_points)
    coeffs = rng.uniform(-config.baseline_spread, config.baseline_spread, size=(n, 3))
    poly = config.baseline_level + coeffs[:, :1] + coeffs[:, 1:2] * x + 0.5 * coeffs[:, 2:3] * x ** 2
    hump_center = rng.uniform(grid.start_nm, grid.end_nm, size=(n, 1))
    hump = 0.05 * rng.uniform(size=(n, 1)) * np.exp(-0.5 * ((wavelengths - hump_center) / 300.0) ** 2)
    return poly + hump


def planted_dataset(config: PlantedSignalConfig = PlantedSignalConfig(),
                    grid: WavelengthGrid = NIR_GRID) -> SpectralDataset:
    """
    Generate an absorbance dataset with carbonate encoded at the planted centres.

    Args:
        config (PlantedSignalConfig): Sample count, band shape, noise and seed
        grid (WavelengthGrid): Output wavelength grid

    Returns:
        SpectralDataset: Absorbance spectra with labels in g/100g
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    wavelengths = grid.wavelengths()
    labels = planted_labels(config, rng)

    bands = sum(gaussian_band(wavelengths, c, config.width_nm) for c in config.centers_nm)
    matrix = smooth_baselines(config.n_samples, grid, config, rng)
    matrix += config.depth_per_unit * labels[:, np.newaxis] * bands
    distractor = config.distractor_depth * rng.uniform(size=(config.n_samples, 1))
    matrix += distractor * gaussian_band(wavelengths, DISTRACTOR_NM, config.width_nm)
    matrix += rng.normal(0.0, config.noise_sd, size=matrix.shape)

    ids = tuple(f"SYN{i:05d}" for i in range(config.n_samples))
    logger.info(f"Generated {config.n_samples} planted-signal spectra (seed {config.seed})")
    return SpectralDataset(matrix, labels, ids, ABSORBANCE, grid=grid)


def as_reflectance(dataset: SpectralDataset) -> SpectralDataset:
    """Same spectra as percent reflectance (R = 100 * 10^-A)."""
    return dataset.with_matrix(absorbance_to_reflectance(dataset.matrix), REFLECTANCE_PCT)


def main() -> None:
    parser = argparse.ArgumentParser(
        description="Generate synthetic planted-signal NIR spectra",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python -m src.synthetic -o planted.csv
  python -m src.synthetic -o small.csv --samples 200 --seed 7 --noise 0.002
  python -m src.synthetic -o refl.csv --reflectance
        """,
    )
    parser.add_argument("-o", "--output", required=True, help="Canonical CSV to write")
    parser.add_argument("--samples", type=int, default=2000, help="Number of spectra (default: 2000)")
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"Random seed (default: {DEFAULT_SEED})")
    parser.add_argument("--noise", type=float, default=1e-3, help="White noise sd in absorbance (default: 0.001)")
    parser.add_argument("--reflectance", action="store_true", help="Write percent reflectance instead of absorbance")
    args = parser.parse_args()

    setup_logging(LOG_LEVEL)
    config = PlantedSignalConfig(n_samples=args.samples, noise_sd=args.noise, seed=args.seed)
    try:
        dataset = planted_dataset(config)
    except InvalidParamsError as exc:
        print(f"ERROR: {exc}")
        sys.exit(2)
    if args.reflectance:
        dataset = as_reflectance(dataset)
    write_canonical(dataset, args.output)
    print(f"SUCCESS: {len(dataset)} {dataset.kind} spectra written to {args.output}")


if __name__ == "__main__":
    main()
