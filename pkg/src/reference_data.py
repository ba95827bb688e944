"""
Compiled-in reference values for carbospec.

Volumetric vs MLP-predicted carbonate contents for the 19 local soil samples,
the published model comparison statistics, the XRD phase quantification of
sample S03 and the documented NIR carbonate bands.
"""

from typing import Dict, List, NamedTuple, Tuple


class VolumetricPair(NamedTuple):
    sample_id: str
    measured: float   # volumetric method, g/100g
    predicted: float  # MLP prediction, g/100g
    group: str        # SAM-1 | SAM-2


TABLE1_PAIRS: Tuple[VolumetricPair, ...] = (
    VolumetricPair("S01", 7.85, 11.53, "SAM-1"),
    VolumetricPair("S02", 1.83, 0.86, "SAM-1"),
    VolumetricPair("S03", 8.56, 8.80, "SAM-1"),
    VolumetricPair("S04", 10.84, 5.85, "SAM-1"),
    VolumetricPair("S05", 9.32, 8.37, "SAM-1"),
    VolumetricPair("S06", 4.63, 1.64, "SAM-1"),
    VolumetricPair("S07", 3.39, 1.52, "SAM-1"),
    VolumetricPair("S08", 5.75, 3.31, "SAM-1"),
    VolumetricPair("S09", 1.18, 1.07, "SAM-1"),
    VolumetricPair("S10", 18.14, 13.44, "SAM-1"),
    VolumetricPair("S11", 11.28, 14.18, "SAM-1"),
    VolumetricPair("S12", 17.32, 14.38, "SAM-1"),
    VolumetricPair("S13", 17.00, 18.57, "SAM-1"),
    VolumetricPair("S14", 1.12, 1.80, "SAM-1"),
    VolumetricPair("S15", 0.07, 0.60, "SAM-2"),
    VolumetricPair("S16", 0.13, 0.59, "SAM-2"),
    VolumetricPair("S17", 0.13, 0.53, "SAM-2"),
    VolumetricPair("S18", 0.09, 0.51, "SAM-2"),
    VolumetricPair("S19", 0.04, 0.51, "SAM-2"),
)


class ModelComparisonRow(NamedTuple):
    model: str
    r2: float
    rmse: float
    rpd: float
    rpiq: float


# Second-derivative models on the merged KSSL + LUCAS library
TABLE2_ROWS: Tuple[ModelComparisonRow, ...] = (
    ModelComparisonRow("PLSR", -1.43, 9.42, 0.64, 1.00),
    ModelComparisonRow("SVM", -0.19, 6.59, 0.91, 1.43),
    ModelComparisonRow("Cubist", 0.45, 4.47, 1.35, 2.11),
    ModelComparisonRow("MLP", 0.84, 2.11, 2.14, 3.33),
    ModelComparisonRow("CNN", 0.68, 4.11, 1.47, 2.29),
)

# obs spread implied by the PLSR/SVM/Cubist/CNN rows (RPD x RMSE, RPIQ x RMSE)
TABLE2_OBS_STD = 6.03
TABLE2_IQ = 9.42

# XRD phase quantification of S03 (wt-%), crystalline index and other methods
XRD_PHASES_S03: Dict[str, float] = {"calcite": 3.88, "hydromagnesite": 2.19}
XRD_CRYSTALLINE_INDEX_S03 = 0.72
XRD_TOTAL_S03 = 8.43
VOLUMETRIC_S03 = 8.56
MLP_S03 = 8.80

# Label-distribution distances reported for the merged libraries
WASSERSTEIN_MERGE_REFERENCE = 1.78
WASSERSTEIN_TRAIN_TEST_REFERENCE = 6.48

LIBRARY_SIZES = {"KSSL": 6833, "LUCAS": 21782}


class CarbonateBand(NamedTuple):
    start_nm: float
    end_nm: float
    assignment: str

    @property
    def centre_nm(self) -> float:
        return 0.5 * (self.start_nm + self.end_nm)


CARBONATE_BANDS: Tuple[CarbonateBand, ...] = (
    CarbonateBand(1415.0, 1415.0, "crystallized water / O-H (calcite, hydromagnesite)"),
    CarbonateBand(1900.0, 1900.0, "v1 + 3v3"),
    CarbonateBand(2000.0, 2000.0, "2v1 + 2v3"),
    CarbonateBand(2160.0, 2160.0, "3v1 + 2v4"),
    CarbonateBand(2340.0, 2340.0, "overtone of asymmetric C-O stretch v3"),
    CarbonateBand(2500.0, 2550.0, "v1 + 2v3"),
)

# Peaks favoured by the CNN saliency map on real second-derivative spectra
SALIENCY_REFERENCE_PEAKS_NM: Tuple[float, ...] = (1415.0, 1908.0, 2209.0, 2335.0)


def table1_groups() -> Dict[str, List[VolumetricPair]]:
    groups: Dict[str, List[VolumetricPair]] = {}
    for pair in TABLE1_PAIRS:
        groups.setdefault(pair.group, []).append(pair)
    return groups
