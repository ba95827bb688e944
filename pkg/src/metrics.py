"""
Distribution comparison and model evaluation metrics for carbospec.

Implements the one-dimensional Wasserstein distance between label
distributions, R², RMSE, RPD and RPIQ, the R²/RPD quality bands and the
XRD crystalline-index arithmetic.

RPD and RPIQ are plain ratios (spread / RMSE). Quartiles use linear
interpolation between order statistics at position (n - 1) * q.
"""

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, List, Mapping, Sequence

import numpy as np

from .config import STDEV_DDOF
from .exceptions import InvalidParamsError, LengthMismatchError, ValidationError
from . import reference_data


class EmptyInputError(ValidationError):
    """A distribution sample is empty."""
    pass


class ZeroVarianceError(ValidationError):
    """Observed values are all equal; R² is undefined."""
    pass


class ZeroRMSEError(ValidationError):
    """RMSE is zero (perfect prediction); ratio metrics are unbounded."""
    pass


class InvalidCrystallineIndexError(ValidationError):
    """Crystalline index outside (0, 1]."""
    pass


def _as_vector(values: Iterable[float], name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


def _paired(obs: Sequence[float], pred: Sequence[float]):
    obs = _as_vector(obs, "obs")
    pred = _as_vector(pred, "pred")
    if obs.shape != pred.shape:
        raise LengthMismatchError(f"obs has {obs.size} values, pred has {pred.size}")
    return obs, pred


# --------------------------------------------------------------------------
# Wasserstein
# --------------------------------------------------------------------------

def _quantiles_at(sorted_values: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Empirical quantile function Q(u) = x_(ceil(u n)) (1-based order statistics)."""
    n = sorted_values.size
    idx = np.ceil(probs * n).astype(np.int64) - 1
    return sorted_values[np.clip(idx, 0, n - 1)]


def wasserstein(x: Sequence[float], y: Sequence[float], p: int = 1) -> float:
    """
    p-Wasserstein distance between two one-dimensional empirical distributions.

    For equal sizes the sorted samples are paired directly; otherwise both
    quantile functions are sampled at the midpoints of max(n, m) equal
    probability bins.

    Args:
        x: First sample
        y: Second sample
        p (int): Order, >= 1

    Returns:
        float: (mean |x_(i) - y_(i)|^p)^(1/p)

    Raises:
        EmptyInputError: If either sample is empty
    """
    if int(p) != p or p < 1:
        raise InvalidParamsError(f"p must be an integer >= 1, got {p}")
    xs = np.sort(_as_vector(x, "x"))
    ys = np.sort(_as_vector(y, "y"))
    if xs.size == 0 or ys.size == 0:
        raise EmptyInputError("wasserstein needs at least one value in each sample")

    if xs.size != ys.size:
        bins = max(xs.size, ys.size)
        probs = (np.arange(bins, dtype=np.float64) + 0.5) / bins
        xs = _quantiles_at(xs, probs)
        ys = _quantiles_at(ys, probs)

    gaps = np.abs(xs - ys)
    if p == 1:
        return float(np.mean(gaps))
    return float(np.mean(gaps ** p) ** (1.0 / p))


# --------------------------------------------------------------------------
# Point metrics
# --------------------------------------------------------------------------

def r_squared(obs: Sequence[float], pred: Sequence[float]) -> float:
    """
    Coefficient of determination 1 - SS_res / SS_tot.

    Raises:
        ZeroVarianceError: If all observed values are equal
    """
    obs, pred = _paired(obs, pred)
    if obs.size < 2:
        raise ValidationError("r_squared needs at least two samples")
    ss_tot = float(np.sum((obs - obs.mean()) ** 2))
    if ss_tot == 0.0:
        raise ZeroVarianceError("observed values are all equal")
    ss_res = float(np.sum((obs - pred) ** 2))
    return 1.0 - ss_res / ss_tot


def rmse(obs: Sequence[float], pred: Sequence[float]) -> float:
    """Root mean square error sqrt(mean((pred - obs)^2))."""
    obs, pred = _paired(obs, pred)
    if obs.size < 1:
        raise EmptyInputError("rmse needs at least one pair")
    return float(np.sqrt(np.mean((pred - obs) ** 2)))


def stdev(values: Sequence[float], ddof: int = STDEV_DDOF) -> float:
    arr = _as_vector(values, "values")
    return float(np.std(arr, ddof=ddof))


def quartiles(values: Sequence[float]) -> "QuartileSummary":
    """
    Q1, Q2, Q3 by linear interpolation of order statistics at (n - 1) * q.
    """
    arr = np.sort(_as_vector(values, "values"))
    if arr.size == 0:
        raise EmptyInputError("quartiles of an empty sample")

    def at(q: float) -> float:
        pos = (arr.size - 1) * q
        lo = int(math.floor(pos))
        hi = min(lo + 1, arr.size - 1)
        frac = pos - lo
        return float(arr[lo] + (arr[hi] - arr[lo]) * frac)

    q1, q2, q3 = at(0.25), at(0.5), at(0.75)
    return QuartileSummary(q1=q1, q2=q2, q3=q3, iq=q3 - q1)


def _check_rmse(rmse_val: float) -> None:
    if not math.isfinite(rmse_val) or rmse_val < 0:
        raise InvalidParamsError(f"rmse must be finite and >= 0, got {rmse_val}")
    if rmse_val == 0.0:
        raise ZeroRMSEError("rmse is zero; ratio metric is unbounded")


def rpd(obs: Sequence[float], rmse_val: float, ddof: int = STDEV_DDOF) -> float:
    """
    Residual prediction deviation: stdev(obs) / rmse.

    Raises:
        ZeroRMSEError: If rmse_val == 0
    """
    arr = _as_vector(obs, "obs")
    if arr.size < 2:
        raise ValidationError("rpd needs at least two observations")
    _check_rmse(rmse_val)
    return stdev(arr, ddof) / rmse_val


def rpiq(obs: Sequence[float], rmse_val: float) -> float:
    """
    Ratio of performance to inter-quartile distance: (Q3 - Q1) / rmse.

    Raises:
        ZeroRMSEError: If rmse_val == 0
    """
    arr = _as_vector(obs, "obs")
    if arr.size < 4:
        raise ValidationError("rpiq needs at least four observations")
    _check_rmse(rmse_val)
    return quartiles(arr).iq / rmse_val


# --------------------------------------------------------------------------
# Quality bands
# --------------------------------------------------------------------------

class QualityBand(str, Enum):
    POOR = "Poor"
    MODERATE = "Moderate"
    GOOD = "Good"
    EXCELLENT = "Excellent"

    @property
    def rank(self) -> int:
        return _BAND_ORDER.index(self)


_BAND_ORDER = [QualityBand.POOR, QualityBand.MODERATE, QualityBand.GOOD, QualityBand.EXCELLENT]


def _band_for(value: float, thresholds: Sequence[float]) -> QualityBand:
    # thresholds: (moderate, good, excellent) strict lower bounds
    rank = sum(1 for t in thresholds if value > t)
    return _BAND_ORDER[rank]


def quality_band(r2: float, rpd_val: float) -> QualityBand:
    """
    Combine the R² and RPD criteria; when they disagree the weaker band wins.

    R²:  > 0.90 Excellent, > 0.82 Good, > 0.66 Moderate, else Poor
    RPD: > 3.0  Excellent, > 2.5  Good, > 2.0  Moderate, else Poor
    """
    by_r2 = _band_for(r2, (0.66, 0.82, 0.90))
    by_rpd = _band_for(rpd_val, (2.0, 2.5, 3.0))
    return by_r2 if by_r2.rank <= by_rpd.rank else by_rpd


# --------------------------------------------------------------------------
# Reports
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class QuartileSummary:
    q1: float
    q2: float
    q3: float
    iq: float


@dataclass(frozen=True)
class EvaluationReport:
    r2: float
    rmse: float
    rpd: float
    rpiq: float
    quartiles: QuartileSummary
    obs_std: float
    band: QualityBand
    residuals: np.ndarray = field(repr=False, compare=False)
    n: int = 0

    def to_dict(self, include_residuals: bool = False) -> Dict[str, Any]:
        data = {
            "n": self.n,
            "r2": self.r2,
            "rmse": self.rmse,
            "rpd": self.rpd,
            "rpiq": self.rpiq,
            "obs_std": self.obs_std,
            "q1": self.quartiles.q1,
            "q2": self.quartiles.q2,
            "q3": self.quartiles.q3,
            "iq": self.quartiles.iq,
            "band": self.band.value,
        }
        if include_residuals:
            data["residuals"] = [float(r) for r in self.residuals]
        return data

    def to_text(self, prefix: str = "") -> str:
        """Flat key=value lines; floats printed with 17 significant digits."""
        lines = []
        for key, value in self.to_dict().items():
            if isinstance(value, float):
                value = format_number(value)
            lines.append(f"{prefix}{key}={value}")
        return "\n".join(lines) + "\n"

    def to_json(self, include_residuals: bool = False) -> str:
        return json.dumps(self.to_dict(include_residuals), sort_keys=True, allow_nan=True)


def format_number(value: float) -> str:
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.17g}"


def evaluate(obs: Sequence[float], pred: Sequence[float], ddof: int = STDEV_DDOF) -> EvaluationReport:
    """
    Compute the full metric set for paired observations and predictions.

    A perfect prediction (RMSE 0) reports RPD = RPIQ = +inf.

    Args:
        obs: Measured values
        pred: Predicted values
        ddof (int): Degrees of freedom for the standard deviation in RPD

    Returns:
        EvaluationReport
    """
    obs, pred = _paired(obs, pred)
    if obs.size < 4:
        raise ValidationError(f"evaluation needs at least four pairs, got {obs.size}")
    r2 = r_squared(obs, pred)
    err = rmse(obs, pred)
    spread = stdev(obs, ddof)
    try:
        rpd_val = rpd(obs, err, ddof)
        rpiq_val = rpiq(obs, err)
    except ZeroRMSEError:
        rpd_val = rpiq_val = math.inf
    return EvaluationReport(
        r2=r2,
        rmse=err,
        rpd=rpd_val,
        rpiq=rpiq_val,
        quartiles=quartiles(obs),
        obs_std=spread,
        band=quality_band(r2, rpd_val),
        residuals=pred - obs,
        n=int(obs.size),
    )


def table2_row_check(rmse_val: float, obs_std: float = reference_data.TABLE2_OBS_STD,
                     iq: float = reference_data.TABLE2_IQ) -> Dict[str, float]:
    """RPD and RPIQ from summary statistics alone (obs spread, IQ, RMSE)."""
    _check_rmse(rmse_val)
    return {"rmse": rmse_val, "obs_std": obs_std, "iq": iq,
            "rpd": obs_std / rmse_val, "rpiq": iq / rmse_val}


# --------------------------------------------------------------------------
# XRD arithmetic
# --------------------------------------------------------------------------

def crystalline_carbonates(phases_wt_pct: Mapping[str, float]) -> float:
    """Crystalline carbonate weight as the sum of the quantified phases."""
    values = list(phases_wt_pct.values())
    if any(v < 0 for v in values):
        raise ValidationError("phase weights must be >= 0")
    return float(sum(values))


def xrd_total_carbonates(crystalline_wt_pct: float, crystalline_index: float) -> float:
    """
    Total carbonate content from the crystalline share: crystalline / CI.

    Raises:
        InvalidCrystallineIndexError: If CI is not in (0, 1]
    """
    if not 0.0 < crystalline_index <= 1.0:
        raise InvalidCrystallineIndexError(f"crystalline index must be in (0, 1], got {crystalline_index}")
    if crystalline_wt_pct < 0:
        raise ValidationError(f"crystalline weight must be >= 0, got {crystalline_wt_pct}")
    return crystalline_wt_pct / crystalline_index


def carbonate_agreement_report(tolerance: float = 0.5) -> Dict[str, Any]:
    """
    Compare XRD, volumetric and MLP carbonate contents for sample S03.

    Returns:
        dict: per-method values, maximum pairwise gap and agreement flag
    """
    crystalline = crystalline_carbonates(reference_data.XRD_PHASES_S03)
    xrd = xrd_total_carbonates(crystalline, reference_data.XRD_CRYSTALLINE_INDEX_S03)
    values = {"xrd": xrd, "volumetric": reference_data.VOLUMETRIC_S03, "mlp": reference_data.MLP_S03}
    numbers: List[float] = list(values.values())
    max_gap = max(abs(a - b) for a in numbers for b in numbers)
    return {
        "sample_id": "S03",
        "crystalline_wt_pct": crystalline,
        "crystalline_index": reference_data.XRD_CRYSTALLINE_INDEX_S03,
        **values,
        "max_pairwise_gap": max_gap,
        "agrees": max_gap < tolerance,
    }


def table1_reports(by_group: bool = False, ddof: int = STDEV_DDOF) -> Dict[str, EvaluationReport]:
    """Metric set over the bundled volumetric/MLP pairs, optionally per sample group."""
    pairs = reference_data.TABLE1_PAIRS
    reports = {"all": evaluate([p.measured for p in pairs], [p.predicted for p in pairs], ddof)}
    if by_group:
        for group, members in reference_data.table1_groups().items():
            reports[group] = evaluate([p.measured for p in members], [p.predicted for p in members], ddof)
    return reports


def label_distance(labels_a: Sequence[float], labels_b: Sequence[float], p: int = 1) -> float:
    """Wasserstein distance between two carbonate label distributions."""
    return wasserstein(labels_a, labels_b, p)
